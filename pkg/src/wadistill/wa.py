"""Weighted automata in linear form.

An automaton over an alphabet of size ``K`` with ``rank`` states is the
triple of an initial vector, one transition matrix per symbol, and a
terminal vector.  The weight of a sequence is the initial vector pushed
through the symbol matrices left to right, finished with the terminal
vector; the per-symbol matrices are never multiplied together explicitly.

Stochastic automata (weights forming a distribution over all sequences)
additionally support conditional next-symbol distributions through the
normalized terminal vector, which solves ``(I - sum of matrices) x =
terminal``.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque

import numpy as np

from . import backend
from .alphabet import Alphabet
from .errors import (
    GenerationFailed,
    InvalidInput,
    NonStochastic,
    ParseError,
    SingularNormalizerWarning,
)

FORMAT_VERSION = 1

# Condition number beyond which the normalizer solve falls back to
# least squares.
_COND_LIMIT = 1e12

# Normalized next-symbol scores more negative than this are an error;
# anything between here and zero is clamped as extraction noise.
_NEG_TOL = 1e-6
_SUM_TOL = 1e-4
_DEAD_CONFIG_TOL = 1e-12


class WeightedAutomaton:
    """Linear-form automaton; immutable after construction."""

    def __init__(self, alphabet, alpha0, mats, alpha_inf, *, stochastic=False):
        if not isinstance(alphabet, Alphabet):
            alphabet = Alphabet(alphabet)
        alpha0 = np.ascontiguousarray(alpha0, dtype=np.float64)
        alpha_inf = np.ascontiguousarray(alpha_inf, dtype=np.float64)
        mats = np.ascontiguousarray(mats, dtype=np.float64)
        r = alpha0.shape[0]
        if alpha0.ndim != 1 or r < 1:
            raise InvalidInput("initial vector must be one-dimensional and nonempty")
        if alpha_inf.shape != (r,):
            raise InvalidInput("terminal vector length must equal the rank")
        if mats.shape != (alphabet.size, r, r):
            raise InvalidInput(
                f"need one {r}x{r} matrix per symbol, got shape {mats.shape}"
            )
        if not (
            np.isfinite(alpha0).all()
            and np.isfinite(alpha_inf).all()
            and np.isfinite(mats).all()
        ):
            raise InvalidInput("automaton entries must be finite")
        for arr in (alpha0, alpha_inf, mats):
            arr.setflags(write=False)
        self.alphabet = alphabet
        self.rank = r
        self.alpha0 = alpha0
        self.alpha_inf = alpha_inf
        self.mats = mats
        self.stochastic = bool(stochastic)
        self.singular_normalizer = False
        self._tilde = None
        self._score_mat = None

    # -- evaluation ---------------------------------------------------------

    def weight(self, seq) -> float:
        """Series weight of one sequence."""
        self.alphabet.check_ids(seq)
        vec = self.alpha0
        for sym in seq:
            vec = vec @ self.mats[sym]
        return float(vec @ self.alpha_inf)

    def config(self, prefix) -> np.ndarray:
        """State vector reached after reading ``prefix``."""
        self.alphabet.check_ids(prefix)
        vec = self.alpha0
        for sym in prefix:
            vec = vec @ self.mats[sym]
        return np.array(vec, dtype=np.float64)

    def sequence_configs(self, seq) -> np.ndarray:
        """Configs for every prefix of ``seq`` (row i = first i symbols)."""
        self.alphabet.check_ids(seq)
        out = np.empty((len(seq) + 1, self.rank), dtype=np.float64)
        out[0] = self.alpha0
        for i, sym in enumerate(seq):
            np.dot(out[i], self.mats[sym], out=out[i + 1])
        return out

    def batch_weights(self, seqs) -> np.ndarray:
        """Weights for a batch of sequences via the selected kernel."""
        flat, offsets = backend.flatten_batch(seqs)
        if flat.size and (flat.min() < 0 or flat.max() >= self.alphabet.size):
            self.alphabet.check_ids(flat)  # raises with the offending id
        return backend.eval_weights(self.alpha0, self.mats, self.alpha_inf, flat, offsets)

    # -- conditional structure ---------------------------------------------

    def terminal_tilde(self) -> np.ndarray:
        """Normalized terminal vector; cached after the first call.

        Falls back to a least-squares solution (and flags the automaton)
        when the normalizing system is singular or badly conditioned.
        """
        if self._tilde is None:
            a = np.eye(self.rank) - self.mats.sum(axis=0)
            cond = np.linalg.cond(a)
            if not np.isfinite(cond) or cond > _COND_LIMIT:
                tilde = np.linalg.lstsq(a, self.alpha_inf, rcond=None)[0]
                self.singular_normalizer = True
                warnings.warn(
                    "terminal normalizer is singular or ill-conditioned; "
                    "least-squares solution in use",
                    SingularNormalizerWarning,
                    stacklevel=2,
                )
            else:
                tilde = np.linalg.solve(a, self.alpha_inf)
            tilde.setflags(write=False)
            self._tilde = tilde
        return self._tilde

    def score_matrix(self) -> np.ndarray:
        """(K+1) x rank matrix whose product with a config gives next scores.

        Row ``sym`` scores continuing with ``sym``; the last row scores
        stopping.
        """
        if self._score_mat is None:
            tilde = self.terminal_tilde()
            t = np.empty((self.alphabet.size + 1, self.rank), dtype=np.float64)
            for sym in range(self.alphabet.size):
                t[sym] = self.mats[sym] @ tilde
            t[self.alphabet.size] = self.alpha_inf
            t.setflags(write=False)
            self._score_mat = t
        return self._score_mat

    def next_scores(self, prefix=(), *, config=None) -> np.ndarray:
        """Raw next-symbol scores (length K+1, end slot last).

        Raw scores are all the ranking metrics need; they may be negative
        for extracted automata.
        """
        if config is None:
            config = self.config(prefix)
        return self.score_matrix() @ config

    def walk_config(self, prefix) -> np.ndarray:
        """Config rescaled to unit max magnitude after every step.

        The conditional distribution and the score ranking are invariant
        under positive scaling of the config, and the rescaling keeps long
        walks away from underflow (an unnormalized config shrinks
        geometrically with the prefix length).
        """
        self.alphabet.check_ids(prefix)
        vec = np.asarray(self.alpha0)
        for sym in prefix:
            vec = rescale_config(vec @ self.mats[sym])
        return vec

    def next_dist(self, prefix=(), *, config=None) -> np.ndarray:
        """Conditional next-symbol distribution (length K+1, end slot last).

        Normalizes the raw scores by the config's remaining mass.  A dead
        config (no remaining mass) yields the all-zero vector.  Scores more
        negative than the noise tolerance, or a badly off normalized sum,
        raise :class:`NonStochastic`.
        """
        if config is None:
            config = self.walk_config(prefix)
        den = float(config @ self.terminal_tilde())
        if abs(den) <= _DEAD_CONFIG_TOL:
            return np.zeros(self.alphabet.size + 1)
        q = (self.score_matrix() @ config) / den
        low = q.min()
        if low < -_NEG_TOL:
            raise NonStochastic(f"normalized next-symbol score {low} below -{_NEG_TOL}")
        np.clip(q, 0.0, None, out=q)
        total = q.sum()
        if abs(total - 1.0) > _SUM_TOL:
            raise NonStochastic(f"normalized next-symbol scores sum to {total}")
        return q / total

    # -- sampling ------------------------------------------------------------

    def sample_sequence(self, rng, max_len: int) -> tuple:
        """Draw one sequence; stops at the end outcome or at ``max_len``."""
        if not self.stochastic:
            raise NonStochastic("sampling requires an automaton claiming stochasticity")
        rng = as_rng(rng)
        end = self.alphabet.end_id
        seq = []
        config = np.array(self.alpha0)
        for _ in range(max_len):
            dist = self.next_dist(config=config)
            if dist.sum() == 0.0:
                raise NonStochastic("sampling reached a configuration with no mass")
            sym = _draw(dist, rng)
            if sym == end:
                return tuple(seq)
            seq.append(sym)
            config = rescale_config(config @ self.mats[sym])
        return tuple(seq)

    def __repr__(self) -> str:
        return (
            f"WeightedAutomaton(rank={self.rank}, alphabet_size={self.alphabet.size}, "
            f"stochastic={self.stochastic})"
        )


def as_rng(rng) -> np.random.Generator:
    """Accept either a Generator or a seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def rescale_config(vec: np.ndarray) -> np.ndarray:
    """Scale a config to unit max magnitude (zero vectors pass through)."""
    m = np.abs(vec).max()
    return vec / m if m > 0.0 else vec


def _draw(dist, rng) -> int:
    cum = np.cumsum(dist)
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, len(dist) - 1)


# -- random stochastic machines ----------------------------------------------


def random_pfa(
    states: int,
    alphabet_size: int,
    symbol_sparsity: float = 1.0,
    transition_sparsity: float = 1.0,
    seed=None,
) -> WeightedAutomaton:
    """Random stochastic automaton with one initial state.

    Per state, a sparse set of (symbol, target) pairs and a termination
    outcome receive positive weights that are jointly normalized to one.
    Every state is reachable from the initial one; draws that leave states
    unreachable are retried.
    """
    if states < 1 or alphabet_size < 1:
        raise InvalidInput("states and alphabet_size must be >= 1")
    if not (0.0 < symbol_sparsity <= 1.0 and 0.0 < transition_sparsity <= 1.0):
        raise InvalidInput("sparsities must lie in (0, 1]")
    rng = as_rng(seed)
    alphabet = Alphabet.of_size(alphabet_size)

    for _ in range(100):
        mats = np.zeros((alphabet_size, states, states))
        term = np.empty(states)
        for q in range(states):
            active = [s for s in range(alphabet_size) if rng.random() < symbol_sparsity]
            if not active and states > 1:
                active = [int(rng.integers(alphabet_size))]
            total = term[q] = rng.uniform(0.1, 1.0)
            for sym in active:
                targets = [t for t in range(states) if rng.random() < transition_sparsity]
                if not targets:
                    targets = [int(rng.integers(states))]
                for t in targets:
                    w = rng.uniform(0.1, 1.0)
                    mats[sym, q, t] = w
                    total += w
            mats[:, q, :] /= total
            term[q] /= total
        if _all_reachable(mats, states):
            alpha0 = np.zeros(states)
            alpha0[0] = 1.0
            return WeightedAutomaton(alphabet, alpha0, mats, term, stochastic=True)
    raise GenerationFailed(
        f"no fully reachable machine with {states} states after 100 draws"
    )


def _all_reachable(mats, states) -> bool:
    adjacency = mats.sum(axis=0) > 0
    seen = {0}
    frontier = deque([0])
    while frontier:
        q = frontier.popleft()
        for t in np.nonzero(adjacency[q])[0]:
            if int(t) not in seen:
                seen.add(int(t))
                frontier.append(int(t))
    return len(seen) == states


# -- document format -----------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_wa(wa: WeightedAutomaton) -> str:
    """Render the document format (17 significant digits, row-major)."""
    lines = ["{"]
    lines.append(f'  "format_version": {FORMAT_VERSION},')
    lines.append(f'  "alphabet": {json.dumps(list(wa.alphabet.symbols))},')
    lines.append(f'  "rank": {wa.rank},')
    lines.append(f'  "alpha0": [{", ".join(_fmt(x) for x in wa.alpha0)}],')
    lines.append(f'  "alphaInf": [{", ".join(_fmt(x) for x in wa.alpha_inf)}],')
    mat_lines = []
    for sym, name in enumerate(wa.alphabet.symbols):
        rows = ", ".join(
            f'[{", ".join(_fmt(x) for x in row)}]' for row in wa.mats[sym]
        )
        mat_lines.append(f'    {json.dumps(name)}: [{rows}]')
    lines.append('  "matrices": {')
    lines.append(",\n".join(mat_lines))
    lines.append("  },")
    lines.append(f'  "stochastic": {"true" if wa.stochastic else "false"}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_wa(text: str) -> WeightedAutomaton:
    """Parse the document format; malformed input raises :class:`ParseError`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad document: {e.msg}", offset=e.pos) from None
    if not isinstance(doc, dict):
        raise ParseError("document root must be an object", offset=0)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported format_version {doc.get('format_version')!r}", offset=0
        )
    for key in ("alphabet", "rank", "alpha0", "alphaInf", "matrices"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", offset=0)
    try:
        alphabet = Alphabet(doc["alphabet"])
    except InvalidInput as e:
        raise ParseError(str(e), offset=0) from None
    rank = doc["rank"]
    if not isinstance(rank, int) or rank < 1:
        raise ParseError(f"rank must be a positive integer, got {rank!r}", offset=0)
    matrices = doc["matrices"]
    if set(matrices) != set(alphabet.symbols):
        raise ParseError("matrix keys must match the alphabet exactly", offset=0)

    def vector(name):
        v = doc[name]
        if not isinstance(v, list) or len(v) != rank:
            raise ParseError(f"{name} must be a list of length {rank}", offset=0)
        return v

    mats = np.empty((alphabet.size, rank, rank))
    for sym, name in enumerate(alphabet.symbols):
        m = matrices[name]
        if (
            not isinstance(m, list)
            or len(m) != rank
            or any(not isinstance(row, list) or len(row) != rank for row in m)
        ):
            raise ParseError(
                f"matrix for {name!r} must be {rank}x{rank}", offset=0
            )
        mats[sym] = m
    try:
        wa = WeightedAutomaton(
            alphabet,
            vector("alpha0"),
            mats,
            vector("alphaInf"),
            stochastic=bool(doc.get("stochastic", False)),
        )
    except (InvalidInput, ValueError) as e:
        raise ParseError(str(e), offset=0) from None
    return wa


def save_wa(wa: WeightedAutomaton, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_wa(wa))


def load_wa(path) -> WeightedAutomaton:
    try:
        with open(path, encoding="utf-8") as fh:
            return loads_wa(fh.read())
    except OSError as e:
        raise ParseError(f"cannot read automaton document: {e}") from None


def total_mass_by_length(wa: WeightedAutomaton, max_len: int) -> list:
    """Cumulative series mass over all sequences of length <= L, L = 0..max_len.

    Exponential in the alphabet size; meant for small diagnostic checks.
    """
    masses = [wa.weight(())]
    configs = np.array([wa.alpha0])
    k = wa.alphabet.size
    for _ in range(max_len):
        configs = np.concatenate([configs @ wa.mats[s] for s in range(k)])
        masses.append(masses[-1] + float((configs @ wa.alpha_inf).sum()))
    return masses
