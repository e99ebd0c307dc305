"""Basis generation and Hankel sub-block filling.

A basis is a prefix-closed list of prefixes and a list of suffixes; the
Hankel sub-block it induces holds the oracle's probability for every
prefix+suffix concatenation.  Filling also records the shifted per-symbol
blocks and the two boundary vectors needed for spectral extraction.

Blocks live in probability space: the SVD operates on series values, and
zero-probability answers become exact zero cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .alphabet import Alphabet
from .errors import BasisExhausted, FillAborted, InvalidInput, OracleUnavailable, ParseError
from .oracle import NEG_INF, Oracle, format_spill_record, load_spill, sample_from_oracle
from .wa import as_rng

# Dense block storage cap per side; larger fills must be chunked externally.
MAX_DENSE_SIDE = 3000

# Hard cap on sampled-sequence length before closure.
DEFAULT_MAX_LEN = 100


def canonical_order(seqs):
    """Deduplicate and sort length-then-lexicographic (the reproducible order)."""
    return tuple(sorted(set(seqs), key=lambda t: (len(t), t)))


@dataclass
class Basis:
    alphabet: Alphabet
    prefixes: tuple
    suffixes: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.prefixes = canonical_order(self.prefixes)
        self.suffixes = canonical_order(self.suffixes)
        present = set(self.prefixes)
        if () not in present or () not in set(self.suffixes):
            raise InvalidInput("basis must contain the empty sequence on both sides")
        for w in self.prefixes:
            self.alphabet.check_ids(w)
            if w and w[:-1] not in present:
                raise InvalidInput(f"prefix set is not prefix-closed at {w}")
        for w in self.suffixes:
            self.alphabet.check_ids(w)

    @property
    def p(self) -> int:
        return len(self.prefixes)

    @property
    def s(self) -> int:
        return len(self.suffixes)


def _collect(target, w, pieces):
    if pieces == "prefixes":
        target.update(w[:i] for i in range(len(w) + 1))
    else:
        target.update(w[i:] for i in range(len(w) + 1))


def _grow_basis(draw, alphabet, p, s, max_len, strategy, seed):
    prefixes = {()}
    suffixes = {()}
    budget = 10 * p * max(1, max_len)
    draws = 0
    while len(prefixes) < p:
        if draws >= budget:
            raise BasisExhausted(
                f"could not reach {p} prefixes in {budget} draws",
                len(prefixes), len(suffixes),
            )
        draws += 1
        w = draw()
        _collect(prefixes, w, "prefixes")
        _collect(suffixes, w, "suffixes")
    budget = 10 * s * max(1, max_len)
    draws = 0
    while len(suffixes) < s:
        if draws >= budget:
            raise BasisExhausted(
                f"could not reach {s} suffixes in {budget} draws",
                len(prefixes), len(suffixes),
            )
        draws += 1
        _collect(suffixes, draw(), "suffixes")
    meta = {"p": p, "s": s, "max_len": max_len, "seed": seed, "strategy": strategy}
    return Basis(alphabet, tuple(prefixes), tuple(suffixes), meta)


def gen_basis_uniform(alphabet, p, s, max_len=DEFAULT_MAX_LEN, seed=None) -> Basis:
    """Basis from sequences of uniform length and uniform symbols.

    Sampled sequences contribute all their prefixes and suffixes, so the
    achieved sizes overshoot the targets rather than truncating (truncation
    would break prefix closure).
    """
    if p < 1 or s < 1:
        raise InvalidInput("basis size targets must be >= 1")
    if max_len < 0:
        raise InvalidInput("max_len must be >= 0")
    rng = as_rng(seed)
    k = alphabet.size

    def draw():
        length = int(rng.integers(0, max_len + 1))
        return tuple(int(x) for x in rng.integers(0, k, size=length))

    return _grow_basis(draw, alphabet, p, s, max_len, "uniform", seed)


def gen_basis_oracle(oracle: Oracle, p, s, max_len=DEFAULT_MAX_LEN, seed=None) -> Basis:
    """Basis from sequences sampled out of the oracle itself."""
    if p < 1 or s < 1:
        raise InvalidInput("basis size targets must be >= 1")
    if max_len < 0:
        raise InvalidInput("max_len must be >= 0")
    rng = as_rng(seed)

    def draw():
        return sample_from_oracle(oracle, rng, max_len)

    return _grow_basis(draw, oracle.alphabet, p, s, max_len, "oracle", seed)


@dataclass
class HankelBlocks:
    basis: Basis
    H: np.ndarray           # p x s, H[u, v] = f(uv)
    H_sig: np.ndarray       # K x p x s, H_sig[sym][u, v] = f(u sym v)
    h_prefix_end: np.ndarray   # p, f(u): the empty-suffix column
    h_start_suffix: np.ndarray  # s, f(v): the empty-prefix row
    value_space: str = "probability"


def _cell_stream(basis):
    """Yield (query, block, sym, i, j) in an order that shares prefixes.

    Prefixes are walked in lexicographic order and each prefix emits its
    whole row (plain block, then each shifted block), so consecutive
    queries agree on long heads and the evaluation kernels reuse them.
    """
    k = basis.alphabet.size
    pref_lex = sorted(range(basis.p), key=lambda i: basis.prefixes[i])
    suff_lex = sorted(range(basis.s), key=lambda j: basis.suffixes[j])
    for i in pref_lex:
        u = basis.prefixes[i]
        for j in suff_lex:
            yield u + basis.suffixes[j], "H", 0, i, j
        for sym in range(k):
            head = u + (sym,)
            for j in suff_lex:
                yield head + basis.suffixes[j], "S", sym, i, j
    return


def _fill_by_rows(oracle, basis, h, h_sig):
    """Row-oriented fill through the oracle's bulk hook.

    One oracle call per (prefix, shift) row; answers scatter straight into
    the blocks.  Equivalent to the per-query path cell for cell.
    """
    from .backend import flatten_batch

    k = basis.alphabet.size
    suff_lex = sorted(range(basis.s), key=lambda j: basis.suffixes[j])
    flat, offsets = flatten_batch([basis.suffixes[j] for j in suff_lex])
    basis.alphabet.check_ids(flat)
    cols = np.asarray(suff_lex, dtype=np.intp)
    for i in range(basis.p):
        u = basis.prefixes[i]
        h[i, cols] = np.exp(oracle.row_logprobs(u, flat, offsets))
        for sym in range(k):
            h_sig[sym, i, cols] = np.exp(
                oracle.row_logprobs(u + (sym,), flat, offsets)
            )


def fill_hankel(
    oracle: Oracle,
    basis: Basis,
    *,
    chunk_size: int = 100_000,
    checkpoint_path=None,
    max_retries: int = 2,
) -> HankelBlocks:
    """Fill every block by querying the oracle for each concatenation.

    Answers arrive as log-probabilities and are stored as probabilities.
    A query that stays unanswered after retries aborts the fill; progress
    is checkpointed (cache-spill format) when a checkpoint path is given.
    """
    p, s, k = basis.p, basis.s, basis.alphabet.size
    if p > MAX_DENSE_SIDE or s > MAX_DENSE_SIDE:
        raise FillAborted(
            f"dense fill capped at {MAX_DENSE_SIDE} per side, got {p}x{s}; "
            "split the basis and fill in chunks"
        )
    h = np.zeros((p, s))
    h_sig = np.zeros((k, p, s))

    if checkpoint_path is None and hasattr(oracle, "row_logprobs"):
        _fill_by_rows(oracle, basis, h, h_sig)
        i_empty = basis.prefixes.index(())
        j_empty = basis.suffixes.index(())
        return HankelBlocks(
            basis=basis,
            H=h,
            H_sig=h_sig,
            h_prefix_end=h[:, j_empty].copy(),
            h_start_suffix=h[i_empty, :].copy(),
        )

    resumed = {}
    if checkpoint_path is not None:
        try:
            resumed = load_spill(checkpoint_path)
        except FileNotFoundError:
            resumed = {}
    ckpt = open(checkpoint_path, "a", encoding="utf-8") if checkpoint_path else None

    def store(block, sym, i, j, logprob):
        value = 0.0 if logprob == NEG_INF else math.exp(logprob)
        if block == "H":
            h[i, j] = value
        else:
            h_sig[sym, i, j] = value

    stream = _cell_stream(basis)
    try:
        while True:
            cells = list(itertools.islice(stream, chunk_size))
            if not cells:
                break
            pending = []
            for query, block, sym, i, j in cells:
                known = resumed.get(query)
                if known is not None:
                    store(block, sym, i, j, known)
                else:
                    pending.append((query, block, sym, i, j))
            if not pending:
                continue
            answers = oracle.batch_string_logprob([c[0] for c in pending])
            for attempt in range(max_retries):
                retry_idx = [
                    idx for idx, a in enumerate(answers)
                    if isinstance(a, OracleUnavailable)
                ]
                if not retry_idx:
                    break
                fresh = oracle.batch_string_logprob(
                    [pending[idx][0] for idx in retry_idx]
                )
                for idx, a in zip(retry_idx, fresh):
                    answers[idx] = a
            for (query, block, sym, i, j), answer in zip(pending, answers):
                if isinstance(answer, OracleUnavailable):
                    raise FillAborted(
                        f"oracle unavailable for {query} after {max_retries} retries",
                        checkpoint_path=checkpoint_path,
                    )
                if isinstance(answer, Exception):
                    raise answer
                store(block, sym, i, j, answer)
                if ckpt is not None:
                    ckpt.write(format_spill_record(query, answer))
            if ckpt is not None:
                ckpt.flush()
    finally:
        if ckpt is not None:
            ckpt.close()

    i_empty = basis.prefixes.index(())
    j_empty = basis.suffixes.index(())
    return HankelBlocks(
        basis=basis,
        H=h,
        H_sig=h_sig,
        h_prefix_end=h[:, j_empty].copy(),
        h_start_suffix=h[i_empty, :].copy(),
    )


# -- basis files ---------------------------------------------------------------


def write_basis(basis: Basis, path) -> None:
    """Header ``p s K max_len seed strategy`` then one sequence per line
    (leading length, then ids), prefixes first."""
    meta = basis.meta
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"{basis.p} {basis.s} {basis.alphabet.size} "
            f"{meta.get('max_len', -1)} {meta.get('seed', -1)} "
            f"{meta.get('strategy', 'unknown')}\n"
        )
        for seq in basis.prefixes + basis.suffixes:
            fh.write(" ".join([str(len(seq)), *map(str, seq)]) + "\n")


def read_basis(path, alphabet: Alphabet | None = None) -> Basis:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read basis file: {e}") from None
    with fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ParseError("basis header must have 6 fields", line=1)
        try:
            p, s, k, max_len, seed = (int(x) for x in header[:5])
        except ValueError:
            raise ParseError("basis header fields must be integers", line=1) from None
        strategy = header[5]
        if alphabet is None:
            alphabet = Alphabet.of_size(k)
        elif alphabet.size != k:
            raise ParseError(
                f"basis alphabet size {k} does not match expected {alphabet.size}",
                line=1,
            )
        seqs = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            try:
                ids = [int(x) for x in parts]
            except ValueError:
                raise ParseError("sequence line must be integers", line=lineno) from None
            if not ids or ids[0] != len(ids) - 1:
                raise ParseError("sequence length marker mismatch", line=lineno)
            seqs.append(tuple(ids[1:]))
        if len(seqs) != p + s:
            raise ParseError(f"expected {p + s} sequences, found {len(seqs)}")
    meta = {"p": p, "s": s, "max_len": max_len, "seed": seed, "strategy": strategy}
    return Basis(alphabet, tuple(seqs[:p]), tuple(seqs[p:]), meta)
