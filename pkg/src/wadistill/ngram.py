"""n-gram baseline trained on oracle-sampled sequences.

Plain counting with longest-match backoff: a prefix is scored by the
longest context (up to the window minus one symbols, start-padded) that
was ever observed, normalized at that level with no discounting; a prefix
whose every context level is unseen falls back to the uniform
distribution over symbols plus the end outcome.

The model doubles as a ranking provider (its distributions are the
scores) and as an oracle (chain-rule log-probabilities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alphabet import Alphabet
from .errors import GenerationFailed, InvalidInput, ParseError
from .oracle import NEG_INF, Oracle, sample_from_oracle
from .wa import as_rng

START = -1

MIN_WINDOW = 2
MAX_WINDOW = 20


@dataclass
class NGramModel:
    n: int
    alphabet: Alphabet
    # tables[o] maps a length-o context tuple to a count vector over
    # symbols plus the end outcome; orders run 1..n-1.
    tables: dict = field(default_factory=dict)
    total_symbols: int = 0

    def __post_init__(self):
        if not MIN_WINDOW <= self.n <= MAX_WINDOW:
            raise InvalidInput(f"window must lie in [{MIN_WINDOW}, {MAX_WINDOW}]")
        for order in range(1, self.n):
            self.tables.setdefault(order, {})

    def _context(self, prefix, order):
        ctx = tuple(prefix[-order:]) if order else ()
        if len(ctx) < order:
            ctx = (START,) * (order - len(ctx)) + ctx
        return ctx

    def observe(self, seq) -> None:
        self.alphabet.check_ids(seq)
        width = self.alphabet.size + 1
        end = self.alphabet.end_id
        events = list(seq) + [end]
        for i, outcome in enumerate(events):
            for order in range(1, self.n):
                ctx = self._context(seq[:i], order)
                counts = self.tables[order].get(ctx)
                if counts is None:
                    counts = self.tables[order][ctx] = np.zeros(width, dtype=np.int64)
                counts[outcome] += 1
        self.total_symbols += len(seq)

    def next_dist(self, prefix) -> np.ndarray:
        prefix = tuple(prefix)
        for order in range(self.n - 1, 0, -1):
            counts = self.tables[order].get(self._context(prefix, order))
            if counts is not None:
                return counts / counts.sum()
        width = self.alphabet.size + 1
        return np.full(width, 1.0 / width)

    def batch_next_dist(self, prefixes) -> list:
        return [self.next_dist(p) for p in prefixes]

    def batch_scores(self, prefixes) -> np.ndarray:
        return np.stack(self.batch_next_dist(prefixes))


def train_ngram(corpus, n: int, alphabet: Alphabet) -> NGramModel:
    corpus = list(corpus)
    if not corpus:
        raise InvalidInput("cannot train on an empty corpus")
    model = NGramModel(n, alphabet)
    for seq in corpus:
        model.observe(seq)
    return model


def sample_corpus(oracle, symbol_budget: int, max_len: int = 100, seed=None) -> list:
    """Sample sequences until their total length strictly exceeds the budget."""
    if symbol_budget < 0:
        raise InvalidInput("symbol budget must be >= 0")
    rng = as_rng(seed)
    corpus = []
    total = 0
    draw_cap = 1000 + 10 * (symbol_budget + 1)
    while total <= symbol_budget:
        if len(corpus) >= draw_cap:
            raise GenerationFailed(
                "oracle keeps producing empty sequences; budget unreachable"
            )
        seq = sample_from_oracle(oracle, rng, max_len)
        corpus.append(seq)
        total += len(seq)
    return corpus


class NGramOracle(Oracle):
    """Oracle adapter: chain-rule log-probabilities from the count tables."""

    supports_next_dist = True

    def __init__(self, model: NGramModel):
        self.model = model
        self.alphabet = model.alphabet

    def _eval_logprobs(self, seqs) -> list:
        end = self.alphabet.end_id
        out = []
        for seq in seqs:
            logprob = 0.0
            for i, outcome in enumerate(list(seq) + [end]):
                p = self.model.next_dist(seq[:i])[outcome]
                if p <= 0.0:
                    logprob = NEG_INF
                    break
                logprob += math.log(p)
            out.append(logprob)
        return out

    def next_dist(self, prefix):
        return self.model.next_dist(prefix)

    def batch_next_dist(self, prefixes):
        return self.model.batch_next_dist(prefixes)


# -- persistence ----------------------------------------------------------------


def save_ngram(model: NGramModel, path) -> None:
    """First line: the window.  Then ``context-ids<TAB>symbol<TAB>count``
    records for every nonzero count at every backoff order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{model.n}\n")
        for order in sorted(model.tables):
            for ctx in sorted(model.tables[order]):
                counts = model.tables[order][ctx]
                for sym in np.nonzero(counts)[0]:
                    fh.write(
                        f"{' '.join(map(str, ctx))}\t{int(sym)}\t{int(counts[sym])}\n"
                    )


def load_ngram(path, alphabet: Alphabet | None = None) -> NGramModel:
    """Rebuild a model.  Without an explicit alphabet its size is inferred
    from the largest recorded outcome id (the end outcome is always
    recorded, and it carries the largest id)."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read model: {e}") from None
    with fh:
        header = fh.readline().strip()
        try:
            n = int(header)
        except ValueError:
            raise ParseError(f"window line must be an integer, got {header!r}", line=1) from None
        records = []
        max_outcome = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ParseError("record must be context<TAB>symbol<TAB>count", line=lineno)
            ctx = tuple(int(x) for x in parts[0].split()) if parts[0] else ()
            sym, count = int(parts[1]), int(parts[2])
            if count < 1:
                raise ParseError("counts must be >= 1", line=lineno)
            records.append((ctx, sym, count))
            max_outcome = max(max_outcome, sym)
    if alphabet is None:
        if max_outcome < 1:
            raise ParseError("cannot infer the alphabet from an empty model")
        alphabet = Alphabet.of_size(max_outcome)
    model = NGramModel(n, alphabet)
    width = alphabet.size + 1
    total = 0
    for ctx, sym, count in records:
        if not 0 <= sym < width:
            raise ParseError(f"outcome id {sym} outside alphabet of size {alphabet.size}")
        order = len(ctx)
        if order not in model.tables:
            raise ParseError(f"context {ctx} longer than window {n} allows")
        counts = model.tables[order].get(ctx)
        if counts is None:
            counts = model.tables[order][ctx] = np.zeros(width, dtype=np.int64)
        counts[sym] += count
        if order == 1 and sym < alphabet.size:
            total += count
    model.total_symbols = total
    return model
