"""Black-box sequence oracles.

An oracle answers two kinds of queries: the log-probability of a complete
sequence, and the next-symbol distribution of a prefix (when supported).
Log space is used everywhere probabilities travel or rest — long sequences
underflow doubles in linear space.  Zero probability is the ``-inf``
sentinel.

Batch queries are the primary interface; the generic batch implementation
deduplicates before dispatch because Hankel fills produce huge numbers of
repeated concatenations.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict

import numpy as np

from .errors import CapabilityError, CorruptAnswer
from .wa import WeightedAutomaton, as_rng, rescale_config, _draw

NEG_INF = float("-inf")


def shared_config_walk(wa: WeightedAutomaton, prefixes):
    """Yield the walk config of each prefix, reusing shared heads.

    Configs are magnitude-rescaled exactly as :meth:`WeightedAutomaton.
    walk_config` does, so each yielded vector matches the per-prefix call.
    """
    stack = [np.asarray(wa.alpha0)]
    prev = ()
    for p in prefixes:
        p = tuple(p)
        wa.alphabet.check_ids(p)
        lcp = 0
        for a, b in zip(prev, p):
            if a != b:
                break
            lcp += 1
        del stack[lcp + 1:]
        for d in range(lcp, len(p)):
            stack.append(rescale_config(stack[d] @ wa.mats[p[d]]))
        yield stack[len(p)]
        prev = p


class Oracle:
    """Interface; concrete backends implement ``_eval_logprobs``."""

    alphabet = None
    supports_next_dist = False
    max_concurrent_queries = 1

    def string_logprob(self, seq) -> float:
        result = self.batch_string_logprob([tuple(seq)])[0]
        if isinstance(result, Exception):
            raise result
        return result

    def batch_string_logprob(self, seqs) -> list:
        """Log-probabilities in input order.

        Failed items carry their exception in place of a float; callers doing
        bulk work decide whether to retry or abort.
        """
        seqs = [tuple(s) for s in seqs]
        order = OrderedDict()
        for s in seqs:
            order.setdefault(s, None)
        unique = list(order)
        answers = self._eval_logprobs(unique)
        for key, value in zip(unique, answers):
            if isinstance(value, float) and math.isnan(value):
                value = CorruptAnswer(f"backend returned NaN for {key}")
            order[key] = value
        return [order[s] for s in seqs]

    def _eval_logprobs(self, seqs) -> list:
        raise NotImplementedError

    def next_dist(self, prefix) -> np.ndarray:
        raise CapabilityError("oracle does not support next-symbol distributions")

    def batch_next_dist(self, prefixes) -> list:
        return [self.next_dist(p) for p in prefixes]

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class WAOracle(Oracle):
    """In-process oracle backed by a weighted automaton.

    Immutable and safe for concurrent reads.  Skips deduplication: the
    evaluation kernel shares work between adjacent queries, which makes
    duplicates nearly free.
    """

    supports_next_dist = True
    max_concurrent_queries = 64

    def __init__(self, wa: WeightedAutomaton):
        self.wa = wa
        self.alphabet = wa.alphabet

    def batch_string_logprob(self, seqs) -> list:
        weights = self.wa.batch_weights([tuple(s) for s in seqs])
        return [float(x) for x in _to_logs(weights)]

    def _eval_logprobs(self, seqs):
        return self.batch_string_logprob(seqs)

    def row_logprobs(self, head, suffix_flat, suffix_offsets) -> np.ndarray:
        """Log-probabilities of ``head`` + every CSR-encoded suffix.

        Row-oriented fast path for Hankel fills; equivalent to querying the
        concatenations one by one.
        """
        from . import backend

        wa = self.wa
        wa.alphabet.check_ids(head)
        head = np.asarray(head, dtype=np.int32)
        weights = backend.eval_row_weights(
            wa.alpha0, head, wa.mats, wa.alpha_inf, suffix_flat, suffix_offsets
        )
        return _to_logs(weights)

    def next_dist(self, prefix) -> np.ndarray:
        return self.wa.next_dist(tuple(prefix))

    def batch_next_dist(self, prefixes) -> list:
        # Shares rescaled state vectors between prefixes with common heads,
        # which makes the per-sequence prefix sweeps of the metrics linear.
        return [
            self.wa.next_dist(config=config)
            for config in shared_config_walk(self.wa, prefixes)
        ]


def _to_logs(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.log(weights)
    logs[~(weights > 0.0)] = NEG_INF
    return logs


class QueryCache:
    """Bounded LRU map from symbol-id sequences to log-probabilities.

    Optionally mirrors every insert to an append-only spill file (one
    ``ids<TAB>logprob`` record per line) so interrupted fills can resume.
    """

    def __init__(self, capacity: int = 1_000_000, spill_path=None):
        self.capacity = int(capacity)
        self.hits = 0
        self.misses = 0
        self._map = OrderedDict()
        self._lock = threading.Lock()
        self._spill = open(spill_path, "a", encoding="utf-8") if spill_path else None

    def get(self, key):
        with self._lock:
            try:
                value = self._map[key]
            except KeyError:
                self.misses += 1
                return None
            self._map.move_to_end(key)
            self.hits += 1
            return value

    def put(self, key, value):
        with self._lock:
            if key in self._map:
                self._map.move_to_end(key)
                return
            self._map[key] = value
            if self._spill is not None:
                self._spill.write(format_spill_record(key, value))
            while len(self._map) > self.capacity:
                self._map.popitem(last=False)

    def __len__(self):
        return len(self._map)

    def close(self):
        if self._spill is not None:
            self._spill.close()
            self._spill = None


def format_spill_record(key, logprob) -> str:
    ids = " ".join(str(i) for i in key)
    return f"{ids}\t{format_logprob(logprob)}\n"


def format_logprob(value: float) -> str:
    return "-inf" if value == NEG_INF else repr(float(value))


def parse_logprob(token: str) -> float:
    if token == "-inf":
        return NEG_INF
    return float(token)


def load_spill(path) -> dict:
    """Read a spill/checkpoint file back into a plain dict."""
    answers = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            ids, _, token = line.partition("\t")
            key = tuple(int(x) for x in ids.split()) if ids else ()
            answers[key] = parse_logprob(token)
    return answers


class CachedOracle(Oracle):
    """Memoizing wrapper; transparent with respect to answers.

    Batches are serialized through the cache so each key is dispatched to
    the backend at most once.
    """

    def __init__(self, inner: Oracle, capacity: int = 1_000_000, spill_path=None):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.supports_next_dist = inner.supports_next_dist
        self.max_concurrent_queries = inner.max_concurrent_queries
        self.cache = QueryCache(capacity, spill_path)
        self._batch_lock = threading.Lock()

    def batch_string_logprob(self, seqs) -> list:
        seqs = [tuple(s) for s in seqs]
        with self._batch_lock:
            answers = {}
            missing = []
            for s in seqs:
                if s in answers:
                    continue
                hit = self.cache.get(s)
                if hit is None:
                    missing.append(s)
                    answers[s] = None
                else:
                    answers[s] = hit
            if missing:
                fresh = self.inner.batch_string_logprob(missing)
                for key, value in zip(missing, fresh):
                    answers[key] = value
                    if not isinstance(value, Exception):
                        self.cache.put(key, value)
            return [answers[s] for s in seqs]

    def _eval_logprobs(self, seqs):
        return self.batch_string_logprob(seqs)

    def next_dist(self, prefix):
        return self.inner.next_dist(prefix)

    def batch_next_dist(self, prefixes):
        return self.inner.batch_next_dist(prefixes)

    def close(self):
        self.cache.close()
        self.inner.close()


def sample_from_oracle(oracle: Oracle, rng, max_len: int) -> tuple:
    """Draw one sequence from an oracle's conditional distributions."""
    if not oracle.supports_next_dist:
        raise CapabilityError("sampling requires next-symbol distributions")
    rng = as_rng(rng)
    end = oracle.alphabet.end_id
    seq = []
    for _ in range(max_len):
        dist = oracle.next_dist(tuple(seq))
        total = float(np.sum(dist))
        if total <= 0.0:
            break
        sym = _draw(dist, rng)
        if sym == end:
            break
        seq.append(sym)
    return tuple(seq)
