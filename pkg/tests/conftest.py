import hashlib

import numpy as np
import pytest

from wadistill import Alphabet, Oracle, WAOracle, WeightedAutomaton
from wadistill.errors import OracleUnavailable
from wadistill.oracle import NEG_INF


@pytest.fixture
def fig_wa():
    """Two-state stochastic automaton used in the worked examples.

    f(lambda)=0, f(a)=1/24, f(b)=1/12, f(ab)=5/96, normalized terminal
    vector [1, 1], next-symbol distribution at lambda = [2/3, 1/3, 0].
    """
    return WeightedAutomaton(
        Alphabet(["a", "b"]),
        [1.0, 0.0],
        [
            [[0.5, 1.0 / 6.0], [0.0, 0.25]],
            [[0.0, 1.0 / 3.0], [0.25, 0.25]],
        ],
        [0.0, 0.25],
        stochastic=True,
    )


@pytest.fixture
def fig_oracle(fig_wa):
    return WAOracle(fig_wa)


def all_strings(alphabet_size, max_len):
    """Every id sequence up to the given length, shortest first."""
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        frontier = [s + (sym,) for s in frontier for sym in range(alphabet_size)]
        out.extend(frontier)
    return out


class CountingOracle(Oracle):
    """Counts the sequences that actually reach the backend."""

    def __init__(self, inner):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.supports_next_dist = inner.supports_next_dist
        self.backend_queries = 0
        self.backend_calls = 0

    def _eval_logprobs(self, seqs):
        self.backend_calls += 1
        self.backend_queries += len(seqs)
        return self.inner.batch_string_logprob(seqs)

    def next_dist(self, prefix):
        return self.inner.next_dist(prefix)

    def batch_next_dist(self, prefixes):
        return self.inner.batch_next_dist(prefixes)


class FlakyOracle(Oracle):
    """Fails specific sequences a configurable number of times."""

    def __init__(self, inner, failing, fail_times=10**9):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.supports_next_dist = inner.supports_next_dist
        self.failing = {tuple(s) for s in failing}
        self.fail_times = fail_times
        self.failures = 0

    def _eval_logprobs(self, seqs):
        out = []
        for seq, value in zip(seqs, self.inner.batch_string_logprob(seqs)):
            if tuple(seq) in self.failing and self.failures < self.fail_times:
                self.failures += 1
                out.append(OracleUnavailable(f"injected failure for {seq}"))
            else:
                out.append(value)
        return out

    def next_dist(self, prefix):
        return self.inner.next_dist(prefix)


class NoisyOracle(Oracle):
    """Exact oracle distorted by deterministic multiplicative query noise.

    Each sequence gets its own standard-normal draw (derived by hashing the
    ids with the seed), scaled by ``level`` and applied to the probability,
    so repeated queries stay bit-identical.
    """

    def __init__(self, inner, level=0.01, seed=0):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.supports_next_dist = inner.supports_next_dist
        self.level = level
        self.seed = seed

    def _noise(self, seq):
        digest = hashlib.sha256(
            (str(self.seed) + ":" + " ".join(map(str, seq))).encode()
        ).digest()
        sub = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return 1.0 + self.level * sub.standard_normal()

    def _eval_logprobs(self, seqs):
        clean = self.inner.batch_string_logprob(seqs)
        out = []
        for seq, lp in zip(seqs, clean):
            if lp == NEG_INF:
                out.append(lp)
            else:
                factor = max(self._noise(seq), 1e-12)
                out.append(lp + float(np.log(factor)))
        return out

    def next_dist(self, prefix):
        return self.inner.next_dist(prefix)

    def batch_next_dist(self, prefixes):
        return self.inner.batch_next_dist(prefixes)


class GenericOracle(Oracle):
    """Hides every bulk hook of the wrapped oracle (exercises slow paths)."""

    def __init__(self, inner):
        self.inner = inner
        self.alphabet = inner.alphabet
        self.supports_next_dist = inner.supports_next_dist

    def _eval_logprobs(self, seqs):
        return self.inner.batch_string_logprob(seqs)

    def next_dist(self, prefix):
        return self.inner.next_dist(prefix)
