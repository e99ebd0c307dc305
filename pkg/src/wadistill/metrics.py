"""Evaluation sets and the two agreement metrics.

Both metrics walk every prefix of every evaluation sequence (the empty
prefix and the complete sequence included, so end-of-sequence prediction
is scored too) and compare a candidate's next-symbol ranking against the
ground-truth oracle's distribution:

* the discounted-gain ratio rewards putting the oracle's probability mass
  in the top ``n`` positions, discounted by log2 of the position;
* the disagreement rate counts prefixes where the single most likely next
  symbol differs.

Candidates only ever need a ranking, never calibrated probabilities, so
extracted automata with negative scores evaluate fine.  Ties rank the
lower symbol id first; the end outcome has the highest index and
therefore loses every tie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, InvalidInput, ParseError
from .oracle import Oracle, sample_from_oracle, shared_config_walk
from .pautomac import parse_pautomac_sequences
from .wa import WeightedAutomaton, as_rng

DEFAULT_EVAL_SEQUENCES = 1000


@dataclass
class EvalSet:
    sequences: list
    source: str  # "test_file" | "oracle_sampled"

    @property
    def count(self) -> int:
        return len(self.sequences)


def load_test_set(path, alphabet) -> EvalSet:
    seqs, size = parse_pautomac_sequences(path)
    if size > alphabet.size:
        raise ParseError(
            f"test file declares alphabet size {size}, oracle has {alphabet.size}"
        )
    return EvalSet([tuple(s) for s in seqs], "test_file")


def sample_eval_set(oracle: Oracle, n_sequences, max_len, seed) -> EvalSet:
    if not oracle.supports_next_dist:
        raise CapabilityError("sampling an evaluation set needs next_dist support")
    rng = as_rng(seed)
    seqs = [sample_from_oracle(oracle, rng, max_len) for _ in range(n_sequences)]
    return EvalSet(seqs, "oracle_sampled")


def build_eval_sets(
    oracle: Oracle,
    test_file_path=None,
    n_sequences: int = DEFAULT_EVAL_SEQUENCES,
    max_len: int = 100,
    seed=None,
):
    """(test-file set or None, oracle-sampled set)."""
    test_set = None
    if test_file_path is not None:
        test_set = load_test_set(test_file_path, oracle.alphabet)
    sampled = sample_eval_set(oracle, n_sequences, max_len, seed)
    return test_set, sampled


# -- ranking providers --------------------------------------------------------


class WARanking:
    """Next-symbol scores of an automaton, shared along prefix chains.

    Scores come from magnitude-rescaled configs: per prefix that is a
    positive multiple of the literal raw scores, so the induced ranking is
    identical while long prefixes stay clear of underflow.
    """

    def __init__(self, wa: WeightedAutomaton):
        self.wa = wa

    def batch_scores(self, prefixes) -> np.ndarray:
        t = self.wa.score_matrix()
        out = np.empty((len(prefixes), self.wa.alphabet.size + 1))
        for row, config in enumerate(shared_config_walk(self.wa, prefixes)):
            out[row] = t @ config
        return out


class OracleRanking:
    """An oracle's own distribution used as candidate scores."""

    def __init__(self, oracle: Oracle):
        self.oracle = oracle

    def batch_scores(self, prefixes) -> np.ndarray:
        return np.stack(self.oracle.batch_next_dist(prefixes))


def as_ranking(candidate):
    if hasattr(candidate, "batch_scores"):
        return candidate
    if isinstance(candidate, WeightedAutomaton):
        return WARanking(candidate)
    if isinstance(candidate, Oracle):
        return OracleRanking(candidate)
    raise InvalidInput(f"cannot rank with {type(candidate).__name__}")


# -- metric machinery ---------------------------------------------------------


@dataclass
class MetricResult:
    name: str
    value: float
    prefix_count: int
    skipped: int = 0
    per_sequence: list = None


def _prefixes(seq):
    return [seq[:i] for i in range(len(seq) + 1)]


def ground_dist_table(ground: Oracle, eval_set: EvalSet) -> list:
    """Per-sequence stacked ground distributions, reusable across candidates."""
    if not ground.supports_next_dist:
        raise CapabilityError("ground-truth oracle must support next_dist")
    return [np.stack(ground.batch_next_dist(_prefixes(seq))) for seq in eval_set.sequences]


def _rank_rows(scores: np.ndarray) -> np.ndarray:
    # Stable argsort on the negated scores: descending, ties by symbol id.
    return np.argsort(-scores, axis=1, kind="stable")


def evaluate_candidate(
    ground: Oracle,
    candidate,
    eval_set: EvalSet,
    n: int = 5,
    *,
    ground_dists=None,
    debug_rows=None,
) -> dict:
    """Both metrics in one pass; returns {metric name: MetricResult}.

    ``ground_dists`` accepts the output of :func:`ground_dist_table` so
    rank sweeps pay for the oracle's distributions once.  ``debug_rows``
    collects per-prefix records when a list is passed.
    """
    width = ground.alphabet.size + 1
    if not 1 <= n <= width:
        raise InvalidInput(f"n must lie in [1, {width}], got {n}")
    ranking = as_ranking(candidate)
    if ground_dists is None:
        ground_dists = ground_dist_table(ground, eval_set)
    discounts = 1.0 / np.log2(np.arange(2, n + 2))

    gain_values = []
    skipped = 0
    disagreements = 0
    total = 0
    for seq_id, seq in enumerate(eval_set.sequences):
        prefixes = _prefixes(seq)
        gdist = ground_dists[seq_id]
        cscores = ranking.batch_scores(prefixes)
        granks = _rank_rows(gdist)
        cranks = _rank_rows(cscores)
        total += len(prefixes)
        for row in range(len(prefixes)):
            g = gdist[row]
            top_true = granks[row, :n]
            top_cand = cranks[row, :n]
            den = float(g[top_true] @ discounts)
            gain = None
            if den == 0.0:
                skipped += 1
            else:
                gain = float(g[top_cand] @ discounts) / den
                gain_values.append(gain)
            agree = granks[row, 0] == cranks[row, 0]
            if not agree:
                disagreements += 1
            if debug_rows is not None:
                debug_rows.append(
                    (
                        seq_id,
                        row,
                        " ".join(map(str, top_true)),
                        " ".join(map(str, top_cand)),
                        "" if gain is None else f"{gain:.6f}",
                        int(agree),
                    )
                )

    ndcg = math.fsum(gain_values) / len(gain_values) if gain_values else 0.0
    return {
        f"NDCG{n}": MetricResult(f"NDCG{n}", ndcg, total, skipped=skipped),
        "WER-D": MetricResult("WER-D", disagreements / total if total else 0.0, total),
    }


def ndcg_n(ground, candidate, eval_set, n=5, *, ground_dists=None) -> MetricResult:
    return evaluate_candidate(ground, candidate, eval_set, n, ground_dists=ground_dists)[
        f"NDCG{n}"
    ]


def wer_d(ground, candidate, eval_set, *, ground_dists=None) -> MetricResult:
    # The top-1 comparison never looks past the first ranked entry, so the
    # gain width does not matter; n=1 keeps the pass cheap.
    return evaluate_candidate(ground, candidate, eval_set, 1, ground_dists=ground_dists)[
        "WER-D"
    ]
