"""Truncated-SVD factorization, automaton extraction, spectrum analysis.

Extraction consumes a rank factorization ``P S = H`` whose factors come
from a truncated SVD with the singular values folded into the left factor.
That split keeps both pseudo-inverses closed-form: the left one is the
scaled transpose of the singular directions, the right one their
untruncated counterpart.  Any rank factorization would give an equivalent
automaton; this one is the numerically cheap choice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .hankel import HankelBlocks
from .wa import WeightedAutomaton

# Relative singular-value size below which truncation is flagged as
# exceeding the numerical rank.
_TINY_REL = 1e-12


class RankDeficiencyWarning(UserWarning):
    """Requested rank reaches into numerically zero singular values."""


@dataclass
class Factorization:
    rank: int
    P: np.ndarray              # p x r
    S: np.ndarray              # r x s
    pinv_P: np.ndarray         # r x p
    pinv_S: np.ndarray         # s x r
    singular_values: np.ndarray  # full spectrum, descending
    _u: np.ndarray = None
    _vt: np.ndarray = None

    def at_rank(self, r: int) -> "Factorization":
        """Re-truncate to another rank, reusing the stored SVD."""
        return _truncate(self._u, self.singular_values, self._vt, r)


def _truncate(u, sv, vt, r) -> Factorization:
    if not 1 <= r <= len(sv):
        raise InvalidInput(f"rank must lie in [1, {len(sv)}], got {r}")
    if sv[0] == 0.0 or sv[r - 1] < _TINY_REL * sv[0]:
        warnings.warn(
            f"singular value {r} is below {_TINY_REL} of the largest; "
            "requested rank exceeds the numerical rank",
            RankDeficiencyWarning,
            stacklevel=3,
        )
    u_r = u[:, :r]
    s_r = sv[:r]
    vt_r = vt[:r, :]
    inv_s = np.divide(1.0, s_r, out=np.zeros_like(s_r), where=s_r > 0)
    return Factorization(
        rank=r,
        P=u_r * s_r,
        S=vt_r.copy(),
        pinv_P=inv_s[:, None] * u_r.T,
        pinv_S=vt_r.T.copy(),
        singular_values=sv,
        _u=u,
        _vt=vt,
    )


def rank_factorize(h: np.ndarray, r: int) -> Factorization:
    """Best rank-r factorization of a filled block via one full SVD."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.size == 0:
        raise InvalidInput("factorization needs a nonempty 2-d matrix")
    if not 1 <= r <= min(h.shape):
        raise InvalidInput(f"rank must lie in [1, {min(h.shape)}], got {r}")
    try:
        u, sv, vt = np.linalg.svd(h, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"SVD did not converge: {e}") from None
    return _truncate(u, sv, vt, r)


def extract_wa(
    blocks: HankelBlocks, r: int, factorization: Factorization | None = None
) -> WeightedAutomaton:
    """Build the rank-r automaton from filled blocks.

    The initial vector is the empty-prefix row pushed through the right
    pseudo-inverse, the terminal vector the empty-suffix column through the
    left one, and each symbol matrix the shifted block squeezed between
    both.  Passing a precomputed factorization reuses its SVD.
    """
    if factorization is None:
        factorization = rank_factorize(blocks.H, r)
    elif factorization.rank != r:
        factorization = factorization.at_rank(r)
    alphabet = blocks.basis.alphabet
    alpha0 = blocks.h_start_suffix @ factorization.pinv_S
    alpha_inf = factorization.pinv_P @ blocks.h_prefix_end
    mats = np.empty((alphabet.size, r, r))
    for sym in range(alphabet.size):
        mats[sym] = factorization.pinv_P @ blocks.H_sig[sym] @ factorization.pinv_S
    return WeightedAutomaton(alphabet, alpha0, mats, alpha_inf, stochastic=False)


@dataclass
class SpectrumReport:
    singular_values: np.ndarray
    log10_normalized: np.ndarray
    hankel_rank: int
    threshold_decades: float


def detect_hankel_rank(
    singular_values, drop_threshold_decades: float = 2.0
) -> SpectrumReport:
    """Count the significant singular values.

    The spectrum is normalized by its head and scanned on a log10 scale;
    the rank is the position of the first drop of at least the threshold
    (in decades) between consecutive values.  Without such a drop it falls
    back to where the spectrum sinks below 1e-10 of the head, and finally
    to the full length.  Scale-invariant by construction.
    """
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.ndim != 1 or sv.size == 0:
        raise InvalidInput("need a nonempty vector of singular values")
    if (sv < 0).any():
        raise InvalidInput("singular values must be nonnegative")
    if (np.diff(sv) > 1e-9 * max(sv[0], 1e-300)).any():
        raise InvalidInput("singular values must be descending")

    floored = np.maximum(sv, 1e-300)
    logs = np.log10(floored) - np.log10(floored[0])
    gaps = logs[:-1] - logs[1:]

    rank = None
    for k in range(1, sv.size):
        if gaps[k - 1] >= drop_threshold_decades:
            rank = k
            break
    if rank is None:
        ratios = floored / floored[0]
        for k in range(1, sv.size):
            if ratios[k] < 1e-10:
                rank = k
                break
    if rank is None:
        rank = sv.size
    return SpectrumReport(
        singular_values=sv,
        log10_normalized=logs,
        hankel_rank=rank,
        threshold_decades=float(drop_threshold_decades),
    )


def wa_parameter_count(r: int, alphabet_size: int) -> int:
    """Free parameters of a rank-r automaton: one matrix cell per symbol
    pair of states plus the two boundary vectors."""
    if r < 1 or alphabet_size < 1:
        raise InvalidInput("rank and alphabet size must be >= 1")
    return r * r * alphabet_size + 2 * r


def write_spectrum_report(report: SpectrumReport, path) -> None:
    """Two-column plot-ready dump with the detection summary up front."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# hankel_rank {report.hankel_rank} "
            f"threshold_decades {float(report.threshold_decades)!r}\n"
        )
        for idx, value in enumerate(report.singular_values, start=1):
            fh.write(f"{idx}\t{float(value)!r}\n")


def read_spectrum_report(path) -> SpectrumReport:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 5 or header[0] != "#":
            raise InvalidInput(f"not a spectrum report: {path}")
        rank = int(header[2])
        threshold = float(header[4])
        values = [float(line.split("\t")[1]) for line in fh if line.strip()]
    sv = np.asarray(values)
    floored = np.maximum(sv, 1e-300)
    return SpectrumReport(
        singular_values=sv,
        log10_normalized=np.log10(floored) - np.log10(floored[0]),
        hankel_rank=rank,
        threshold_decades=threshold,
    )
