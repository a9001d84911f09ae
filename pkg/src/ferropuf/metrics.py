"""PUF quality statistics over response matrices.

A response matrix has one row per PUF instance, registration or
reconfiguration and one column per challenge.  All functions are pure; pair
statistics enumerate pairs in ``itertools.combinations`` order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .errors import DimensionError, InsufficientDataError

HIST_BINS = 20


@dataclass
class ResponseMatrix:
    bits: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2:
            raise DimensionError(f"response matrix must be 2-D, got shape {self.bits.shape}")
        if not self.labels:
            self.labels = tuple(str(i) for i in range(len(self.bits)))
        self.labels = tuple(self.labels)
        if len(self.labels) != len(self.bits):
            raise DimensionError("one label per response row required")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("response labels must be unique")


@dataclass
class MetricsReport:
    hw: float
    entropy_per_bit: list[float]
    hd_inter_mean: float
    hd_inter_std: float
    hd_reconf_mean: float
    hd_reconf_std: float
    corr_max_offdiag: float
    reliability_bit_error_rate: float
    flip_chance: float
    tie_count: int
    extra: dict = field(default_factory=dict)

    def flat(self) -> dict:
        """Scalar view for key-value output (entropy summarized, extras merged)."""
        d = asdict(self)
        ent = np.asarray(d.pop("entropy_per_bit"))
        d.update(d.pop("extra"))
        d["entropy_min"] = float(ent.min()) if ent.size else float("nan")
        d["entropy_mean"] = float(ent.mean()) if ent.size else float("nan")
        return d

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.flat().items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _bits(m) -> np.ndarray:
    b = m.bits if isinstance(m, ResponseMatrix) else np.asarray(m, dtype=np.uint8)
    if b.ndim == 1:
        b = b[None, :]
    if b.size == 0:
        raise DimensionError("empty response matrix")
    return b


def _need_rows(b: np.ndarray, r: int = 2) -> None:
    if len(b) < r:
        raise InsufficientDataError(f"need at least {r} response rows, got {len(b)}")


def hamming_weight(m) -> float:
    b = _bits(m)
    return float(np.count_nonzero(b)) / b.size


def binary_entropy(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.where((p <= 0) | (p >= 1), 0.0, h)


def bitwise_entropy(m) -> np.ndarray:
    """Binary entropy of every column's mean."""
    b = _bits(m)
    _need_rows(b)
    return binary_entropy(b.mean(axis=0))


def pairwise_hd(b: np.ndarray) -> np.ndarray:
    """Normalized Hamming distance of every unordered row pair."""
    b = _bits(b)
    return np.array([np.count_nonzero(b[i] != b[j]) for i, j in combinations(range(len(b)), 2)],
                    dtype=float) / b.shape[1]


def histogram(values, bins: int = HIST_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Counts and edges on ``bins`` uniform bins over [0, 1]."""
    return np.histogram(np.asarray(values, dtype=float), bins=bins, range=(0.0, 1.0))


def hd_inter(m, bins: int = HIST_BINS) -> tuple[float, float, tuple[np.ndarray, np.ndarray]]:
    """Mean, population std and histogram of pairwise normalized HD."""
    b = _bits(m)
    _need_rows(b)
    d = pairwise_hd(b)
    return float(d.mean()), float(d.std()), histogram(d, bins)


def hd_reconfigure(before, after) -> tuple[float, float]:
    """Row-matched normalized HD between two reconfigurations of the same PUFs."""
    a, b = _bits(before), _bits(after)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    d = np.count_nonzero(a != b, axis=1) / a.shape[1]
    return float(d.mean()), float(d.std())


def hd_reconfigure_series(matrices) -> tuple[float, float, np.ndarray]:
    """Aggregate ``hd_reconfigure`` over every pair of reconfigurations.

    ``matrices`` is a sequence of equally shaped response matrices, one per
    reconfiguration.  Returns mean, std and the pooled distances.
    """
    mats = [_bits(m) for m in matrices]
    _need_rows(mats)
    if any(m.shape != mats[0].shape for m in mats):
        raise DimensionError("all reconfigurations must share one shape")
    d = np.concatenate([
        np.count_nonzero(mats[i] != mats[j], axis=1) / mats[0].shape[1]
        for i, j in combinations(range(len(mats)), 2)
    ])
    return float(d.mean()), float(d.std()), d


def correlation_matrix(m) -> np.ndarray:
    """Pearson correlation between response rows.

    Entries involving a constant row are NaN: undefined, not zero.
    """
    b = _bits(m).astype(float)
    _need_rows(b)
    centered = b - b.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (centered @ centered.T) / np.outer(norms, norms)
    degenerate = norms == 0
    corr[degenerate, :] = np.nan
    corr[:, degenerate] = np.nan
    return np.clip(corr, -1.0, 1.0)


def max_offdiag_abs(corr: np.ndarray) -> float:
    """Largest |off-diagonal| entry, ignoring undefined ones (NaN if none defined)."""
    off = np.abs(corr[~np.eye(len(corr), dtype=bool)])
    off = off[~np.isnan(off)]
    return float(off.max()) if off.size else float("nan")


def reliability(row, challenges, repeats: int, noise_sigma: float = 0.0, rng=None) -> float:
    """Fraction of (repeat, challenge) bits that differ from the first repeat.

    The row model is static, so this is 0 unless ``noise_sigma`` injects
    Gaussian read noise (volts) on the summed voltage.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    challenges = np.atleast_2d(challenges)
    rng = rng if rng is not None else np.random.default_rng(0)

    def once():
        noise = rng.normal(0.0, noise_sigma, size=len(challenges)) if noise_sigma > 0 else None
        return row.responses(challenges, noise=noise)

    first = once()
    errors = sum(int(np.count_nonzero(once() != first)) for _ in range(repeats - 1))
    return errors / (repeats * len(challenges))


def flipped_challenges(row, challenges) -> np.ndarray:
    """Indices of challenges whose response differs from the ideal ground truth."""
    from .puf import ground_truth_bits

    challenges = np.atleast_2d(challenges)
    return np.flatnonzero(row.responses(challenges) != ground_truth_bits(row.states, challenges))


def flip_chance(row, challenges) -> float:
    challenges = np.atleast_2d(challenges)
    return len(flipped_challenges(row, challenges)) / len(challenges)
