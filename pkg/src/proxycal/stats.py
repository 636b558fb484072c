"""Moments, two-sample KS test, histograms and KL divergence."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

#: two-sample KS p-values are exact when n1 + n2 is at most this
EXACT_KS_MAX_N = 20
_KOLMOGOROV_TERMS = 100
_KOLMOGOROV_TOL = 1e-10


class InsufficientDataError(ValueError):
    pass


def _present(sample) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64).ravel()
    return x[~np.isnan(x)]


def mean_var(sample) -> tuple[float, float]:
    """Arithmetic mean and unbiased (n-1) variance of the present values."""
    x = _present(sample)
    if len(x) < 2:
        raise InsufficientDataError(f"need at least 2 values, got {len(x)}")
    m = float(x.mean())
    if np.all(x == x[0]):
        return float(x[0]), 0.0
    return m, float(np.sum((x - m) ** 2) / (len(x) - 1))


@dataclass(frozen=True)
class KsResult:
    d_stat: float
    p_value: float
    n1: int
    n2: int


def kolmogorov_sf(x):
    """Survival function of the Kolmogorov distribution, Q(x) = P(K > x).

    Uses the alternating series ``2 sum (-1)^(k-1) exp(-2 k^2 x^2)`` for
    x >= 1 and the equivalent theta-function form below 1, where the
    alternating series needs far more than 100 terms.
    """
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.ones_like(x)
    big = x >= 1.0
    if big.any():
        xb = x[big]
        total = np.zeros_like(xb)
        sign = 1.0
        for k in range(1, _KOLMOGOROV_TERMS + 1):
            term = np.exp(-2.0 * k * k * xb * xb)
            total += sign * term
            sign = -sign
            if term.max() < _KOLMOGOROV_TOL:
                break
        out[big] = 2.0 * total
    small = (x > 0) & ~big
    if small.any():
        xs = x[small]
        total = np.zeros_like(xs)
        for k in range(1, _KOLMOGOROV_TERMS + 1):
            term = np.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * xs * xs))
            total += term
            if term.max() < _KOLMOGOROV_TOL * 1e-6:
                break
        out[small] = 1.0 - math.sqrt(2.0 * math.pi) / xs * total
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def ks_dint(a_sorted: np.ndarray, b_sorted: np.ndarray) -> int:
    """Integer KS distance ``D * n1 * n2`` between two sorted samples."""
    n1, n2 = len(a_sorted), len(b_sorted)
    pooled = np.unique(np.concatenate([a_sorted, b_sorted]))
    ca = np.searchsorted(a_sorted, pooled, side="right")
    cb = np.searchsorted(b_sorted, pooled, side="right")
    return int(np.max(np.abs(ca * n2 - cb * n1)))


def ks_pvalue(dint: int, n1: int, n2: int, pooled_sorted=None) -> float:
    """p-value for an integer KS distance; exact when pooled values are given
    and ``n1 + n2 <= EXACT_KS_MAX_N``, asymptotic otherwise."""
    if dint == 0:
        return 1.0
    if pooled_sorted is not None and n1 + n2 <= EXACT_KS_MAX_N:
        return float(kernels.ks_exact_sf(pooled_sorted, n1, dint))
    d = dint / (n1 * n2)
    return kolmogorov_sf(math.sqrt(n1 * n2 / (n1 + n2)) * d)


def ks_two_sample(a, b) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test on the present values of a and b.

    Small samples (n1 + n2 <= 20) get the exact permutation p-value, counting
    ties as the permutation distribution sees them; larger samples use the
    asymptotic Kolmogorov distribution with n = n1*n2/(n1+n2).
    """
    x = np.sort(_present(a))
    y = np.sort(_present(b))
    n1, n2 = len(x), len(y)
    if n1 < 1 or n2 < 1:
        raise InsufficientDataError(f"KS test needs non-empty samples, got {n1} and {n2}")
    dint = ks_dint(x, y)
    pooled = np.sort(np.concatenate([x, y]))
    p = ks_pvalue(dint, n1, n2, pooled)
    return KsResult(d_stat=dint / (n1 * n2), p_value=p, n1=n1, n2=n2)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Counts on a regular grid; ``origin`` is the left edge of the first bin."""

    bin_width: float
    origin: float
    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if np.any(counts < 0) or int(counts.sum()) != self.n:
            raise ValueError("counts must be non-negative and sum to n")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (self.bin_width == other.bin_width and self.origin == other.origin
                and self.n == other.n and np.array_equal(self.counts, other.counts))

    __hash__ = None

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts) + 1)


def build_histogram(sample, bin_width: float = 1.0, origin: float = 0.0) -> Histogram:
    """Bin present values; value v lands in bin floor((v - origin) / bin_width).

    Only the bins spanning [min, max] of the sample are kept.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    x = _present(sample)
    if len(x) == 0:
        raise InsufficientDataError("cannot build a histogram of an empty sample")
    idx = np.floor((x - origin) / bin_width).astype(np.int64)
    first = int(idx.min())
    counts = np.bincount(idx - first)
    return Histogram(bin_width=float(bin_width), origin=origin + first * bin_width,
                     counts=counts, n=len(x))


def _grid_offset(h: Histogram, ref: Histogram) -> int:
    k = (h.origin - ref.origin) / ref.bin_width
    r = round(k)
    if abs(k - r) > 1e-9:
        raise ValueError("histogram grids are not aligned")
    return int(r)


def align_histograms(p: Histogram, q: Histogram) -> tuple[np.ndarray, np.ndarray]:
    """Counts of p and q re-binned onto the union of their supports."""
    if not math.isclose(p.bin_width, q.bin_width, rel_tol=1e-12):
        raise ValueError(f"bin widths differ: {p.bin_width} vs {q.bin_width}")
    off = _grid_offset(q, p)
    lo = min(0, off)
    hi = max(len(p.counts), off + len(q.counts))
    pc = np.zeros(hi - lo, dtype=np.int64)
    qc = np.zeros(hi - lo, dtype=np.int64)
    pc[-lo:-lo + len(p.counts)] = p.counts
    qc[off - lo:off - lo + len(q.counts)] = q.counts
    return pc, qc


def smoothed_probabilities(counts: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Normalise counts after adding ``eps`` to every bin probability.

    The default ``eps = 1 / (10 n)`` is a pseudo-count of 0.1 per bin.
    """
    n = counts.sum()
    if eps is None:
        eps = 1.0 / (10.0 * n)
    p = counts / n + eps
    return p / p.sum()


def kl_divergence(p: Histogram, q: Histogram, eps: float | None = None) -> float:
    """D(p || q) in nats over the union support, after additive smoothing.

    ``eps=0`` disables smoothing; bins with p > 0 and q = 0 then give inf.
    """
    pc, qc = align_histograms(p, q)
    pp = smoothed_probabilities(pc, eps)
    qq = smoothed_probabilities(qc, eps)
    mask = pp > 0
    with np.errstate(divide="ignore"):
        d = float(np.sum(pp[mask] * (np.log(pp[mask]) - np.log(qq[mask]))))
    return max(d, 0.0)


@dataclass(frozen=True)
class HistogramConfig:
    bin_width: float = 1.0
    origin: float = 0.0
    # "site_proxy" computes D(site || proxy); "proxy_site" reverses it
    kl_direction: str = "site_proxy"

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        if self.kl_direction not in ("site_proxy", "proxy_site"):
            raise ValueError(f"kl_direction must be site_proxy or proxy_site, not {self.kl_direction!r}")
