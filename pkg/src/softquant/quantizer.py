"""Smooth tanh-based quantizer with analytic gradients.

A uniform b-bit quantizer over a clip range [l, u] snaps values to
2**b levels spaced Delta = (u - l) / (2**b - 1) apart.  Its staircase
has zero gradient almost everywhere, which is what makes low-bit
training hard.  The soft quantizer here replaces each stair step with a
scaled tanh, one piece per interval between adjacent levels, controlled
by a sharpness parameter ``alpha`` in (0, 0.5): small alpha gives a
near-step response, large alpha a near-linear one.  Composing the soft
response with a sign decision reproduces the uniform quantizer exactly,
so the pair can serve as forward/backward surrogate during training
while deployment stays bit-compatible with plain uniform quantization.

All math runs in float64.  Every function takes scalars or numpy arrays
for ``x`` and returns a matching type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Default open range for the sharpness parameter. The lower floor is
# configurable per QuantParams; 0.5 is a hard ceiling (at 0.5 the tanh
# piece degenerates to a straight line through the interval).
ALPHA_MIN = 1e-3
ALPHA_MAX = 0.5

# Hard cap on the tanh steepness. Keeps exp() arguments sane when the
# interval width collapses.
K_MAX = 1000.0


class QuantParamError(ValueError):
    """Quantization parameters violate their invariants."""


@dataclass
class QuantParams:
    """Per-tensor quantization state.

    bits:      integer bit width, 1..8
    lo, hi:    clip range, lo < hi, both finite
    alpha:     sharpness of the tanh pieces, open interval (alpha_min, 0.5)
    alpha_min: configured floor for alpha (default ALPHA_MIN)
    """

    bits: int
    lo: float
    hi: float
    alpha: float
    alpha_min: float = ALPHA_MIN

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or isinstance(self.bits, bool):
            raise QuantParamError(f"bits must be an integer, got {self.bits!r}")
        if not 1 <= self.bits <= 8:
            raise QuantParamError(f"bits must be in 1..8, got {self.bits}")
        self.bits = int(self.bits)
        self.lo = float(self.lo)
        self.hi = float(self.hi)
        self.alpha = float(self.alpha)
        self.alpha_min = float(self.alpha_min)
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise QuantParamError("clip range must be finite")
        if not self.lo < self.hi:
            raise QuantParamError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if not 0.0 < self.alpha_min < ALPHA_MAX:
            raise QuantParamError(f"alpha_min must be in (0, 0.5), got {self.alpha_min}")
        if not (math.isfinite(self.alpha) and self.alpha_min < self.alpha < ALPHA_MAX):
            raise QuantParamError(
                f"alpha must lie in ({self.alpha_min}, {ALPHA_MAX}), got {self.alpha}"
            )

    @property
    def n_levels(self) -> int:
        return 2 ** self.bits

    @property
    def n_intervals(self) -> int:
        return 2 ** self.bits - 1

    @property
    def delta(self) -> float:
        return (self.hi - self.lo) / self.n_intervals

    @property
    def k_exact(self) -> float:
        """Tanh steepness implied by alpha, before the K_MAX cap."""
        return math.log(2.0 / self.alpha - 1.0) / self.delta

    @property
    def k(self) -> float:
        return min(self.k_exact, K_MAX)

    @property
    def k_capped(self) -> bool:
        return self.k_exact > K_MAX

    @property
    def s(self) -> float:
        """Tanh amplitude 1/(1 - alpha); >= 1 on the valid alpha range."""
        return 1.0 / (1.0 - self.alpha)

    def with_alpha(self, alpha: float) -> "QuantParams":
        return replace(self, alpha=float(alpha))

    def with_range(self, lo: float, hi: float) -> "QuantParams":
        return replace(self, lo=float(lo), hi=float(hi))

    def levels(self) -> np.ndarray:
        """The 2**bits representable values, ascending.

        The bottom and top levels are exactly lo and hi; interior levels
        are lo + delta * index (lo + n*delta can drift an ulp from hi).
        """
        idx = np.arange(self.n_levels, dtype=np.float64)
        vals = self.lo + self.delta * idx
        vals[-1] = self.hi
        return vals


@dataclass
class QuantizerGrads:
    """Per-element gradient streams from the soft quantizer backward.

    d_x has the input's shape; d_alpha/d_lo/d_hi are the same-shape
    element streams before any reduction (callers sum them to get the
    scalar parameter gradients).
    """

    d_x: np.ndarray | float
    d_alpha: np.ndarray | float
    d_lo: np.ndarray | float
    d_hi: np.ndarray | float


def _as_f64(x):
    arr = np.asarray(x, dtype=np.float64)
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def scale_from_alpha(alpha: float) -> float:
    """Amplitude of the tanh pieces, 1/(1 - alpha)."""
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha >= 1.0:
        raise QuantParamError(f"scale undefined for alpha = {alpha}")
    return 1.0 / (1.0 - alpha)


def alpha_to_k(alpha: float, delta: float) -> float:
    """Tanh steepness for a given sharpness and interval width.

    k = ln(2/alpha - 1) / delta, capped at K_MAX. alpha must lie in the
    open interval (0, 0.5); delta must be positive.
    """
    alpha = float(alpha)
    delta = float(delta)
    if not (math.isfinite(alpha) and 0.0 < alpha < ALPHA_MAX):
        raise QuantParamError(f"alpha must lie in (0, {ALPHA_MAX}), got {alpha}")
    if not (math.isfinite(delta) and delta > 0.0):
        raise QuantParamError(f"delta must be positive and finite, got {delta}")
    return min(math.log(2.0 / alpha - 1.0) / delta, K_MAX)


def alpha_from_k(k: float, delta: float) -> float:
    """Inverse of alpha_to_k while the K_MAX cap is inactive."""
    return 1.0 - math.tanh(0.5 * float(k) * float(delta))


def _phi_scale(p: QuantParams) -> float:
    # 1/tanh(0.5*k*delta): equals 1/(1-alpha) whenever the cap is
    # inactive, and keeps phi(+-delta/2) exactly +-1 when it binds.
    return 1.0 / math.tanh(0.5 * p.k * p.delta)


def _level_value(q, p: QuantParams):
    # value of level index q in 0..2**bits-1; the top level is exactly
    # hi so clip branches and grid reconstruction agree bit for bit
    qf = np.asarray(q, dtype=np.float64)
    y = p.lo + p.delta * qf
    y = np.where(qf == p.n_levels - 1, p.hi, y)
    return np.minimum(np.maximum(y, p.lo), p.hi)


def binary_quantize(x):
    """Sign quantization to +-1 with ties at zero resolved upward."""
    arr, scalar = _as_f64(x)
    if not np.all(np.isfinite(arr)):
        raise ValueError("binary_quantize requires finite inputs")
    out = np.where(arr >= 0.0, 1.0, -1.0)
    return _ret(out, scalar)


def interval_of(x, p: QuantParams):
    """Index of the interval containing x after clipping to [lo, hi].

    Intervals are the 2**bits - 1 gaps between adjacent levels, indexed
    from 0. Values at or beyond the clip edges map to the nearest
    interval.
    """
    arr, scalar = _as_f64(x)
    xc = np.clip(arr, p.lo, p.hi)
    raw = np.floor((xc - p.lo) / p.delta).astype(np.int64)
    out = np.clip(raw, 0, p.n_intervals - 1)
    return int(out) if scalar else out


def interval_center(i, p: QuantParams):
    """Midpoint of interval i: lo + (i + 0.5) * delta."""
    idx = np.asarray(i, dtype=np.float64)
    out = p.lo + (idx + 0.5) * p.delta
    return float(out) if idx.ndim == 0 else out


def interval_tanh(x, i, p: QuantParams):
    """Scaled tanh response of interval i, in [-1, 1].

    Exactly -1 at the interval's lower edge and +1 at its upper edge.
    Raises if i is not the interval containing x.
    """
    arr, scalar = _as_f64(x)
    idx = np.asarray(i, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx > p.n_intervals - 1):
        raise ValueError(f"interval index out of range 0..{p.n_intervals - 1}")
    lower = p.lo + idx * p.delta
    tol = 1e-9 * p.delta
    if np.any(arr < lower - tol) or np.any(arr > lower + p.delta + tol):
        raise ValueError("interval index inconsistent with x")
    m = p.lo + (idx.astype(np.float64) + 0.5) * p.delta
    out = _phi_scale(p) * np.tanh(p.k * (arr - m))
    return _ret(out, scalar)


def soft_quantize(x, p: QuantParams):
    """Piecewise-tanh quantization: smooth, monotone, range [lo, hi].

    Values below lo / above hi clip to lo / hi; interior values map to
    lo + delta * (i + (phi + 1)/2) where phi is the interval tanh.
    """
    arr, scalar = _as_f64(x)
    i = interval_of(arr, p)
    m = p.lo + (np.asarray(i, np.float64) + 0.5) * p.delta
    phi = _phi_scale(p) * np.tanh(p.k * (arr - m))
    y = p.lo + p.delta * (np.asarray(i, np.float64) + 0.5 * (phi + 1.0))
    y = np.where(arr <= p.lo, p.lo, np.where(arr >= p.hi, p.hi, y))
    # interior tanh arithmetic may drift an ulp past the range
    y = np.minimum(np.maximum(y, p.lo), p.hi)
    return _ret(y, scalar)


def hard_quantize(x, p: QuantParams):
    """Soft quantizer composed with a sign decision: lands on the grid.

    Replaces the tanh response with its sign (ties at zero go up), which
    snaps every value to one of the 2**bits levels. Agrees with
    uniform_quantize exactly, for every input.
    """
    arr, scalar = _as_f64(x)
    i = interval_of(arr, p)
    idx = np.asarray(i, np.int64)
    m = p.lo + (idx.astype(np.float64) + 0.5) * p.delta
    phi = _phi_scale(p) * np.tanh(p.k * (arr - m))
    sgn = np.where(phi >= 0.0, 1, -1)
    y = _level_value(idx + (sgn + 1) // 2, p)
    return _ret(y, scalar)


def uniform_quantize(x, p: QuantParams):
    """Round-to-nearest-level uniform quantizer (the deployment oracle).

    Clips to [lo, hi], then snaps to the nearest of the 2**bits levels,
    ties resolved to the upper level.
    """
    arr, scalar = _as_f64(x)
    xc = np.clip(arr, p.lo, p.hi)
    i = interval_of(xc, p)
    idx = np.asarray(i, np.int64)
    m = p.lo + (idx.astype(np.float64) + 0.5) * p.delta
    y = _level_value(idx + (xc >= m), p)
    return _ret(y, scalar)


def level_index(x, p: QuantParams):
    """Index 0..2**bits-1 of the level uniform_quantize picks."""
    arr, scalar = _as_f64(x)
    xc = np.clip(arr, p.lo, p.hi)
    i = interval_of(xc, p)
    idx = np.asarray(i, np.int64)
    m = p.lo + (idx.astype(np.float64) + 0.5) * p.delta
    out = idx + (xc >= m)
    return int(out) if scalar else out


def binary_soft_quantize(x, p: QuantParams):
    """Single-interval special case: smooth surrogate for sign(x).

    Requires bits == 1. With the symmetric range [-1, 1] the output is
    the tanh response itself.
    """
    if p.bits != 1:
        raise QuantParamError(f"binary quantizer needs bits=1, got {p.bits}")
    return soft_quantize(x, p)


def soft_quantize_backward(x, p: QuantParams, upstream) -> QuantizerGrads:
    """Analytic gradients of the soft quantizer, scaled by ``upstream``.

    Returns per-element streams for the input and for alpha, lo, hi.
    The interval index and the clip decisions are recomputed from x and
    treated as locally constant. On the clipped branches the input and
    alpha gradients vanish and the active clip bound passes the
    upstream gradient through unchanged.

    The sign step used by hard_quantize is treated as identity, so
    these are also the training gradients for the sign-composed
    forward.
    """
    arr, scalar = _as_f64(x)
    up, _ = _as_f64(upstream)
    up = np.broadcast_to(up, arr.shape) if not scalar else up

    n = float(p.n_intervals)
    delta = p.delta
    k = p.k
    s_eff = _phi_scale(p)

    i = np.asarray(interval_of(arr, p), np.float64)
    m = p.lo + (i + 0.5) * delta
    t = np.tanh(k * (arr - m))
    phi = s_eff * t
    sech2 = 1.0 - t * t
    q = i + 0.5 * (phi + 1.0)

    d_x = up * (0.5 * delta) * s_eff * k * sech2

    if not p.k_capped:
        # k = ln(2/alpha - 1)/delta, s = 1/(1 - alpha)
        ds_dalpha = 1.0 / (1.0 - p.alpha) ** 2
        dk_dalpha = -2.0 / (delta * p.alpha * (2.0 - p.alpha))
        dphi_dalpha = ds_dalpha * t + s_eff * sech2 * (arr - m) * dk_dalpha
        d_alpha = up * (0.5 * delta) * dphi_dalpha
        # 0.5*k*delta = 0.5*ln(2/alpha - 1) is independent of the range,
        # so s contributes nothing to the lo/hi gradients here.
        dk_dlo = k / (n * delta)
        dk_dhi = -k / (n * delta)
        ds_dlo = 0.0
        ds_dhi = 0.0
    else:
        # k pinned at K_MAX: no alpha dependence anywhere, and the
        # amplitude 1/tanh(0.5*K_MAX*delta) now varies with the range.
        d_alpha = np.zeros_like(arr) if not scalar else 0.0
        th = math.tanh(0.5 * k * delta)
        ds_ddelta = -0.5 * k * (1.0 - th * th) / (th * th)
        dk_dlo = 0.0
        dk_dhi = 0.0
        ds_dlo = ds_ddelta * (-1.0 / n)
        ds_dhi = ds_ddelta * (1.0 / n)

    dm_dlo = 1.0 - (i + 0.5) / n
    dm_dhi = (i + 0.5) / n
    dphi_dlo = ds_dlo * t + s_eff * sech2 * (dk_dlo * (arr - m) - k * dm_dlo)
    dphi_dhi = ds_dhi * t + s_eff * sech2 * (dk_dhi * (arr - m) - k * dm_dhi)
    d_lo = up * (1.0 - q / n + 0.5 * delta * dphi_dlo)
    d_hi = up * (q / n + 0.5 * delta * dphi_dhi)

    below = arr < p.lo
    above = arr > p.hi
    clipped = below | above
    zero = np.zeros_like(arr)
    d_x = np.where(clipped, zero, d_x)
    d_alpha = np.where(clipped, zero, d_alpha)
    d_lo = np.where(below, up, np.where(above, zero, d_lo))
    d_hi = np.where(above, up, np.where(below, zero, d_hi))

    if scalar:
        return QuantizerGrads(float(d_x), float(d_alpha), float(d_lo), float(d_hi))
    return QuantizerGrads(d_x, d_alpha, d_lo, d_hi)
