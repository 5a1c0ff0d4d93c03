"""Confidence-set constructors and axis-aligned box algebra.

Scalar constructors take a :class:`~synthcal.stats.SampleStats`; the ``*_bounds``
helpers below them do the same arithmetic on whole arrays of prefix statistics
and are what the calibration layer uses.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, SampleTooSmallError
from .stats import normal_quantile

CONSTRUCTORS = ("clt", "bernstein", "kl", "box")


@dataclass(frozen=True)
class ConfidenceSet:
    """Closed box prod_i [lower_i, upper_i]; infinite bounds are allowed."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise DomainError("lower and upper must be nonempty and equally long")
        if any(a > b or math.isnan(a) or math.isnan(b) for a, b in zip(lo, hi)):
            raise DomainError("every lower bound must be <= its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dims(self):
        return len(self.lower)

    @property
    def is_universe(self):
        return all(a == -math.inf for a in self.lower) and all(b == math.inf for b in self.upper)

    @property
    def halfwidths(self):
        return tuple((b - a) / 2.0 for a, b in zip(self.lower, self.upper))

    def __contains__(self, point):
        return contains_point(self, point)


@dataclass(frozen=True)
class IntervalConfig:
    """Miscoverage target, dilation and response scale for one constructor call.

    ``range_width`` (M) defaults to hi - lo; passing it explicitly overrides the
    value implied by ``response_range``.
    """

    alpha: float
    dilation: float = 1.0
    response_range: tuple = (0.0, 1.0)
    range_width: float = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.dilation >= 1.0:
            raise DomainError(f"dilation must be >= 1, got {self.dilation}")
        lo, hi = (float(v) for v in self.response_range)
        if not hi > lo:
            raise DomainError("response range must satisfy lo < hi")
        object.__setattr__(self, "response_range", (lo, hi))
        width = hi - lo if self.range_width is None else float(self.range_width)
        if not width > 0:
            raise DomainError("range width must be positive")
        object.__setattr__(self, "range_width", width)


# ----------------------------------------------------------------- arrays


def clt_halfwidth(std, count, alpha, dilation):
    z = normal_quantile(1.0 - alpha / 2.0)
    return z * np.asarray(std, dtype=np.float64) * np.sqrt(dilation / np.asarray(count, dtype=np.float64))


def bernstein_radius(std, count, alpha, dilation, range_width):
    """Empirical Bernstein radius; entries with count < 2 come back as +inf."""
    k = np.asarray(count, dtype=np.float64)
    log4 = math.log(4.0 / alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (np.asarray(std, dtype=np.float64) * np.sqrt(2.0 * dilation * log4 / k)
             + 7.0 * dilation * range_width * log4 / (3.0 * (k - 1.0)))
    return np.where(k >= 2, r, np.inf)


def kl_threshold(count, alpha, dilation):
    return dilation * math.log(2.0 / alpha) / np.asarray(count, dtype=np.float64)


def interval_bounds(constructor, mean, std, count, alpha, dilation, range_width):
    """Vectorized (lower, upper) for one constructor on arrays of statistics."""
    mean = np.asarray(mean, dtype=np.float64)
    if constructor in ("clt", "box"):
        hw = clt_halfwidth(std, count, alpha, dilation)
        return mean - hw, mean + hw
    if constructor == "bernstein":
        r = bernstein_radius(std, count, alpha, dilation, range_width)
        return mean - r, mean + r
    if constructor == "kl":
        thr = np.broadcast_to(kl_threshold(count, alpha, dilation), mean.shape)
        return _kernels.kl_bounds(np.clip(mean, 0.0, 1.0), thr)
    raise DomainError(f"unknown constructor {constructor!r}")


# ----------------------------------------------------------------- scalars


def _require(stats, minimum, name):
    if stats.count < minimum:
        raise SampleTooSmallError(f"{name} needs at least {minimum} observations, got {stats.count}")


def clt_interval(stats, cfg):
    """Dilated normal interval ybar +/- z_{1-alpha/2} s sqrt(C/k); not clipped."""
    _require(stats, 1, "clt_interval")
    hw = float(clt_halfwidth(stats.std, stats.count, cfg.alpha, cfg.dilation))
    return ConfidenceSet((stats.mean - hw,), (stats.mean + hw,))


def bernstein_interval(stats, cfg):
    """Dilated empirical Bernstein interval; needs at least two observations."""
    _require(stats, 2, "bernstein_interval")
    r = float(bernstein_radius(stats.std, stats.count, cfg.alpha, cfg.dilation, cfg.range_width))
    return ConfidenceSet((stats.mean - r,), (stats.mean + r,))


def kl_interval(stats, cfg):
    """{p : KL(ybar || p) <= C log(2/alpha) / k}, endpoints by bisection to 1e-10."""
    _require(stats, 1, "kl_interval")
    if not 0.0 <= stats.mean <= 1.0:
        raise DomainError("kl_interval needs a binary sample mean in [0, 1]")
    thr = float(kl_threshold(stats.count, cfg.alpha, cfg.dilation))
    lo, hi = _kernels.kl_bounds(np.array([stats.mean]), np.array([thr]))
    return ConfidenceSet((float(lo[0]),), (float(hi[0]),))


def universe_set(dims, response_range=None):
    """Vacuous set: the range box when a range is given, otherwise all of R^d."""
    if int(dims) != dims or dims < 1:
        raise DomainError(f"dims must be a positive integer, got {dims}")
    if response_range is None:
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = response_range
    return ConfidenceSet((lo,) * dims, (hi,) * dims)


def _same_dims(a, b):
    if a != b:
        raise DomainError(f"dimension mismatch: {a} vs {b}")


def contains_set(outer, inner):
    _same_dims(outer.dims, inner.dims)
    return all(ol <= il and iu <= ou
               for ol, ou, il, iu in zip(outer.lower, outer.upper, inner.lower, inner.upper))


def contains_point(cset, point):
    pt = np.atleast_1d(np.asarray(point, dtype=np.float64))
    _same_dims(cset.dims, pt.size)
    return all(lo <= x <= hi for lo, hi, x in zip(cset.lower, cset.upper, pt))


def box_from_coordinates(per_coordinate_stats, cfg, level):
    """Bonferroni box of per-coordinate dilated normal intervals.

    Each coordinate gets level 1 - (1 - level)/d so the box has joint level
    ``level`` under a union bound.
    """
    stats = list(per_coordinate_stats)
    if not stats:
        raise DomainError("box_from_coordinates needs at least one coordinate")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    alpha_coord = (1.0 - level) / len(stats)
    lower, upper = [], []
    for s in stats:
        _require(s, 1, "box_from_coordinates")
        hw = float(clt_halfwidth(s.std, s.count, alpha_coord, cfg.dilation))
        lower.append(s.mean - hw)
        upper.append(s.mean + hw)
    return ConfidenceSet(tuple(lower), tuple(upper))
