"""Elementary statistical kernels: normal quantile, Bernoulli divergences,
empirical quantiles, sample summaries and seeded random streams."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSyntheticError, DomainError

# Acklam's rational approximation to the normal quantile (relative error ~1e-9).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _quantile_lower_half(p):
    """Quantile for 0 < p <= 0.5: rational guess plus one Newton step."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x = num / den
    else:
        q = p - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x = num / den
    # Newton on Phi(x) - p; erfc keeps full relative precision in the lower tail.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    dens = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - err / dens


def normal_quantile(p):
    """Inverse standard normal CDF, accurate to about 1e-15 absolute in the bulk.

    Raises DomainError unless 0 < p < 1.
    """
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile needs p in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return _quantile_lower_half(p)
    # 1 - p is exact for p >= 0.5, which also makes the function odd about 1/2.
    return -_quantile_lower_half(1.0 - p)


def _check_prob(name, value, open_interval=False):
    value = float(value)
    if open_interval:
        if not 0.0 < value < 1.0:
            raise DomainError(f"{name} must lie in (0, 1), got {value!r}")
    elif not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def kl_bernoulli(q, p):
    """KL(Ber(q) || Ber(p)) with the 0 log 0 = 0 convention.

    Returns ``math.inf`` when p sits on 0 or 1 and q does not match it.
    """
    q = _check_prob("q", q)
    p = _check_prob("p", p)
    total = 0.0
    if q > 0.0:
        if p <= 0.0:
            return math.inf
        total += q * math.log(q / p)
    if q < 1.0:
        if p >= 1.0:
            return math.inf
        total += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return max(total, 0.0)


def kl_bernoulli_array(q, p):
    """Elementwise :func:`kl_bernoulli` on arrays (no range validation)."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(q > 0.0, q * np.log(q / p), 0.0)
        t2 = np.where(q < 1.0, (1.0 - q) * np.log((1.0 - q) / (1.0 - p)), 0.0)
    return np.maximum(t1 + t2, 0.0)


def chi2_bernoulli(mu, mu_syn):
    """Chi-square discrepancy (mu - mu_syn)^2 / (mu_syn (1 - mu_syn))."""
    mu = _check_prob("mu", mu)
    mu_syn = _check_prob("mu_syn", mu_syn)
    if mu_syn in (0.0, 1.0):
        raise DegenerateSyntheticError(f"synthetic mean {mu_syn} has zero variance")
    return (mu - mu_syn) ** 2 / (mu_syn * (1.0 - mu_syn))


def empirical_quantile(samples, level):
    """Left-continuous generalized inverse: smallest x with F_n(x) >= level.

    The answer is always one of the samples.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size == 0:
        raise DomainError("empirical_quantile needs at least one sample")
    level = _check_prob("level", level, open_interval=True)
    n = x.size
    ecdf_at_order_stats = np.arange(1, n + 1) / n
    idx = int(np.searchsorted(ecdf_at_order_stats, level, side="left"))
    return float(x[min(idx, n - 1)])


@dataclass(frozen=True)
class SampleStats:
    """Count, mean and spread of a sample.

    ``std`` is sqrt(mean (1 - mean)) for binary data on [0, 1] and the
    unbiased sample standard deviation otherwise.
    """

    count: int
    mean: float
    std: float

    def __post_init__(self):
        if self.count < 0:
            raise DomainError("count must be nonnegative")
        if self.std < 0 or math.isnan(self.std):
            raise DomainError("std must be a nonnegative number")


def is_binary(values, response_range):
    lo, hi = response_range
    if (lo, hi) != (0.0, 1.0):
        return False
    v = np.asarray(values)
    return bool(np.all((v == 0.0) | (v == 1.0)))


def sample_stats(values, response_range=(0.0, 1.0)):
    """Summarize a 1-D sample whose values must lie in ``response_range``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("sample_stats needs at least one value")
    lo, hi = float(response_range[0]), float(response_range[1])
    if np.any((v < lo) | (v > hi)) or np.any(np.isnan(v)):
        raise DomainError(f"values must lie in [{lo}, {hi}]")
    mean = float(v.mean())
    if is_binary(v, (lo, hi)):
        std = math.sqrt(max(mean * (1.0 - mean), 0.0))
    elif v.size > 1:
        std = float(v.std(ddof=1))
    else:
        std = 0.0
    return SampleStats(count=int(v.size), mean=mean, std=std)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by (master_seed, stream_id).

    Backed by PCG64 seeded through SeedSequence with ``spawn_key`` set from the
    stream path, so distinct ids give independent streams and identical ids
    give identical draws everywhere.
    """

    master_seed: int
    stream_id: int = 0
    parent: tuple = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be a 64-bit unsigned integer")

    @property
    def key(self):
        return tuple(self.parent) + (int(self.stream_id),)

    def generator(self):
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(seq))

    def substream(self, stream_id):
        return RngStream(self.master_seed, int(stream_id), self.key)


def bernoulli(mean, n, rng):
    """n Bernoulli(mean) draws as float64 0/1, via uniforms < mean."""
    return (rng.random(n) < mean).astype(np.float64)
