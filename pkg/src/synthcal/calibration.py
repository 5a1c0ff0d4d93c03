"""Miscoverage curves over calibration questions and selection of k-hat.

Two metrics are supported. The simple method counts how often the real
sample mean falls outside the synthetic interval built from the first k
synthetic responses (threshold alpha/2). The general method counts how often a
level-gamma confidence set from the real responses is not contained in the
synthetic set (threshold gamma * alpha).
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .intervals import (CONSTRUCTORS, ConfidenceSet, IntervalConfig, box_from_coordinates,
                        interval_bounds, universe_set)
from .stats import sample_stats

METHODS = ("simple", "general")


@dataclass(frozen=True)
class CalibrationRecord:
    """One question: real responses and an ordered synthetic stream.

    Scalar questions hold 1-D arrays. Questions with ``dims > 1`` hold (n, dims)
    arrays, typically one-hot encoded answer choices.
    """

    question_id: str
    real_responses: np.ndarray
    synthetic_responses: np.ndarray
    dims: int = 1

    def __post_init__(self):
        real = np.asarray(self.real_responses, dtype=np.float64)
        syn = np.asarray(self.synthetic_responses, dtype=np.float64)
        if self.dims < 1:
            raise DomainError(f"question {self.question_id!r}: dims must be >= 1")
        for name, arr in (("real_responses", real), ("synthetic_responses", syn)):
            want = 1 if self.dims == 1 else 2
            if arr.ndim != want or (self.dims > 1 and arr.shape[1] != self.dims):
                raise DomainError(f"question {self.question_id!r}: {name} has shape {arr.shape}")
            arr.setflags(write=False)
        if real.shape[0] < 1:
            raise DomainError(f"question {self.question_id!r}: needs at least one real response")
        object.__setattr__(self, "real_responses", real)
        object.__setattr__(self, "synthetic_responses", syn)

    @property
    def n_real(self):
        return self.real_responses.shape[0]

    @property
    def n_synthetic(self):
        return self.synthetic_responses.shape[0]


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for one calibration run.

    ``min_k`` is an optional warm-up: prefixes shorter than it use the universe
    set, exactly like k = 0. The default of 1 applies no warm-up.
    """

    alpha: float
    budget: int
    gamma: float = 0.5
    dilation: float = 1.0
    constructor: str = "clt"
    response_range: tuple = (0.0, 1.0)
    method: str = "simple"
    range_width: float = None
    min_k: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError("gamma must lie in (0, 1)")
        if int(self.budget) != self.budget or self.budget < 1:
            raise DomainError("budget K must be a positive integer")
        if self.constructor not in CONSTRUCTORS:
            raise DomainError(f"constructor must be one of {CONSTRUCTORS}")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}")
        if self.min_k < 1:
            raise DomainError("min_k must be >= 1")
        # validates alpha, dilation and the range in one place
        object.__setattr__(self, "response_range", self.interval_config().response_range)

    @property
    def threshold(self):
        return self.alpha / 2.0 if self.method == "simple" else self.gamma * self.alpha

    def interval_config(self, alpha=None):
        return IntervalConfig(alpha=self.alpha if alpha is None else alpha, dilation=self.dilation,
                              response_range=tuple(self.response_range), range_width=self.range_width)


@dataclass
class CalibrationResult:
    k_hat: int
    curve: np.ndarray
    threshold: float
    kappa_hat: float
    method: str
    per_question_flags: dict = field(default_factory=dict)

    @property
    def curve_pairs(self):
        return [(k, float(v)) for k, v in enumerate(self.curve)]


# ---------------------------------------------------------------- helpers


def _coordinate_range(record, cfg):
    return cfg.response_range if record.dims == 1 else (0.0, 1.0)


def _validate(records, cfg):
    if not records:
        raise DomainError("need at least one calibration record")
    dims = {r.dims for r in records}
    if len(dims) != 1:
        raise DomainError("all records must share the same dims")
    d = dims.pop()
    if cfg.method == "simple" and d > 1:
        raise DomainError("the simple method handles scalar targets only; use the general method")
    for r in records:
        if r.n_synthetic < cfg.budget:
            raise DomainError(f"question {r.question_id!r} has {r.n_synthetic} synthetic responses,"
                              f" fewer than the budget {cfg.budget}")
        lo, hi = _coordinate_range(r, cfg)
        for name, arr in (("real", r.real_responses), ("synthetic", r.synthetic_responses[:cfg.budget])):
            if np.any((arr < lo) | (arr > hi)):
                raise DomainError(f"question {r.question_id!r}: {name} response outside [{lo}, {hi}]")
    return d


def prefix_statistics(synthetic, budget, response_range):
    """Running (mean, std) of the first k responses for k = 1..budget.

    ``synthetic`` is (K', d); outputs are (budget, d). The std follows the
    sample_stats rule prefix by prefix: plug-in sqrt(m(1-m)) while the prefix is
    binary on [0, 1], unbiased sample std otherwise (0 at k = 1).
    """
    y = np.asarray(synthetic, dtype=np.float64)[:budget]
    if y.ndim == 1:
        y = y[:, None]
    k = np.arange(1, budget + 1, dtype=np.float64)[:, None]
    s1 = np.cumsum(y, axis=0)
    s2 = np.cumsum(y * y, axis=0)
    mean = s1 / k
    with np.errstate(divide="ignore", invalid="ignore"):
        var_unbiased = np.maximum(s2 - s1 * s1 / k, 0.0) / (k - 1.0)
    var_unbiased[0] = 0.0
    if tuple(response_range) == (0.0, 1.0):
        nonbinary = np.cumsum(((y != 0.0) & (y != 1.0)).any(axis=1))[:, None] > 0
        var = np.where(nonbinary, var_unbiased, mean * (1.0 - mean))
    else:
        var = var_unbiased
    return mean, np.sqrt(np.maximum(var, 0.0))


def synthetic_bounds(records, cfg):
    """Synthetic set bounds for every record and every k = 0..K.

    Returns (lower, upper), each of shape (m, K+1, d). Row k = 0, rows below
    ``min_k`` and Bernstein at k = 1 hold the universe: the response range in
    the simple method, unbounded in the general method.
    """
    d = _validate(records, cfg)
    K = cfg.budget
    m = len(records)
    means = np.empty((m, K, d))
    stds = np.empty((m, K, d))
    for j, r in enumerate(records):
        means[j], stds[j] = prefix_statistics(r.synthetic_responses, K, _coordinate_range(r, cfg))
    counts = np.broadcast_to(np.arange(1, K + 1, dtype=np.float64)[None, :, None], means.shape)
    width = cfg.interval_config().range_width if d == 1 else 1.0
    lo, hi = interval_bounds(cfg.constructor, means, stds, counts, cfg.alpha / d,
                             cfg.dilation, width)
    if cfg.method == "simple":
        u_lo, u_hi = cfg.response_range
    else:
        u_lo, u_hi = -math.inf, math.inf
    lower = np.full((m, K + 1, d), u_lo)
    upper = np.full((m, K + 1, d), u_hi)
    usable = ~np.isinf(hi) & ~np.isinf(lo)
    usable &= (counts >= cfg.min_k)
    lower[:, 1:] = np.where(usable, lo, u_lo)
    upper[:, 1:] = np.where(usable, hi, u_hi)
    return lower, upper


def real_confidence_set(record, gamma, response_range=(0.0, 1.0)):
    """Level-gamma normal confidence set from the real responses (C = 1).

    Scalar targets get ybar +/- z_{(1+gamma)/2} s / sqrt(n); vector targets get
    the Bonferroni box.
    """
    if record.n_real < 1:
        raise DomainError(f"question {record.question_id!r} has no real responses")
    real = record.real_responses
    if record.dims == 1:
        stats = [sample_stats(real, response_range)]
    else:
        stats = [sample_stats(real[:, i], (0.0, 1.0)) for i in range(record.dims)]
    cfg = IntervalConfig(alpha=1.0 - gamma, dilation=1.0,
                         response_range=response_range if record.dims == 1 else (0.0, 1.0))
    return box_from_coordinates(stats, cfg, gamma)


def miss_matrix(records, cfg):
    """Boolean (m, K+1) array: does record j's synthetic set at size k miss?"""
    lower, upper = synthetic_bounds(records, cfg)
    if cfg.method == "simple":
        target = np.array([r.real_responses.mean() for r in records])[:, None, None]
        miss = (target < lower) | (target > upper)
    else:
        sets = [real_confidence_set(r, cfg.gamma, _coordinate_range(r, cfg)) for r in records]
        t_lo = np.array([s.lower for s in sets])[:, None, :]
        t_hi = np.array([s.upper for s in sets])[:, None, :]
        miss = (t_lo < lower) | (t_hi > upper)
    return miss.any(axis=2)


def miscoverage_curve(records, cfg):
    """G(k) (simple) or L(k) (general) for k = 0..K, as exact count / m."""
    miss = miss_matrix(records, cfg)
    return miss.sum(axis=0) / len(records)


def miscoverage_simple(records, k, cfg):
    if cfg.method != "simple":
        cfg = replace(cfg, method="simple")
    return float(miscoverage_curve(records, replace(cfg, budget=max(k, 1)))[k])


def miscoverage_general(records, k, cfg):
    if cfg.method != "general":
        cfg = replace(cfg, method="general")
    return float(miscoverage_curve(records, replace(cfg, budget=max(k, 1)))[k])


def select_k(curve, threshold):
    """Largest k with curve[i] <= threshold for every i <= k (ties pass)."""
    c = np.asarray(curve, dtype=np.float64)
    if c.size == 0 or c[0] > 0:
        raise DomainError("curve must start with curve[0] = 0")
    if not 0.0 < threshold < 1.0:
        raise DomainError("threshold must lie in (0, 1)")
    above = np.flatnonzero(c > threshold)
    return int(c.size - 1) if above.size == 0 else int(above[0] - 1)


def calibrate(records, cfg):
    """Compute the method's curve for k = 0..K and select k-hat by the prefix rule."""
    miss = miss_matrix(records, cfg)
    curve = miss.sum(axis=0) / len(records)
    k_hat = select_k(curve, cfg.threshold)
    if k_hat == 0:
        warnings.warn("k_hat = 0: the synthetic source is unusable at this alpha", stacklevel=2)
    flags = {r.question_id: miss[j] for j, r in enumerate(records)}
    return CalibrationResult(k_hat=k_hat, curve=curve, threshold=cfg.threshold,
                             kappa_hat=k_hat / cfg.dilation, method=cfg.method,
                             per_question_flags=flags)


def synthetic_set(record, k, cfg):
    """The synthetic confidence set built from the first k responses of ``record``."""
    if k < 0 or k > record.n_synthetic:
        raise DomainError(f"k={k} outside 0..{record.n_synthetic}")
    if k == 0:
        return universe_set(record.dims, cfg.response_range if cfg.method == "simple" else None)
    lower, upper = synthetic_bounds([record], replace(cfg, budget=k))
    return ConfidenceSet(tuple(lower[0, k]), tuple(upper[0, k]))
