"""Held-out evaluation of k-hat over repeated train/test splits of the questions.

Per-question miss indicators do not depend on which side of a split a question
lands, so :func:`run_splits` computes them once and reuses them for every split.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import miss_matrix, select_k, synthetic_bounds
from .errors import DomainError
from .stats import RngStream

FIELDS = ("k_hat", "kappa_hat", "test_miscoverage", "k_star_te", "relative_error",
          "mean_halfwidth")


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    n_splits: int = 100
    train_fraction: float = 0.6

    def __post_init__(self):
        if self.n_splits < 1:
            raise DomainError("n_splits must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise DomainError("train_fraction must lie in (0, 1)")

    def n_train(self, m):
        return int(math.floor(self.train_fraction * m + 0.5))

    def split(self, i, m):
        """(train, test) index arrays for split i; each split has its own stream."""
        n_train = self.n_train(m)
        if n_train < 1 or n_train > m - 1:
            raise DomainError(f"split of {m} questions at fraction {self.train_fraction}"
                              " leaves one side empty")
        perm = RngStream(self.seed, i).generator().permutation(m)
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])


@dataclass
class SplitResult:
    split: int
    k_hat: int
    kappa_hat: float
    test_miscoverage: float
    k_star_te: int
    relative_error: float  # None when k_star_te = 0
    mean_halfwidth: float


@dataclass
class EvaluationReport:
    per_split: list
    aggregate: dict = field(default_factory=dict)


def _test_factor(cfg):
    # G_te doubles the miss rate; L_te divides the non-containment rate by gamma
    return 2.0 if cfg.method == "simple" else 1.0 / cfg.gamma


def test_curve(test_records, cfg):
    """G_te(k) (simple) or L_te(k) (general) for k = 0..K."""
    if not test_records:
        raise DomainError("need at least one test record")
    miss = miss_matrix(test_records, cfg)
    return _test_factor(cfg) * miss.sum(axis=0) / len(test_records)


def g_te(test_records, k, cfg):
    """2/|J| times the number of test questions whose real mean the set misses."""
    cfg = replace(cfg, method="simple", budget=max(k, 1))
    return float(test_curve(test_records, cfg)[k])


def l_te(test_records, k, cfg):
    """1/(gamma |J|) times the number of non-containments of the real set."""
    cfg = replace(cfg, method="general", budget=max(k, 1))
    return float(test_curve(test_records, cfg)[k])


def pointwise_max(curve, level):
    """Largest k with curve[k] <= level, no prefix condition (0 if none)."""
    ok = np.flatnonzero(np.asarray(curve) <= level)
    return int(ok[-1]) if ok.size else 0


def oracle_k_te(test_records, cfg):
    return pointwise_max(test_curve(test_records, cfg), cfg.alpha)


def halfwidth_matrix(records, cfg):
    """Mean coordinate half-width of every record's synthetic set, shape (m, K+1).

    Universe rows are reported as half the coordinate range (M/2 for scalar
    targets, 1/2 for proportion vectors) rather than infinity.
    """
    lower, upper = synthetic_bounds(records, cfg)
    d = lower.shape[2]
    lo, hi = cfg.response_range if d == 1 else (0.0, 1.0)
    width = cfg.interval_config().range_width if d == 1 else hi - lo
    half = (upper - lower) / 2.0
    half = np.where(np.isfinite(half), half, width / 2.0)
    return half.mean(axis=2)


def _aggregate(values):
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    if vals.size == 0:
        return {"mean": None, "stderr": None, "stderr_1_96": None, "n": 0}
    mean = float(vals.mean())
    if vals.size > 1:
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        return {"mean": mean, "stderr": se, "stderr_1_96": 1.96 * se, "n": int(vals.size)}
    return {"mean": mean, "stderr": None, "stderr_1_96": None, "n": 1}


def run_splits(records, cfg, plan):
    """Calibrate on each train side, then score k-hat on the matching test side."""
    m = len(records)
    if m < 2:
        raise DomainError("run_splits needs at least two questions")
    miss = miss_matrix(records, cfg)
    halfwidths = halfwidth_matrix(records, cfg)
    factor = _test_factor(cfg)
    per_split = []
    for i in range(plan.n_splits):
        train, test = plan.split(i, m)
        curve = miss[train].sum(axis=0) / train.size
        k_hat = select_k(curve, cfg.threshold)
        te_curve = factor * miss[test].sum(axis=0) / test.size
        k_star = pointwise_max(te_curve, cfg.alpha)
        rel = abs(k_hat - k_star) / k_star if k_star > 0 else None
        per_split.append(SplitResult(split=i, k_hat=k_hat, kappa_hat=k_hat / cfg.dilation,
                                     test_miscoverage=float(te_curve[k_hat]), k_star_te=k_star,
                                     relative_error=rel,
                                     mean_halfwidth=float(halfwidths[test, k_hat].mean())))
    aggregate = {f: _aggregate([getattr(s, f) for s in per_split]) for f in FIELDS}
    return EvaluationReport(per_split=per_split, aggregate=aggregate)
