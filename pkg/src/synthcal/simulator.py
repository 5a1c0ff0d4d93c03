"""Ground-truth laboratory built on a Mechanical Turk population model.

A population draws agent profiles z and questions psi; each agent answers
question psi with Bernoulli(F(z, psi)). A synthetic source with hidden pool
size kappa answers with the average performance of kappa fixed agents. With
known true means this gives exact coverage checks, discrepancy quantiles and
Monte Carlo oracle sample sizes.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, roots_jacobi

from . import _kernels
from .calibration import CalibrationRecord
from .errors import DomainError
from .stats import empirical_quantile, kl_bernoulli_array, normal_quantile

QUADRATURE_NODES = 512
PATH_CHUNK = 2048


# ------------------------------------------------------------ populations


class PopulationModel:
    """Profile sampler, question sampler and performance function F(z, psi)."""

    name = "population"

    def sample_profiles(self, rng, n):
        raise NotImplementedError

    def sample_questions(self, rng, m):
        # question parameters are irrelevant unless a subclass says otherwise
        return np.zeros(m)

    def performance(self, profiles, questions):
        """F for every (profile, question) pair, shape (len(profiles), len(questions))."""
        raise NotImplementedError

    def moments(self, questions):
        """(E_z F, E_z F^2) per question."""
        raise NotImplementedError

    def true_mean(self, questions):
        return self.moments(np.atleast_1d(questions))[0]

    def params(self):
        return {"name": self.name}


@dataclass
class BetaLogisticPopulation(PopulationModel):
    """Skill z ~ Beta(a, b) mapped to 2z - 1 on [-1, 1]; difficulty ~ Uniform.

    F(z, psi) = logistic(discrimination * ((2z - 1) - psi)). Large
    discrimination makes agents nearly deterministic.
    """

    a: float = 2.0
    b: float = 2.0
    discrimination: float = 1.0
    difficulty: tuple = (-1.0, 1.0)
    name: str = "beta-logistic"

    def sample_profiles(self, rng, n):
        return rng.beta(self.a, self.b, n)

    def sample_questions(self, rng, m):
        lo, hi = self.difficulty
        return rng.uniform(lo, hi, m)

    def performance(self, profiles, questions):
        z = np.asarray(profiles, dtype=np.float64)[:, None]
        d = np.asarray(questions, dtype=np.float64)[None, :]
        return expit(self.discrimination * ((2.0 * z - 1.0) - d))

    def moments(self, questions):
        # Gauss-Jacobi: weight (1-x)^(b-1) (1+x)^(a-1) on [-1, 1] is the Beta(a, b)
        # density of z = (1 + x)/2 up to normalization.
        x, w = roots_jacobi(QUADRATURE_NODES, self.b - 1.0, self.a - 1.0)
        w = w / w.sum()
        f = self.performance((x + 1.0) / 2.0, questions)
        return w @ f, w @ (f * f)

    def params(self):
        return {"name": self.name, "a": self.a, "b": self.b,
                "discrimination": self.discrimination, "difficulty": list(self.difficulty)}


@dataclass
class UniformIdentityPopulation(PopulationModel):
    """z ~ Uniform[0, 1] and F(z, psi) = z for every question."""

    name: str = "uniform-identity"

    def sample_profiles(self, rng, n):
        return rng.random(n)

    def performance(self, profiles, questions):
        z = np.asarray(profiles, dtype=np.float64)[:, None]
        return np.broadcast_to(z, (z.shape[0], np.size(questions))).copy()

    def moments(self, questions):
        q = np.size(questions)
        return np.full(q, 0.5), np.full(q, 1.0 / 3.0)


@dataclass
class TwoPointPopulation(PopulationModel):
    """Agents are one of finitely many fixed success rates; F(z, psi) = z."""

    values: tuple = (0.2, 0.8)
    weights: tuple = (0.5, 0.5)
    name: str = "two-point"

    def sample_profiles(self, rng, n):
        w = np.asarray(self.weights, dtype=np.float64)
        idx = np.searchsorted(np.cumsum(w / w.sum()), rng.random(n), side="right")
        return np.asarray(self.values, dtype=np.float64)[np.minimum(idx, len(self.values) - 1)]

    def performance(self, profiles, questions):
        z = np.asarray(profiles, dtype=np.float64)[:, None]
        return np.broadcast_to(z, (z.shape[0], np.size(questions))).copy()

    def moments(self, questions):
        v = np.asarray(self.values, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        w = w / w.sum()
        q = np.size(questions)
        return np.full(q, w @ v), np.full(q, w @ (v * v))

    def params(self):
        return {"name": self.name, "values": list(self.values), "weights": list(self.weights)}


@dataclass
class ConstantPopulation(PopulationModel):
    """Every agent answers every question correctly with the same probability."""

    mean: float = 0.4
    name: str = "constant"

    def sample_profiles(self, rng, n):
        return np.full(n, self.mean)

    def performance(self, profiles, questions):
        return np.full((np.size(profiles), np.size(questions)), self.mean)

    def moments(self, questions):
        q = np.size(questions)
        return np.full(q, self.mean), np.full(q, self.mean ** 2)

    def params(self):
        return {"name": self.name, "mean": self.mean}


# ------------------------------------------------------- synthetic sources


@dataclass
class MTurkModel:
    """kappa fixed agents; the synthetic mean is their exact average performance."""

    kappa: int
    agent_profiles: np.ndarray
    base: PopulationModel

    def synthetic_mean(self, questions):
        return self.base.performance(self.agent_profiles, np.atleast_1d(questions)).mean(axis=0)

    def params(self):
        return {"kind": "mturk", "kappa": self.kappa}


@dataclass
class AlignedSource:
    """Synthetic responses come from the population itself."""

    base: PopulationModel

    def synthetic_mean(self, questions):
        return self.base.true_mean(questions)

    def params(self):
        return {"kind": "aligned"}


@dataclass
class FixedSynthetic:
    """Synthetic mean pinned to one value for every question."""

    value: float

    def synthetic_mean(self, questions):
        return np.full(np.size(questions), float(self.value))

    def params(self):
        return {"kind": "fixed", "value": self.value}


def draw_mturk(population, kappa, rng):
    """Draw kappa i.i.d. agent profiles and freeze them into an MTurkModel."""
    if int(kappa) != kappa or kappa < 1:
        raise DomainError(f"kappa must be a positive integer, got {kappa}")
    return MTurkModel(int(kappa), population.sample_profiles(rng, int(kappa)), population)


PRESETS = {
    "beta-logistic": lambda: BetaLogisticPopulation(),
    "sharp-logistic": lambda: BetaLogisticPopulation(a=1.0, b=1.0, discrimination=30.0,
                                                     difficulty=(-0.4, 0.4), name="sharp-logistic"),
    "uniform-identity": lambda: UniformIdentityPopulation(),
    "two-point": lambda: TwoPointPopulation(),
    "aligned": lambda: BetaLogisticPopulation(name="aligned"),
    "fixed-shift": lambda: ConstantPopulation(mean=0.4, name="fixed-shift"),
}


def make_preset(name):
    """Population for a named preset."""
    if name not in PRESETS:
        raise DomainError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]()


def make_source(preset, population, kappa, rng):
    """Synthetic source matching a preset: aligned, fixed shift, or an MTurk draw."""
    if preset == "aligned":
        return AlignedSource(population)
    if preset == "fixed-shift":
        return FixedSynthetic(0.6)
    return draw_mturk(population, kappa, rng)


# --------------------------------------------------------------- sampling


def sample_responses(mean, n, rng):
    """n Bernoulli(mean) draws as a float 0/1 array."""
    if not 0.0 <= mean <= 1.0:
        raise DomainError("mean must lie in [0, 1]")
    if n < 1:
        raise DomainError("n must be >= 1")
    return (rng.random(int(n)) < mean).astype(np.float64)


@dataclass
class SimulatedData:
    records: list
    questions: np.ndarray
    mu: np.ndarray
    mu_syn: np.ndarray


def simulate_dataset(population, source, m, n, K, rng, id_prefix="q", resamples=None):
    """m questions with n real and K synthetic binary responses each.

    Real and synthetic draws are independent given the question. ``source``
    None means perfectly aligned. With ``resamples=B`` and an MTurk source,
    each of the kappa agents answers B times and the synthetic stream is a
    random ordering of those kappa * B answers (needs K <= kappa * B).
    """
    for name, v in (("m", m), ("n", n), ("K", K)):
        if v < 1:
            raise DomainError(f"{name} must be >= 1")
    if source is None:
        source = AlignedSource(population)
    questions = population.sample_questions(rng, m)
    mu = population.true_mean(questions)
    mu_syn = source.synthetic_mean(questions)
    real = (rng.random((m, n)) < mu[:, None]).astype(np.float64)
    if resamples is None:
        syn = (rng.random((m, K)) < mu_syn[:, None]).astype(np.float64)
    else:
        syn = _resampled_synthetic(source, questions, int(resamples), K, rng)
    width = max(4, len(str(m - 1)))
    records = [CalibrationRecord(f"{id_prefix}{j:0{width}d}", real[j], syn[j]) for j in range(m)]
    return SimulatedData(records, questions, mu, mu_syn)


def _resampled_synthetic(source, questions, B, K, rng):
    if not isinstance(source, MTurkModel):
        raise DomainError("resampled synthetic responses need an MTurk source")
    if B < 1 or K > source.kappa * B:
        raise DomainError(f"budget {K} exceeds kappa * resamples = {source.kappa * B}")
    f = source.base.performance(source.agent_profiles, questions).T  # (m, kappa)
    per_agent = np.repeat(f, B, axis=1)  # (m, kappa * B) slot probabilities
    answers = rng.random(per_agent.shape) < per_agent
    order = rng.permuted(np.broadcast_to(np.arange(per_agent.shape[1]), per_agent.shape), axis=1)
    return np.take_along_axis(answers, order, axis=1)[:, :K].astype(np.float64)


def make_calibration_records(population, mturk_or_none, m, n, K, rng):
    return simulate_dataset(population, mturk_or_none, m, n, K, rng).records


# ------------------------------------------------------------ discrepancy


@dataclass
class DiscrepancyReport:
    delta: np.ndarray
    delta_kl: np.ndarray
    degenerate: np.ndarray
    quantiles: dict = field(default_factory=dict)

    @property
    def n_degenerate(self):
        return int(self.degenerate.sum())


def discrepancies(population, source, questions, levels=(0.9,)):
    """Per-question chi-square and KL discrepancies plus their empirical quantiles.

    Questions whose synthetic mean is exactly 0 or 1 are flagged and left out
    of the quantiles.
    """
    questions = np.atleast_1d(questions)
    mu = population.true_mean(questions)
    mu_syn = source.synthetic_mean(questions)
    degenerate = (mu_syn <= 0.0) | (mu_syn >= 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(degenerate, np.nan, (mu - mu_syn) ** 2 / (mu_syn * (1.0 - mu_syn)))
    delta_kl = np.where(degenerate, np.nan, kl_bernoulli_array(mu_syn, mu))
    quantiles = {}
    ok = ~degenerate
    if ok.any():
        for level in levels:
            quantiles[float(level)] = {"delta": empirical_quantile(delta[ok], level),
                                       "delta_kl": empirical_quantile(delta_kl[ok], level)}
    return DiscrepancyReport(delta, delta_kl, degenerate, quantiles)


# ---------------------------------------------------------------- oracles


@dataclass
class OracleResult:
    k_star: int
    censored: bool
    coverage: np.ndarray  # index k = 0..k_max; coverage[0] = 1 (universe)
    stderr: float  # Monte Carlo standard error of coverage at k_star
    n_paths: int


def coverage_curve(population, source, dilation, constructor, alpha, n_questions, n_reps, k_max,
                   rng, min_k=1):
    """Monte Carlo P(mu(psi) in I_syn(k; C)) for k = 0..k_max over fresh questions."""
    if constructor not in _kernels.CONSTRUCTOR_CODES:
        raise DomainError(f"oracle constructor must be one of {sorted(_kernels.CONSTRUCTOR_CODES)}")
    if k_max < 1 or n_questions < 1 or n_reps < 1:
        raise DomainError("k_max, n_questions and n_reps must be positive")
    code = _kernels.CONSTRUCTOR_CODES[constructor]
    crit = {"clt": normal_quantile(1.0 - alpha / 2.0), "kl": math.log(2.0 / alpha),
            "bernstein": math.log(4.0 / alpha)}[constructor]
    questions = population.sample_questions(rng, n_questions)
    mu = np.repeat(population.true_mean(questions), n_reps)
    mu_syn = np.repeat(source.synthetic_mean(questions), n_reps)
    total = np.zeros(k_max, dtype=np.int64)
    for start in range(0, mu.size, PATH_CHUNK):
        sl = slice(start, start + PATH_CHUNK)
        draws = rng.random((mu_syn[sl].size, k_max)) < mu_syn[sl, None]
        prefix = np.cumsum(draws, axis=1, dtype=np.int64)
        total += _kernels.coverage_counts(prefix, mu[sl], dilation, crit, code, min_k)
    return np.concatenate([[1.0], total / mu.size]), mu.size


def oracle_k_star(population, source, dilation, constructor, alpha, n_questions, n_reps, k_max,
                  rng, min_k=1):
    """sup{k <= k_max : coverage(k) >= 1 - alpha}, flagged censored at k_max."""
    cov, n_paths = coverage_curve(population, source, dilation, constructor, alpha, n_questions,
                                  n_reps, k_max, rng, min_k)
    ok = np.flatnonzero(cov >= 1.0 - alpha)
    k_star = int(ok[-1])
    p = cov[k_star]
    return OracleResult(k_star=k_star, censored=bool(cov[k_max] >= 1.0 - alpha), coverage=cov,
                        stderr=float(math.sqrt(p * (1.0 - p) / n_paths)), n_paths=n_paths)


# --------------------------------------------------------- variance ratio


@dataclass
class VarianceRatio:
    empirical_ratio: float
    predicted_ratio: float
    tau_sq: float
    sigma_sq: float


def predicted_variance_ratio(tau_sq, sigma_sq, B):
    return (B * tau_sq + sigma_sq) / (tau_sq + sigma_sq)


def variance_ratio_check(population, question, kappa, B, mc_reps, rng, chunk=1000):
    """Variance of the studentized mean when kappa agents each answer B times.

    Each replicate draws kappa fresh agents, collects k = kappa * B responses and
    records (ybar - mu) / (s / sqrt(k)). Without between-agent spread the
    variance is 1; otherwise it tends to (B tau^2 + sigma^2) / (tau^2 + sigma^2).
    """
    if kappa < 200:
        raise DomainError("variance_ratio_check needs kappa >= 200 for the normal regime")
    if B < 1 or mc_reps < 2:
        raise DomainError("B must be >= 1 and mc_reps >= 2")
    q = np.atleast_1d(question)[:1]
    mean, second = population.moments(q)
    mu = float(mean[0])
    tau_sq = float(second[0] - mean[0] ** 2)
    sigma_sq = float(mean[0] - second[0])
    k = kappa * B
    stats = np.empty(mc_reps)
    for start in range(0, mc_reps, chunk):
        reps = min(chunk, mc_reps - start)
        profiles = population.sample_profiles(rng, reps * kappa)
        f = population.performance(profiles, q)[:, 0].reshape(reps, kappa)
        ybar = rng.binomial(B, f).sum(axis=1) / k
        s = np.sqrt(ybar * (1.0 - ybar))
        with np.errstate(divide="ignore", invalid="ignore"):
            stats[start:start + reps] = (ybar - mu) * math.sqrt(k) / s
    stats = stats[np.isfinite(stats)]
    return VarianceRatio(float(np.var(stats, ddof=1)),
                         predicted_variance_ratio(tau_sq, sigma_sq, B), tau_sq, sigma_sq)
