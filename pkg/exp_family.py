"""
Exponential-family cost models.

A ModelFamily bundles the log-partition A, its gradient (the mean map), the
inverse mean map and D*(x) = x·(∇A)⁻¹(x) − A((∇A)⁻¹(x)) for one model. The
minimum of a segment cost (b−a)A(θ) − θ·S_ab is −(b−a)·D*(S̄_ab).

Kernels are vectorised over a trailing statistic axis so the same code serves
scalar queries and whole candidate sets.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import expit, logit, xlogy
from scipy.stats import median_abs_deviation

from errors import ConfigError, DegenerateSegment, DomainError, TieBreakUnsupported

logger = logging.getLogger("Dust.ExpFamily")

DOMAIN_EPS = 1e-12
# AC − B² below this fraction of AC counts as flat
QUADRATIC_DET_RTOL = 1e-10

ArrayLike = Union[float, np.ndarray]


class ModelId(str, Enum):
    GAUSS = "gauss"
    POISSON = "poisson"
    EXPONENTIAL = "exponential"
    GEOMETRIC = "geometric"
    BERNOULLI = "bernoulli"
    BINOMIAL = "binomial"
    NEGBIN = "negbin"
    VARIANCE = "variance"
    MEANVAR = "meanvar"
    QUADRATIC_REGRESSION = "quadratic-regression"


# ------------------- Kernels ------------------- #

class _Kernel:
    """Coordinate-wise functions of a one-parameter family on the open interval (lo, hi)"""

    lo = -np.inf
    hi = np.inf
    natural_hi = np.inf  # natural domain is (-inf, natural_hi)

    def log_partition(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean_map(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean_map_inv(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dstar(self, x: np.ndarray) -> np.ndarray:
        """D* per coordinate, finite limits on the boundary, +inf where the limit diverges"""
        raise NotImplementedError

    def natural_ok(self, theta: np.ndarray) -> np.ndarray:
        return theta < self.natural_hi

    def interior(self, x: np.ndarray, eps: float = DOMAIN_EPS) -> np.ndarray:
        return (x > self.lo + eps) & (x < self.hi - eps)

    def closure(self, x: np.ndarray, eps: float = DOMAIN_EPS) -> np.ndarray:
        return (x >= self.lo - eps) & (x <= self.hi + eps)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def ray_bound(self, sigma: np.ndarray, direction: np.ndarray, eps: float = DOMAIN_EPS) -> np.ndarray:
        """Largest x with sigma + x·direction inside (lo, hi), per coordinate"""
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(direction > 0, (self.hi - sigma) / direction, np.inf)
            down = np.where(direction < 0, (sigma - self.lo) / -direction, np.inf)
        bound = np.minimum(up, down)
        on_edge = (sigma <= self.lo + eps) | (sigma >= self.hi - eps)
        return np.where(on_edge, 0.0, np.maximum(bound, 0.0))


class _GaussKernel(_Kernel):
    def log_partition(self, theta):
        return 0.5 * theta ** 2

    def mean_map(self, theta):
        return np.asarray(theta, dtype=float)

    def mean_map_inv(self, x):
        return np.asarray(x, dtype=float)

    def dstar(self, x):
        return 0.5 * x ** 2

    def ray_bound(self, sigma, direction, eps=DOMAIN_EPS):
        return np.full(np.shape(sigma), np.inf)


class _PoissonKernel(_Kernel):
    lo = 0.0

    def log_partition(self, theta):
        return np.exp(theta)

    def mean_map(self, theta):
        return np.exp(theta)

    def mean_map_inv(self, x):
        return np.log(x)

    def dstar(self, x):
        return xlogy(x, x) - x


class _ExponentialKernel(_Kernel):
    lo = 0.0
    natural_hi = 0.0

    def log_partition(self, theta):
        return -np.log(-theta)

    def mean_map(self, theta):
        return -1.0 / theta

    def mean_map_inv(self, x):
        return -1.0 / x

    def dstar(self, x):
        with np.errstate(divide="ignore"):
            return -np.log(x) - 1.0


class _GeometricKernel(_Kernel):
    # number of trials up to the first success, mean in (1, inf)
    lo = 1.0
    natural_hi = 0.0

    def log_partition(self, theta):
        return -np.log(np.expm1(-theta))

    def mean_map(self, theta):
        return -1.0 / np.expm1(theta)

    def mean_map_inv(self, x):
        return np.log((x - 1.0) / x)

    def dstar(self, x):
        return xlogy(x - 1.0, x - 1.0) - xlogy(x, x)


class _BernoulliKernel(_Kernel):
    lo = 0.0
    hi = 1.0

    def log_partition(self, theta):
        return np.logaddexp(0.0, theta)

    def mean_map(self, theta):
        return expit(theta)

    def mean_map_inv(self, x):
        return logit(x)

    def dstar(self, x):
        return xlogy(x, x) + xlogy(1.0 - x, 1.0 - x)


class _NegBinKernel(_Kernel):
    lo = 0.0
    natural_hi = 0.0

    def log_partition(self, theta):
        return -np.log(-np.expm1(theta))

    def mean_map(self, theta):
        return -np.exp(theta) / np.expm1(theta)

    def mean_map_inv(self, x):
        return np.log(x / (1.0 + x))

    def dstar(self, x):
        return xlogy(x, x) - xlogy(1.0 + x, 1.0 + x)


class _VarianceKernel(_Kernel):
    # statistic is y², zero-mean Gaussian
    lo = 0.0
    natural_hi = 0.0

    def log_partition(self, theta):
        return -0.5 * np.log(-2.0 * theta)

    def mean_map(self, theta):
        return -0.5 / theta

    def mean_map_inv(self, x):
        return -0.5 / x

    def dstar(self, x):
        with np.errstate(divide="ignore"):
            return -0.5 * (np.log(x) + 1.0)


class _MeanVarKernel:
    """Gaussian with unknown mean and variance; statistics (y, y²) on a trailing pair axis"""

    def log_partition(self, theta):
        t1, t2 = theta[..., 0], theta[..., 1]
        return -t1 ** 2 / (4.0 * t2) + 0.5 * np.log(-0.5 / t2)

    def mean_map(self, theta):
        t1, t2 = theta[..., 0], theta[..., 1]
        return np.stack([-t1 / (2.0 * t2), t1 ** 2 / (4.0 * t2 ** 2) - 0.5 / t2], axis=-1)

    def mean_map_inv(self, x):
        w = self.spread(x)
        return np.stack([x[..., 0] / w, -0.5 / w], axis=-1)

    @staticmethod
    def spread(x):
        return x[..., 1] - x[..., 0] ** 2

    def dstar(self, x):
        w = np.maximum(self.spread(x), 0.0)
        with np.errstate(divide="ignore"):
            return -0.5 * (1.0 + np.log(w))

    def natural_ok(self, theta):
        return theta[..., 1] < 0

    def interior(self, x, eps=DOMAIN_EPS):
        return self.spread(x) > eps

    def closure(self, x, eps=DOMAIN_EPS):
        return self.spread(x) >= -eps

    def ray_bound(self, sigma, direction, eps=DOMAIN_EPS):
        """Positive root of v(x) − u(x)² along the ray, per component"""
        u, v = sigma[..., 0], sigma[..., 1]
        du, dv = direction[..., 0], direction[..., 1]
        a = du ** 2
        b = dv - 2.0 * u * du
        c = v - u ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            linear = np.where(b < 0, c / -b, np.inf)
            root = (b + np.sqrt(np.maximum(b ** 2 + 4.0 * a * c, 0.0))) / (2.0 * a)
        bound = np.where(a > 0, root, linear)
        return np.where(c <= eps, 0.0, np.maximum(bound, 0.0))


_KERNELS = {
    ModelId.GAUSS: _GaussKernel(),
    ModelId.POISSON: _PoissonKernel(),
    ModelId.EXPONENTIAL: _ExponentialKernel(),
    ModelId.GEOMETRIC: _GeometricKernel(),
    ModelId.BERNOULLI: _BernoulliKernel(),
    ModelId.BINOMIAL: _BernoulliKernel(),
    ModelId.NEGBIN: _NegBinKernel(),
    ModelId.VARIANCE: _VarianceKernel(),
    ModelId.MEANVAR: _MeanVarKernel(),
}

PENALTY_SCALE: Dict[ModelId, float] = {
    ModelId.GAUSS: 1.0,
    ModelId.POISSON: 2.0 / 3.0,
    ModelId.EXPONENTIAL: 3.0 / 4.0,
    ModelId.GEOMETRIC: 2.0 / 3.0,
    ModelId.BERNOULLI: 2.0 / 3.0,
    ModelId.BINOMIAL: 1.0 / 6.0,
    ModelId.NEGBIN: 1.0 / 10.0,
    ModelId.VARIANCE: 1.0,
    ModelId.MEANVAR: 1.0,
    ModelId.QUADRATIC_REGRESSION: 1.0,
}

_STAT_DIM = {ModelId.MEANVAR: 2, ModelId.QUADRATIC_REGRESSION: 5}


# ------------------- Model family ------------------- #

@dataclass(frozen=True)
class ModelFamily:
    """Immutable description of one cost model.
    components > 1 replicates the statistic for independent series columns."""

    name: ModelId
    stat_dim: int
    mean_domain: Tuple[Tuple[float, float], ...]
    penalty_scale: float
    components: int = 1
    trials: int = 1

    @property
    def total_dim(self) -> int:
        return self.stat_dim * self.components

    @property
    def kernel(self):
        try:
            return _KERNELS[self.name]
        except KeyError:
            raise ConfigError(f"model {self.name.value} has no conjugate form") from None

    @property
    def is_quadratic(self) -> bool:
        return self.name == ModelId.QUADRATIC_REGRESSION

    @property
    def is_meanvar(self) -> bool:
        return self.name == ModelId.MEANVAR

    @property
    def min_segment_length(self) -> int:
        """Shortest segment whose minimum cost is finite for generic data"""
        return 2 if self.is_meanvar else 1

    @property
    def is_univariate(self) -> bool:
        return self.stat_dim == 1 and self.components == 1

    @property
    def nonnegative_stats(self) -> bool:
        return self.name not in (ModelId.GAUSS, ModelId.MEANVAR, ModelId.QUADRATIC_REGRESSION)


def get_model(name: Union[str, ModelId], components: int = 1, trials: Optional[int] = None) -> ModelFamily:
    """Build a ModelFamily from its lowercase id"""
    try:
        model_id = ModelId(name)
    except ValueError:
        valid = ", ".join(m.value for m in ModelId)
        raise ConfigError(f"unknown model '{name}' (expected one of: {valid})") from None

    if components < 1:
        raise ConfigError("components must be positive")
    if model_id == ModelId.QUADRATIC_REGRESSION and components != 1:
        raise ConfigError("quadratic-regression takes exactly two columns (x, y)")
    if trials is not None and trials < 1:
        raise ConfigError("trials must be a positive integer")

    stat_dim = _STAT_DIM.get(model_id, 1)
    if model_id == ModelId.QUADRATIC_REGRESSION:
        domain = ((-np.inf, np.inf),) * stat_dim
    elif model_id == ModelId.MEANVAR:
        domain = ((-np.inf, np.inf), (0.0, np.inf))
    else:
        kernel = _KERNELS[model_id]
        domain = ((kernel.lo, kernel.hi),)

    uses_trials = model_id in (ModelId.BINOMIAL, ModelId.NEGBIN)
    return ModelFamily(
        name=model_id,
        stat_dim=stat_dim,
        mean_domain=domain,
        penalty_scale=PENALTY_SCALE[model_id],
        components=components,
        trials=(trials or 10) if uses_trials else 1,
    )


# ------------------- Domain helpers ------------------- #

def _as_stat(model: ModelFamily, x: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.shape[-1] != model.total_dim:
        raise DomainError(f"expected {model.total_dim} statistic coordinates, got {arr.shape[-1]}")
    return arr, scalar


def _pairs(model: ModelFamily, x: np.ndarray) -> np.ndarray:
    """View a flat meanvar statistic as (..., components, 2)"""
    return x.reshape(x.shape[:-1] + (model.components, 2))


def _check_domain(model: ModelFamily, x: np.ndarray, closed: bool = False, eps: float = DOMAIN_EPS):
    kernel = model.kernel
    if model.is_meanvar:
        pairs = _pairs(model, x)
        ok = kernel.closure(pairs, eps) if closed else kernel.interior(pairs, eps)
        if not np.all(ok):
            comp = int(np.argwhere(~ok)[0][-1])
            u = pairs[..., comp, 0].ravel()[0]
            raise DomainError(
                f"coordinate {2 * comp + 1}: second moment must exceed squared mean ({u ** 2:.6g})",
                coordinate=2 * comp + 1, bound=float(u ** 2)
            )
        return

    ok = kernel.closure(x, eps) if closed else kernel.interior(x, eps)
    if not np.all(ok):
        coord = int(np.argwhere(~ok)[0][-1])
        value = x[..., coord].ravel()[0]
        bound = kernel.lo if value <= kernel.lo + eps else kernel.hi
        raise DomainError(
            f"coordinate {coord} = {value:.6g} outside ({kernel.lo}, {kernel.hi})",
            coordinate=coord, bound=float(bound)
        )


def in_mean_domain(model: ModelFamily, x: np.ndarray, closed: bool = False) -> np.ndarray:
    """Elementwise membership over leading axes"""
    x = np.asarray(x, dtype=float)
    kernel = model.kernel
    if model.is_meanvar:
        pairs = _pairs(model, x)
        ok = kernel.closure(pairs) if closed else kernel.interior(pairs)
    else:
        ok = kernel.closure(x) if closed else kernel.interior(x)
    return np.all(ok, axis=-1)


def natural_domain_contains(model: ModelFamily, theta: ArrayLike) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if model.is_meanvar:
        return np.all(model.kernel.natural_ok(_pairs(model, theta)), axis=-1)
    with np.errstate(invalid="ignore"):
        return np.all(model.kernel.natural_ok(theta) & np.isfinite(theta), axis=-1)


# ------------------- Operations ------------------- #

def dstar_values(model: ModelFamily, x: np.ndarray) -> np.ndarray:
    """Unchecked D* summed over coordinates; +inf on diverging boundary limits"""
    kernel = model.kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.is_meanvar:
            return np.sum(kernel.dstar(_pairs(model, x)), axis=-1)
        return np.sum(kernel.dstar(x), axis=-1)


def dstar(model: ModelFamily, x: ArrayLike, allow_boundary: bool = False) -> float:
    """Σ D*ᵢ(xᵢ) for a mean vector strictly inside the mean domain"""
    arr, _ = _as_stat(model, x)
    _check_domain(model, arr, closed=allow_boundary)
    value = dstar_values(model, arr)
    return float(value) if np.ndim(value) == 0 else value


def grad_a_inv(model: ModelFamily, x: ArrayLike) -> ArrayLike:
    """Natural parameter whose mean map equals x"""
    arr, scalar = _as_stat(model, x)
    _check_domain(model, arr)
    kernel = model.kernel
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.is_meanvar:
            theta = kernel.mean_map_inv(_pairs(model, arr)).reshape(arr.shape)
        else:
            theta = kernel.mean_map_inv(arr)
    return float(theta[0]) if scalar else theta


def grad_a(model: ModelFamily, theta: ArrayLike) -> ArrayLike:
    """Mean map ∇A"""
    arr = np.asarray(theta, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.all(natural_domain_contains(model, arr)):
        raise DomainError(f"natural parameter outside the domain of {model.name.value}")
    kernel = model.kernel
    if model.is_meanvar:
        mean = kernel.mean_map(_pairs(model, arr)).reshape(arr.shape)
    else:
        mean = kernel.mean_map(arr)
    return float(mean[0]) if scalar else mean


def log_partition(model: ModelFamily, theta: ArrayLike) -> float:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if not np.all(natural_domain_contains(model, arr)):
        raise DomainError(f"natural parameter outside the domain of {model.name.value}")
    kernel = model.kernel
    if model.is_meanvar:
        return float(np.sum(kernel.log_partition(_pairs(model, arr))))
    return float(np.sum(kernel.log_partition(arr)))


def segment_costs(model: ModelFamily, means: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Batched minimum segment cost; +inf where the minimum diverges or the mean is infeasible"""
    means = np.asarray(means, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if model.is_quadratic:
        return lengths * np.reshape(_regression_min(means), means.shape[:-1])
    values = dstar_values(model, means)
    cost = -lengths * values
    return np.where(np.isfinite(cost), cost, np.inf)


def segment_cost_min(model: ModelFamily, mean_stat: ArrayLike, length: int) -> float:
    """min over θ of length·A(θ) − θ·(length·mean_stat), i.e. −length·D*(mean_stat)"""
    if length < 1:
        raise DomainError("segment length must be at least 1")
    arr, _ = _as_stat(model, mean_stat)
    if model.is_quadratic:
        return float(length * _regression_min(arr))
    _check_domain(model, arr, closed=True)
    value = float(np.sum(dstar_values(model, arr)))
    if not np.isfinite(value):
        raise DegenerateSegment(f"{model.name.value} segment minimum diverges at mean {arr.tolist()}")
    return -length * value


# ------------------- Data ingestion ------------------- #

def sufficient_stats(model: ModelFamily, data: np.ndarray) -> np.ndarray:
    """T(y) for each observation, shape (n, total_dim)"""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]

    if model.is_quadratic:
        if data.shape[1] != 2:
            raise ConfigError("quadratic-regression expects two columns (x, y)")
        x, y = data[:, 0], data[:, 1]
        return np.column_stack([x * x, x, x * y, y, y * y])

    if data.shape[1] != model.components:
        raise ConfigError(f"model expects {model.components} column(s), data has {data.shape[1]}")
    if model.name == ModelId.VARIANCE:
        return data ** 2
    if model.is_meanvar:
        out = np.empty((data.shape[0], 2 * data.shape[1]))
        out[:, 0::2] = data
        out[:, 1::2] = data ** 2
        return out
    return data.copy()


def robust_scale(data: np.ndarray) -> np.ndarray:
    """Per-column noise level from the MAD of first differences"""
    diffs = np.diff(data, axis=0)
    return median_abs_deviation(diffs, axis=0, scale="normal") / np.sqrt(2.0)


def prepare_series(model: ModelFamily, data: ArrayLike, standardise: bool = False) -> np.ndarray:
    """Normalise raw observations and check they are admissible for the model"""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[0] < 1:
        raise ConfigError("empty series")
    if not np.all(np.isfinite(data)):
        raise DomainError("series contains NaN or infinite values")

    if model.name in (ModelId.BINOMIAL, ModelId.NEGBIN):
        data = data / model.trials

    if standardise and model.name == ModelId.GAUSS and data.shape[0] > 2:
        scale = robust_scale(data)
        if np.all(scale > 0):
            data = data / scale
        else:
            logger.warning("⚠️ Robust scale is zero; Gaussian data left unstandardised")

    if model.is_quadratic or model.name in (ModelId.GAUSS, ModelId.VARIANCE, ModelId.MEANVAR):
        return data

    kernel = model.kernel
    bad = ~kernel.closure(data)
    if np.any(bad):
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise DomainError(
            f"observation {data[row, col]:.6g} at row {row + 1} is outside the support of {model.name.value}",
            coordinate=col, bound=float(kernel.lo)
        )
    return data


# ------------------- Quadratic costs ------------------- #

class QuadraticCoeffs(BaseModel):
    """q(θ₁,θ₂) = Aθ₁² + 2Bθ₁θ₂ + Cθ₂² + 2Dθ₁ + 2Eθ₂ + F, strictly convex"""

    model_config = ConfigDict(frozen=True)

    A: float
    B: float
    C: float
    D: float = 0.0
    E: float = 0.0
    F: float = 0.0

    @model_validator(mode="after")
    def strictly_convex(self):
        if not (self.A > 0 and self.A * self.C - self.B ** 2 > QUADRATIC_DET_RTOL * self.A * self.C):
            raise ValueError("quadratic cost must satisfy A > 0 and AC − B² > 0")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D, self.E, self.F])


def quadratic_mu_max_arrays(fs: np.ndarray, fr: np.ndarray) -> np.ndarray:
    """Batched μ_max for coefficient rows (A, B, C, ...); last axis holds the coefficients"""
    a_s, b_s, c_s = fs[..., 0], fs[..., 1], fs[..., 2]
    a_r, b_r, c_r = fr[..., 0], fr[..., 1], fr[..., 2]
    w1 = a_s * c_s - b_s ** 2
    w2 = a_r * c_r - b_r ** 2
    delta = 0.5 * (a_s * c_r + a_r * c_s - 2.0 * b_s * b_r)
    lead = w1 - 2.0 * delta + w2
    disc = delta ** 2 - w1 * w2
    with np.errstate(divide="ignore", invalid="ignore"):
        # smallest positive root of lead·μ² + 2(w1 − Δ)μ + w1, written without cancellation
        root = w1 / (delta - w1 + np.sqrt(np.maximum(disc, 0.0)))
    finite = (lead < 0) | ((w1 < delta) & (disc >= 0))
    return np.where(finite, root, np.inf)


def quadratic_mu_max(f_s: QuadraticCoeffs, f_r: QuadraticCoeffs) -> float:
    """Largest μ keeping A(μ)C(μ) − B(μ)² > 0 for the Lagrangian f_s + μ(f_s − f_r)"""
    w1 = f_s.A * f_s.C - f_s.B ** 2
    w2 = f_r.A * f_r.C - f_r.B ** 2
    if abs(w1 - w2) <= DOMAIN_EPS * max(abs(w1), abs(w2), 1.0):
        raise TieBreakUnsupported("ω₁² equals ω₂²; μ_max is not determined")
    return float(quadratic_mu_max_arrays(f_s.as_array(), f_r.as_array()))


def quadratic_convex(coeffs: np.ndarray) -> np.ndarray:
    """A > 0 and AC − B² clear of zero relative to AC, per coefficient row"""
    a, b, c = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]
    return (a > 0) & (a * c - b ** 2 > QUADRATIC_DET_RTOL * a * c)


def quadratic_dual_arrays(fs: np.ndarray, fr: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Batched dual value; -inf where the Lagrangian is not strictly convex"""
    mu = np.asarray(mu, dtype=float)[..., None]
    coeffs = fs + mu * (fs - fr)
    a, b, c, d, e, f = (coeffs[..., i] for i in range(6))
    det = a * c - b ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        value = (2.0 * b * d * e - a * e ** 2 - c * d ** 2) / det + f
    return np.where(quadratic_convex(coeffs), value, -np.inf)


def quadratic_dual(f_s: QuadraticCoeffs, f_r: QuadraticCoeffs, mu: float) -> float:
    """min over θ of f_s(θ) + μ(f_s(θ) − f_r(θ))"""
    if mu < 0:
        raise DomainError("dual multiplier must be nonnegative")
    value = float(quadratic_dual_arrays(f_s.as_array(), f_r.as_array(), np.asarray(mu)))
    if not np.isfinite(value):
        raise DomainError(f"μ = {mu} is beyond μ_max")
    return value


def regression_coeffs(sums: ArrayLike, length: int, offset: float = 0.0) -> QuadraticCoeffs:
    """Simple-regression cost Σ(y − θ₁x − θ₂)² + offset from sums (Σx², Σx, Σxy, Σy, Σy²)"""
    sxx, sx, sxy, sy, syy = (float(v) for v in np.asarray(sums, dtype=float))
    return QuadraticCoeffs(A=sxx, B=sx, C=float(length), D=-sxy, E=-sy, F=syy + offset)


def regression_coeff_arrays(sums: np.ndarray, lengths: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    sums = np.asarray(sums, dtype=float)
    return np.stack([
        sums[..., 0], sums[..., 1], np.asarray(lengths, dtype=float),
        -sums[..., 2], -sums[..., 3], sums[..., 4] + offsets
    ], axis=-1)


def _regression_min(means: np.ndarray) -> np.ndarray:
    """Per-point residual minimum of y ≈ θ₁x + θ₂ from mean statistics"""
    means = np.atleast_2d(means)
    gram = np.empty(means.shape[:-1] + (2, 2))
    gram[..., 0, 0] = means[..., 0]
    gram[..., 0, 1] = gram[..., 1, 0] = means[..., 1]
    gram[..., 1, 1] = 1.0
    rhs = np.stack([means[..., 2], means[..., 3]], axis=-1)
    # pseudo-inverse keeps single points and constant x finite
    coef = np.einsum("...ij,...j->...i", np.linalg.pinv(gram), rhs)
    value = means[..., 4] - np.einsum("...i,...i->...", coef, rhs)
    value = np.maximum(value, 0.0)
    return value if value.shape != (1,) else value[0]
