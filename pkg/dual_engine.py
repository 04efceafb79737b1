"""
Dual and decision functions of the pruning problem, their closed-form maxima,
and the vectorised pruning tests used by the segmenter.

Notation: S̄_ab is the mean statistic over (min(a,b), max(a,b)], Q̄_rs = (Q_s − Q_r)/(s − r),
ψ_rs = 1 if r < s else −1, ΔS̄_rst = ψ_rs(S̄_st − S̄_rs), ΔQ̄_rst = ψ_rs(Q̄_st − Q̄_rs).
The decision function 𝔻(x) = −D*(S̄_st + Σ x_r ΔS̄_rst) − (Q̄_st + Σ x_r ΔQ̄_rst) is positive
somewhere only if index s can be pruned at time t.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize_scalar

from errors import ConfigError, DegenerateSegment, DomainError, SegmentIndexError, SingularSystem
from exp_family import (
    DOMAIN_EPS,
    ModelFamily,
    ModelId,
    _pairs,
    dstar_values,
    in_mean_domain,
    natural_domain_contains,
    quadratic_convex,
    quadratic_dual_arrays,
    quadratic_mu_max_arrays,
    regression_coeff_arrays,
    segment_costs,
)
from logger import log_warning
from stat_store import StatStore

logger = logging.getLogger("Dust.DualEngine")

PRUNE_SLACK = 1e-10
MAX_CONDITION = 1e12
QUADRATIC_MIN_POINTS = 3


class Strategy(str, Enum):
    EXACT_1D = "exact1d"
    AT_ZERO = "zero"
    RANDOM_UNIFORM = "random"
    QUASI_NEWTON = "qn"
    MEANVAR_CLOSED = "meanvar"
    GAUSS_CLOSED = "gauss"

    @classmethod
    def parse(cls, name: "str | Strategy") -> "Strategy":
        if isinstance(name, Strategy):
            return name
        aliases = {
            "exact-1d": cls.EXACT_1D, "at-zero": cls.AT_ZERO, "random-uniform": cls.RANDOM_UNIFORM,
            "quasi-newton": cls.QUASI_NEWTON, "meanvar-closed": cls.MEANVAR_CLOSED, "gauss-closed": cls.GAUSS_CLOSED,
        }
        key = str(name).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = " | ".join(s.value for s in cls)
            raise ConfigError(f"unknown strategy '{name}' (expected {valid})") from None


# ------------------- Domain types ------------------- #

@dataclass(frozen=True)
class ConstraintSelection:
    """Candidate s tested at time t against the constraint indices R"""

    s: int
    R: Tuple[int, ...]
    t: int

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(int(r) for r in self.R))
        if not 0 <= self.s < self.t:
            raise SegmentIndexError(f"need 0 <= s < t, got s={self.s}, t={self.t}")
        if len(set(self.R)) != len(self.R):
            raise SegmentIndexError("constraint indices must be distinct")
        for r in self.R:
            if r == self.s or not 0 <= r <= self.t - 1:
                raise SegmentIndexError(f"constraint index {r} must differ from s and lie in [0, {self.t - 1}]")

    @property
    def psi(self) -> np.ndarray:
        return np.array([1.0 if r < self.s else -1.0 for r in self.R])

    @property
    def below(self) -> Tuple[bool, ...]:
        return tuple(r < self.s for r in self.R)


class DualEvalPlan(BaseModel):
    """How pruning tests evaluate the dual"""

    model_config = ConfigDict(frozen=True)

    strategy: Strategy = Strategy.EXACT_1D
    rng_seed: int = 0
    qn_max_iters: int = Field(20, gt=0)
    qn_tol: float = Field(1e-8, gt=0)
    constraints: int = Field(1, ge=1, le=2)
    random_r: bool = False
    random_factor: float = Field(0.999, gt=0, lt=1)
    prune_slack: float = Field(PRUNE_SLACK, ge=0)

    def check_model(self, model: ModelFamily):
        """Raise ConfigError when the strategy cannot serve this model"""
        s = self.strategy
        if model.is_quadratic and s not in (Strategy.AT_ZERO, Strategy.RANDOM_UNIFORM):
            raise ConfigError("quadratic-regression supports the zero and random strategies only")
        if s == Strategy.EXACT_1D and not (model.is_univariate and self.constraints == 1):
            raise ConfigError("exact1d needs a one-dimensional statistic and a single constraint")
        if s == Strategy.MEANVAR_CLOSED and not (model.is_meanvar and model.components == 1):
            raise ConfigError("meanvar strategy needs the univariate meanvar model")
        if s == Strategy.GAUSS_CLOSED and (model.name != ModelId.GAUSS or self.constraints != 1):
            raise ConfigError("gauss strategy needs the gauss model and a single constraint")
        if model.is_quadratic and self.constraints != 1:
            raise ConfigError("quadratic-regression uses a single constraint")


@dataclass(frozen=True)
class DualDomain:
    mu_max: np.ndarray
    x_max: np.ndarray
    feasible: bool


# ------------------- Batched geometry ------------------- #

@dataclass
class _Batch:
    """Statistics for k candidates s against q constraints each, at one time t"""

    t: int
    s: np.ndarray        # (k,)
    r: np.ndarray        # (k, q)
    psi: np.ndarray      # (k, q)
    length: np.ndarray   # (k,)
    sig: np.ndarray      # (k, p)  S̄_st
    sig_r: np.ndarray    # (k, q, p)  S̄_rs
    q_s: np.ndarray      # (k,)
    q_t: float
    qbar_st: np.ndarray  # (k,)
    qbar_rs: np.ndarray  # (k, q)
    dS: np.ndarray       # (k, q, p)
    dQ: np.ndarray       # (k, q)

    def take(self, rows: np.ndarray) -> "_Batch":
        return _Batch(
            t=self.t, s=self.s[rows], r=self.r[rows], psi=self.psi[rows], length=self.length[rows],
            sig=self.sig[rows], sig_r=self.sig_r[rows], q_s=self.q_s[rows], q_t=self.q_t,
            qbar_st=self.qbar_st[rows], qbar_rs=self.qbar_rs[rows], dS=self.dS[rows], dQ=self.dQ[rows],
        )


def _build_batch(store: StatStore, s: np.ndarray, r: np.ndarray, t: int, sig: Optional[np.ndarray] = None) -> _Batch:
    s = np.asarray(s, dtype=int)
    r = np.asarray(r, dtype=int).reshape(s.size, -1)
    k, q = r.shape
    q_vals = store.q_values

    if sig is None:
        sig = store.mean_stats(s, t)
    sig_r = store.mean_stats(r, np.broadcast_to(s[:, None], (k, q)))
    psi = np.where(r < s[:, None], 1.0, -1.0)
    length = (t - s).astype(float)
    q_s = q_vals[s]
    q_t = float(q_vals[t])
    with np.errstate(invalid="ignore"):
        qbar_st = (q_t - q_s) / length
        qbar_rs = (q_s[:, None] - q_vals[r]) / (s[:, None] - r)
    dS = psi[..., None] * (sig[:, None, :] - sig_r)
    dQ = psi * (qbar_st[:, None] - qbar_rs)
    return _Batch(t, s, r, psi, length, sig, sig_r, q_s, q_t, qbar_st, qbar_rs, dS, dQ)


def _single(store: StatStore, s: int, R: Sequence[int], t: int, need_t: bool = True) -> _Batch:
    """Batch of one with the state checks the public functions promise"""
    for idx in (*R, s) + ((t,) if need_t else ()):
        store.q(idx)
    # without Q_t the Q̄_st and ΔQ̄ entries are NaN and must not be read
    return _build_batch(store, np.array([s]), np.array([list(R)]), t)


def _nan_to(values: np.ndarray, fill: float) -> np.ndarray:
    return np.where(np.isnan(values), fill, values)


def _sigma(b: _Batch, x: np.ndarray) -> np.ndarray:
    return b.sig + np.einsum("kq,kqp->kp", x, b.dS)


def _decision_values(model: ModelFamily, b: _Batch, x: np.ndarray, sigma: Optional[np.ndarray] = None) -> np.ndarray:
    if sigma is None:
        sigma = _sigma(b, x)
    with np.errstate(invalid="ignore"):
        return -dstar_values(model, sigma) - (b.qbar_st + np.sum(x * b.dQ, axis=1))


def _margin(b: _Batch, x: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Dual value minus (Q_t + β), from a decision value at x"""
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = b.length / (1.0 + np.sum(b.psi * x, axis=1))
        margin = scale * value
    return np.where(np.isposinf(value), np.inf, _nan_to(margin, -np.inf))


def _ray_x_max(model: ModelFamily, sigma: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Largest step keeping sigma + x·direction in the mean domain, per row"""
    kernel = model.kernel
    if model.is_meanvar:
        bounds = kernel.ray_bound(_pairs(model, sigma), _pairs(model, direction))
    else:
        bounds = kernel.ray_bound(sigma, direction)
    return np.min(bounds, axis=-1)


def _x_max_1c(model: ModelFamily, b: _Batch) -> np.ndarray:
    x_max = _ray_x_max(model, b.sig, b.dS[:, 0, :])
    # constraints above s keep x below 1
    return np.where(b.psi[:, 0] < 0, np.minimum(x_max, 1.0), x_max)


def _x_feasible(model: ModelFamily, b: _Batch, x: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        linear = 1.0 + np.sum(b.psi * x, axis=1) > 0
        return linear & np.all(x >= 0, axis=1) & in_mean_domain(model, _sigma(b, x))


# ------------------- Dual with one constraint ------------------- #

def dual_1c(model: ModelFamily, store: StatStore, r: int, s: int, t: int, mu: float, beta: float) -> float:
    """(t−s)(−(1−μ)D*(m(μ)) + μQ̄_rs) + Q_s + β with m(μ) = (S̄_st − μS̄_rs)/(1 − μ)"""
    if not r < s < t:
        raise SegmentIndexError(f"need r < s < t, got ({r}, {s}, {t})")
    if not 0 <= mu < 1:
        raise DomainError(f"μ = {mu} outside [0, 1)")
    sig = store.mean_stat(s, t)
    sig_r = store.mean_stat(r, s)
    m = (sig - mu * sig_r) / (1.0 - mu)
    if not in_mean_domain(model, m, closed=True):
        raise DomainError(f"μ = {mu} is beyond μ_max: m(μ) leaves the mean domain")
    value = float(dstar_values(model, m))
    if np.isposinf(value):
        return -np.inf
    return (t - s) * (-(1.0 - mu) * value + mu * store.q_bar(r, s)) + store.q(s) + beta


def x_max_1c(model: ModelFamily, store: StatStore, r: int, s: int, t: int) -> float:
    """Upper end of the x-interval on which 𝔻 is defined (x = μ/(1 − μ))"""
    if not (r != s and s < t):
        raise SegmentIndexError(f"need r != s < t, got ({r}, {s}, {t})")
    sig = store.mean_stat(s, t)[None, :]
    psi = 1.0 if r < s else -1.0
    direction = psi * (sig - store.mean_stat(r, s)[None, :])
    x_max = float(_ray_x_max(model, sig, direction)[0])
    return min(x_max, 1.0) if psi < 0 else x_max


def mu_max_1c(model: ModelFamily, store: StatStore, r: int, s: int, t: int) -> float:
    """Largest admissible multiplier after normalisation, in [0, 1]"""
    x_max = x_max_1c(model, store, r, s, t)
    return 1.0 if np.isinf(x_max) else x_max / (1.0 + x_max)


def dual_domain_1c(model: ModelFamily, store: StatStore, r: int, s: int, t: int) -> DualDomain:
    x_max = x_max_1c(model, store, r, s, t)
    mu_max = 1.0 if np.isinf(x_max) else x_max / (1.0 + x_max)
    return DualDomain(mu_max=np.array([mu_max]), x_max=np.array([x_max]), feasible=x_max > 0)


def decision_1d(model: ModelFamily, store: StatStore, r: int, s: int, t: int, x: float) -> float:
    """𝔻(x) = −D*(S̄_st + xΔS̄_rst) − (Q̄_st + xΔQ̄_rst)"""
    x_max = x_max_1c(model, store, r, s, t)
    if x < 0 or (x > 0 and x >= x_max):
        raise DomainError(f"x = {x} outside [0, {x_max})", bound=x_max)
    b = _single(store, s, (r,), t)
    value = float(_decision_values(model, b, np.array([[x]]))[0])
    return value


# ------------------- Exact one-dimensional test ------------------- #

def _exact_1d(model: ModelFamily, b: _Batch) -> Tuple[np.ndarray, np.ndarray]:
    """argmax and max of 𝔻 over [0, x_max) for univariate models; +inf when unbounded"""
    kernel = model.kernel
    sig1 = b.sig[:, 0]
    dS = b.dS[:, 0, 0]
    dQ = b.dQ[:, 0]
    x_max = _x_max_1c(model, b)

    with np.errstate(all="ignore"):
        value0 = -kernel.dstar(sig1) - b.qbar_st
        slope0 = -dS * kernel.mean_map_inv(sig1) - dQ
        ascend = (x_max > 0) & (slope0 > 0)

        theta = np.where(dS != 0, -dQ / np.where(dS != 0, dS, 1.0), np.nan)
        theta_ok = (dS != 0) & kernel.natural_ok(theta) & np.isfinite(theta)
        x_star = (kernel.mean_map(theta) - sig1) / np.where(dS != 0, dS, 1.0)
        interior = theta_ok & (np.isinf(x_max) | (x_star < x_max))
        value_star = kernel.log_partition(theta) - theta * sig1 - b.qbar_st

        x_edge = np.where(np.isfinite(x_max), x_max, 0.0)
        sigma_edge = kernel.clip(sig1 + x_edge * dS)
        value_edge = np.where(np.isfinite(x_max), -kernel.dstar(sigma_edge) - (b.qbar_st + x_edge * dQ), np.inf)

    x_best = np.where(ascend, np.where(interior, x_star, x_max), 0.0)
    best = np.where(ascend, np.where(interior, value_star, value_edge), value0)
    best = _nan_to(best, -np.inf)

    # never below the value at zero
    lower = best < value0
    x_best = np.where(lower, 0.0, x_best)
    best = np.where(lower, value0, best)
    return x_best, best


def decision_max_1d(model: ModelFamily, store: StatStore, r: int, s: int, t: int) -> Tuple[float, float]:
    """(x*, 𝔻(x*)) for a univariate model with one constraint"""
    if not model.is_univariate:
        raise ConfigError("closed-form decision maximum needs a one-dimensional statistic")
    b = _single(store, s, (r,), t)
    x_best, best = _exact_1d(model, b)
    return float(x_best[0]), float(best[0])


def exact_test_1d(model: ModelFamily, store: StatStore, r: int, s: int, t: int, beta: float,
                  slack: float = PRUNE_SLACK) -> bool:
    """True iff the maximal one-constraint dual value exceeds Q_t + β"""
    if not model.is_univariate:
        raise ConfigError("exact1d needs a one-dimensional statistic")
    if not r < s < t:
        raise SegmentIndexError(f"need r < s < t, got ({r}, {s}, {t})")
    b = _single(store, s, (r,), t)
    x_best, best = _exact_1d(model, b)
    dual_value = store.q(t) + beta + _margin(b, x_best[:, None], best)[0]
    return bool(dual_value > store.q(t) + beta + slack)


# ------------------- Multiple constraints ------------------- #

def dual_multi(model: ModelFamily, store: StatStore, sel: ConstraintSelection, mu: Sequence[float], beta: float) -> float:
    """(t−s)[−l(μ)D*(m(μ)) + Σ μ_r ψ_rs Q̄_rs] + Q_s + β"""
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size != len(sel.R):
        raise DomainError(f"expected {len(sel.R)} multipliers, got {mu.size}")
    if np.any(mu < 0):
        raise DomainError("multipliers must be nonnegative")
    psi = sel.psi
    level = 1.0 - float(np.sum(mu * psi))
    if level <= 0:
        raise DomainError("l(μ) must stay positive")

    sig = store.mean_stat(sel.s, sel.t)
    sig_r = np.array([store.mean_stat(r, sel.s) for r in sel.R]).reshape(len(sel.R), -1)
    m = (sig - np.sum((mu * psi)[:, None] * sig_r, axis=0)) / level
    if not in_mean_domain(model, m, closed=True):
        raise DomainError("m(μ) outside the mean domain")

    value = float(dstar_values(model, m))
    if np.isposinf(value):
        return -np.inf
    qbar = np.array([store.q_bar(r, sel.s) for r in sel.R])
    return (sel.t - sel.s) * (-level * value + float(np.sum(mu * psi * qbar))) + store.q(sel.s) + beta


def decision_multi(model: ModelFamily, store: StatStore, sel: ConstraintSelection, x: Sequence[float]) -> float:
    """𝔻(x) = −D*(σ(x)) − φ(x)"""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != len(sel.R):
        raise DomainError(f"expected {len(sel.R)} coordinates, got {x.shape[1]}")
    b = _single(store, sel.s, sel.R, sel.t)
    sigma = _sigma(b, x)
    if np.any(x < 0) or 1.0 + np.sum(b.psi * x) <= 0 or not in_mean_domain(model, sigma, closed=True)[0]:
        raise DomainError("x outside the feasible set of the decision function")
    return float(_decision_values(model, b, x, sigma)[0])


def decision_gradient(model: ModelFamily, b: _Batch, x: np.ndarray) -> np.ndarray:
    """∇𝔻(x) = −ΔS̄ᵀ(∇A)⁻¹(σ(x)) − ΔQ̄, per row"""
    sigma = _sigma(b, x)
    kernel = model.kernel
    with np.errstate(all="ignore"):
        if model.is_meanvar:
            theta = kernel.mean_map_inv(_pairs(model, sigma)).reshape(sigma.shape)
        else:
            theta = kernel.mean_map_inv(sigma)
    return -np.einsum("kqp,kp->kq", b.dS, theta) - b.dQ


def decision_multi_critical(model: ModelFamily, store: StatStore, sel: ConstraintSelection) -> Optional[np.ndarray]:
    """
    Unconstrained critical point x* = M⁻¹(∇A(−(Mᵀ)⁻¹ΔQ̄) − S̄_st), M = [ΔS̄_rst]_r.
    Returns None when x* leaves the nonnegative orthant or the mean domain.
    """
    if len(sel.R) != model.total_dim:
        raise ConfigError(f"critical point needs exactly {model.total_dim} constraints")
    b = _single(store, sel.s, sel.R, sel.t)
    matrix = b.dS[0].T  # (p, q), columns are ΔS̄_rst
    if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > MAX_CONDITION:
        raise SingularSystem("ΔS̄ matrix is singular or ill-conditioned")

    theta = -np.linalg.solve(matrix.T, b.dQ[0])
    if not natural_domain_contains(model, theta):
        return None
    kernel = model.kernel
    with np.errstate(all="ignore"):
        if model.is_meanvar:
            mean = kernel.mean_map(_pairs(model, theta)).reshape(theta.shape)
        else:
            mean = kernel.mean_map(theta)
    if not np.all(np.isfinite(mean)):
        return None
    x_star = np.linalg.solve(matrix, mean - b.sig[0])
    if np.any(x_star < 0) or not _x_feasible(model, b, x_star[None, :])[0]:
        return None
    return x_star


# ------------------- Closed forms ------------------- #

def _gauss_closed(b: _Batch, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Dual maximum for gauss, plus the rows whose radius² is negative"""
    sq_sig = np.sum(b.sig ** 2, axis=1)
    radius_sq = np.sum(b.sig_r[:, 0, :] ** 2, axis=1) + 2.0 * b.qbar_rs[:, 0]
    gap = np.sqrt(np.sum(b.dS[:, 0, :] ** 2, axis=1))
    pelt_value = -0.5 * b.length * sq_sig + b.q_s + beta
    radius = np.sqrt(np.maximum(radius_sq, 0.0))
    bonus = np.where((radius_sq >= 0) & (gap < radius), 0.5 * b.length * (gap - radius) ** 2, 0.0)
    return pelt_value + bonus, radius_sq < 0


def _numeric_dual_max_1c(model: ModelFamily, store: StatStore, r: int, s: int, t: int, beta: float) -> float:
    mu_max = mu_max_1c(model, store, r, s, t)
    at_zero = dual_1c(model, store, r, s, t, 0.0, beta)
    if mu_max <= 0:
        return at_zero
    upper = min(mu_max, 1.0) * (1.0 - 1e-9)
    result = minimize_scalar(lambda mu: -dual_1c(model, store, r, s, t, mu, beta),
                             bounds=(0.0, upper), method="bounded", options={"xatol": 1e-12})
    return max(at_zero, -float(result.fun))


def gauss_closed_max(store: StatStore, r: int, s: int, t: int, beta: float) -> float:
    """Exact maximum of the one-constraint Gaussian dual"""
    model = store.model
    if model.name != ModelId.GAUSS:
        raise ConfigError("gauss_closed_max needs the gauss model")
    if not r < s < t:
        raise SegmentIndexError(f"need r < s < t, got ({r}, {s}, {t})")
    b = _single(store, s, (r,), t, need_t=False)
    value, negative = _gauss_closed(b, beta)
    if negative[0]:
        log_warning("Gaussian dual radius² negative, maximising numerically",
                    {"r": r, "s": s, "t": t, "radius_sq": float(np.sum(b.sig_r[0, 0] ** 2) + 2 * b.qbar_rs[0, 0])})
        return _numeric_dual_max_1c(model, store, r, s, t, beta)
    return float(value[0])


def _meanvar_1c(b: _Batch, col: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form argmax/max of the one-constraint mean-variance decision function"""
    u1, v1 = b.sig[:, 0], b.sig[:, 1]
    du, dv = b.dS[:, col, 0], b.dS[:, col, 1]
    dQ = b.dQ[:, col]
    a = du ** 2
    lin = dv - 2.0 * u1 * du
    c = v1 - u1 ** 2

    with np.errstate(all="ignore"):
        slope0 = 0.5 * lin / c - dQ
        tiny = a <= 1e-14 * np.maximum(1.0, np.maximum(np.abs(lin), c))
        x0 = lin / (2.0 * a)
        x1 = x0 ** 2 + c / a
        half_inv = 1.0 / (2.0 * dQ)
        root = np.where(
            dQ == 0, x0,
            x0 - x1 / (half_inv + np.sign(half_inv) * np.sqrt(x1 + half_inv ** 2))
        )
        # spread linear in x: unbounded ascent unless the log term bends it back
        unbounded = ((lin > 0) & (dQ <= 0)) | (lin == 0)
        flat_root = np.where(unbounded, np.inf, half_inv - c / lin)
        x_star = np.where(slope0 <= 0, 0.0, np.where(tiny, flat_root, root))
        x_star = np.maximum(x_star, 0.0)

        spread = c + lin * x_star - a * x_star ** 2
        value = 0.5 * (1.0 + np.log(spread)) - (b.qbar_st + x_star * dQ)
    value = np.where(np.isinf(x_star), np.inf, value)
    value = np.where(c <= DOMAIN_EPS, -np.inf, _nan_to(value, -np.inf))
    return x_star, value


def _meanvar_2c(model: ModelFamily, b: _Batch) -> Tuple[np.ndarray, np.ndarray]:
    """Interior critical point with both constraints active; -inf where it does not exist"""
    du1, dv1 = b.dS[:, 0, 0], b.dS[:, 0, 1]
    du2, dv2 = b.dS[:, 1, 0], b.dS[:, 1, 1]
    dq1, dq2 = b.dQ[:, 0], b.dQ[:, 1]
    det = du1 * dv2 - du2 * dv1
    scale = np.sqrt((du1 ** 2 + dv1 ** 2) * (du2 ** 2 + dv2 ** 2))
    ok = np.abs(det) > 1e-12 * np.maximum(scale, 1e-300)

    with np.errstate(all="ignore"):
        inv = 1.0 / np.where(ok, det, 1.0)
        th1 = -(dv2 * dq1 - dv1 * dq2) * inv
        th2 = -(du1 * dq2 - du2 * dq1) * inv
        ok &= th2 < 0
        mean_u = -th1 / (2.0 * th2)
        mean_v = th1 ** 2 / (4.0 * th2 ** 2) - 0.5 / th2
        eu = mean_u - b.sig[:, 0]
        ev = mean_v - b.sig[:, 1]
        x1 = (dv2 * eu - du2 * ev) * inv
        x2 = (du1 * ev - dv1 * eu) * inv
        ok &= (x1 > 0) & (x2 > 0) & np.isfinite(x1) & np.isfinite(x2)
        value = -th1 ** 2 / (4.0 * th2) + 0.5 * np.log(-0.5 / th2) - th1 * b.sig[:, 0] - th2 * b.sig[:, 1] - b.qbar_st
    x = np.stack([np.where(ok, x1, 0.0), np.where(ok, x2, 0.0)], axis=1)
    return x, np.where(ok, value, -np.inf)


def _meanvar_best_margin(model: ModelFamily, b: _Batch) -> np.ndarray:
    """Largest dual margin over the closed-form candidates (one or two constraints)"""
    q = b.r.shape[1]
    margins = []
    for col in range(q):
        x_col, value = _meanvar_1c(b, col)
        x = np.zeros((len(b.s), q))
        x[:, col] = x_col
        margins.append(_margin(b, x, value))
    if q == 2:
        x, value = _meanvar_2c(model, b)
        margins.append(_margin(b, x, value))
    return np.max(np.stack(margins), axis=0)


def meanvar_x_star(store: StatStore, r: int, s: int, t: int) -> float:
    """Maximiser over [0, x_max) of the one-constraint mean-variance decision function"""
    if not store.model.is_meanvar:
        raise ConfigError("meanvar closed forms need the meanvar model")
    b = _single(store, s, (r,), t)
    if b.sig[0, 1] - b.sig[0, 0] ** 2 <= DOMAIN_EPS:
        raise DegenerateSegment(f"segment ({s}, {t}] has zero variance")
    return float(_meanvar_1c(b)[0][0])


def meanvar_closed(store: StatStore, r: int, s: int, t: int, beta: float,
                   two_constraints: bool = False, r2: Optional[int] = None) -> float:
    """
    Maximal dual value for the mean-variance model from closed forms.
    With two constraints this is the best of the two edges and the interior critical point.
    """
    model = store.model
    if not (model.is_meanvar and model.components == 1):
        raise ConfigError("meanvar closed forms need the univariate meanvar model")
    R = (r, r2) if two_constraints else (r,)
    if two_constraints and (r2 is None or r2 == r):
        raise SegmentIndexError("two-constraint test needs a second, distinct index")
    if any(not idx < s for idx in R) or not s < t:
        raise SegmentIndexError("constraint indices must lie below s < t")

    b = _single(store, s, R, t)
    if b.sig[0, 1] - b.sig[0, 0] ** 2 <= DOMAIN_EPS:
        raise DegenerateSegment(f"segment ({s}, {t}] has zero variance")
    return store.q(t) + beta + float(_meanvar_best_margin(model, b)[0])


# ------------------- Iterative and random evaluations ------------------- #

def _quasi_newton(model: ModelFamily, b: _Batch, max_iters: int, tol: float) -> Tuple[np.ndarray, float]:
    """Projected gradient ascent on 𝔻 from x = 0 with Barzilai–Borwein steps and halving"""
    q = b.r.shape[1]
    x = np.zeros((1, q))
    f = float(_decision_values(model, b, x)[0])
    if not np.isfinite(f):
        return x[0], f
    g = decision_gradient(model, b, x)[0]
    step = 1.0 / max(np.linalg.norm(g), 1.0)
    best_x, best = x[0].copy(), f

    for _ in range(max_iters):
        projected = np.where((x[0] <= 0) & (g < 0), 0.0, g)
        if not np.all(np.isfinite(projected)) or np.linalg.norm(projected) < tol:
            break

        alpha = step
        accepted = False
        for _ in range(60):
            trial = np.maximum(x[0] + alpha * g, 0.0)[None, :]
            if _x_feasible(model, b, trial)[0]:
                f_trial = float(_decision_values(model, b, trial)[0])
                if f_trial >= f:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break

        g_trial = decision_gradient(model, b, trial)[0]
        s_vec = trial[0] - x[0]
        y_vec = g_trial - g
        curvature = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / -curvature if curvature < 0 else 2.0 * alpha

        x, f, g = trial, f_trial, g_trial
        if f > best:
            best_x, best = x[0].copy(), f
    return best_x, best


def quasi_newton_max(model: ModelFamily, store: StatStore, sel: ConstraintSelection, plan: DualEvalPlan) -> float:
    """Best 𝔻 value found by projected ascent; every iterate is a genuine evaluation"""
    if not sel.R:
        raise SegmentIndexError("quasi-Newton needs at least one constraint")
    b = _single(store, sel.s, sel.R, sel.t)
    return _quasi_newton(model, b, plan.qn_max_iters, plan.qn_tol)[1]


def _random_points(model: ModelFamily, b: _Batch, factor: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform μ₀ on [0, factor·μ_max] along a random direction of the orthant"""
    k, q = b.r.shape
    weights = rng.dirichlet(np.ones(q), size=k) if q > 1 else np.ones((k, 1))
    direction = np.einsum("kq,kqp->kp", weights, b.dS)
    ray = _ray_x_max(model, b.sig, direction)
    lean = np.sum(b.psi * weights, axis=1)
    with np.errstate(divide="ignore"):
        ray = np.where(lean < 0, np.minimum(ray, 1.0 / -lean), ray)
    mu_max = np.where(np.isinf(ray), 1.0, ray / (1.0 + ray))
    mu0 = rng.uniform(0.0, 1.0, size=k) * factor * mu_max
    lam = mu0 / (1.0 - mu0)
    return lam[:, None] * weights


def random_uniform_value(model: ModelFamily, store: StatStore, sel: ConstraintSelection, plan: DualEvalPlan,
                         rng: np.random.Generator) -> float:
    """𝔻 at one random feasible point"""
    b = _single(store, sel.s, sel.R, sel.t)
    x = _random_points(model, b, plan.random_factor, rng)
    return float(_decision_values(model, b, x)[0])


def _quadratic_random_margin(model: ModelFamily, store: StatStore, b: _Batch, beta: float, factor: float,
                             rng: np.random.Generator) -> np.ndarray:
    """Random multiplier for the simple-regression cost, unnormalised μ"""
    t = b.t
    r = b.r[:, 0]
    sums_s = store.cumsum[t] - store.cumsum[b.s]
    sums_r = store.cumsum[t] - store.cumsum[r]
    fs = regression_coeff_arrays(sums_s, t - b.s, b.q_s + beta)
    fr = regression_coeff_arrays(sums_r, t - r, store.q_values[r] + beta)
    with np.errstate(all="ignore"):
        mu_max = quadratic_mu_max_arrays(fs, fr)
    # two points fit a line exactly; those rows keep the PELT test only
    usable = quadratic_convex(fs) & (t - b.s >= QUADRATIC_MIN_POINTS)
    u = rng.uniform(0.0, 1.0, size=len(r)) * factor
    mu = np.where(np.isinf(mu_max), u / (1.0 - u), u * mu_max)
    value = quadratic_dual_arrays(fs, fr, mu)
    return np.where(usable, value - (b.q_t + beta), -np.inf)


# ------------------- Step-level pruning ------------------- #

def _constraint_rows(candidates: np.ndarray, q: int, random_r: bool, rng: Optional[np.random.Generator]):
    """Positions that have q indices below them, and those indices"""
    k = len(candidates)
    rows = np.arange(k)
    if random_r and rng is not None and q == 1:
        eligible = rows[rows >= 1]
        picks = rng.integers(0, eligible)
        return eligible, candidates[picks][:, None]
    eligible = rows[rows >= q]
    cols = [candidates[eligible - (q - j)] for j in range(q)]
    return eligible, np.stack(cols, axis=1) if eligible.size else np.empty((0, q), dtype=int)


def _strategy_margin(model: ModelFamily, store: StatStore, plan: DualEvalPlan, b: _Batch, beta: float,
                     rng: np.random.Generator) -> np.ndarray:
    strategy = plan.strategy
    if strategy == Strategy.EXACT_1D:
        x_best, best = _exact_1d(model, b)
        return _margin(b, x_best[:, None], best)
    if strategy == Strategy.GAUSS_CLOSED:
        value, negative = _gauss_closed(b, beta)
        for i in np.flatnonzero(negative):
            log_warning("Gaussian dual radius² negative, maximising numerically",
                        {"r": int(b.r[i, 0]), "s": int(b.s[i]), "t": b.t})
            value[i] = _numeric_dual_max_1c(model, store, int(b.r[i, 0]), int(b.s[i]), b.t, beta)
        return value - (b.q_t + beta)
    if strategy == Strategy.MEANVAR_CLOSED:
        return _meanvar_best_margin(model, b)
    if strategy == Strategy.RANDOM_UNIFORM:
        if model.is_quadratic:
            return _quadratic_random_margin(model, store, b, beta, plan.random_factor, rng)
        x = _random_points(model, b, plan.random_factor, rng)
        return _margin(b, x, _decision_values(model, b, x))
    if strategy == Strategy.QUASI_NEWTON:
        out = np.empty(len(b.s))
        for i in range(len(b.s)):
            row = b.take(np.array([i]))
            x_best, best = _quasi_newton(model, row, plan.qn_max_iters, plan.qn_tol)
            out[i] = _margin(row, x_best[None, :], np.array([best]))[0]
        return out
    return np.full(len(b.s), -np.inf)


def prune_mask(model: ModelFamily, store: StatStore, plan: DualEvalPlan, candidates: np.ndarray, t: int,
               beta: float, rng: Optional[np.random.Generator] = None, pelt_only: bool = False,
               means: Optional[np.ndarray] = None, costs: Optional[np.ndarray] = None) -> np.ndarray:
    """Which live candidates can be discarded after Q_t is known; means and costs of (s, t] may be passed in"""
    candidates = np.asarray(candidates, dtype=int)
    k = candidates.size
    q_t = float(store.q_values[t])
    mask = np.zeros(k, dtype=bool)
    if k == 0 or not np.isfinite(q_t):
        return mask

    q_s = store.q_values[candidates]
    if means is None:
        means = store.mean_stats(candidates, t)
    if costs is None:
        costs = segment_costs(model, means, t - candidates)
    degenerate = ~np.isfinite(costs)
    with np.errstate(invalid="ignore"):
        mask = q_s + costs + beta > q_t + beta + plan.prune_slack
    open_rows = ~mask & ~degenerate

    if not pelt_only and plan.strategy != Strategy.AT_ZERO and np.any(open_rows):
        rng = rng if rng is not None else np.random.default_rng(plan.rng_seed)
        eligible, r = _constraint_rows(candidates, plan.constraints, plan.random_r, rng)
        open_eligible = open_rows[eligible]
        rows = eligible[open_eligible]
        if rows.size:
            mask[rows] |= _dual_prune(model, store, plan, candidates[rows], r[open_eligible], t, beta, rng, means[rows])
        if plan.constraints == 2 and k >= 2 and open_rows[1]:
            # the second candidate has a single index below it
            mask[1] |= _dual_prune(model, store, plan, candidates[[1]], candidates[[0]][:, None], t, beta, rng,
                                   means[[1]])[0]

    mask &= ~degenerate
    mask |= ~np.isfinite(q_s)
    return mask


def _dual_prune(model: ModelFamily, store: StatStore, plan: DualEvalPlan, s: np.ndarray, r: np.ndarray, t: int,
                beta: float, rng: np.random.Generator, means: Optional[np.ndarray] = None) -> np.ndarray:
    usable = np.all(np.isfinite(store.q_values[r]), axis=1) & np.isfinite(store.q_values[s])
    out = np.zeros(s.size, dtype=bool)
    if not np.any(usable):
        return out
    b = _build_batch(store, s[usable], r[usable], t, None if means is None else means[usable])
    margin = _strategy_margin(model, store, plan, b, beta, rng)
    out[usable] = _nan_to(margin, -np.inf) > plan.prune_slack
    return out
