"""
Synthetic series for benchmarks and adversarial inputs.

simulate() alternates two parameter values every segment_len points; the
worst-case generators build increasing series whose inner minima all coincide
at time n, so no pruning rule can discard an index.
"""
import io
import logging
import math
import re
from typing import Dict, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from numpy.random import PCG64, Generator
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from errors import ConfigError, DomainError, InfeasiblePenalty, InputError, SolveError
from exp_family import ModelFamily, ModelId, dstar_values, get_model, in_mean_domain, segment_costs
from segmenter import op_reference
from stat_store import StatStore

logger = logging.getLogger("Dust.Simgen")

# two alternating parameter values per model
DEFAULT_PARAMS: Dict[ModelId, Tuple[float, float]] = {
    ModelId.GAUSS: (0.0, 1.0),                  # mean, unit variance
    ModelId.POISSON: (3.0, 4.0),                # rate
    ModelId.EXPONENTIAL: (1.0, 0.5),            # rate
    ModelId.GEOMETRIC: (0.5, 0.7),              # success probability
    ModelId.BERNOULLI: (0.5, 0.7),
    ModelId.BINOMIAL: (0.5, 0.7),
    ModelId.NEGBIN: (0.5, 0.7),
    ModelId.VARIANCE: (1.0, 2.0),               # standard deviation, zero mean
    ModelId.MEANVAR: (1.0, 2.0),                # standard deviation, means alternate 0 / 1
    ModelId.QUADRATIC_REGRESSION: (1.0, -1.0),  # slope, x ~ N(0, 1)
}

_MEANVAR_MEANS = (0.0, 1.0)
_PROBABILITY_MODELS = (ModelId.GEOMETRIC, ModelId.BERNOULLI, ModelId.BINOMIAL, ModelId.NEGBIN)


class SimSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: ModelId
    n: int = Field(gt=0)
    segment_len: int = Field(gt=0)
    param_pair: Optional[Tuple[float, float]] = None
    dim: int = Field(1, gt=0)
    seed: int = 0
    trials: int = Field(10, gt=0)

    @property
    def params(self) -> Tuple[float, float]:
        return self.param_pair if self.param_pair is not None else DEFAULT_PARAMS[self.model]


def _check_params(spec: SimSpec):
    model = spec.model
    for p in spec.params:
        if model in _PROBABILITY_MODELS and not 0 < p < 1:
            raise ConfigError(f"{model.value} parameter {p} must lie in (0, 1)")
        if model in (ModelId.POISSON, ModelId.EXPONENTIAL, ModelId.VARIANCE, ModelId.MEANVAR) and not p > 0:
            raise ConfigError(f"{model.value} parameter {p} must be positive")
        if not math.isfinite(p):
            raise ConfigError(f"parameter {p} is not finite")
    if model == ModelId.QUADRATIC_REGRESSION and spec.dim != 1:
        raise ConfigError("quadratic-regression simulates a single (x, y) pair")


def _draw(spec: SimSpec, param: float, size: int, rng: Generator) -> np.ndarray:
    """One segment of one copy; discrete models through the inverse CDF"""
    model = spec.model
    if model == ModelId.GAUSS:
        return rng.normal(param, 1.0, size)
    if model == ModelId.EXPONENTIAL:
        return rng.exponential(1.0 / param, size)
    if model == ModelId.VARIANCE:
        return rng.normal(0.0, param, size)

    u = np.maximum(rng.random(size), np.finfo(float).tiny)
    if model == ModelId.POISSON:
        return stats.poisson.ppf(u, param)
    if model == ModelId.GEOMETRIC:
        return stats.geom.ppf(u, param)
    if model == ModelId.BERNOULLI:
        return stats.bernoulli.ppf(u, param)
    if model == ModelId.BINOMIAL:
        return stats.binom.ppf(u, spec.trials, param)
    if model == ModelId.NEGBIN:
        return stats.nbinom.ppf(u, spec.trials, param)
    raise ConfigError(f"no sampler for {model.value}")


def simulate(spec: SimSpec) -> np.ndarray:
    """Series of shape (n, dim); quadratic-regression returns the columns (x, y)"""
    _check_params(spec)
    rng = Generator(PCG64(spec.seed))
    params = spec.params
    bounds = list(range(0, spec.n, spec.segment_len)) + [spec.n]

    if spec.model == ModelId.QUADRATIC_REGRESSION:
        x = rng.normal(0.0, 1.0, spec.n)
        noise = rng.normal(0.0, 1.0, spec.n)
        slopes = np.concatenate([np.full(b - a, params[j % 2]) for j, (a, b) in enumerate(zip(bounds, bounds[1:]))])
        return np.column_stack([x, slopes * x + noise])

    out = np.empty((spec.n, spec.dim))
    for col in range(spec.dim):
        for j, (a, b) in enumerate(zip(bounds, bounds[1:])):
            param = params[j % 2]
            if spec.model == ModelId.MEANVAR:
                out[a:b, col] = rng.normal(_MEANVAR_MEANS[j % 2], param, b - a)
            else:
                out[a:b, col] = _draw(spec, param, b - a, rng)
    return out


# ------------------- Worst cases ------------------- #

def worstcase_gauss(n: int, beta: float) -> np.ndarray:
    """Strictly increasing Gaussian series on which no index can be pruned"""
    if n < 2 or not beta > 0:
        raise ConfigError("worst case needs n >= 2 and a positive penalty")
    t = np.arange(1, n + 1, dtype=float)
    return np.sqrt(2.0 * beta / n) * (np.sqrt(n - 1.0) - np.sqrt(t * (n - t)) + np.sqrt((t - 1.0) * (n - t + 1.0)))


def _bisect(g, target: float, left: float, right: float, iterations: int) -> float:
    """g decreasing on [left, right] with g(left) >= target > g(right)"""
    for _ in range(iterations):
        mid = 0.5 * (left + right)
        if mid <= left or mid >= right:
            break
        if g(mid) >= target:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right)


def worstcase_expfam(model: ModelFamily, n: int, Y: float, beta: float, iterations: int = 200) -> np.ndarray:
    """
    Increasing series with overall mean statistic Y whose inner minima coincide at n.
    Y is on the statistic scale (fractions for binomial/negbin, y² for variance).
    """
    if not model.is_univariate:
        raise ConfigError("worst-case construction needs a one-dimensional statistic")
    if n < 2 or not beta > 0:
        raise ConfigError("worst case needs n >= 2 and a positive penalty")
    Y = float(Y)
    if not in_mean_domain(model, np.array([Y])):
        raise DomainError(f"Y = {Y} must lie inside the mean domain of {model.name.value}")

    kernel = model.kernel

    def dstar(x: float) -> float:
        return float(dstar_values(model, np.array([x])))

    target = beta / n + dstar(Y)

    means = np.empty(n + 1)
    means[0] = 0.0
    means[n] = Y
    for t in range(1, n):
        def g(x, t=t):
            rest = (n * Y - t * x) / (n - t)
            return (t * dstar(x) + (n - t) * dstar(rest)) / n

        left = max(kernel.lo, (n * Y - (n - t) * kernel.hi) / t)
        if np.isinf(left):
            step = 1.0
            left = Y - step
            while g(left) < target and step < 1e300:
                step *= 2.0
                left = Y - step
            if g(left) < target:
                raise SolveError("could not bracket the left root", {"t": t, "Y": Y, "beta": beta})
        elif g(left) < target:
            raise InfeasiblePenalty(
                f"penalty {beta} too large for a {model.name.value} worst case with n={n}, Y={Y}"
            )
        means[t] = _bisect(g, target, left, Y, iterations)

    t = np.arange(1, n + 1)
    values = t * means[1:] - (t - 1) * means[:-1]
    if model.name == ModelId.VARIANCE:
        return np.sqrt(np.maximum(values, 0.0))
    if model.name in (ModelId.BINOMIAL, ModelId.NEGBIN):
        return values * model.trials
    return values


def worstcase_poisson_rounded(n: int, Y: float, beta: float) -> np.ndarray:
    """Integer (ceiling) version of the Poisson worst case; some indices become prunable"""
    return np.ceil(worstcase_expfam(get_model(ModelId.POISSON), n, Y, beta))


def inner_minima(model: ModelFamily, data, beta: float) -> np.ndarray:
    """m_n^s = Q_s + β + min-cost(s, n) for s = 0..n−1, Q from optimal partitioning"""
    q_values = op_reference(model, data, beta).q_values
    store = StatStore.from_series(model, data)
    n = store.n
    s = np.arange(n)
    means = store.mean_stats(s, np.full(n, n))
    return q_values[:n] + beta + segment_costs(model, means, n - s)


# ------------------- CSV ------------------- #

def write_csv(target: Union[str, TextIO], data, header: bool = False):
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    names = [f"c{i}" for i in range(data.shape[1])]
    pd.DataFrame(data, columns=names).to_csv(target, header=header, index=False)


def read_csv(source: Union[str, TextIO], header: bool = False) -> np.ndarray:
    """Numeric series of shape (n, d); blank lines skipped, NaN and inf rejected"""
    try:
        frame = pd.read_csv(source, header=0 if header else None, dtype=str, keep_default_na=False,
                            skip_blank_lines=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise InputError("input is empty", line=1) from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise InputError(f"malformed CSV: {e}", line=int(match.group(1)) if match else None) from None
    except FileNotFoundError as e:
        raise InputError(f"cannot read input: {e}") from None

    offset = 2 if header else 1
    cells = frame.fillna("").apply(lambda col: col.str.strip())
    blank = (cells == "").all(axis=1)
    rows = []
    for pos, (_, row) in enumerate(cells.iterrows()):
        if blank.iloc[pos]:
            continue
        values = pd.to_numeric(row, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            col = int(np.argmax(bad))
            raise InputError(f"value '{row.iloc[col]}' is not a finite number", line=pos + offset, column=col + 1)
        rows.append(values)

    if not rows:
        raise InputError("input has no data rows", line=offset)
    return np.vstack(rows)


def read_csv_text(text: str, header: bool = False) -> np.ndarray:
    return read_csv(io.StringIO(text), header=header)
