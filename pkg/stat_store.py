"""
Prefix sums of sufficient statistics and the global-cost ledger Q_0..Q_n.
"""
import logging
from typing import Tuple

import numpy as np

from errors import EmptySegment, SegmentIndexError, StateError
from exp_family import ModelFamily, log_partition, prepare_series, sufficient_stats

logger = logging.getLogger("Dust.StatStore")


def _prefix_sums(stats: np.ndarray, compensated: bool) -> np.ndarray:
    n, d = stats.shape
    out = np.zeros((n + 1, d))
    if not compensated:
        np.cumsum(stats, axis=0, out=out[1:])
        return out

    # Neumaier summation, one row at a time
    total = np.zeros(d)
    comp = np.zeros(d)
    for k in range(n):
        row = stats[k]
        tmp = total + row
        comp += np.where(np.abs(total) >= np.abs(row), (total - tmp) + row, (row - tmp) + total)
        total = tmp
        out[k + 1] = total + comp
    return out


class StatStore:
    """
    O(1) segment statistics for one series.
    Q values are filled in order by the segmenter; reading an unset entry is an error.
    """

    def __init__(self, model: ModelFamily, stats: np.ndarray, q0: float = 0.0, compensated: bool = False):
        stats = np.asarray(stats, dtype=float)
        if stats.ndim == 1:
            stats = stats[:, None]
        self.model = model
        self.n, self.d = stats.shape
        self.compensated = compensated
        self.cumsum = _prefix_sums(stats, compensated)
        self.q_values = np.full(self.n + 1, np.nan)
        self._known = np.zeros(self.n + 1, dtype=bool)
        self.set_q(0, q0)

    @classmethod
    def from_series(cls, model: ModelFamily, data, q0: float = 0.0, compensated: bool = False,
                    standardise: bool = False) -> "StatStore":
        prepared = prepare_series(model, data, standardise=standardise)
        return cls(model, sufficient_stats(model, prepared), q0=q0, compensated=compensated)

    # ------------------- Global costs ------------------- #

    def set_q(self, t: int, value: float):
        self._check_index(t)
        self.q_values[t] = value
        self._known[t] = True

    def q(self, t: int) -> float:
        self._check_index(t)
        if not self._known[t]:
            raise StateError(f"Q_{t} has not been computed yet")
        return float(self.q_values[t])

    def is_known(self, t: int) -> bool:
        return bool(self._known[t])

    def q_bar(self, r: int, s: int) -> float:
        """(Q_s − Q_r)/(s − r), symmetric in its arguments"""
        if r == s:
            raise EmptySegment("Q̄ needs two distinct indices")
        return (self.q(s) - self.q(r)) / (s - r)

    # ------------------- Segment statistics ------------------- #

    def _check_index(self, *indices: int):
        for i in indices:
            if not 0 <= i <= self.n:
                raise SegmentIndexError(f"index {i} outside [0, {self.n}]")

    def segment_sum(self, a: int, b: int) -> np.ndarray:
        self._check_index(a, b)
        lo, hi = min(a, b), max(a, b)
        return self.cumsum[hi] - self.cumsum[lo]

    def mean_stat(self, a: int, b: int) -> np.ndarray:
        """S̄ over the segment between a and b, same value for (a, b) and (b, a)"""
        self._check_index(a, b)
        if a == b:
            raise EmptySegment(f"segment ({a}, {b}] is empty")
        return self.segment_sum(a, b) / abs(b - a)

    def mean_stats(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Batched S̄, shape (k, d); callers guarantee a != b elementwise"""
        a = np.asarray(a)
        b = np.asarray(b)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        return (self.cumsum[hi] - self.cumsum[lo]) / (hi - lo)[..., None]

    def _check_triplet(self, r: int, s: int, t: int):
        self._check_index(r, s, t)
        if r == s:
            raise SegmentIndexError("constraint index r must differ from s")
        if not s < t:
            raise SegmentIndexError(f"need s < t, got s={s}, t={t}")
        if r >= t:
            raise SegmentIndexError(f"constraint index r={r} must be below t={t}")

    def delta_mean(self, r: int, s: int, t: int) -> np.ndarray:
        """ψ_rs(S̄_st − S̄_rs) with ψ_rs = 1 if r < s else −1"""
        self._check_triplet(r, s, t)
        psi = 1.0 if r < s else -1.0
        return psi * (self.mean_stat(s, t) - self.mean_stat(r, s))

    def delta_q(self, r: int, s: int, t: int) -> float:
        self._check_triplet(r, s, t)
        psi = 1.0 if r < s else -1.0
        return psi * (self.q_bar(s, t) - self.q_bar(r, s))

    def segment_cost(self, a: int, b: int, theta) -> float:
        """c(y_ab; θ) = (b − a)A(θ) − θ·S_ab for a < b"""
        if not a < b:
            raise SegmentIndexError(f"need a < b, got a={a}, b={b}")
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return (b - a) * log_partition(self.model, theta) - float(theta @ self.segment_sum(a, b))


def _var(values: np.ndarray, a: int, b: int) -> Tuple[float, float]:
    seg = values[a:b]
    return float(np.var(seg)), float(np.mean(seg))


def variance_identity_residuals(values, i: int, t: int) -> Tuple[float, float, float, float]:
    """
    tV(y_0t) − (t−i)V(y_it) − iV(y_0i) minus each of its four closed forms.
    All four residuals vanish up to rounding.
    """
    values = np.asarray(values, dtype=float).ravel()
    if not 1 <= i < t <= values.size:
        raise SegmentIndexError(f"need 1 <= i < t <= {values.size}, got i={i}, t={t}")

    v_0t, m_0t = _var(values, 0, t)
    v_it, m_it = _var(values, i, t)
    v_0i, m_0i = _var(values, 0, i)
    lhs = t * v_0t - (t - i) * v_it - i * v_0i

    forms = (
        (t - i) * i / t * (m_it - m_0i) ** 2,
        t * i / (t - i) * (m_0t - m_0i) ** 2,
        t * (t - i) / i * (m_0t - m_it) ** 2,
        i * (m_0t - m_0i) ** 2 + (t - i) * (m_0t - m_it) ** 2,
    )
    return tuple(lhs - f for f in forms)
