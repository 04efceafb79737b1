"""
Optimal partitioning with pluggable pruning.

Q_t = min over live s of Q_s + c(y_st) + β; after Q_t is known the candidate set
is pruned (none, PELT, or dual-based) and t joins it.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import DustSettings, get_settings
from dual_engine import DualEvalPlan, Strategy, prune_mask
from errors import ConfigError, CorruptState, DegenerateSegment, SegmentIndexError
from exp_family import ModelFamily, segment_cost_min, segment_costs
from stat_store import StatStore

logger = logging.getLogger("Dust.Segmenter")


class PruningMode(str, Enum):
    NONE = "none"
    PELT = "pelt"
    DUST = "dust"


class CandidateSet:
    """Strictly increasing live indices with lazy removal"""

    def __init__(self, capacity: int, compact_dead_fraction: float = 0.5):
        self._buf = np.empty(max(capacity, 1), dtype=np.int64)
        self._alive = np.zeros(max(capacity, 1), dtype=bool)
        self._size = 0
        self._dead = 0
        self.compact_dead_fraction = compact_dead_fraction

    def __len__(self) -> int:
        return self._size - self._dead

    def push(self, index: int):
        if self._size and index <= self._buf[self._size - 1]:
            raise CorruptState(f"candidate {index} does not follow {self._buf[self._size - 1]}")
        if self._size == self._buf.size:
            self._buf = np.concatenate([self._buf, np.empty_like(self._buf)])
            self._alive = np.concatenate([self._alive, np.zeros_like(self._alive)])
        self._buf[self._size] = index
        self._alive[self._size] = True
        self._size += 1

    def live(self) -> np.ndarray:
        return self._buf[:self._size][self._alive[:self._size]]

    def discard(self, indices: np.ndarray):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0 or self._size == 0:
            return
        positions = np.minimum(np.searchsorted(self._buf[:self._size], indices), self._size - 1)
        hit = self._alive[positions] & (self._buf[positions] == indices)
        self._alive[positions[hit]] = False
        self._dead += int(hit.sum())
        if self._dead > self.compact_dead_fraction * self._size:
            self.compact()

    def compact(self):
        kept = self.live()
        self._size = kept.size
        self._buf[:self._size] = kept
        self._alive[:self._size] = True
        self._alive[self._size:] = False
        self._dead = 0


@dataclass
class SegmentationResult:
    changepoints: List[int]
    global_cost: float
    last_change: np.ndarray
    candidate_trace: np.ndarray
    wall_time: float
    q_values: np.ndarray
    n: int
    beta: float
    model: str
    pruning: PruningMode
    strategy: Optional[Strategy] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def remaining_candidates(self) -> int:
        """|Τ_n|: candidates alive when the last step starts"""
        return int(self.candidate_trace[self.n])

    def to_dict(self, include_trace: bool = False, include_timing: bool = True) -> Dict[str, Any]:
        data = {
            "model": self.model,
            "n": self.n,
            "beta": self.beta,
            "pruning": self.pruning.value,
            "strategy": self.strategy.value if self.strategy else None,
            "changepoints": list(self.changepoints),
            "global_cost": self.global_cost,
            "remaining_candidates": self.remaining_candidates,
        }
        if include_trace:
            data["candidate_trace"] = self.candidate_trace[1:].tolist()
        if include_timing:
            data["wall_time"] = self.wall_time
        return data


def backtrack(last_change: Sequence[int]) -> List[int]:
    """Right endpoints of the optimal segments; last_change[τ] is ŝ_τ, entry 0 unused"""
    last_change = np.asarray(last_change, dtype=np.int64)
    n = last_change.size - 1
    if n < 1:
        raise CorruptState("last_change must cover at least one point")

    points = []
    tau = n
    while tau > 0:
        prev = int(last_change[tau])
        if not 0 <= prev < tau:
            raise CorruptState(f"ŝ_{tau} = {prev} is not below {tau}")
        points.append(tau)
        tau = prev
    return points[::-1]


def pelt_test(model: ModelFamily, store: StatStore, s: int, t: int, beta: float, slack: float = 0.0) -> bool:
    """Q_s + min-cost(s, t) + β > Q_t + β"""
    if not s < t:
        raise SegmentIndexError(f"need s < t, got s={s}, t={t}")
    q_s = store.q(s)
    q_t = store.q(t)
    if not np.isfinite(q_s):
        return True
    try:
        cost = segment_cost_min(model, store.mean_stat(s, t), t - s)
    except DegenerateSegment:
        return False
    return bool(q_s + cost + beta > q_t + beta + slack)


def segmentation_cost(model: ModelFamily, store: StatStore, changepoints: Sequence[int], beta: float,
                      q0: float = 0.0) -> float:
    """Penalised cost of a given segmentation"""
    total = q0
    start = 0
    for end in changepoints:
        if not start < end <= store.n:
            raise SegmentIndexError(f"changepoints must increase within (0, {store.n}]")
        try:
            total += segment_cost_min(model, store.mean_stat(start, end), end - start) + beta
        except DegenerateSegment:
            return np.inf
        start = end
    if start != store.n:
        raise SegmentIndexError(f"changepoints must end at n = {store.n}")
    return float(total)


def _make_plan(settings: DustSettings, plan: Optional[DualEvalPlan], seed: Optional[int]) -> DualEvalPlan:
    if plan is None:
        dual = settings.dual
        plan = DualEvalPlan(
            strategy=Strategy.parse(dual.strategy), constraints=dual.constraints,
            qn_max_iters=dual.qn_max_iters, qn_tol=dual.qn_tol, random_r=dual.random_r,
            random_factor=dual.random_factor, prune_slack=settings.segmenter.prune_slack,
        )
    if seed is not None:
        plan = plan.model_copy(update={"rng_seed": seed})
    return plan


def run(model: ModelFamily, data, beta: float, pruning: PruningMode = PruningMode.DUST,
        plan: Optional[DualEvalPlan] = None, seed: Optional[int] = None, q0: Optional[float] = None,
        standardise: Optional[bool] = None, settings: Optional[DustSettings] = None) -> SegmentationResult:
    """Segment one series; the result is the exact optimum whatever the pruning"""
    settings = settings or get_settings()
    standardise = settings.segmenter.standardise if standardise is None else standardise
    pruning = PruningMode(pruning)
    if not beta > 0:
        raise ConfigError(f"penalty must be positive, got {beta}")
    plan = _make_plan(settings, plan, seed)
    if pruning == PruningMode.DUST:
        plan.check_model(model)

    q0 = settings.segmenter.q0 if q0 is None else q0
    store = StatStore.from_series(model, data, q0=q0, compensated=settings.segmenter.compensated_sum,
                                  standardise=standardise)
    n = store.n
    rng = np.random.default_rng(plan.rng_seed)

    candidates = CandidateSet(n + 1, settings.segmenter.compact_dead_fraction)
    candidates.push(0)
    last_change = np.zeros(n + 1, dtype=np.int64)
    trace = np.zeros(n + 1, dtype=np.int64)
    # a candidate beaten at t may still win at t + 1 when (t, t + 1] cannot be a segment
    delay = model.min_segment_length
    hold = deque()

    started = time.perf_counter()
    for t in range(1, n + 1):
        live = candidates.live()
        trace[t] = live.size

        means = store.mean_stats(live, t)
        costs = segment_costs(model, means, t - live)
        totals = store.q_values[live] + costs + beta
        best = int(np.argmin(totals))
        store.set_q(t, float(totals[best]))
        last_change[t] = live[best]

        if pruning != PruningMode.NONE:
            mask = prune_mask(model, store, plan, live, t, beta, rng, pelt_only=pruning == PruningMode.PELT,
                              means=means, costs=costs)
            hold.append(live[mask])
            if len(hold) == delay:
                candidates.discard(hold.popleft())
        candidates.push(t)
    elapsed = time.perf_counter() - started

    if not np.isfinite(store.q_values[n]):
        raise DegenerateSegment("every segmentation of the series has a degenerate segment")

    result = SegmentationResult(
        changepoints=backtrack(last_change),
        global_cost=float(store.q_values[n]),
        last_change=last_change,
        candidate_trace=trace,
        wall_time=elapsed,
        q_values=store.q_values.copy(),
        n=n,
        beta=float(beta),
        model=model.name.value,
        pruning=pruning,
        strategy=plan.strategy if pruning == PruningMode.DUST else None,
    )
    logger.debug(f"segmented n={n} in {elapsed:.3f}s, {result.remaining_candidates} candidates left")
    return result


def op_reference(model: ModelFamily, data, beta: float, q0: float = 0.0,
                 settings: Optional[DustSettings] = None) -> SegmentationResult:
    """Pruning-free optimal partitioning"""
    return run(model, data, beta, pruning=PruningMode.NONE, q0=q0, settings=settings)
