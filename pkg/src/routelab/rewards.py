"""Counterfactual marginal-cost rewards.

For a joint action u, the marginal cost matrix M holds at (i, j) the change
in agent i's travel time when AV j is removed from the run and everything
else (actions, seed) is held fixed:

    M[i, j] = travel_time_i(u without j) - travel_time_i(u)

Entries are <= 0 in deterministic mode (an absent vehicle delays nobody),
the diagonal is 0 by convention, and agents missing from either run
contribute 0. Columns always range over AVs; rows span every driver so one
matrix serves both externality scopes.

AV j's intrinsic reward squashes its column through tanh, entry by entry,
which bounds each term to (-1, 1) while preserving its sign:

    m_j = sum_{i != j, i in scope} tanh(M[i, j] / tanh_scale)

Scope "av-group" sums over AV rows only, "system" over all drivers. The
shaped reward is then ``alpha * extrinsic + beta * m_j`` with extrinsic the
negative travel time. A ``raw_sum`` switch replaces the tanh squash with the
plain column sum for sensitivity studies.

Building one matrix costs one counterfactual run per AV, so an LRU cache
keyed by (active agents with routes, seed) memoises every simulation; for a
deterministic 10-AV binary-route scenario a full sweep of the 1024 joint
actions never needs more than 1024 + 10 * 1024 distinct runs.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .network import (
    ConfigurationError,
    Scenario,
    TravelTimeVector,
    simulate,
    simulate_without,
)

SCOPES = ("av-group", "system", "none")
DEFAULT_CACHE_SIZE = 200_000


@dataclass(frozen=True)
class RewardConfig:
    """Shaped-reward definition: r = alpha * extrinsic + beta * intrinsic."""

    alpha: float = 1.0
    beta: float = 0.0
    scope: str = "av-group"
    tanh_scale: float = 1.0
    raw_sum: bool = False

    def __post_init__(self) -> None:
        if self.scope not in SCOPES:
            raise ConfigurationError(f"unknown scope {self.scope!r}; use one of {SCOPES}")
        if not self.tanh_scale > 0:
            raise ConfigurationError("tanh_scale must be > 0")
        for name in ("alpha", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")

    @property
    def needs_intrinsic(self) -> bool:
        return self.beta != 0.0 and self.scope != "none"


@dataclass
class MarginalCostMatrix:
    """Counterfactual travel-time differences for one (joint action, seed)."""

    row_ids: tuple[int, ...]  # all active agents, departure order
    col_ids: tuple[int, ...]  # AVs, departure order
    values: np.ndarray  # shape (len(row_ids), len(col_ids)), seconds
    action: dict[int, int]
    seed: int
    _row_index: dict[int, int] = field(init=False, repr=False)
    _col_index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._row_index = {i: r for r, i in enumerate(self.row_ids)}
        self._col_index = {j: c for c, j in enumerate(self.col_ids)}

    def entry(self, row_id: int, col_id: int) -> float:
        return float(self.values[self._row_index[row_id], self._col_index[col_id]])

    def column(self, col_id: int) -> dict[int, float]:
        c = self._col_index[col_id]
        return {i: float(self.values[r, c]) for i, r in self._row_index.items()}

    def to_csv(self, av_rows_only: bool = True) -> str:
        """Render as CSV with agent ids as row/column headers."""
        lines = ["id," + ",".join(str(j) for j in self.col_ids)]
        for r, i in enumerate(self.row_ids):
            if av_rows_only and i not in self._col_index:
                continue
            cells = ",".join(repr(float(v)) for v in self.values[r])
            lines.append(f"{i},{cells}")
        return "\n".join(lines) + "\n"


def compute_marginal_matrix(
    scenario: Scenario,
    action: Mapping[int, int],
    base_times: TravelTimeVector,
    seed: int,
    counterfactual_runner: Callable[[int], TravelTimeVector] | None = None,
) -> MarginalCostMatrix:
    """Run one counterfactual per AV and collect the column of differences.

    ``base_times`` must come from a run of the same (action, seed); the
    counterfactuals share that seed so noise draws cancel out exactly.
    """
    if base_times.seed != seed:
        raise ConfigurationError(
            f"base run used seed {base_times.seed}, counterfactuals requested seed {seed}"
        )
    runner = counterfactual_runner or (
        lambda removed: simulate_without(scenario, action, removed, seed)
    )
    row_ids = tuple(a.id for a in scenario.agents)
    col_ids = scenario.av_ids
    values = np.zeros((len(row_ids), len(col_ids)))
    for c, j in enumerate(col_ids):
        without = runner(j)
        for r, i in enumerate(row_ids):
            if i == j:
                continue  # removed agent has no entry in its own column
            if i not in base_times or i not in without:
                continue  # missing traveller convention: contribute 0
            values[r, c] = without[i] - base_times[i]
    return MarginalCostMatrix(
        row_ids=row_ids,
        col_ids=col_ids,
        values=values,
        action=dict(action),
        seed=seed,
    )


def intrinsic_reward(matrix: MarginalCostMatrix, av_id: int, config: RewardConfig) -> float:
    """Bounded, sign-preserving externality score for one AV column."""
    if config.scope == "av-group":
        in_scope = matrix._col_index
    elif config.scope == "system":
        in_scope = matrix._row_index
    else:
        raise ConfigurationError(f"scope {config.scope!r} has no externality rows")
    column = matrix.column(av_id)
    total = 0.0
    for i in in_scope:
        if i == av_id:
            continue
        value = column[i]
        total += value if config.raw_sum else math.tanh(value / config.tanh_scale)
    return total


def shaped_reward(extrinsic: float, intrinsic: float, config: RewardConfig) -> float:
    return config.alpha * extrinsic + config.beta * intrinsic


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0


class SimulationCache:
    """Thread-safe LRU memo of simulation outputs.

    A hit returns the complete stored value or nothing: entries are inserted
    only after the simulation finished, under the lock. Capacity 0 disables
    memoisation (every lookup recomputes) without changing any result.
    """

    def __init__(self, capacity: int = DEFAULT_CACHE_SIZE):
        self.capacity = capacity
        self._entries: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.stats = CacheStats()

    def get_or_compute(self, key, compute: Callable[[], dict]) -> dict:
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                self.stats.hits += 1
                return self._entries[key]
            self.stats.misses += 1
        value = compute()
        if self.capacity > 0:
            with self._lock:
                self._entries[key] = value
                self._entries.move_to_end(key)
                while len(self._entries) > self.capacity:
                    self._entries.popitem(last=False)
                    self.stats.evictions += 1
        return value

    def flush(self) -> None:
        with self._lock:
            self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


class RewardEngine:
    """Travel times and per-AV intrinsic rewards behind one shared cache."""

    def __init__(
        self,
        scenario: Scenario,
        config: RewardConfig,
        cache_size: int = DEFAULT_CACHE_SIZE,
    ):
        self.scenario = scenario
        self.config = config
        self.cache = SimulationCache(cache_size)
        self._av_set = frozenset(scenario.av_ids)

    def _key(self, action: Mapping[int, int], removed: int | None, seed: int):
        active = tuple(
            (a.id, action[a.id]) for a in self.scenario.agents if a.id != removed
        )
        return (active, seed)

    def travel_times(self, action: Mapping[int, int], seed: int) -> TravelTimeVector:
        times = self.cache.get_or_compute(
            self._key(action, None, seed),
            lambda: simulate(self.scenario, action, seed).times,
        )
        return TravelTimeVector(times=times, seed=seed)

    def counterfactual(
        self, action: Mapping[int, int], removed: int, seed: int
    ) -> TravelTimeVector:
        if removed not in self._av_set:
            raise ConfigurationError(
                f"agent {removed} is a human; only AVs may be removed"
            )
        times = self.cache.get_or_compute(
            self._key(action, removed, seed),
            lambda: simulate_without(self.scenario, action, removed, seed).times,
        )
        return TravelTimeVector(times=times, seed=seed)

    def marginal_matrix(self, action: Mapping[int, int], seed: int) -> MarginalCostMatrix:
        base = self.travel_times(action, seed)
        return compute_marginal_matrix(
            self.scenario,
            action,
            base,
            seed,
            counterfactual_runner=lambda j: self.counterfactual(action, j, seed),
        )

    def evaluate(
        self, action: Mapping[int, int], seed: int
    ) -> tuple[TravelTimeVector, dict[int, float]]:
        """Travel times plus each AV's intrinsic reward for one joint action.

        Skips the counterfactual fan-out entirely when the config gives the
        intrinsic term zero weight, so selfish baselines cost one run per
        episode.
        """
        times = self.travel_times(action, seed)
        if not self.config.needs_intrinsic:
            return times, {j: 0.0 for j in self.scenario.av_ids}
        matrix = self.marginal_matrix(action, seed)
        scores = {
            j: intrinsic_reward(matrix, j, self.config) for j in self.scenario.av_ids
        }
        return times, scores

    @property
    def simulations_run(self) -> int:
        return self.cache.stats.misses
