"""Exhaustive game-theoretic analysis of the AV joint-action space.

Humans enter as a frozen route profile (part of the cost structure, not
players); the enumeration ranges over every AV joint action. A profile is a
pure Nash equilibrium when no single AV can improve its shaped reward by
more than a strictness tolerance through a unilateral route switch.

Because the shaped reward is affine in the shaping coefficient,

    delta_r(beta) = alpha * delta_e + beta * delta_m,

the sign of a deviation's value over a range [0, B] is settled at the
endpoints, and when ``delta_e`` and ``delta_m`` disagree in sign there is a
largest coefficient preserving the unshaped preference:
``beta = -alpha * delta_e / delta_m``. ``beta_max`` computes that threshold.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

from .network import ConfigurationError, Scenario
from .rewards import (
    MarginalCostMatrix,
    RewardConfig,
    RewardEngine,
    intrinsic_reward,
)

DEFAULT_ENUMERATION_BOUND = 2**20
STRICTNESS_TOLERANCE = 1e-9


def beta_max(
    delta_reward: float, delta_c: float, noise_floor: float = STRICTNESS_TOLERANCE
) -> float | None:
    """Largest shaping coefficient keeping sign(delta_r) as at beta = 0.

    Returns ``math.inf`` when the intrinsic change never flips the
    preference, ``None`` when the deviation is indifferent for every beta
    (both terms zero), and 0.0 when only the intrinsic term is nonzero.
    Magnitudes at or below ``noise_floor`` count as exact zeros: summing
    tanh terms leaves ulp-level residue that would otherwise fabricate
    astronomically large thresholds.
    """
    if abs(delta_reward) <= noise_floor:
        delta_reward = 0.0
    if abs(delta_c) <= noise_floor:
        delta_c = 0.0
    if delta_reward == 0.0 and delta_c == 0.0:
        return None
    if delta_c == 0.0:
        return math.inf
    if delta_reward == 0.0:
        return 0.0
    if (delta_c > 0.0) == (delta_reward > 0.0):
        return math.inf
    return -delta_reward / delta_c


@dataclass(frozen=True)
class DeviationRecord:
    """Route-switch terms for one (joint action, AV) pair."""

    action: tuple[int, ...]
    av_id: int
    delta_seconds: float  # travel time on high route minus low route
    delta_score: float  # intrinsic score change across the same switch
    beta_threshold: float | None


@dataclass
class EquilibriumReport:
    alpha: float
    beta: float
    scope: str
    equilibria: list[tuple[int, ...]]
    count: int
    optima: list[tuple[int, ...]]
    optimum_total_time: float
    deviations: list[DeviationRecord]


def encode_action(action: tuple[int, ...]) -> str:
    if all(route < 10 for route in action):
        return "".join(str(route) for route in action)
    return "-".join(str(route) for route in action)


class EquilibriumAnalyzer:
    """Shared-cache evaluator over the full AV joint-action space."""

    def __init__(
        self,
        scenario: Scenario,
        humans_profile: Mapping[int, int],
        bound: int = DEFAULT_ENUMERATION_BOUND,
        cache_size: int | None = None,
        seed: int = 0,
    ):
        if scenario.noise_sigma != 0:
            raise ConfigurationError(
                "equilibrium analysis requires deterministic mode (noise_sigma = 0)"
            )
        self.scenario = scenario
        self.humans_profile = dict(humans_profile)
        for human in scenario.human_ids:
            if human not in self.humans_profile:
                raise ConfigurationError(f"no frozen route for human {human}")
        self.av_ids = scenario.av_ids
        self.spaces = [scenario.agent(av).action_space for av in self.av_ids]
        size = 1
        for space in self.spaces:
            size *= len(space)
        if size > bound:
            raise ConfigurationError(
                f"joint-action space has {size} profiles, above the bound {bound}; "
                "shrink the scenario or raise the bound"
            )
        self.space_size = size
        self.seed = seed
        neutral = RewardConfig(alpha=1.0, beta=1.0, scope="system")
        if cache_size is None:
            self.engine = RewardEngine(scenario, neutral)
        else:
            self.engine = RewardEngine(scenario, neutral, cache_size=cache_size)
        self._extrinsic: dict[tuple[int, ...], dict[int, float]] = {}
        self._totals: dict[tuple[int, ...], tuple[float, float]] = {}
        self._matrices: dict[tuple[int, ...], MarginalCostMatrix] = {}

    # -- joint-action plumbing -------------------------------------------

    def profiles(self):
        return itertools.product(*self.spaces)

    def full_action(self, action: tuple[int, ...]) -> dict[int, int]:
        joint = dict(self.humans_profile)
        joint.update(zip(self.av_ids, action))
        return joint

    def _evaluate_base(self, action: tuple[int, ...]) -> dict[int, float]:
        cached = self._extrinsic.get(action)
        if cached is not None:
            return cached
        times = self.engine.travel_times(self.full_action(action), self.seed)
        extrinsic = {av: -times[av] for av in self.av_ids}
        self._extrinsic[action] = extrinsic
        self._totals[action] = (
            times.total(),
            times.total(self.av_ids),
        )
        return extrinsic

    def _matrix(self, action: tuple[int, ...]) -> MarginalCostMatrix:
        matrix = self._matrices.get(action)
        if matrix is None:
            matrix = self.engine.marginal_matrix(self.full_action(action), self.seed)
            self._matrices[action] = matrix
        return matrix

    def rewards(self, action: tuple[int, ...], config: RewardConfig) -> dict[int, float]:
        """Shaped reward per AV under one (alpha, beta, scope) setting."""
        extrinsic = self._evaluate_base(action)
        if not config.needs_intrinsic:
            return {av: config.alpha * extrinsic[av] for av in self.av_ids}
        matrix = self._matrix(action)
        return {
            av: config.alpha * extrinsic[av]
            + config.beta * intrinsic_reward(matrix, av, config)
            for av in self.av_ids
        }

    # -- analyses ----------------------------------------------------------

    def enumerate_nash(
        self,
        config: RewardConfig,
        tolerance: float = STRICTNESS_TOLERANCE,
        include_deviations: bool = True,
    ) -> EquilibriumReport:
        """Test every AV joint action for unilateral-deviation stability."""
        equilibria = []
        for action in self.profiles():
            own = self.rewards(action, config)
            stable = True
            for slot, av in enumerate(self.av_ids):
                for alternative in self.spaces[slot]:
                    if alternative == action[slot]:
                        continue
                    switched = action[:slot] + (alternative,) + action[slot + 1 :]
                    if self.rewards(switched, config)[av] > own[av] + tolerance:
                        stable = False
                        break
                if not stable:
                    break
            if stable:
                equilibria.append(action)
        optima, best_total = self.system_optimum("system")
        deviations = (
            self.deviation_records(config) if include_deviations else []
        )
        return EquilibriumReport(
            alpha=config.alpha,
            beta=config.beta,
            scope=config.scope,
            equilibria=equilibria,
            count=len(equilibria),
            optima=optima,
            optimum_total_time=best_total,
            deviations=deviations,
        )

    def system_optimum(self, scope: str = "system") -> tuple[list[tuple[int, ...]], float]:
        """All joint actions minimising total travel time over the scope."""
        if scope not in ("system", "av-group"):
            raise ConfigurationError(f"unknown optimisation scope {scope!r}")
        best_total = math.inf
        optima: list[tuple[int, ...]] = []
        for action in self.profiles():
            self._evaluate_base(action)
            total_all, total_avs = self._totals[action]
            total = total_all if scope == "system" else total_avs
            if total < best_total - STRICTNESS_TOLERANCE:
                best_total = total
                optima = [action]
            elif total <= best_total + STRICTNESS_TOLERANCE:
                optima.append(action)
        return optima, best_total

    def deviation_terms(
        self, action: tuple[int, ...], av_id: int, config: RewardConfig
    ) -> tuple[float, float]:
        """(travel-time change, intrinsic-score change) for one AV's switch.

        Defined for binary action spaces: both terms compare the higher
        route index against the lower with everyone else fixed.
        """
        slot = self.av_ids.index(av_id)
        space = self.spaces[slot]
        if len(space) != 2:
            raise ConfigurationError(
                f"deviation terms need a binary action space, AV {av_id} has {space}"
            )
        low, high = sorted(space)
        action_low = action[:slot] + (low,) + action[slot + 1 :]
        action_high = action[:slot] + (high,) + action[slot + 1 :]
        self._evaluate_base(action_low)
        self._evaluate_base(action_high)
        tt_low = -self._extrinsic[action_low][av_id]
        tt_high = -self._extrinsic[action_high][av_id]
        if config.scope == "none":
            delta_score = 0.0
        else:
            m_low = intrinsic_reward(self._matrix(action_low), av_id, config)
            m_high = intrinsic_reward(self._matrix(action_high), av_id, config)
            delta_score = m_high - m_low
        return tt_high - tt_low, delta_score

    def deviation_records(self, config: RewardConfig) -> list[DeviationRecord]:
        """One record per (joint action, AV), when action spaces are binary."""
        if any(len(space) != 2 for space in self.spaces):
            return []
        records = []
        for action in self.profiles():
            for av in self.av_ids:
                delta_seconds, delta_score = self.deviation_terms(action, av, config)
                records.append(
                    DeviationRecord(
                        action=action,
                        av_id=av,
                        delta_seconds=delta_seconds,
                        delta_score=delta_score,
                        beta_threshold=beta_max(
                            config.alpha * (-delta_seconds), delta_score
                        ),
                    )
                )
        return records

    def verify_equilibrium(
        self, action: tuple[int, ...], config: RewardConfig, tolerance: float = STRICTNESS_TOLERANCE
    ) -> bool:
        """Re-run the deviation test for one profile with a cold cache."""
        fresh = EquilibriumAnalyzer(
            self.scenario, self.humans_profile, seed=self.seed
        )
        own = fresh.rewards(action, config)
        for slot, av in enumerate(fresh.av_ids):
            for alternative in fresh.spaces[slot]:
                if alternative == action[slot]:
                    continue
                switched = action[:slot] + (alternative,) + action[slot + 1 :]
                if fresh.rewards(switched, config)[av] > own[av] + tolerance:
                    return False
        return True
