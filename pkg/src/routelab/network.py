"""Event-based micro-simulator for parallel-route networks with a priority merge.

The world is a set of K parallel routes feeding one merge point. Each route
has a free-flow time from origin to the merge and either holds priority at
the merge or must yield. A vehicle's trip is

    departure -> merge arrival -> merge passage -> arrival

and congestion only arises from the passage discipline at the merge:

* consecutive passages are separated by at least ``merge_gap_g`` seconds;
* a vehicle on a priority route passes at ``max(arrival, last_passage + g)``;
* a vehicle on a yielding route may not pass while any priority-route
  vehicle that has not yet passed arrives within ``yield_window_w`` seconds
  of the candidate passage time; it re-evaluates after that vehicle clears.

Ties in passage time are broken by ``(departure_time, agent id)`` ascending.
With ``noise_sigma == 0`` the simulation is a pure function of its inputs;
with noise, each merge arrival is jittered by Uniform(-sigma, +sigma) drawn
from a generator sub-seeded by ``(seed, agent id)`` so runs are reproducible
per seed and unaffected by which other agents are present.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Iterable, Mapping


class ConfigurationError(ValueError):
    """A scenario, action, or runtime parameter violates its contract."""


@dataclass(frozen=True)
class RouteSpec:
    """One origin->merge route: free-flow time and merge priority."""

    pre_merge_time: float
    has_priority: bool

    def validate(self) -> None:
        if not math.isfinite(self.pre_merge_time) or self.pre_merge_time <= 0:
            raise ConfigurationError(
                f"pre_merge_time must be finite and > 0, got {self.pre_merge_time}"
            )


@dataclass(frozen=True)
class NetworkConfig:
    """Route set plus merge discipline parameters (all times in seconds)."""

    routes: tuple[RouteSpec, ...]
    merge_gap_g: float
    yield_window_w: float
    post_merge_time: float

    def validate(self) -> None:
        if len(self.routes) < 2:
            raise ConfigurationError("a network needs at least 2 routes")
        for route in self.routes:
            route.validate()
        yielding = sum(1 for r in self.routes if not r.has_priority)
        if yielding > 1:
            raise ConfigurationError(
                "at most one route per merge may lack priority"
            )
        for name, value in (
            ("merge_gap_g", self.merge_gap_g),
            ("yield_window_w", self.yield_window_w),
            ("post_merge_time", self.post_merge_time),
        ):
            if not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be finite and >= 0, got {value}")
        if self.merge_gap_g <= 0:
            raise ConfigurationError("merge_gap_g must be > 0")


@dataclass(frozen=True)
class AgentSpec:
    """One traveller: identity, roster kind, departure time, allowed routes."""

    id: int
    kind: str  # "human" or "av"
    departure_time: float
    action_space: tuple[int, ...]

    def validate(self, n_routes: int) -> None:
        if self.kind not in ("human", "av"):
            raise ConfigurationError(f"agent {self.id}: unknown kind {self.kind!r}")
        if not math.isfinite(self.departure_time) or self.departure_time < 0:
            raise ConfigurationError(f"agent {self.id}: bad departure_time")
        if not self.action_space:
            raise ConfigurationError(f"agent {self.id}: empty action_space")
        for route in self.action_space:
            if not 0 <= route < n_routes:
                raise ConfigurationError(
                    f"agent {self.id}: route {route} not in network"
                )


@dataclass(frozen=True)
class Scenario:
    """Immutable world description: agent roster plus network parameters.

    Agents are kept sorted by strictly increasing departure time, which is
    also the order in which they act each episode.
    """

    agents: tuple[AgentSpec, ...]
    network: NetworkConfig
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        self.network.validate()
        if not self.agents:
            raise ConfigurationError("scenario has no agents")
        seen: set[int] = set()
        previous = -math.inf
        for agent in self.agents:
            agent.validate(len(self.network.routes))
            if agent.id in seen:
                raise ConfigurationError(f"duplicate agent id {agent.id}")
            seen.add(agent.id)
            if agent.departure_time <= previous:
                raise ConfigurationError(
                    "agents must have strictly increasing departure times"
                )
            previous = agent.departure_time
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be finite and >= 0")

    @property
    def av_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.agents if a.kind == "av")

    @property
    def human_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.agents if a.kind == "human")

    def agent(self, agent_id: int) -> AgentSpec:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise ConfigurationError(f"no agent with id {agent_id}")

    def with_noise(self, noise_sigma: float) -> "Scenario":
        return Scenario(self.agents, self.network, noise_sigma)


@dataclass(frozen=True)
class TravelTimeVector:
    """Per-agent experienced travel time (seconds) for one simulation run."""

    times: dict[int, float]
    seed: int

    def __getitem__(self, agent_id: int) -> float:
        return self.times[agent_id]

    def __contains__(self, agent_id: int) -> bool:
        return agent_id in self.times

    def total(self, agent_ids: Iterable[int] | None = None) -> float:
        if agent_ids is None:
            return sum(self.times.values())
        return sum(self.times[i] for i in agent_ids)


def _arrival_noise(seed: int, agent_id: int, sigma: float) -> float:
    # String seeding hashes via sha512, so draws are stable across processes
    # and platforms, and independent of which other agents are simulated.
    rng = random.Random(f"{seed}:{agent_id}")
    return rng.uniform(-sigma, sigma)


def _merge_passages(
    vehicles: list[tuple[float, float, int, bool]],
    gap: float,
    window: float,
) -> dict[int, float]:
    """Resolve merge passage times for (arrival, departure, id, priority) rows."""
    remaining = list(vehicles)
    passages: dict[int, float] = {}
    last: float | None = None
    while remaining:
        min_priority_arrival = math.inf
        for arrival, _, _, priority in remaining:
            if priority and arrival < min_priority_arrival:
                min_priority_arrival = arrival
        best = None
        best_key = None
        for vehicle in remaining:
            arrival, dep, vid, priority = vehicle
            t = arrival if last is None else max(arrival, last + gap)
            if not priority and min_priority_arrival <= t + window:
                continue  # must yield until that priority vehicle clears
            key = (t, dep, vid)
            if best_key is None or key < best_key:
                best_key = key
                best = vehicle
        if best is None:  # cannot happen: a priority vehicle is never blocked
            raise RuntimeError("merge deadlock")
        passages[best[2]] = best_key[0]
        last = best_key[0]
        remaining.remove(best)
    return passages


def _check_action(scenario: Scenario, action: Mapping[int, int]) -> None:
    if len(action) != len(scenario.agents):
        raise ConfigurationError(
            f"joint action has {len(action)} entries for {len(scenario.agents)} agents"
        )
    for agent in scenario.agents:
        if agent.id not in action:
            raise ConfigurationError(f"joint action missing agent {agent.id}")
        if action[agent.id] not in agent.action_space:
            raise ConfigurationError(
                f"agent {agent.id}: route {action[agent.id]} outside action space"
            )


def _simulate_subset(
    scenario: Scenario,
    agents: Iterable[AgentSpec],
    action: Mapping[int, int],
    seed: int,
) -> dict[int, float]:
    net = scenario.network
    sigma = scenario.noise_sigma
    vehicles = []
    for agent in agents:
        route = net.routes[action[agent.id]]
        arrival = agent.departure_time + route.pre_merge_time
        if sigma > 0:
            arrival += _arrival_noise(seed, agent.id, sigma)
        vehicles.append((arrival, agent.departure_time, agent.id, route.has_priority))
    passages = _merge_passages(vehicles, net.merge_gap_g, net.yield_window_w)
    return {
        vid: passages[vid] + net.post_merge_time - dep
        for (_, dep, vid, _) in vehicles
    }


def simulate(scenario: Scenario, action: Mapping[int, int], seed: int = 0) -> TravelTimeVector:
    """Run one episode of the merge simulation for a full joint action."""
    _check_action(scenario, action)
    times = _simulate_subset(scenario, scenario.agents, action, seed)
    return TravelTimeVector(times=times, seed=seed)


def simulate_without(
    scenario: Scenario,
    action: Mapping[int, int],
    removed_agent: int,
    seed: int = 0,
) -> TravelTimeVector:
    """Counterfactual run with one AV (and its action entry) deleted.

    Uses the same seed, and noise draws are keyed per agent id, so the
    remaining agents see exactly the jitter they saw in the full run.
    """
    _check_action(scenario, action)
    spec = scenario.agent(removed_agent)
    if spec.kind != "av":
        raise ConfigurationError(
            f"agent {removed_agent} is a human; only AVs may be removed"
        )
    rest = [a for a in scenario.agents if a.id != removed_agent]
    times = _simulate_subset(scenario, rest, action, seed)
    return TravelTimeVector(times=times, seed=seed)
