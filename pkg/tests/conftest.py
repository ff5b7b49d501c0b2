from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from routelab import AgentSpec, NetworkConfig, RouteSpec, Scenario
from routelab.scenarios import two_route_yield_scenario


@pytest.fixture(scope="session")
def default_scenario() -> Scenario:
    return two_route_yield_scenario()


def make_scenario(
    departures,
    av_flags=None,
    pre_merge=(40.0, 50.0),
    post_merge=10.0,
    gap=2.0,
    window=6.0,
    noise_sigma=0.0,
    action_space=(0, 1),
):
    """Small ad-hoc scenario: agents at the given departures, optional kinds."""
    if av_flags is None:
        av_flags = [True] * len(departures)
    network = NetworkConfig(
        routes=(
            RouteSpec(pre_merge_time=pre_merge[0], has_priority=False),
            RouteSpec(pre_merge_time=pre_merge[1], has_priority=True),
        ),
        merge_gap_g=gap,
        yield_window_w=window,
        post_merge_time=post_merge,
    )
    agents = tuple(
        AgentSpec(
            id=i,
            kind="av" if av_flags[i] else "human",
            departure_time=float(dep),
            action_space=tuple(action_space),
        )
        for i, dep in enumerate(departures)
    )
    return Scenario(agents=agents, network=network, noise_sigma=noise_sigma)
