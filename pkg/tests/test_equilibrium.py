from __future__ import annotations

import math
import random

import pytest

from routelab import ConfigurationError, RewardConfig, beta_max
from routelab.equilibrium import EquilibriumAnalyzer, encode_action

from conftest import make_scenario


def small_game(n_av=4, n_human=2):
    """Compact two-route world: humans first, then AVs, 4 s headway."""
    flags = [False] * n_human + [True] * n_av
    departures = [4.0 * i for i in range(n_human + n_av)]
    scenario = make_scenario(departures, av_flags=flags)
    humans = {i: 0 for i in range(n_human)}
    return scenario, humans


def test_all_route0_unique_equilibrium_and_optimum_selfish():
    scenario, humans = small_game()
    analyzer = EquilibriumAnalyzer(scenario, humans)
    report = analyzer.enumerate_nash(RewardConfig(alpha=1.0, beta=0.0, scope="none"))
    assert report.count == 1
    assert report.equilibria == [(0, 0, 0, 0)]
    assert report.optima == [(0, 0, 0, 0)]
    assert report.optimum_total_time == 6 * 50.0


def test_alpha_zero_makes_every_profile_an_equilibrium():
    scenario, humans = small_game(n_av=3)
    analyzer = EquilibriumAnalyzer(scenario, humans)
    report = analyzer.enumerate_nash(
        RewardConfig(alpha=0.0, beta=0.0, scope="none"), include_deviations=False
    )
    assert report.count == 2**3


def test_symmetric_routes_tie_for_system_optimum():
    scenario = make_scenario(
        [0.0, 4.0, 8.0],
        pre_merge=(40.0, 40.0),
    )
    # make both routes priority so the game is fully symmetric
    from routelab import NetworkConfig, RouteSpec, Scenario

    network = NetworkConfig(
        routes=(RouteSpec(40.0, True), RouteSpec(40.0, True)),
        merge_gap_g=2.0,
        yield_window_w=6.0,
        post_merge_time=10.0,
    )
    scenario = Scenario(agents=scenario.agents, network=network)
    analyzer = EquilibriumAnalyzer(scenario, {})
    optima, total = analyzer.system_optimum("system")
    assert len(optima) == 2**3
    assert total == 3 * 50.0


def test_single_av_system_optimum_is_fastest_route():
    scenario = make_scenario([0.0], av_flags=[True])
    analyzer = EquilibriumAnalyzer(scenario, {})
    optima, total = analyzer.system_optimum("system")
    assert optima == [(0,)]
    assert total == 50.0


def test_av_group_scope_optimum():
    scenario, humans = small_game(n_av=2, n_human=1)
    analyzer = EquilibriumAnalyzer(scenario, humans)
    optima, _ = analyzer.system_optimum("av-group")
    assert (0, 0) in optima


def test_deviation_terms_without_conflicts():
    # One AV alone: switching routes changes only its own time.
    scenario = make_scenario([0.0], av_flags=[True])
    analyzer = EquilibriumAnalyzer(scenario, {})
    config = RewardConfig(scope="av-group")
    delta_seconds, delta_score = analyzer.deviation_terms((0,), 0, config)
    assert delta_seconds == 10.0  # route 1 free-flow minus route 0 free-flow
    assert delta_score == 0.0


def test_deviation_terms_need_binary_spaces():
    scenario = make_scenario([0.0], av_flags=[True], action_space=(0,))
    analyzer = EquilibriumAnalyzer(scenario, {})
    with pytest.raises(ConfigurationError):
        analyzer.deviation_terms((0,), 0, RewardConfig())


def test_beta_max_cases():
    assert beta_max(10.0, 0.5) == math.inf
    assert beta_max(10.0, -0.1) == pytest.approx(100.0)
    assert beta_max(0.0, 0.0) is None
    assert beta_max(-10.0, -0.1) == math.inf
    assert beta_max(-10.0, 0.5) == pytest.approx(20.0)
    assert beta_max(0.0, -0.3) == 0.0
    # ulp-level residue from tanh sums is treated as an exact zero
    assert beta_max(10.0, -4.4e-16) == math.inf
    assert beta_max(5e-16, -0.3) == 0.0


def test_rewards_affine_in_beta():
    scenario, humans = small_game()
    analyzer = EquilibriumAnalyzer(scenario, humans)
    rng = random.Random(0)
    for _ in range(20):
        action = tuple(rng.randint(0, 1) for _ in analyzer.av_ids)
        values = [
            analyzer.rewards(
                action, RewardConfig(alpha=1.0, beta=beta, scope="system")
            )
            for beta in (0.0, 1.0, 2.0)
        ]
        for av in analyzer.av_ids:
            mid = 0.5 * (values[0][av] + values[2][av])
            assert abs(values[1][av] - mid) <= 1e-9 * max(1.0, abs(mid))


def test_endpoint_rule_for_sign_constancy():
    # Affine functions keep a constant sign on [0, B] iff both endpoints agree.
    scenario, humans = small_game()
    analyzer = EquilibriumAnalyzer(scenario, humans)
    config = RewardConfig(scope="system")
    rng = random.Random(4)
    grid = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0]
    for _ in range(20):
        action = tuple(rng.randint(0, 1) for _ in analyzer.av_ids)
        av = rng.choice(analyzer.av_ids)
        delta_seconds, delta_score = analyzer.deviation_terms(action, av, config)
        delta_reward = -delta_seconds

        def delta_r(beta):
            return delta_reward + beta * delta_score

        endpoints_positive = delta_r(grid[0]) > 0 and delta_r(grid[-1]) > 0
        all_positive = all(delta_r(b) > 0 for b in grid)
        assert endpoints_positive == all_positive


def test_equilibria_invariant_over_positive_beta_small_game():
    scenario, humans = small_game()
    analyzer = EquilibriumAnalyzer(scenario, humans)
    for beta in (0.0, 0.3, 1.0, 10.0, 100.0):
        report = analyzer.enumerate_nash(
            RewardConfig(alpha=1.0, beta=beta, scope="av-group"),
            include_deviations=False,
        )
        assert report.count == 1
        assert report.equilibria == [(0, 0, 0, 0)]


def test_all_route0_deviation_pattern_on_default_world(default_scenario):
    # Observed pattern from the calibrated world, frozen as a regression
    # check: leaving the all-route-0 profile costs the deviator the 10 s
    # route gap, and every AV except the last also delays the AVs behind it.
    from routelab.humans import freeze_all, run_warmup

    humans, _ = run_warmup(default_scenario, 200, seed=0)
    profile = freeze_all(humans)
    frozen = {i: profile[i] for i in default_scenario.human_ids}
    analyzer = EquilibriumAnalyzer(default_scenario, frozen)
    config = RewardConfig(alpha=1.0, beta=1.0, scope="av-group")
    all_zero = (0,) * len(analyzer.av_ids)
    for av in analyzer.av_ids[:-1]:
        delta_seconds, delta_score = analyzer.deviation_terms(all_zero, av, config)
        assert delta_seconds == 10.0
        assert delta_score < 0.0
    last = analyzer.av_ids[-1]
    delta_seconds, delta_score = analyzer.deviation_terms(all_zero, last, config)
    assert delta_seconds == 10.0
    assert delta_score == 0.0  # the last AV delays only humans


def test_aligned_externality_keeps_deviation_sign_constant():
    # Wherever the intrinsic change agrees in sign with the selfish reward
    # change, the shaped deviation value keeps that sign for every beta.
    scenario, humans = small_game()
    analyzer = EquilibriumAnalyzer(scenario, humans)
    config = RewardConfig(alpha=1.0, beta=1.0, scope="av-group")
    aligned = 0
    for action in analyzer.profiles():
        for slot, av in enumerate(analyzer.av_ids):
            delta_seconds, delta_score = analyzer.deviation_terms(action, av, config)
            delta_reward = -delta_seconds
            if delta_reward == 0.0 or delta_score == 0.0:
                continue
            if (delta_reward > 0) != (delta_score > 0):
                continue
            aligned += 1
            reference_sign = delta_reward > 0
            for beta in (0.0, 1.0, 10.0, 100.0):
                low = action[:slot] + (0,) + action[slot + 1 :]
                high = action[:slot] + (1,) + action[slot + 1 :]
                shaped = RewardConfig(alpha=1.0, beta=beta, scope="av-group")
                delta_r = (
                    analyzer.rewards(high, shaped)[av]
                    - analyzer.rewards(low, shaped)[av]
                )
                assert (delta_r > 0) == reference_sign
    assert aligned > 0


def test_negative_beta_enumeration_reports_without_asserting():
    # Hostile shaping can create additional equilibria; the analyzer just
    # reports whatever the enumeration finds.
    scenario, humans = small_game(n_av=3)
    analyzer = EquilibriumAnalyzer(scenario, humans)
    report = analyzer.enumerate_nash(
        RewardConfig(alpha=1.0, beta=-1.0, scope="av-group"),
        include_deviations=False,
    )
    assert report.count >= 1
    assert report.count == len(report.equilibria)


def test_verification_closure_with_cold_cache():
    scenario, humans = small_game(n_av=3)
    analyzer = EquilibriumAnalyzer(scenario, humans)
    config = RewardConfig(alpha=1.0, beta=10.0, scope="av-group")
    report = analyzer.enumerate_nash(config, include_deviations=False)
    for action in report.equilibria:
        assert analyzer.verify_equilibrium(action, config)


def test_three_route_network_end_to_end():
    # K parallel routes work everywhere except the binary deviation analysis.
    from routelab import NetworkConfig, RouteSpec, Scenario, AgentSpec, simulate
    from routelab.episode import build_observation

    network = NetworkConfig(
        routes=(
            RouteSpec(40.0, False),
            RouteSpec(50.0, True),
            RouteSpec(55.0, True),
        ),
        merge_gap_g=2.0,
        yield_window_w=6.0,
        post_merge_time=10.0,
    )
    agents = tuple(
        AgentSpec(
            id=i,
            kind="av" if i % 2 else "human",
            departure_time=4.0 * i,
            action_space=(0, 1, 2),
        )
        for i in range(4)
    )
    scenario = Scenario(agents=agents, network=network)
    times = simulate(scenario, {0: 0, 1: 1, 2: 2, 3: 0}, seed=0)
    assert times[2] == 55.0 + 10.0  # free-flow on the third route
    obs = build_observation(scenario, {0: 0, 1: 2}, 2)
    assert obs.route_counts == (1, 0, 1)

    analyzer = EquilibriumAnalyzer(scenario, {0: 0, 2: 0})
    report = analyzer.enumerate_nash(RewardConfig(alpha=1.0, beta=0.0, scope="none"))
    assert analyzer.space_size == 9
    assert report.equilibria == [(0, 0)]
    assert report.deviations == []  # binary-only analysis skipped
    with pytest.raises(ConfigurationError):
        analyzer.deviation_terms((0, 0), 1, RewardConfig())


def test_enumeration_bound_guard():
    scenario, humans = small_game(n_av=4)
    with pytest.raises(ConfigurationError, match="shrink"):
        EquilibriumAnalyzer(scenario, humans, bound=8)


def test_analyzer_requires_deterministic_mode():
    scenario, humans = small_game(n_av=2)
    noisy = scenario.with_noise(2.0)
    with pytest.raises(ConfigurationError):
        EquilibriumAnalyzer(noisy, humans)


def test_deviation_records_and_encoding():
    scenario, humans = small_game(n_av=2, n_human=1)
    analyzer = EquilibriumAnalyzer(scenario, humans)
    records = analyzer.deviation_records(RewardConfig(alpha=1.0, scope="system", beta=1.0))
    assert len(records) == 4 * 2  # profiles x AVs
    assert encode_action((0, 1)) == "01"
    by_key = {(r.action, r.av_id): r for r in records}
    flat = by_key[((0, 0), scenario.av_ids[0])]
    # switching to the priority route costs the deviator ten seconds
    assert flat.delta_seconds >= 10.0
