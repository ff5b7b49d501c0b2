"""Learning agents for AVs: UCB bandit, tabular Q, and policy gradient.

All three act once per episode on a tiny discrete action space, so tabular
state is enough. Q and policy-gradient condition on the observation's
route-count tuple; UCB is stateless across observations (a pure bandit).
Each learner exposes ``select`` (training, with exploration), ``greedy``
(evaluation, exploration-free) and ``update``.

Reward magnitudes vary hugely with the shaping coefficient, so the UCB
index normalises means by their spread before adding the exploration bonus;
otherwise heavily shaped rewards would drown the bonus entirely.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .episode import EpisodeLog, run_episode
from .network import ConfigurationError, Scenario
from .rewards import RewardConfig, RewardEngine

ObsKey = tuple[int, ...]


def _argmax_lowest(values: Sequence[float]) -> int:
    best = 0
    for k in range(1, len(values)):
        if values[k] > values[best]:
            best = k
    return best


class UcbLearner:
    """Upper-confidence-bound bandit with incremental means.

    Index = mean + (c / scale) * sqrt(ln(total) / count), where scale is the
    running standard deviation of every reward seen so far (1 until it is
    defined). The scale keeps the exploration bonus meaningful whatever the
    reward magnitude: heavily shaped rewards widen the spread, shrink the
    effective bonus, and cut losses on a clearly bad route sooner. Unpulled
    actions are forced first, lowest index first; ties resolve to the lowest
    action.

    The default coefficient is deliberately large: route-choice gaps span
    tens of seconds, and a timid bonus stops exploring after a handful of
    pulls, which hides the miscoordination dynamics this laboratory studies.
    """

    DEFAULT_C = 150.0

    def __init__(self, n_actions: int, c: float = DEFAULT_C):
        self.n_actions = n_actions
        self.c = c
        self.counts = [0] * n_actions
        self.means = [0.0] * n_actions
        self.total = 0
        self._reward_mean = 0.0
        self._reward_m2 = 0.0

    def reward_scale(self) -> float:
        if self.total < 2:
            return 1.0
        std = math.sqrt(self._reward_m2 / self.total)
        return std if std > 0.0 else 1.0

    def select(self, obs_key: ObsKey | None = None, rng: random.Random | None = None) -> int:
        for a in range(self.n_actions):
            if self.counts[a] == 0:
                return a
        c_eff = self.c / self.reward_scale()
        indices = [
            self.means[a] + c_eff * math.sqrt(math.log(self.total) / self.counts[a])
            for a in range(self.n_actions)
        ]
        return _argmax_lowest(indices)

    def greedy(self, obs_key: ObsKey | None = None) -> int:
        return _argmax_lowest(self.means)

    def update(self, obs_key: ObsKey | None, action: int, reward: float) -> None:
        self.counts[action] += 1
        self.total += 1
        self.means[action] += (reward - self.means[action]) / self.counts[action]
        delta = reward - self._reward_mean
        self._reward_mean += delta / self.total
        self._reward_m2 += delta * (reward - self._reward_mean)

    def on_episode(self, episode: int, total_episodes: int) -> None:
        pass


class QLearner:
    """Tabular one-step Q-learning keyed by observation tuples.

    The episode ends after a single decision, so the target is just the
    reward (discount 0). Unseen rows start at 0, which is optimistic against
    negative travel-time rewards and makes every action get tried per state.
    """

    def __init__(
        self,
        n_actions: int,
        learning_rate: float = 0.1,
        epsilon_start: float = 0.2,
        epsilon_end: float = 0.0,
    ):
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon = epsilon_start
        self.table: dict[ObsKey, list[float]] = {}

    def _row(self, obs_key: ObsKey) -> list[float]:
        return self.table.get(obs_key) or [0.0] * self.n_actions

    def select(self, obs_key: ObsKey, rng: random.Random) -> int:
        if self.epsilon > 0 and rng.random() < self.epsilon:
            return rng.randrange(self.n_actions)
        return _argmax_lowest(self._row(obs_key))

    def greedy(self, obs_key: ObsKey) -> int:
        return _argmax_lowest(self._row(obs_key))

    def update(self, obs_key: ObsKey, action: int, reward: float) -> None:
        row = self.table.setdefault(obs_key, [0.0] * self.n_actions)
        row[action] += self.learning_rate * (reward - row[action])

    def on_episode(self, episode: int, total_episodes: int) -> None:
        if total_episodes > 1:
            progress = episode / (total_episodes - 1)
        else:
            progress = 1.0
        self.epsilon = self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress


class PolicyGradientLearner:
    """Softmax policy over per-observation preferences with a mean baseline."""

    def __init__(
        self,
        n_actions: int,
        learning_rate: float = 0.01,
        temperature: float = 1.0,
    ):
        if temperature <= 0:
            raise ConfigurationError("softmax temperature must be > 0")
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.temperature = temperature
        self.preferences: dict[ObsKey, list[float]] = {}
        self.baseline = 0.0
        self.updates = 0

    def _prefs(self, obs_key: ObsKey) -> list[float]:
        return self.preferences.get(obs_key) or [0.0] * self.n_actions

    def probabilities(self, obs_key: ObsKey) -> list[float]:
        prefs = self._prefs(obs_key)
        top = max(prefs)
        weights = [math.exp((p - top) / self.temperature) for p in prefs]
        norm = sum(weights)
        return [w / norm for w in weights]

    def select(self, obs_key: ObsKey, rng: random.Random) -> int:
        probs = self.probabilities(obs_key)
        draw = rng.random()
        running = 0.0
        for a, p in enumerate(probs):
            running += p
            if draw < running:
                return a
        return self.n_actions - 1

    def greedy(self, obs_key: ObsKey) -> int:
        return _argmax_lowest(self._prefs(obs_key))

    def update(self, obs_key: ObsKey, action: int, reward: float) -> None:
        if self.updates == 0:
            self.baseline = reward  # first advantage is zero by construction
        advantage = reward - self.baseline
        probs = self.probabilities(obs_key)
        prefs = self.preferences.setdefault(obs_key, [0.0] * self.n_actions)
        step = self.learning_rate * advantage
        for a in range(self.n_actions):
            if a == action:
                prefs[a] += step * (1.0 - probs[action])
            else:
                prefs[a] -= step * probs[action]
        self.updates += 1
        self.baseline += (reward - self.baseline) / self.updates

    def on_episode(self, episode: int, total_episodes: int) -> None:
        pass


class FixedLearner:
    """Constant-action stand-in, useful as a control arm."""

    def __init__(self, n_actions: int, route: int = 0):
        self.route = route

    def select(self, obs_key: ObsKey | None = None, rng: random.Random | None = None) -> int:
        return self.route

    def greedy(self, obs_key: ObsKey | None = None) -> int:
        return self.route

    def update(self, obs_key: ObsKey | None, action: int, reward: float) -> None:
        pass

    def on_episode(self, episode: int, total_episodes: int) -> None:
        pass


ALGORITHMS = ("ucb", "q", "pg", "fixed")


def make_learner(spec: Mapping, n_actions: int):
    """Build a learner from its config-JSON spec: {"algorithm": ..., hyperparameters...}."""
    algorithm = spec.get("algorithm")
    if algorithm == "ucb":
        return UcbLearner(n_actions, c=float(spec.get("c", UcbLearner.DEFAULT_C)))
    if algorithm == "q":
        return QLearner(
            n_actions,
            learning_rate=float(spec.get("learning_rate", 0.1)),
            epsilon_start=float(spec.get("epsilon_start", 0.2)),
            epsilon_end=float(spec.get("epsilon_end", 0.0)),
        )
    if algorithm == "pg":
        return PolicyGradientLearner(
            n_actions,
            learning_rate=float(spec.get("learning_rate", 0.01)),
            temperature=float(spec.get("temperature", 1.0)),
        )
    if algorithm == "fixed":
        return FixedLearner(n_actions, route=int(spec.get("route", 0)))
    raise ConfigurationError(f"unknown algorithm {algorithm!r}; use one of {ALGORITHMS}")


@dataclass
class TrainResult:
    """Artifacts of one seeded training run (training plus evaluation logs)."""

    seed: int
    train_logs: list[EpisodeLog]
    eval_logs: list[EpisodeLog]
    learners: dict[int, object]
    simulations_run: int


def _episode_seed(run_seed: int, episode_index: int, stochastic: bool) -> int:
    if not stochastic:
        return run_seed
    return run_seed * 1_000_003 + episode_index + 1


def train(
    scenario: Scenario,
    learner_specs: Mapping[int, Mapping],
    reward_config: RewardConfig,
    train_episodes: int,
    eval_episodes: int,
    seeds: Sequence[int],
    frozen_humans: Mapping[int, int],
    stochastic: bool = False,
    episode_offset: int = 0,
    cache_size: int | None = None,
) -> list[TrainResult]:
    """Train AV learners against frozen humans, then evaluate greedily.

    Training queries ``select`` (with exploration) and updates each learner
    from its shaped reward; evaluation freezes the learners and replays the
    greedy policy with no updates. The whole procedure is repeated per seed.
    """
    results = []
    for seed in seeds:
        results.append(
            _train_one(
                scenario,
                learner_specs,
                reward_config,
                train_episodes,
                eval_episodes,
                seed,
                frozen_humans,
                stochastic,
                episode_offset,
                cache_size,
            )
        )
    return results


def _train_one(
    scenario: Scenario,
    learner_specs: Mapping[int, Mapping],
    reward_config: RewardConfig,
    train_episodes: int,
    eval_episodes: int,
    seed: int,
    frozen_humans: Mapping[int, int],
    stochastic: bool,
    episode_offset: int,
    cache_size: int | None,
) -> TrainResult:
    av_ids = scenario.av_ids
    for av in av_ids:
        if av not in learner_specs:
            raise ConfigurationError(f"no learner spec for AV {av}")
    for human in scenario.human_ids:
        if human not in frozen_humans:
            raise ConfigurationError(f"no frozen route for human {human}")

    if cache_size is None:
        engine = RewardEngine(scenario, reward_config)
    else:
        engine = RewardEngine(scenario, reward_config, cache_size=cache_size)
    learners = {
        av: make_learner(learner_specs[av], len(scenario.agent(av).action_space))
        for av in av_ids
    }
    rngs = {av: random.Random(f"{seed}:{av}:policy") for av in av_ids}
    human_policies = {
        i: (lambda obs, route=frozen_humans[i]: route) for i in scenario.human_ids
    }

    seen: dict[int, tuple[ObsKey, int]] = {}

    def make_training_policy(av: int):
        learner = learners[av]
        rng = rngs[av]

        def policy(obs):
            key = obs.route_counts
            action = learner.select(key, rng)
            seen[av] = (key, action)
            return action

        return policy

    training_policies = dict(human_policies)
    for av in av_ids:
        training_policies[av] = make_training_policy(av)

    train_logs: list[EpisodeLog] = []
    for e in range(train_episodes):
        seen.clear()
        for av in av_ids:
            learners[av].on_episode(e, train_episodes)
        episode_index = episode_offset + e
        log = run_episode(
            scenario,
            training_policies,
            reward_config,
            episode_index,
            _episode_seed(seed, episode_index, stochastic),
            engine,
        )
        for av in av_ids:
            key, action = seen[av]
            learners[av].update(key, action, log.shaped[av])
        train_logs.append(log)

    eval_policies = dict(human_policies)
    for av in av_ids:
        eval_policies[av] = (
            lambda obs, learner=learners[av]: learner.greedy(obs.route_counts)
        )
    eval_logs: list[EpisodeLog] = []
    for e in range(eval_episodes):
        episode_index = episode_offset + train_episodes + e
        log = run_episode(
            scenario,
            eval_policies,
            reward_config,
            episode_index,
            _episode_seed(seed, episode_index, stochastic),
            engine,
        )
        eval_logs.append(log)

    return TrainResult(
        seed=seed,
        train_logs=train_logs,
        eval_logs=eval_logs,
        learners=learners,
        simulations_run=engine.simulations_run,
    )
