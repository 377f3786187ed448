"""Temporal-difference learning of the MPC parameters.

Plain Q-learning: roll out the greedy policy (no exploration), store
transitions in a bounded FIFO buffer, and move theta along the
action-value gradient scaled by the TD error. Updates default to one
gradient step per transition; an episode-batch mode averages the update
over the whole episode instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .agent import MpcAgent
from .errors import DiffMpcError, PreconditionError
from .sensitivity import grad_q_theta

PER_STEP = "per_step"
EPISODE_BATCH = "episode_batch"


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    cost: float

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.s_next = np.asarray(self.s_next, dtype=float)
        self.cost = float(self.cost)
        if not (
            np.all(np.isfinite(self.s))
            and np.all(np.isfinite(self.a))
            and np.all(np.isfinite(self.s_next))
            and np.isfinite(self.cost)
        ):
            raise PreconditionError("transition entries must be finite")


class ReplayBuffer:
    """Bounded FIFO of transitions with seeded sampling."""

    def __init__(self, capacity: int, seed: Optional[int] = None):
        if capacity < 1:
            raise PreconditionError("capacity must be >= 1")
        self.capacity = capacity
        self._data: list[Transition] = []
        self._rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self._data)

    def push(self, tr: Transition) -> None:
        self._data.append(tr)
        if len(self._data) > self.capacity:
            del self._data[0]

    def latest(self) -> Transition:
        return self._data[-1]

    def sample(self, batch_size: int) -> list[Transition]:
        """Uniform sample without replacement when the buffer is large enough."""
        n = len(self._data)
        if batch_size <= n:
            idx = self._rng.choice(n, size=batch_size, replace=False)
        else:
            idx = self._rng.choice(n, size=batch_size, replace=True)
        return [self._data[i] for i in idx]

    def __contains__(self, tr: Transition) -> bool:
        return any(t is tr for t in self._data)


@dataclass
class TrainConfig:
    episodes: int = 30
    steps_per_episode: int = 100
    learning_rate: float = 1e-4
    gamma: float = 0.9
    update_mode: str = PER_STEP
    batch_size: int = 1
    buffer_capacity: int = 10_000
    seed: int = 0
    initial_state: tuple = (0.5, 0.5)
    max_consecutive_failures: int = 5

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise PreconditionError("learning_rate must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise PreconditionError("gamma must lie in (0, 1]")
        if self.episodes < 0:
            raise PreconditionError("episodes must be >= 0")
        if self.update_mode not in (PER_STEP, EPISODE_BATCH):
            raise PreconditionError(f"unknown update_mode {self.update_mode!r}")


@dataclass
class TrainHistory:
    theta: list = field(default_factory=list)  # snapshot at each episode start
    cost: list = field(default_factory=list)  # accumulated env cost per episode
    violations: list = field(default_factory=list)  # steps landing outside the bounds
    mean_abs_td: list = field(default_factory=list)
    dropped_samples: int = 0
    final_theta: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.cost)


def td_error(agent: MpcAgent, tr: Transition, gamma: float) -> float:
    """cost + gamma V(s_next) - Q(s, a) under the agent's current parameters."""
    q, _ = agent.action_value(tr.s, tr.a)
    v_next, _ = agent.value(tr.s_next)
    return tr.cost + gamma * v_next - q


def q_update(agent: MpcAgent, batch: list[Transition], learning_rate: float, gamma: float = 0.9):
    """theta += learning_rate * mean(delta * grad_q) over the batch.

    Samples whose solves fail are dropped (and counted); an empty or fully
    dropped batch leaves theta untouched.

    Returns ``(theta_new, mean_abs_td, n_dropped)``.
    """
    theta = agent.get_theta()
    if not batch:
        return theta, 0.0, 0
    updates = []
    tds = []
    dropped = 0
    for tr in batch:
        try:
            q, sol_q = agent.action_value(tr.s, tr.a)
            v_next, _ = agent.value(tr.s_next)
            delta = tr.cost + gamma * v_next - q
            gq = grad_q_theta(agent.ocp, tr.s, tr.a, sol_q)
        except DiffMpcError:
            dropped += 1
            continue
        updates.append(delta * gq)
        tds.append(abs(delta))
    if not updates:
        return theta, 0.0, dropped
    mean_abs = float(np.mean(tds))
    if learning_rate != 0.0:
        theta = theta + learning_rate * np.mean(updates, axis=0)
        agent.set_theta(theta)
    return theta, mean_abs, dropped


def train(
    env,
    agent: MpcAgent,
    config: TrainConfig,
    on_step: Optional[Callable] = None,
) -> TrainHistory:
    """Greedy episodic training loop.

    Each episode resets the environment to the configured initial state; the
    policy action is applied, the transition is buffered, and updates happen
    per step or once per episode depending on the configured mode. Episodes
    abort after too many consecutive solver failures and training continues
    with the next one. ``on_step(episode, k, s, a, cost)`` is a recording
    hook used by the command-line layer.
    """
    history = TrainHistory()
    buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed)
    s0 = np.asarray(config.initial_state, dtype=float)
    for episode in range(config.episodes):
        seed = config.seed if episode == 0 else None
        s = env.reset(s0, seed=seed)
        history.theta.append(agent.get_theta())
        acc_cost = 0.0
        violations = 0
        tds = []
        consecutive_failures = 0
        episode_batch: list[Transition] = []
        for k in range(config.steps_per_episode):
            try:
                a, _ = agent.act(s)
            except DiffMpcError:
                consecutive_failures += 1
                history.dropped_samples += 1
                if consecutive_failures > config.max_consecutive_failures:
                    break
                continue
            consecutive_failures = 0
            s_next, cost = env.step(s, a)
            if on_step is not None:
                on_step(episode, k, s.copy(), np.atleast_1d(a).copy(), float(cost))
            tr = Transition(s, a, s_next, cost)
            buffer.push(tr)
            acc_cost += cost
            if hasattr(env, "violates") and env.violates(s_next):
                violations += 1
            if config.update_mode == PER_STEP:
                batch = [buffer.latest()] if config.batch_size <= 1 else buffer.sample(
                    min(config.batch_size, len(buffer))
                )
                _, mean_abs, dropped = q_update(agent, batch, config.learning_rate, config.gamma)
                history.dropped_samples += dropped
                if batch:
                    tds.append(mean_abs)
            else:
                episode_batch.append(tr)
            s = s_next
        if config.update_mode == EPISODE_BATCH and episode_batch:
            _, mean_abs, dropped = q_update(agent, episode_batch, config.learning_rate, config.gamma)
            history.dropped_samples += dropped
            tds.append(mean_abs)
        history.cost.append(acc_cost)
        history.violations.append(violations)
        history.mean_abs_td.append(float(np.mean(tds)) if tds else 0.0)
    history.final_theta = agent.get_theta()
    return history
