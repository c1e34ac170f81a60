"""The six training updates compared in this package, plus action selection.

All updates are pure functions of (net, target, batch, config, env) that
return a loss report and a flat parameter gradient; the training loop owns
the optimizer and the target-network schedule. Loss conventions:

* gcsl       -- cross-entropy imitation of the batch actions toward the
                relabeled goals (hindsight behavior cloning).
* her01/her10 -- Q-learning on the two-valued goal-reaching reward
                (success gives r_bar + beta, failure gives r_bar), squared
                Bellman residual / 2 with a max backup through the target net.
* her_sql    -- same, with a soft backup temperature * logsumexp(Q/temperature).
* her_hbc    -- her10 plus an ungated behavior-cloning term on the
                hindsight-relabeled part of the batch.
* hdm        -- Q-learning toward the constant r_bar, a linear bonus that
                pushes up Q(s, a, achieved_goal(s')), and a behavior-cloning
                term gated per sample by the indicator
                Q(s,a,g) - max_a' Q(s',a',g) < log(gamma_hdm),
                i.e. the action is imitated only when the agent's own value
                estimates say it moves at least -log(gamma_hdm) steps closer
                to the goal. The indicator and TD targets are gradient-free.

Every report satisfies total == td_component + bc_component +
positive_push_component (the components already carry their weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigError, NumericalError
from .replay import KIND_BEHAVIORAL, RelabeledBatch

ALGO_KINDS = ("gcsl", "her01", "her10", "her_sql", "her_hbc", "hdm")
ACTION_MODES = ("greedy", "epsilon_greedy", "softmax")


@dataclass
class AlgoConfig:
    """Hyper-parameters of one training update.

    r_bar defaults to the kind's conventional value when left as None:
    0 for her01 (rewards 1/0) and -1 otherwise (rewards 0/-1).
    """

    kind: str = "hdm"
    gamma: float = 0.98
    gamma_hdm: float = 0.85
    beta: float = 1.0
    r_bar: float | None = None
    sql_temperature: float = 0.2
    epsilon: float = 0.2
    batch_size: int = 256
    target_update_interval: int = 10
    updates_per_round: int = 50
    env_steps_per_round: int = 50
    initial_random_trajectories: int = 200

    def __post_init__(self):
        if self.kind not in ALGO_KINDS:
            raise ConfigError(f"unknown algorithm kind {self.kind!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 < self.gamma_hdm <= 1.0:
            raise ConfigError("gamma_hdm must lie in (0, 1]")
        if self.beta < 0.0:
            raise ConfigError("beta must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.r_bar is None:
            self.r_bar = 0.0 if self.kind == "her01" else -1.0


@dataclass
class LossReport:
    """Loss breakdown for one update.

    The three components are the actual (already weighted) summands, so
    total == td_component + bc_component + positive_push_component always;
    positive_push_component is negative of the pushed-up value mean and is
    nonzero only for hdm. imitated_fraction is the mean of the imitation
    gate (1.0 for the ungated cloning losses, 0.0 for pure TD)."""

    total: float
    td_component: float = 0.0
    bc_component: float = 0.0
    positive_push_component: float = 0.0
    imitated_fraction: float = 0.0


def her_reward(s_next: np.ndarray, goal: np.ndarray, env, r_bar: float,
               beta: float) -> float:
    """Two-valued goal-reaching reward: r_bar + beta when the next state
    achieves the goal (within the env success threshold), r_bar otherwise."""
    if env.is_success(env.achieved_goal(s_next), goal):
        return r_bar + beta
    return r_bar


def her_reward_many(next_states: np.ndarray, goals: np.ndarray, env,
                    r_bar: float, beta: float) -> np.ndarray:
    ags = env.achieved_goal_many(next_states)
    hit = np.linalg.norm(ags - goals, axis=1) <= env.success_threshold
    return np.where(hit, r_bar + beta, r_bar)


def softmax_rows(values: np.ndarray) -> np.ndarray:
    shifted = values - values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def soft_value(values: np.ndarray, temperature: float) -> np.ndarray | float:
    """Soft maximum temperature * logsumexp(values / temperature); approaches
    the hard max as the temperature goes to zero."""
    if temperature <= 0.0:
        raise ConfigError("soft backup temperature must be positive")
    return temperature * nn.logsumexp(np.asarray(values) / temperature, axis=-1)


def greedy_action(values: np.ndarray) -> int:
    """Argmax with ties broken by the lowest action index."""
    return int(np.argmax(values))


def imitation_indicator(q_taken: np.ndarray, q_next_max: np.ndarray,
                        gamma_hdm: float) -> np.ndarray:
    """Per-sample gate: imitate iff Q(s,a,g) - max_a' Q(s',a',g) < log(gamma_hdm).

    Depends only on Q differences, so it is invariant to adding any per-goal
    constant to the value table.
    """
    if gamma_hdm <= 0.0:
        raise ConfigError("gamma_hdm must be positive (log is taken)")
    return q_taken - q_next_max < np.log(gamma_hdm)


def _finite_or_raise(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {what}: {value!r}")
    return float(value)


def _batch_inputs(batch: RelabeledBatch) -> np.ndarray:
    return np.concatenate([batch.states, batch.goals], axis=1)


def gcsl_loss(net: nn.Mlp, batch: RelabeledBatch):
    """Cross-entropy of the taken actions under softmax(logits)."""
    b = len(batch)
    logits, cache = nn.forward_many_cached(net, _batch_inputs(batch))
    lse = nn.logsumexp(logits, axis=1)
    taken = logits[np.arange(b), batch.actions]
    loss = float(np.mean(lse - taken))
    grads = softmax_rows(logits)
    grads[np.arange(b), batch.actions] -= 1.0
    grads /= b
    grad = nn.backward_many(net, cache, grads)
    _finite_or_raise(loss, "behavior-cloning loss")
    return LossReport(total=loss, bc_component=loss, imitated_fraction=1.0), grad


def _td_core(net, target, batch, cfg, env, backup: str):
    """Shared TD machinery. Returns per-sample pieces used by the Q losses."""
    b = len(batch)
    x = _batch_inputs(batch)
    logits, cache = nn.forward_many_cached(net, x)
    q_taken = logits[np.arange(b), batch.actions]
    xn = np.concatenate([batch.next_states, batch.goals], axis=1)
    q_next_target = nn.forward_many(target.net, xn)
    if backup == "max":
        boot = q_next_target.max(axis=1)
    elif backup == "soft":
        boot = soft_value(q_next_target, cfg.sql_temperature)
    else:  # pragma: no cover
        raise ConfigError(f"unknown backup {backup!r}")
    rewards = her_reward_many(batch.next_states, batch.goals, env, cfg.r_bar, cfg.beta)
    residual = q_taken - (rewards + cfg.gamma * boot)
    td_loss = float(0.5 * np.mean(residual**2))
    out_grads = np.zeros_like(logits)
    out_grads[np.arange(b), batch.actions] = residual / b
    return logits, cache, q_taken, td_loss, out_grads


def her_q_update(net: nn.Mlp, target: nn.TargetCopy, batch: RelabeledBatch,
                 cfg: AlgoConfig, env):
    """Squared Bellman residual / 2 with a max backup; no terminal masking."""
    _, cache, _, td_loss, out_grads = _td_core(net, target, batch, cfg, env, "max")
    _finite_or_raise(td_loss, "TD loss")
    grad = nn.backward_many(net, cache, out_grads)
    return LossReport(total=td_loss, td_component=td_loss), grad


def sql_q_update(net: nn.Mlp, target: nn.TargetCopy, batch: RelabeledBatch,
                 cfg: AlgoConfig, env):
    """TD update with the soft backup temperature * logsumexp(Q / temperature)."""
    _, cache, _, td_loss, out_grads = _td_core(net, target, batch, cfg, env, "soft")
    _finite_or_raise(td_loss, "soft TD loss")
    grad = nn.backward_many(net, cache, out_grads)
    return LossReport(total=td_loss, td_component=td_loss), grad


def her_hbc_update(net: nn.Mlp, target: nn.TargetCopy, batch: RelabeledBatch,
                   cfg: AlgoConfig, env):
    """TD loss plus beta * ungated behavior cloning on the Q-softmax, averaged
    over the hindsight-relabeled (non-behavioral) part of the batch."""
    b = len(batch)
    logits, cache, q_taken, td_loss, out_grads = _td_core(net, target, batch, cfg, env, "max")
    mask = batch.kinds != KIND_BEHAVIORAL
    n_rel = int(mask.sum())
    bc_loss = 0.0
    if cfg.beta > 0.0 and n_rel > 0:
        lse = nn.logsumexp(logits, axis=1)
        bc_loss = cfg.beta * float(np.mean((lse - q_taken)[mask]))
        w = cfg.beta / n_rel
        soft = softmax_rows(logits)
        out_grads[mask] += w * soft[mask]
        rows = np.flatnonzero(mask)
        out_grads[rows, batch.actions[rows]] -= w
    total = _finite_or_raise(td_loss + bc_loss, "loss")
    grad = nn.backward_many(net, cache, out_grads)
    return LossReport(total=total, td_component=td_loss, bc_component=bc_loss,
                      imitated_fraction=1.0), grad


def hdm_update(net: nn.Mlp, target: nn.TargetCopy, batch: RelabeledBatch,
               cfg: AlgoConfig, env):
    """TD toward the constant r_bar, a push-up of Q(s, a, achieved_goal(s')),
    and indicator-gated behavior cloning (see the module docstring)."""
    if cfg.gamma_hdm <= 0.0:
        raise ConfigError("gamma_hdm must be positive (log is taken)")
    b = len(batch)
    rows = np.arange(b)
    x = _batch_inputs(batch)
    xn = np.concatenate([batch.next_states, batch.goals], axis=1)

    bc_loss = 0.0
    push_loss = 0.0
    imitated = 0.0
    if cfg.beta > 0.0:
        # One stacked pass covers both the (s, goal) logits and the logits at
        # the reached goal (s, achieved_goal(s')) used by the linear bonus.
        x_reach = np.concatenate([batch.states, env.achieved_goal_many(batch.next_states)], axis=1)
        stacked, cache = nn.forward_many_cached(net, np.concatenate([x, x_reach]))
        logits, q_reach = stacked[:b], stacked[b:]
    else:
        logits, cache = nn.forward_many_cached(net, x)
    q_taken = logits[rows, batch.actions]
    boot = nn.forward_many(target.net, xn).max(axis=1)
    residual = q_taken - (cfg.r_bar + cfg.gamma * boot)
    td_loss = float(0.5 * np.mean(residual**2))
    out_grads = np.zeros_like(logits)
    out_grads[rows, batch.actions] = residual / b

    if cfg.beta > 0.0:
        # Gate compares online values at s and s'; no gradient flows through it.
        q_next_online_max = nn.forward_many(net, xn).max(axis=1)
        gate = imitation_indicator(q_taken, q_next_online_max, cfg.gamma_hdm)
        imitated = float(np.mean(gate))
        lse = nn.logsumexp(logits, axis=1)
        bc_loss = cfg.beta * float(np.mean(gate * (lse - q_taken)))
        if gate.any():
            w = cfg.beta / b
            soft = softmax_rows(logits)
            out_grads[gate] += w * soft[gate]
            hit = np.flatnonzero(gate)
            out_grads[hit, batch.actions[hit]] -= w
        # Linear bonus on the value of reaching the actually-reached next state.
        push_w = cfg.beta * (1.0 - cfg.gamma_hdm)
        push_loss = -push_w * float(np.mean(q_reach[rows, batch.actions]))
        push_grads = np.zeros_like(q_reach)
        push_grads[rows, batch.actions] = -push_w / b
        grad = nn.backward_many(net, cache, np.concatenate([out_grads, push_grads]))
    else:
        grad = nn.backward_many(net, cache, out_grads)

    total = _finite_or_raise(td_loss + bc_loss + push_loss, "loss")
    return LossReport(total=total, td_component=td_loss, bc_component=bc_loss,
                      positive_push_component=push_loss,
                      imitated_fraction=imitated), grad


_UPDATES = {
    "gcsl": None,  # handled separately (no target net, no reward)
    "her01": her_q_update,
    "her10": her_q_update,
    "her_sql": sql_q_update,
    "her_hbc": her_hbc_update,
    "hdm": hdm_update,
}


def update_step(net: nn.Mlp, target: nn.TargetCopy, batch: RelabeledBatch,
                cfg: AlgoConfig, env):
    """Dispatch one optimization step's loss/gradient for cfg.kind."""
    if cfg.kind == "gcsl":
        return gcsl_loss(net, batch)
    return _UPDATES[cfg.kind](net, target, batch, cfg, env)


def select_action(net: nn.Mlp, state: np.ndarray, goal: np.ndarray, mode: str,
                  epsilon: float, rng: np.random.Generator | None) -> int:
    """Pick a discrete action for (state, goal).

    greedy: argmax (ties to the lowest index). epsilon_greedy: uniform with
    probability epsilon, else greedy. softmax: sample the Boltzmann policy of
    the outputs.
    """
    if mode not in ACTION_MODES:
        raise ValueError(f"unknown action mode {mode!r}")
    values = nn.mlp_forward(net, np.concatenate([state, goal]))
    if mode == "epsilon_greedy":
        if rng.random() < epsilon:
            return int(rng.integers(len(values)))
        return greedy_action(values)
    if mode == "softmax":
        probs = softmax_rows(values)
        return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right").clip(0, len(values) - 1))
    return greedy_action(values)


def behavior_mode(kind: str) -> str:
    """Exploration policy used while collecting: the cloning learner samples
    its own softmax policy, the Q-based learners act epsilon-greedy.

    (Greedy-with-noise collection for the cloning learner locks the
    cross-entropy target onto its own argmax and collapses; proportional
    sampling keeps the imitation loop corrective.)"""
    return "softmax" if kind == "gcsl" else "epsilon_greedy"
