"""Exact tabular computations and numerical verification of the package's
mathematical identities.

Everything here works on small finite MDPs where all expectations can be
evaluated in closed form: occupancy measures come from dense linear solves,
never from samples, and "gradients" treat the table entries themselves as the
parameters. The five checks:

* online_offline_td_gap -- the expected temporal difference of a
  goal-conditioned policy under its own (goal-conditioned) discounted
  visitation equals the same expectation re-anchored to an arbitrary behavior
  policy's visitation, with the fresh action resampled from the
  goal-conditioned policy. Both sides telescope to (1-gamma) times the
  initial-state expectation.
* nce_gradient_decay -- when a goal-reaching value function is trained as a
  noise-contrastive binary classifier against k-times-oversampled goals, the
  gradients of both classification terms vanish as k grows, leaving only the
  ranking objective; the limit is an exact cancellation of two terms.
* pmi_identity_check -- a value table offset from the log density ratio
  log(p_future(g|s,a) / rho_plus(g)) by any per-(s,a) constant recovers the
  pointwise mutual information between (s, a) and the future state g, once
  the goal-partition term and the consistency factor are subtracted.
* ebm_weight_check -- the importance weight that corrects hindsight bias in
  the energy-based view (density ratio times marginal-to-conditional policy
  ratio) collapses to a single ratio of summed exponentiated values; both
  forms are computed independently and compared.
* her_equivalence_gap -- the quadratic objective (convex-conjugate term on
  hindsight goals minus a weighted single-step value bonus) has exactly the
  gradient of a squared Bellman residual under the two-valued goal-reaching
  reward, where the positive branch is the event that the hindsight goal was
  drawn as the immediate next state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import TabularMDP
from .errors import ConfigError

# Pass thresholds for the verification suite, by check name.
TOLERANCES = {
    "online-to-offline": 1e-10,
    "nce-monotonic": 0.0,
    "nce-decay-ratio": 1e-3,
    "nce-cancellation": 1e-12,
    "pmi-identity": 1e-12,
    "pmi-offset-invariance": 1e-12,
    "ebm-two-form": 1e-12,
    "ebm-const-weight": 1e-12,
    "her-equivalence": 1e-10,
}


@dataclass
class QTable:
    """Goal-conditioned value table indexed [state, action, goal-state]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ConfigError("QTable must be indexed [s, a, g]")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("QTable has non-finite entries")


@dataclass
class GoalPolicyTable:
    """Goal-conditioned policy indexed [state, goal, action]; rows stochastic."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ConfigError("GoalPolicyTable must be indexed [s, g, a]")
        if self.probs.min() < 0.0 or not np.allclose(
                self.probs.sum(axis=2), 1.0, rtol=0.0, atol=1e-12):
            raise ConfigError("policy rows must be distributions")


def boltzmann_policy(q: QTable) -> GoalPolicyTable:
    """pi(a|s,g) proportional to exp Q(s,a,g)."""
    v = q.values.transpose(0, 2, 1)  # [s, g, a]
    v = v - v.max(axis=2, keepdims=True)
    e = np.exp(v)
    return GoalPolicyTable(e / e.sum(axis=2, keepdims=True))


def random_qtable(n_states: int, n_actions: int, rng: np.random.Generator,
                  scale: float = 1.0) -> QTable:
    return QTable(scale * rng.standard_normal((n_states, n_actions, n_states)))


# ---------------------------------------------------------------------------
# Occupancy machinery
# ---------------------------------------------------------------------------

def state_dist_step(mdp: TabularMDP, rho_t: np.ndarray) -> np.ndarray:
    """One step of the state-distribution recursion under the behavior policy:
    rho'(s') = sum_{s,a} P(s'|s,a) mu(a|s) rho(s)."""
    rho_t = np.asarray(rho_t, dtype=np.float64)
    if rho_t.shape != (mdp.n_states,):
        raise ConfigError("distribution length != state count")
    return np.einsum("sax,sa,s->x", mdp.P, mdp.mu, rho_t)


def _behavior_kernel(mdp: TabularMDP) -> np.ndarray:
    """State-to-state kernel under mu: K[s, s'] = sum_a mu(a|s) P(s'|s,a)."""
    return np.einsum("sa,sax->sx", mdp.mu, mdp.P)


def discounted_visitation(mdp: TabularMDP) -> np.ndarray:
    """Geometric-weight state occupancy of the behavior policy, solved exactly
    from its fixed point rho = (1-gamma) rho0 + gamma K^T rho."""
    k = _behavior_kernel(mdp)
    n = mdp.n_states
    lhs = np.eye(n) - mdp.gamma * k.T
    return np.linalg.solve(lhs, (1.0 - mdp.gamma) * mdp.rho0)


def state_action_visitation(mdp: TabularMDP) -> np.ndarray:
    """Joint occupancy rho(s) mu(a|s) as an [s, a] table."""
    return discounted_visitation(mdp)[:, None] * mdp.mu


def policy_return(mdp: TabularMDP, rewards: np.ndarray) -> float:
    """Expected discounted return of the behavior policy for reward r(s, a):
    1/(1-gamma) * sum_{s,a} rho(s) mu(a|s) r(s,a)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError("reward table must be [s, a]")
    return float(np.sum(state_action_visitation(mdp) * rewards) / (1.0 - mdp.gamma))


def future_state_distribution(mdp: TabularMDP) -> np.ndarray:
    """Discounted distribution over all future states from each (s, a):

    p+(x|s,a) = (1-gamma) P(x|s,a)
                + gamma sum_{s',a'} P(s'|s,a) mu(a'|s') p+(x|s',a')

    Solved exactly as one linear system over the flattened (s, a) index.
    """
    s, a = mdp.n_states, mdp.n_actions
    p_flat = mdp.P.reshape(s * a, s)
    # K[(s,a), (s',a')] = P(s'|s,a) mu(a'|s')
    k = np.einsum("say,yb->sayb", mdp.P, mdp.mu).reshape(s * a, s * a)
    lhs = np.eye(s * a) - mdp.gamma * k
    sol = np.linalg.solve(lhs, (1.0 - mdp.gamma) * p_flat)
    return sol.reshape(s, a, s)


def conditional_visitation(mdp: TabularMDP, pi: GoalPolicyTable) -> np.ndarray:
    """Per-goal state occupancy [g, s] of the goal-conditioned policy, treating
    pi(.|., g) as a fixed behavior policy for each goal."""
    n = mdp.n_states
    out = np.empty((n, n))
    for g in range(n):
        kernel = np.einsum("sa,sax->sx", pi.probs[:, g, :], mdp.P)
        lhs = np.eye(n) - mdp.gamma * kernel.T
        out[g] = np.linalg.solve(lhs, (1.0 - mdp.gamma) * mdp.rho0)
    return out


def transition_operator(mdp: TabularMDP, q: QTable, pi: GoalPolicyTable) -> np.ndarray:
    """Expected next value [s, a, g]: sum_{s'} P(s'|s,a) sum_{a'} pi(a'|s',g) Q(s',a',g)."""
    v_next = np.einsum("xga,xag->xg", pi.probs, q.values)
    return np.einsum("sax,xg->sag", mdp.P, v_next)


# ---------------------------------------------------------------------------
# Identity checks
# ---------------------------------------------------------------------------

def online_offline_td_gap(mdp: TabularMDP, q: QTable, pi: GoalPolicyTable,
                          goal_dist: np.ndarray) -> float:
    """|LHS - RHS| of the online-to-offline expected-TD identity.

    LHS averages Q - gamma * (expected next Q) over the goal-conditioned
    policy's own occupancy; RHS anchors states and bootstrap actions to the
    behavior policy's occupancy while resampling only the evaluated action
    from the goal-conditioned policy. Both reduce to (1-gamma) times the
    initial-state expectation by telescoping, so the gap is float noise.
    """
    goal_dist = np.asarray(goal_dist, dtype=np.float64)
    pq = transition_operator(mdp, q, pi)
    td = q.values - mdp.gamma * pq
    rho_pi = conditional_visitation(mdp, pi)  # [g, s]
    lhs = float(np.einsum("g,gs,sga,sag->", goal_dist, rho_pi, pi.probs, td))
    rho_sa = state_action_visitation(mdp)
    fresh = np.einsum("g,s,sga,sag->", goal_dist, discounted_visitation(mdp),
                      pi.probs, q.values)
    boot = np.einsum("g,sa,sag->", goal_dist, rho_sa, pq)
    rhs = float(fresh - mdp.gamma * boot)
    return abs(lhs - rhs)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class NceDecayResult:
    k_values: np.ndarray
    negative_norms: np.ndarray
    positive_norms: np.ndarray
    cancellation_gap: float

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.negative_norms) < 0.0)
                    and np.all(np.diff(self.positive_norms) < 0.0))

    def decay_ratio(self) -> float:
        return float(max(self.negative_norms[-1] / self.negative_norms[0],
                         self.positive_norms[-1] / self.positive_norms[0]))


def nce_gradient_decay(q_goals: np.ndarray, goal_dist: np.ndarray,
                       k_values) -> NceDecayResult:
    """Gradient norms of the two noise-contrastive classification terms for one
    (state, action) slice of values over goals, at increasing noise ratios k.

    Classifier logit: Delta(g, k) = q(g) - log E_{goal_dist}[exp q] - log k.
    The negative term is k * log(1 - sigmoid(Delta)) averaged over goal_dist;
    the positive term is log(1 + exp Delta) averaged over goal_dist. Table
    entries are the parameters. Also returns the limit cancellation gap: the
    two expressions whose difference is the k -> infinity negative-term
    gradient, evaluated independently.
    """
    q_goals = np.asarray(q_goals, dtype=np.float64)
    goal_dist = np.asarray(goal_dist, dtype=np.float64)
    if q_goals.shape != goal_dist.shape or q_goals.ndim != 1:
        raise ConfigError("value slice and goal distribution must be equal-length vectors")
    k_values = np.asarray(list(k_values), dtype=np.float64)
    if np.any(k_values <= 0.0) or np.any(np.diff(k_values) <= 0.0):
        raise ConfigError("k values must be positive and ascending")
    shift = q_goals.max()
    log_z = shift + np.log(np.sum(goal_dist * np.exp(q_goals - shift)))
    ratio = np.exp(q_goals - log_z)  # exp q / E[exp q]
    delta0 = q_goals - log_z
    neg_norms, pos_norms = [], []
    for k in k_values:
        sig = _sigmoid(delta0 - np.log(k))
        # d/dq_h of E_g[k log(1 - sigmoid(Delta_g))]
        coeff = k * sig * goal_dist
        neg = -coeff + coeff.sum() * goal_dist * ratio
        neg_norms.append(np.linalg.norm(neg))
        # d/dq_h of E_g[log(1 + exp Delta_g)] (positive-sample term)
        pcoeff = sig * goal_dist
        pos = pcoeff - pcoeff.sum() * goal_dist * ratio
        pos_norms.append(np.linalg.norm(pos))
    term_direct = goal_dist * ratio
    term_via_partition = np.sum(goal_dist * ratio) * (goal_dist * ratio)
    gap = float(np.max(np.abs(term_direct - term_via_partition)))
    return NceDecayResult(k_values, np.array(neg_norms), np.array(pos_norms), gap)


@dataclass
class PmiCheckResult:
    max_error: float
    n_excluded: int
    pmi_estimate: np.ndarray  # [s, a, g]


def pmi_identity_check(mdp: TabularMDP, offsets: np.ndarray) -> PmiCheckResult:
    """Pointwise-mutual-information identity on a tabular MDP.

    Constructs Q(s,a,g) = log(p+(g|s,a) / rho+(g)) + c(s,a) for the arbitrary
    offset field c, with rho+ the hindsight goal marginal under the behavior
    occupancy, then checks pointwise that

        PMI((s,a), g) = Q - log E_{rho+}[exp Q] - log D

    where D = [rho+(g) / p+(g|s,a)] * [exp Q / E_{rho+}[exp Q]] is the
    consistency factor the temporal difference attains at the saddle point.
    Goals with zero probability are excluded and counted.
    """
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError("offset field must be [s, a]")
    p_plus = future_state_distribution(mdp)
    rho_sa = state_action_visitation(mdp)
    rho_plus = np.einsum("sa,sag->g", rho_sa, p_plus)
    valid = (p_plus > 0.0) & (rho_plus[None, None, :] > 0.0)
    n_excluded = int((~valid).sum())
    safe_p = np.where(valid, p_plus, 1.0)
    safe_rho = np.where(rho_plus > 0.0, rho_plus, 1.0)
    pmi = np.log(safe_p) - np.log(safe_rho)[None, None, :]
    q = pmi + offsets[:, :, None]
    shift = q.max(axis=2, keepdims=True)
    log_z = shift[:, :, 0] + np.log(np.einsum("g,sag->sa", rho_plus, np.exp(q - shift)))
    estimate = q - log_z[:, :, None]
    log_d = np.log(safe_rho)[None, None, :] - np.log(safe_p) + q - log_z[:, :, None]
    err = np.abs(pmi - (estimate - log_d))
    max_error = float(err[valid].max()) if valid.any() else 0.0
    return PmiCheckResult(max_error, n_excluded, estimate)


@dataclass
class EbmWeightResult:
    two_form_gap: float
    weight: np.ndarray  # [s, a, s', g]


def ebm_weight_check(q: QTable, goal_dist: np.ndarray, gamma: float) -> EbmWeightResult:
    """Hindsight importance weight, two ways.

    Long form: (density ratio exp Q / E[exp Q]) * (goal-marginalized policy /
    Boltzmann policy), with each factor normalized independently. Closed form:
    sum_a exp Q(s',a,g) / sum_a E_goals[exp Q(s',a,.)]. Returns the max
    absolute disagreement, plus the full contrastive weight

        w(s,a,s',g) = exp Q(s,a,g) / E[exp Q(s,a,.)] - gamma * closed_form(s',g)

    which collapses to 1 - gamma for a constant table.
    """
    goal_dist = np.asarray(goal_dist, dtype=np.float64)
    v = q.values
    if goal_dist.shape != (v.shape[2],):
        raise ConfigError("goal distribution length != goal count")
    expq = np.exp(v)  # [s, a, g]
    marg = expq @ goal_dist  # E over goals: [s, a]
    pi = expq / expq.sum(axis=1, keepdims=True)  # Boltzmann over actions [s, a, g]
    pi_hat = marg / marg.sum(axis=1, keepdims=True)  # [s, a]
    ratio = expq / marg[:, :, None]  # density ratio [s, a, g]
    long_form = ratio * pi_hat[:, :, None] / pi
    closed = expq.sum(axis=1) / marg.sum(axis=1)[:, None]  # [s', g]
    gap = float(np.abs(long_form - closed[:, None, :]).max())
    weight = ratio[:, :, None, :] - gamma * closed[None, None, :, :]
    return EbmWeightResult(gap, weight)


def her_equivalence_gap(q: QTable, q_target: QTable, mdp: TabularMDP,
                        r_bar: float, beta: float) -> float:
    """Max absolute difference between the gradients of two losses.

    Loss A: E over behavior occupancy, next states and hindsight goals of
    f*(-(Q - gamma * backup)) - beta * (1-gamma) * Q(s,a,s'), with
    f*(x) = (x + r_bar)^2 / 2 and the backup through the frozen target table.

    Loss B: the squared Bellman residual / 2 under the two-valued reward
    r_bar + beta on the branch where the hindsight goal is the immediate next
    state, r_bar on the strictly-beyond branch.

    Expectations are exact; gradients treat the entries of Q as parameters.
    """
    v, vt = q.values, q_target.values
    if v.shape != (mdp.n_states, mdp.n_actions, mdp.n_states) or vt.shape != v.shape:
        raise ConfigError("value tables must be [s, a, g] over the MDP's states")
    rho_sa = state_action_visitation(mdp)
    p_plus = future_state_distribution(mdp)
    # Greedy max backup through the frozen target, by goal.
    next_best = vt.max(axis=1)  # [s', g]
    backup = mdp.gamma * np.einsum("sax,xg->sag", mdp.P, next_best)
    resid = v - r_bar - backup  # d/dQ of f*(-(Q - backup)) at each entry
    grad_a = rho_sa[:, :, None] * (p_plus * resid - beta * (1.0 - mdp.gamma) * mdp.P)
    # Beyond-one-step kernel: W[s,a,x] = sum_{s',a'} P(s'|s,a) mu(a'|s') p+(x|s',a')
    beyond = np.einsum("say,yb,ybx->sax", mdp.P, mdp.mu, p_plus)
    resid_pos = v - (r_bar + beta) - backup
    grad_b = rho_sa[:, :, None] * ((1.0 - mdp.gamma) * mdp.P * resid_pos
                                   + mdp.gamma * beyond * resid)
    return float(np.abs(grad_a - grad_b).max())
