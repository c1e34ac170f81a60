"""Experiment orchestration: run configs, seeded training, ablations, and the
identity-verification suite.

A run is a pure function of its RunConfig: the master seed is split into
fixed per-component streams (network init, environment draws, replay
sampling, action noise, evaluation) so identical configs produce
byte-identical metrics CSVs up to the wall-clock column.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn, oracle
from .algos import AlgoConfig, behavior_mode, select_action, update_step
from .envs import FourRooms, make_env, random_tabular_mdp
from .errors import ConfigError
from .metrics import CSV_HEADER, MetricsRecord, evaluate
from .replay import ReplayBuffer, Trajectory, sample_batch

SEED_COMPONENTS = ("net", "env", "replay", "action", "eval")


def split_seed(master_seed: int) -> dict:
    """Derive the per-component seed sequences, in documented order."""
    children = np.random.SeedSequence(master_seed).spawn(len(SEED_COMPONENTS))
    return dict(zip(SEED_COMPONENTS, children))


@dataclass
class RunConfig:
    env: str = "four-rooms"
    seed: int = 0
    total_env_steps: int = 100_000
    eval_interval: int = 2_000
    n_eval_episodes: int = 200
    out_dir: str = "runs/run"
    replay_capacity: int = 10_000
    hindsight_ratio: float = 0.85
    next_state_ratio: float = 0.2
    hidden_sizes: tuple[int, ...] = (64, 64)
    learning_rate: float = 5e-4
    polyak: float = 0.995
    algo: AlgoConfig = field(default_factory=AlgoConfig)

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.total_env_steps < 0 or self.eval_interval < 1:
            raise ConfigError("need total_env_steps >= 0 and eval_interval >= 1")
        if self.n_eval_episodes < 1:
            raise ConfigError("n_eval_episodes must be >= 1")
        if not (0.0 <= self.hindsight_ratio <= 1.0 and 0.0 <= self.next_state_ratio <= 1.0):
            raise ConfigError("relabel ratios must lie in [0, 1]")
        if not 0.0 <= self.polyak <= 1.0:
            raise ConfigError("polyak coefficient must lie in [0, 1]")


# Flat dotted-key schema for config files; (attribute path, parser).
_CONFIG_KEYS = {
    "env": (("env",), str),
    "seed": (("seed",), int),
    "total_env_steps": (("total_env_steps",), int),
    "eval_interval": (("eval_interval",), int),
    "n_eval_episodes": (("n_eval_episodes",), int),
    "out_dir": (("out_dir",), str),
    "replay.capacity": (("replay_capacity",), int),
    "replay.hindsight_ratio": (("hindsight_ratio",), float),
    "replay.next_state_ratio": (("next_state_ratio",), float),
    "net.hidden_sizes": (("hidden_sizes",), lambda v: tuple(int(x) for x in v.split(",") if x)),
    "net.learning_rate": (("learning_rate",), float),
    "net.polyak": (("polyak",), float),
    "algo.kind": (("algo", "kind"), str),
    "algo.gamma": (("algo", "gamma"), float),
    "algo.gamma_hdm": (("algo", "gamma_hdm"), float),
    "algo.beta": (("algo", "beta"), float),
    "algo.r_bar": (("algo", "r_bar"), float),
    "algo.sql_temperature": (("algo", "sql_temperature"), float),
    "algo.epsilon": (("algo", "epsilon"), float),
    "algo.batch_size": (("algo", "batch_size"), int),
    "algo.target_update_interval": (("algo", "target_update_interval"), int),
    "algo.updates_per_round": (("algo", "updates_per_round"), int),
    "algo.env_steps_per_round": (("algo", "env_steps_per_round"), int),
    "algo.initial_random_trajectories": (("algo", "initial_random_trajectories"), int),
}


def config_to_items(cfg: RunConfig) -> dict[str, str]:
    out = {}
    for key, (path, _) in _CONFIG_KEYS.items():
        obj = cfg
        for attr in path[:-1]:
            obj = getattr(obj, attr)
        value = getattr(obj, path[-1])
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out[key] = str(value)
    return out


def config_from_items(items: dict[str, str]) -> RunConfig:
    unknown = sorted(set(items) - set(_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    top: dict = {}
    algo: dict = {}
    for key, raw in items.items():
        path, parse = _CONFIG_KEYS[key]
        try:
            value = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        if path[0] == "algo":
            algo[path[1]] = value
        else:
            top[path[0]] = value
    # AlgoConfig resolves r_bar's kind-dependent default when the key is absent.
    return RunConfig(algo=AlgoConfig(**algo), **top)


def save_config(path, cfg: RunConfig) -> None:
    items = config_to_items(cfg)
    with open(path, "w", encoding="ascii") as f:
        for key in sorted(items):
            f.write(f"{key} = {items[key]}\n")


def load_config(path) -> RunConfig:
    items = {}
    with open(path, encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            items[key.strip()] = value.strip()
    return config_from_items(items)


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Return a copy of cfg with dotted-key overrides applied."""
    items = config_to_items(cfg)
    items.update(overrides)
    return config_from_items(items)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _random_trajectory(env, env_rng, action_rng) -> Trajectory:
    state = env.reset(env_rng)
    goal = env.sample_goal(env_rng)
    states = [state]
    actions = []
    for _ in range(env.horizon):
        a = int(action_rng.integers(env.action_count))
        state = env.step(state, a)
        actions.append(a)
        states.append(state)
    states = np.stack(states)
    return Trajectory(states, np.array(actions), goal, env.achieved_goal_many(states))


def train(cfg: RunConfig) -> MetricsRecord:
    """Run one training job; returns the final evaluation record.

    Layout of cfg.out_dir afterwards: config.cfg, metrics.csv (row-atomic
    appends), latest.ckpt (refreshed at each evaluation), final.ckpt.
    """
    env = make_env(cfg.env)
    if not isinstance(env, FourRooms):
        raise ConfigError(f"environment {cfg.env!r} does not support rollouts")
    a = cfg.algo
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.cfg", cfg)

    seeds = split_seed(cfg.seed)
    net_rng = np.random.default_rng(seeds["net"])
    env_rng = np.random.default_rng(seeds["env"])
    replay_rng = np.random.default_rng(seeds["replay"])
    action_rng = np.random.default_rng(seeds["action"])
    eval_seq = seeds["eval"]

    sizes = (env.state_dim + env.goal_dim, *cfg.hidden_sizes, env.action_count)
    net = nn.init_mlp(sizes, net_rng)
    target = nn.TargetCopy.of(net, tau=cfg.polyak, interval=a.target_update_interval)
    adam = nn.AdamState.fresh(net.params.size, lr=cfg.learning_rate)
    buf = ReplayBuffer(cfg.replay_capacity)
    for _ in range(a.initial_random_trajectories):
        buf.append(_random_trajectory(env, env_rng, action_rng))

    start = time.perf_counter()
    records: list[MetricsRecord] = []
    loss_sums = np.zeros(4)  # total, td, bc, imitated
    updates_since_eval = 0

    metrics_file = open(out / "metrics.csv", "w", encoding="ascii")
    metrics_file.write(CSV_HEADER + "\n")
    metrics_file.flush()

    def run_eval(env_step: int) -> None:
        nonlocal loss_sums, updates_since_eval
        eval_rng = np.random.default_rng(eval_seq.spawn(1)[0])
        success = evaluate(net, env, cfg.n_eval_episodes, eval_rng)
        if updates_since_eval:
            mean = loss_sums / updates_since_eval
        else:
            mean = np.full(4, np.nan)
        rec = MetricsRecord(env_step, a.kind, cfg.seed, success, mean[0], mean[1],
                            mean[2], mean[3], time.perf_counter() - start)
        metrics_file.write(rec.to_csv_row() + "\n")
        metrics_file.flush()
        nn.save_checkpoint(out / "latest.ckpt", net)
        records.append(rec)
        loss_sums = np.zeros(4)
        updates_since_eval = 0

    mode = behavior_mode(a.kind)
    env_step = 0
    n_updates = 0
    next_eval = cfg.eval_interval
    state = env.reset(env_rng)
    goal = env.sample_goal(env_rng)
    ep_states, ep_actions = [state], []

    try:
        run_eval(0)
        while env_step < cfg.total_env_steps:
            steps = min(a.env_steps_per_round, cfg.total_env_steps - env_step)
            for _ in range(steps):
                act = select_action(net, state, goal, mode, a.epsilon, action_rng)
                state = env.step(state, act)
                ep_actions.append(act)
                ep_states.append(state)
                env_step += 1
                if len(ep_actions) == env.horizon:
                    stacked = np.stack(ep_states)
                    buf.append(Trajectory(stacked, np.array(ep_actions), goal,
                                          env.achieved_goal_many(stacked)))
                    state = env.reset(env_rng)
                    goal = env.sample_goal(env_rng)
                    ep_states, ep_actions = [state], []
            if len(buf):
                n_round_updates = round(steps * a.updates_per_round / a.env_steps_per_round)
                for _ in range(n_round_updates):
                    batch = sample_batch(buf, a.batch_size, cfg.hindsight_ratio,
                                         cfg.next_state_ratio, replay_rng)
                    report, grad = update_step(net, target, batch, a, env)
                    nn.adam_step(net.params, grad, adam)
                    n_updates += 1
                    loss_sums += (report.total, report.td_component,
                                  report.bc_component, report.imitated_fraction)
                    updates_since_eval += 1
                    if n_updates % a.target_update_interval == 0:
                        nn.polyak_update(target, net.params)
            while next_eval <= env_step:
                run_eval(env_step)
                next_eval += cfg.eval_interval
        if records[-1].env_step != env_step:
            run_eval(env_step)
    finally:
        metrics_file.close()
    nn.save_checkpoint(out / "final.ckpt", net)
    return records[-1]


ABLATION_PARAMS = ("gamma_hdm", "beta")


def ablate(base: RunConfig, param: str, values, seeds=(0,)) -> list[dict]:
    """One training run per (value, seed); returns and writes the final
    success table."""
    values = list(values)
    if param not in ABLATION_PARAMS:
        raise ConfigError(f"ablation parameter must be one of {ABLATION_PARAMS}")
    if not values:
        raise ConfigError("ablation needs at least one value")
    rows = []
    base_out = Path(base.out_dir)
    for value in values:
        for seed in seeds:
            cfg = apply_overrides(base, {
                f"algo.{param}": str(value),
                "seed": str(seed),
                "out_dir": str(base_out / f"ablate-{param}" / str(value) / f"seed{seed}"),
            })
            final = train(cfg)
            rows.append({"param": param, "value": float(value), "seed": seed,
                         "final_success": final.success_rate})
    base_out.mkdir(parents=True, exist_ok=True)
    table = base_out / f"ablate-{param}.csv"
    with open(table, "w", encoding="ascii") as f:
        f.write("param,value,seed,final_success\n")
        for r in rows:
            f.write(f"{r['param']},{r['value']!r},{r['seed']},{r['final_success']!r}\n")
    return rows


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    seed: int
    error: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<24} seed={self.seed:<4d} "
                f"error={self.error: .3e} tol={self.tolerance:.1e} {status}")


@dataclass
class VerifyReport:
    suite: str
    checks: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({
            "suite": self.suite,
            "all_passed": self.all_passed,
            "checks": [dataclasses.asdict(c) for c in self.checks],
        }, indent=2)


_SUITES = ("all", "online-to-offline", "nce", "pmi", "ebm", "her")

# Instance shapes cycled by the randomized checks (small enough for exact solves).
_SHAPES = ((4, 2), (5, 3), (6, 3), (3, 2), (6, 2), (5, 2))
_GAMMAS = (0.5, 0.9, 0.99)


def _tol(name: str, overrides) -> float:
    if overrides and name in overrides:
        return float(overrides[name])
    return oracle.TOLERANCES[name]


def verify(suite: str = "all", n_instances: int = 20,
           tolerance_overrides: dict | None = None, base_seed: int = 0) -> VerifyReport:
    """Run the tabular identity checks and collect PASS/FAIL results."""
    if suite not in _SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {_SUITES}")
    if n_instances < 1:
        raise ConfigError("need at least one instance")
    checks: list[CheckResult] = []

    def add(name, seed, error):
        tol = _tol(name, tolerance_overrides)
        checks.append(CheckResult(name, seed, float(error), tol, bool(error < tol)))

    if suite in ("all", "online-to-offline"):
        for i in range(n_instances):
            s, a = _SHAPES[i % len(_SHAPES)]
            gamma = _GAMMAS[i % len(_GAMMAS)]
            mdp = random_tabular_mdp(s, a, gamma, seed=base_seed + i)
            rng = np.random.default_rng(base_seed + 1000 + i)
            q = oracle.random_qtable(s, a, rng)
            pi = oracle.boltzmann_policy(q)
            add("online-to-offline", base_seed + i,
                oracle.online_offline_td_gap(mdp, q, pi, mdp.rho_plus))

    if suite in ("all", "nce"):
        ks = (1.0, 10.0, 1e2, 1e3, 1e4, 1e6)
        for i in range(max(1, n_instances // 4)):
            rng = np.random.default_rng(base_seed + 2000 + i)
            q_slice = rng.standard_normal(6)
            dist = rng.dirichlet(np.ones(6))
            res = oracle.nce_gradient_decay(q_slice, dist, ks)
            worst_step = max(np.diff(res.negative_norms).max(),
                             np.diff(res.positive_norms).max())
            add("nce-monotonic", base_seed + 2000 + i, worst_step)
            add("nce-decay-ratio", base_seed + 2000 + i, res.decay_ratio())
            add("nce-cancellation", base_seed + 2000 + i, res.cancellation_gap)

    if suite in ("all", "pmi"):
        for i in range(max(1, n_instances // 4)):
            s, a = _SHAPES[i % len(_SHAPES)]
            mdp = random_tabular_mdp(s, a, _GAMMAS[i % len(_GAMMAS)], seed=base_seed + 3000 + i)
            rng = np.random.default_rng(base_seed + 3500 + i)
            off_a = rng.standard_normal((s, a))
            off_b = rng.standard_normal((s, a))
            res_a = oracle.pmi_identity_check(mdp, off_a)
            res_b = oracle.pmi_identity_check(mdp, off_b)
            add("pmi-identity", base_seed + 3000 + i,
                max(res_a.max_error, res_b.max_error))
            add("pmi-offset-invariance", base_seed + 3000 + i,
                np.abs(res_a.pmi_estimate - res_b.pmi_estimate).max())

    if suite in ("all", "ebm"):
        for i in range(max(1, n_instances // 4)):
            s, a = _SHAPES[i % len(_SHAPES)]
            gamma = _GAMMAS[i % len(_GAMMAS)]
            rng = np.random.default_rng(base_seed + 4000 + i)
            q = oracle.random_qtable(s, a, rng)
            dist = rng.dirichlet(np.ones(s))
            add("ebm-two-form", base_seed + 4000 + i,
                oracle.ebm_weight_check(q, dist, gamma).two_form_gap)
            # Constant table with an exactly-normalized distribution: the
            # weight must equal 1 - gamma to the last bit.
            const_q = oracle.QTable(np.zeros((s, a, 4)))
            exact_dist = np.array([0.5, 0.25, 0.125, 0.125])
            w = oracle.ebm_weight_check(const_q, exact_dist, gamma).weight
            add("ebm-const-weight", base_seed + 4000 + i,
                np.abs(w - (1.0 - gamma)).max())

    if suite in ("all", "her"):
        for i in range(max(1, n_instances // 4)):
            s, a = _SHAPES[i % len(_SHAPES)]
            gamma = _GAMMAS[i % len(_GAMMAS)]
            mdp = random_tabular_mdp(s, a, gamma, seed=base_seed + 5000 + i)
            rng = np.random.default_rng(base_seed + 5500 + i)
            q = oracle.random_qtable(s, a, rng)
            q_target = oracle.random_qtable(s, a, rng)
            for r_bar, beta in ((-1.0, 1.0), (0.0, 1.0), (-1.0, 0.0)):
                add("her-equivalence", base_seed + 5000 + i,
                    oracle.her_equivalence_gap(q, q_target, mdp, r_bar, beta))

    return VerifyReport(suite, checks)
