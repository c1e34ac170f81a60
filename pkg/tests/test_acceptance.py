"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured values when it succeeds (pytest -v -s shows them inline).

The benchmark-reproduction tests train four algorithms for five seeds each at
100k environment steps on one core; expect a few hours for the full module.
Everything else runs in seconds.
"""

import time

import numpy as np
import pytest

from hindsight import nn, oracle
from hindsight.algos import AlgoConfig, her_q_update, her_reward, hdm_update
from hindsight.envs import FourRooms, random_tabular_mdp
from hindsight.harness import RunConfig, train, verify
from hindsight.metrics import imitated_action_map, initial_ag_change_ratio
from hindsight.plots import plot_ag_ratio_scatter
from hindsight.replay import (KIND_BEHAVIORAL, KIND_FUTURE, KIND_NEXT_STATE,
                              ReplayBuffer, sample_batch)

from conftest import (finite_difference_gradient, random_batch,
                      random_net_without_kinks, relative_error)
from test_replay import synthetic_trajectory


def report(name: str, detail: str) -> None:
    print(f"[PASS] {name}: {detail}")


# ---------------------------------------------------------------------------
# Oracle identity suite
# ---------------------------------------------------------------------------

def test_acceptance_online_to_offline_identity():
    """20 random tabular instances, |S|<=6, |A|<=3, gamma in {0.5,0.9,0.99}."""
    shapes = ((4, 2), (5, 3), (6, 3), (3, 2), (6, 2))
    start = time.perf_counter()
    worst = 0.0
    for i in range(20):
        s, a = shapes[i % len(shapes)]
        gamma = (0.5, 0.9, 0.99)[i % 3]
        mdp = random_tabular_mdp(s, a, gamma, seed=i)
        rng = np.random.default_rng(1000 + i)
        q = oracle.random_qtable(s, a, rng)
        pi = oracle.boltzmann_policy(q)
        worst = max(worst, oracle.online_offline_td_gap(mdp, q, pi, mdp.rho_plus))
    elapsed = time.perf_counter() - start
    assert worst < 1e-10
    assert elapsed < 10.0
    report("online-to-offline", f"max discrepancy {worst:.3e} over 20 instances "
                                f"in {elapsed:.2f}s")


def test_acceptance_nce_gradient_decay():
    ks = (1.0, 10.0, 1e2, 1e3, 1e4, 1e6)
    rng = np.random.default_rng(7)
    worst_ratio, worst_cancel = 0.0, 0.0
    for _ in range(10):
        res = oracle.nce_gradient_decay(rng.standard_normal(6),
                                        rng.dirichlet(np.ones(6)), ks)
        assert res.strictly_decreasing()
        worst_ratio = max(worst_ratio, res.decay_ratio())
        worst_cancel = max(worst_cancel, res.cancellation_gap)
    assert worst_ratio < 1e-3
    assert worst_cancel < 1e-12
    report("nce-gradient-decay", f"strictly decreasing over k={ks}; "
                                 f"final/initial {worst_ratio:.3e}; "
                                 f"limit cancellation {worst_cancel:.3e}")


def test_acceptance_pmi_identity():
    worst, worst_inv = 0.0, 0.0
    for seed in range(10):
        mdp = random_tabular_mdp(5, 2, (0.5, 0.9, 0.99)[seed % 3], seed)
        rng = np.random.default_rng(seed)
        a = oracle.pmi_identity_check(mdp, rng.standard_normal((5, 2)))
        b = oracle.pmi_identity_check(mdp, rng.standard_normal((5, 2)))
        worst = max(worst, a.max_error, b.max_error)
        worst_inv = max(worst_inv, float(np.abs(a.pmi_estimate - b.pmi_estimate).max()))
    assert worst < 1e-12
    assert worst_inv < 1e-12
    report("pmi-identity", f"max error {worst:.3e}; offset invariance {worst_inv:.3e}")


def test_acceptance_ebm_weight():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        q = oracle.random_qtable(5, 3, rng)
        worst = max(worst, oracle.ebm_weight_check(q, rng.dirichlet(np.ones(5)), 0.9).two_form_gap)
    assert worst < 1e-12
    const = oracle.ebm_weight_check(oracle.QTable(np.zeros((4, 2, 4))),
                                    np.array([0.5, 0.25, 0.125, 0.125]), 0.9)
    assert np.array_equal(const.weight, np.full_like(const.weight, 1.0 - 0.9))
    report("ebm-weight", f"two-form gap {worst:.3e}; constant table weight "
                         f"exactly 1-gamma")


def test_acceptance_her_reward_equivalence():
    worst = 0.0
    for r_bar, beta in ((-1.0, 1.0), (0.0, 1.0), (-1.0, 0.0)):
        for seed in range(5):
            s, a = ((4, 2), (5, 3), (6, 2))[seed % 3]
            mdp = random_tabular_mdp(s, a, (0.5, 0.9, 0.99)[seed % 3], seed=seed)
            rng = np.random.default_rng(100 + seed)
            gap = oracle.her_equivalence_gap(oracle.random_qtable(s, a, rng),
                                             oracle.random_qtable(s, a, rng),
                                             mdp, r_bar, beta)
            worst = max(worst, gap)
    assert worst < 1e-10
    report("her-reward-equivalence", f"max gradient gap {worst:.3e} across "
                                     f"(r,beta) in {{(-1,1),(0,1),(-1,0)}}")


def test_acceptance_verify_suite_green():
    rep = verify(n_instances=20)
    assert rep.all_passed
    report("verify-suite", f"{len(rep.checks)} checks all PASS")


# ---------------------------------------------------------------------------
# Numerical kernel
# ---------------------------------------------------------------------------

def test_acceptance_kernel_gradients():
    rng = np.random.default_rng(2024)
    shapes = ((3, 6, 2), (4, 8, 8, 5), (2, 5, 3, 4), (5, 7, 3))
    worst = 0.0
    for case in range(100):
        sizes = shapes[case % len(shapes)]
        x = rng.standard_normal(sizes[0])
        net = random_net_without_kinks(sizes, x, rng)
        g = rng.standard_normal(sizes[-1])
        analytic = nn.mlp_backward(net, x, g)
        fd = finite_difference_gradient(net, lambda n: float(nn.mlp_forward(n, x) @ g))
        worst = max(worst, relative_error(analytic, fd))
    assert worst < 1e-6
    report("kernel-gradients", f"100 cases, max relative error {worst:.3e}")


def test_acceptance_adam_and_polyak():
    params = np.array([1.0, -2.0])
    state = nn.AdamState.fresh(2)
    nn.adam_step(params, np.zeros(2), state)
    assert np.array_equal(params, [1.0, -2.0])

    online = nn.init_mlp((2, 4, 2), np.random.default_rng(0))
    target = nn.TargetCopy.of(online, tau=0.995)
    shadow0 = target.net.params.copy()
    expected = shadow0 * 0.995
    expected += 0.005 * online.params
    nn.polyak_update(target, online.params)
    assert np.array_equal(target.net.params, expected)
    report("adam-and-polyak", "zero-grad fixed point and exact polyak formula")


# ---------------------------------------------------------------------------
# Replay composition
# ---------------------------------------------------------------------------

def test_acceptance_replay_composition():
    buf = ReplayBuffer(50)
    for i in range(20):
        buf.append(synthetic_trajectory(i, length=20))
    n = 100_000
    batch = sample_batch(buf, n, 0.85, 0.2, np.random.default_rng(11))
    freq = np.bincount(batch.kinds, minlength=3) / n
    expected = {KIND_NEXT_STATE: 0.20, KIND_FUTURE: 0.68, KIND_BEHAVIORAL: 0.12}
    for kind, p in expected.items():
        sigma = np.sqrt(p * (1.0 - p) / n)
        assert abs(freq[kind] - p) < 3.0 * sigma
    report("replay-composition",
           f"frequencies (next,future,behavioral)=({freq[KIND_NEXT_STATE]:.4f},"
           f"{freq[KIND_FUTURE]:.4f},{freq[KIND_BEHAVIORAL]:.4f}) "
           f"vs (0.20,0.68,0.12), all within 3 sigma")


# ---------------------------------------------------------------------------
# HDM structural checks
# ---------------------------------------------------------------------------

def _net_pair(rng, batch):
    xs = np.concatenate([
        np.concatenate([batch.states, batch.goals], axis=1),
        np.concatenate([batch.next_states, batch.goals], axis=1),
        np.concatenate([batch.states, batch.next_states], axis=1),
    ])
    sizes = (4, 16, 16, 5)
    net = random_net_without_kinks(sizes, xs, rng)
    return net, nn.TargetCopy.of(random_net_without_kinks(sizes, xs, rng))


def test_acceptance_hdm_beta_zero_gradient_identity():
    env = FourRooms()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(5):
        batch = random_batch(env, rng, size=32)
        net, target = _net_pair(rng, batch)
        _, g_hdm = hdm_update(net, target, batch,
                              AlgoConfig(kind="hdm", beta=0.0, r_bar=-1.0), env)
        _, g_td = her_q_update(net, target, batch,
                               AlgoConfig(kind="her10", beta=0.0, r_bar=-1.0), env)
        worst = max(worst, float(np.abs(g_hdm - g_td).max()))
    assert worst < 1e-12
    report("hdm-beta-zero", f"max gradient difference {worst:.3e} vs TD with "
                            f"constant base reward")


def test_acceptance_hdm_gate_monotone_on_frozen_nets():
    env = FourRooms()
    rng = np.random.default_rng(6)
    for _ in range(5):
        batch = random_batch(env, rng, size=64)
        net, target = _net_pair(rng, batch)
        fracs = [hdm_update(net, target, batch,
                            AlgoConfig(kind="hdm", gamma_hdm=g), env)[0].imitated_fraction
                 for g in (0.95, 0.85, 0.75)]
        assert fracs[0] >= fracs[1] >= fracs[2]
    report("hdm-gate-monotone", "imitated_fraction non-increasing as the "
                                "threshold falls 0.95 -> 0.85 -> 0.75")


def test_acceptance_imitated_map_monotone_counts():
    env = FourRooms()
    net = nn.init_mlp((4, 16, 16, 5), np.random.default_rng(8))
    goal = env.encode(1, 9)
    counts = [imitated_action_map(net, env, goal, g).count for g in (0.95, 0.85, 0.75)]
    assert counts[0] >= counts[1] >= counts[2]
    report("imitated-map-monotone", f"counts {counts} at thresholds 0.95/0.85/0.75")


# ---------------------------------------------------------------------------
# Benchmark reproduction (Four Rooms, 5 seeds, 100k env steps)
# ---------------------------------------------------------------------------

BENCH_SEEDS = (0, 1, 2, 3, 4)
BENCH_ALGOS = ("hdm", "her10", "gcsl", "her_hbc")


def bench_config(kind: str, seed: int, out_dir) -> RunConfig:
    return RunConfig(seed=seed, out_dir=str(out_dir), algo=AlgoConfig(kind=kind))


@pytest.fixture(scope="session")
def benchmark_results(tmp_path_factory):
    root = tmp_path_factory.mktemp("benchmark")
    results: dict[str, list[float]] = {}
    for kind in BENCH_ALGOS:
        finals = []
        for seed in BENCH_SEEDS:
            t = time.perf_counter()
            rec = train(bench_config(kind, seed, root / f"{kind}-s{seed}"))
            wall = time.perf_counter() - t
            print(f"[bench] {kind} seed={seed} success={rec.success_rate:.3f} "
                  f"wall={wall / 60:.1f}min", flush=True)
            assert wall < 30 * 60, f"{kind} run exceeded the 30-minute budget"
            finals.append(rec.success_rate)
        results[kind] = finals
    results["_root"] = root
    return results


def _mean(results, kind):
    return 100.0 * float(np.mean(results[kind]))


def test_acceptance_benchmark_hdm_band(benchmark_results):
    m = _mean(benchmark_results, "hdm")
    assert m >= 90.0
    report("benchmark-hdm", f"mean final success {m:.2f}% >= 90%")


def test_acceptance_benchmark_her_band(benchmark_results):
    m = _mean(benchmark_results, "her10")
    assert 78.0 <= m <= 95.0
    report("benchmark-her", f"mean final success {m:.2f}% in [78, 95]")


def test_acceptance_benchmark_gcsl_band(benchmark_results):
    m = _mean(benchmark_results, "gcsl")
    assert 65.0 <= m <= 90.0
    report("benchmark-gcsl", f"mean final success {m:.2f}% in [65, 90]")


def test_acceptance_benchmark_ordering(benchmark_results):
    hdm, her = _mean(benchmark_results, "hdm"), _mean(benchmark_results, "her10")
    gcsl = _mean(benchmark_results, "gcsl")
    assert hdm > her
    # HER must beat or statistically tie GCSL (Welch standard error).
    n = len(BENCH_SEEDS)
    se = 100.0 * np.sqrt(np.var(benchmark_results["her10"], ddof=1) / n
                         + np.var(benchmark_results["gcsl"], ddof=1) / n)
    assert her >= gcsl - 2.0 * se
    report("benchmark-ordering", f"hdm {hdm:.2f} > her {her:.2f} >= gcsl "
                                 f"{gcsl:.2f} - 2*SE ({se:.2f})")


def test_acceptance_benchmark_hbc_not_better(benchmark_results):
    hbc, her = _mean(benchmark_results, "her_hbc"), _mean(benchmark_results, "her10")
    assert hbc <= her
    report("benchmark-hbc", f"her_hbc {hbc:.2f}% <= her10 {her:.2f}%")


# ---------------------------------------------------------------------------
# Achieved-goal change ratio and its scatter
# ---------------------------------------------------------------------------

def test_acceptance_ag_ratio_formulations_agree():
    env = FourRooms()
    ratio, start_ags, final_ags = initial_ag_change_ratio(
        env, 10_000, np.random.default_rng(0), return_endpoints=True)
    direct = np.array([not env.is_success(s0, sT)
                       for s0, sT in zip(start_ags, final_ags)], dtype=float)
    via_reward = np.array([-her_reward(s0, sT, env, -1.0, 1.0)
                           for s0, sT in zip(start_ags, final_ags)])
    assert np.array_equal(direct, via_reward)
    assert ratio == pytest.approx(direct.mean())
    report("ag-ratio-samplewise", f"10k trajectories agree sample-for-sample; "
                                  f"ratio {ratio:.4f}")


def test_acceptance_ag_ratio_scatter(benchmark_results, tmp_path):
    env = FourRooms()
    ratio = initial_ag_change_ratio(env, 10_000, np.random.default_rng(0))
    gcsl = _mean(benchmark_results, "gcsl")
    successes = {k: _mean(benchmark_results, k) for k in BENCH_ALGOS}
    path = plot_ag_ratio_scatter(ratio, successes, tmp_path / "ag_ratio_scatter.svg")
    text = path.read_text()
    assert text.lstrip().startswith("<?xml")
    assert "ceiling" in text  # both series present: scatter + ceiling line
    assert gcsl <= 100.0 * ratio
    report("ag-ratio-scatter", f"gcsl {gcsl:.2f}% <= ceiling {100 * ratio:.2f}%; "
                               f"plot at {path}")


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

def _strip_wall_clock(text: str) -> str:
    return "\n".join(",".join(line.split(",")[:-1]) for line in text.splitlines())


def test_acceptance_determinism(tmp_path):
    cfgs = [RunConfig(seed=3, total_env_steps=2_000, eval_interval=1_000,
                      n_eval_episodes=50, out_dir=str(tmp_path / name),
                      algo=AlgoConfig(kind="hdm", initial_random_trajectories=20))
            for name in ("a", "b")]
    for cfg in cfgs:
        train(cfg)
    a = (tmp_path / "a" / "metrics.csv").read_text()
    b = (tmp_path / "b" / "metrics.csv").read_text()
    assert _strip_wall_clock(a) == _strip_wall_clock(b)
    assert a.count("\n") == b.count("\n") >= 3
    report("determinism", "metrics CSVs byte-identical after dropping the "
                          "wall-clock column")
