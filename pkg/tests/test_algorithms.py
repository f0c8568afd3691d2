import math

import numpy as np
import pytest

from boss.algorithms import (
    BossParams,
    doubling_phases,
    run_boss,
    run_boss_doubling,
    run_pege_independent,
    run_pege_oracle,
    run_seqrepl,
    theorem1_params,
)
from boss.base_policies import explore_actions
from boss.environment import Ellipsoid, make_schedule, optimal_value, triangular_indices
from boss.errors import ConfigError, DimensionMismatchError
from boss.subspace_select import build_expert_set


def schedule(gen="diverse", N=200, d=10, m=3, seed=0, **kw):
    if gen != "diverse" and "reveal_tasks" not in kw:
        kw["reveal_tasks"] = [1, math.ceil(0.625 * N), math.ceil(0.875 * N)][:m]
    return make_schedule(gen, d=d, m=m, N=N, rng=np.random.default_rng(seed), **kw)


def experts_for(s, count=500, oracle=True, seed=1):
    return build_expert_set("random", s.d, s.m, np.random.default_rng(seed), count,
                            oracle=s.hidden_basis if oracle else None)


def explore_gap(E, theta, tau1):
    return tau1 * optimal_value(E, theta) - float(np.sum(explore_actions(E, tau1) @ theta))


# theorem1_params ---------------------------------------------------------


def test_theorem1_closed_forms():
    N, tau, d, m = 4000, 500, 10, 3
    bp = theorem1_params(N, tau, d, m)
    # independent evaluation of the closed forms
    p = (2 * m * math.sqrt(tau) / N) ** (2 / 3)
    tau1 = d * math.floor(min(d * math.sqrt(tau / p), tau) / d)
    assert bp.p == pytest.approx(p, abs=1e-12)
    assert bp.p == pytest.approx(0.10400419, abs=1e-6)
    assert bp.tau2 == 66
    assert bp.tau1 == tau1 == 500
    assert bp.delta == 1 / N**2
    assert bp.alpha == pytest.approx(d * math.sqrt(math.log(d * N**2) / tau1), abs=1e-12)
    assert bp.epsilon == bp.alpha


def test_theorem1_clamps():
    assert theorem1_params(10, 500, 10, 3).p == 1.0
    # small p makes d sqrt(tau / p) exceed tau, so tau1 is clamped to d floor(tau / d)
    assert theorem1_params(10**6, 95, 10, 2).tau1 == 90
    assert theorem1_params(100, 10, 10, 3).tau2 == 9


def test_theorem1_overrides_propagate():
    bp = theorem1_params(1000, 500, 10, 3, p=0.5)
    assert bp.tau1 == 10 * math.floor(min(10 * math.sqrt(1000), 500) / 10)
    bp = theorem1_params(1000, 500, 10, 3, tau1=100)
    assert bp.alpha == pytest.approx(10 * math.sqrt(math.log(10 * 1000**2) / 100))
    assert theorem1_params(1000, 500, 10, 3, alpha=0.3, eta=2.0).alpha == 0.3


@pytest.mark.parametrize("args", [(100, 5, 10, 3), (100, 500, 3, 3), (0, 500, 10, 3)])
def test_theorem1_errors(args):
    with pytest.raises(ConfigError):
        theorem1_params(*args)
    with pytest.raises(ConfigError):
        theorem1_params(100, 500, 10, 3, gamma=1.0)


def test_params_validate():
    bp = BossParams(0.5, 25, 12, 0.3, 0.3, 1e-4)
    with pytest.raises(ConfigError, match="tau1"):
        bp.validate(500, 10, 3)


# BOSS --------------------------------------------------------------------


def test_boss_p1_equals_pege():
    s = schedule("adversarial_reveal", N=100)
    E = Ellipsoid.sphere(10)
    experts, idx = experts_for(s)
    bp = theorem1_params(100, 500, 10, 3, p=1.0, tau1=20, alpha=0.3)
    boss = run_boss(s, E, 500, bp, experts, seed=4, noise_std=0.5, oracle_index=idx)
    pege = run_pege_independent(s, E, 500, 20, seed=4, noise_std=0.5)
    assert np.all(boss.Z == 1)
    assert np.array_equal(boss.per_task_regret, pege.per_task_regret)
    for a, b in zip(boss.traces, pege.traces):
        assert np.array_equal(a.theta_hat, b.theta_hat)


def test_boss_oracle_only_noiseless():
    s = schedule("diverse", N=100)
    E = Ellipsoid.sphere(10)
    bp = theorem1_params(100, 500, 10, 3, p=0.3, tau1=20, tau2=15, alpha=0.3)
    res = run_boss(s, E, 500, bp, s.hidden_basis[None], seed=1, noise_std=0.0, oracle_index=0)
    B = s.hidden_basis
    A_exploit = np.repeat(B.T, 5, axis=0)
    for t in res.traces:
        theta = s.thetas[t.task_index - 1]
        assert np.linalg.norm(t.theta_hat - theta) <= 1e-10
        if t.Z:
            expected = explore_gap(E, theta, 20)
        else:
            expected = 15 * optimal_value(E, theta) - float(np.sum(A_exploit @ theta))
            assert t.subspace_error <= 1e-7
        assert t.per_task_regret == pytest.approx(expected, abs=1e-9)


def test_boss_trace_invariants_and_determinism():
    s = schedule("adversarial_reveal", N=400)
    E = Ellipsoid.sphere(10)
    experts, idx = experts_for(s, 2000)
    bp = theorem1_params(400, 500, 10, 3, p=0.3, tau1=20, tau2=15, alpha=0.35, eta=5.0)
    r1 = run_boss(s, E, 500, bp, experts, seed=7, noise_std=0.1, oracle_index=idx)
    r2 = run_boss(s, E, 500, bp, experts, seed=7, noise_std=0.1, oracle_index=idx)
    assert [t.task_index for t in r1.traces] == list(range(1, 401))
    assert r1.final_regret == pytest.approx(r1.cumulative_regret[-1])
    assert np.all(np.diff(r1.cumulative_regret) >= 0)
    assert len(r1.subspace_error) == len(r1.theta_error) == 400
    assert abs(r1.Z.mean() - 0.3) <= 4 * math.sqrt(0.3 * 0.7 / 400)
    assert np.array_equal(r1.per_task_regret, r2.per_task_regret)
    assert [t.expert_index for t in r1.traces] == [t.expert_index for t in r2.traces]
    w = r1.diagnostics["final_weights"]
    assert abs(w.sum() - 1) <= 1e-12


def test_boss_oracle_weight_concentrates():
    N = 1000
    s = schedule("adversarial_reveal", N=N, seed=3)
    E = Ellipsoid.sphere(10)
    experts, idx = experts_for(s, 10_000, seed=4)
    bp = theorem1_params(N, 500, 10, 3, p=0.3, tau1=200, tau2=15, alpha=0.15)
    res = run_boss(s, E, 500, bp, experts, seed=5, noise_std=0.1, oracle_index=idx)
    w = res.diagnostics["oracle_weight"]
    updates = np.flatnonzero(res.Z[:-1] == 1)
    assert np.all(w[updates + 1] >= w[updates] - 1e-15)
    assert w[: N // 2].max() > 0.5


def test_boss_rejects_bad_inputs():
    s = schedule(N=20)
    E = Ellipsoid.sphere(10)
    bp = theorem1_params(20, 500, 10, 3, alpha=0.3, tau2=15)
    with pytest.raises(DimensionMismatchError):
        run_boss(s, E, 500, bp, np.zeros((3, 10, 2)), seed=0)
    with pytest.raises(ConfigError):
        run_boss(s, E, 500, bp, np.zeros((0, 10, 3)), seed=0)
    with pytest.raises(DimensionMismatchError):
        run_boss(s, Ellipsoid.sphere(9), 500, bp, s.hidden_basis[None], seed=0)
    bad_cost = theorem1_params(20, 500, 10, 3, alpha=2.0)
    with pytest.raises(ConfigError):
        run_boss(s, E, 500, bad_cost, s.hidden_basis[None], seed=0)


# doubling ----------------------------------------------------------------


def test_doubling_phases():
    assert [(r.start, r.stop - 1) for r in doubling_phases(10)] == [(1, 1), (2, 3), (4, 7), (8, 10)]
    assert [r.start for r in doubling_phases(100)] == [1, 2, 4, 8, 16, 32, 64]
    assert sum(len(r) for r in doubling_phases(1000)) == 1000


def test_doubling_single_task_equals_boss():
    s = schedule(N=1)
    E = Ellipsoid.sphere(10)
    experts, idx = experts_for(s)
    base = theorem1_params(1, 500, 10, 3, alpha=0.3, tau2=15)
    a = run_boss_doubling(s, E, 500, base, experts, seed=2, noise_std=0.3, oracle_index=idx)
    b = run_boss(s, E, 500, base, experts, seed=2, noise_std=0.3, oracle_index=idx)
    assert np.array_equal(a.per_task_regret, b.per_task_regret)
    assert a.traces[0].expert_index == b.traces[0].expert_index


def test_doubling_recomputes_phase_params():
    s = schedule(N=300)
    E = Ellipsoid.sphere(10)
    experts, idx = experts_for(s)
    base = theorem1_params(300, 500, 10, 3, alpha=0.3, tau2=15)
    res = run_boss_doubling(s, E, 500, base, experts, seed=0, noise_std=0.1, oracle_index=idx)
    phase_p = [bp.p for bp in res.diagnostics["phase_params"]]
    assert phase_p == [theorem1_params(2**i, 500, 10, 3, alpha=0.3, tau2=15).p for i in range(9)]
    assert phase_p[-1] < phase_p[0]


def test_doubling_within_factor_of_known_horizon():
    N, tau, d, m = 1024, 256, 8, 2
    E = Ellipsoid.sphere(d)
    ratios = []
    for seed in range(3):
        s = schedule("diverse", N=N, d=d, m=m, seed=seed)
        experts, idx = experts_for(s, 2000, seed=seed + 10)
        base = theorem1_params(N, tau, d, m, alpha=0.5)
        known = run_boss(s, E, tau, base, experts, seed=seed, noise_std=0.1, oracle_index=idx).final_regret
        doubled = run_boss_doubling(s, E, tau, base, experts, seed=seed, noise_std=0.1,
                                    oracle_index=idx).final_regret
        ratios.append(doubled / known)
    assert np.mean(ratios) <= 3.0


# baselines ---------------------------------------------------------------


def test_pege_noiseless_and_linear_growth():
    E = Ellipsoid.sphere(10)
    s = schedule(N=50)
    res = run_pege_independent(s, E, 500, 20, seed=0, noise_std=0.0)
    expected = [explore_gap(E, th, 20) for th in s.thetas]
    np.testing.assert_allclose(res.per_task_regret, expected, atol=1e-9)
    assert np.all(res.subspace_error == math.sqrt(3))
    small = run_pege_independent(schedule(N=200, seed=1), E, 500, 20, seed=1, noise_std=1.0).final_regret
    large = run_pege_independent(schedule(N=400, seed=1), E, 500, 20, seed=1, noise_std=1.0).final_regret
    assert 1.8 <= large / small <= 2.2


def test_pege_oracle_noiseless():
    E = Ellipsoid.sphere(10)
    s = schedule(N=50)
    res = run_pege_oracle(s, E, 500, 15, seed=0, noise_std=0.0)
    A = np.repeat(s.hidden_basis.T, 5, axis=0)
    expected = [15 * optimal_value(E, th) - float(np.sum(A @ th)) for th in s.thetas]
    np.testing.assert_allclose(res.per_task_regret, expected, atol=1e-9)
    adv = schedule("adversarial_reveal", N=80)
    err = run_pege_oracle(adv, E, 500, 15, seed=0, noise_std=0.1).subspace_error
    assert np.all(err[70 - 1:] <= 1e-7)


def test_seqrepl_schedule_and_convergence():
    E = Ellipsoid.sphere(10)
    res = run_seqrepl(schedule(N=15), E, 500, 20, 6, seed=0, noise_std=0.1)
    assert [t.task_index for t in res.traces if t.Z] == [1, 3, 6, 10, 15]
    res = run_seqrepl(schedule(N=150, seed=2), E, 500, 20, 6, seed=0, noise_std=0.1)
    assert res.subspace_error[100:].max() < 0.2


def test_seqrepl_fails_on_pinned_schedule():
    E = Ellipsoid.sphere(10)
    s = schedule("seqrepl_adversarial", N=600, reveal_tasks=[1, 101, 201])
    res = run_seqrepl(s, E, 500, 20, 6, seed=0, noise_std=0.1)
    # tasks off the exploration schedule use all three directions; the estimate never sees them
    off = np.array([n for n in range(301, 601) if n not in set(triangular_indices(600))])
    assert res.subspace_error[off - 1].min() > 0.9
