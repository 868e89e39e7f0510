import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noise_forge.channels import PauliChannel
from noise_forge.emulator import DeviceModel, execute, synthetic_tiled_channels
from noise_forge.hamiltonian import ChainParams, TrotterPlan, build_chain_hamiltonian, build_trotter_layer, chain_depth_estimate
from noise_forge.lindblad import basis_state, trotterized_lindblad
from noise_forge.pauli import all_paulis
from noise_forge.pec import (
    CostModel,
    MitigationPlan,
    build_quasiprobability,
    compose_quasi_with_channel,
    default_sample_count,
    fit_cost_scaling,
    iteration_cost,
    max_error_budget,
    mitigated_error,
    mitigated_expectation,
    plan_decoherence_control,
    plan_from_factors,
    probabilities_from_eigenvalues,
    pauli_eigenvalues,
    product_cost,
    sample_insertion_batch,
    sample_insertions,
    subgroup_count,
    total_cost,
)

EPS = PauliChannel.from_errors((0,), {"X": 0.01, "Z": 0.02})


def test_no_mitigation_quasi():
    q = build_quasiprobability(EPS, 0.0)
    assert q.C_mit == 1 and q.q[0] == 1 and q.p[0] == 1


def test_full_mitigation_quasi():
    q = build_quasiprobability(EPS, 1.0)
    assert q.q[0] == pytest.approx(1.03)
    assert q.C_mit == pytest.approx(1.06)
    assert q.p[1] == pytest.approx(0.01 / 1.06, abs=1e-6)
    assert q.p[1] == pytest.approx(0.009434, abs=1e-6)
    assert q.signs[1] == -1


def test_half_mitigation_quasi():
    q = build_quasiprobability(EPS, 0.5)
    assert q.C_mit == pytest.approx(1.03)
    assert q.q[1] == pytest.approx(-0.005)


def test_exact_method_inverts_channel():
    rng = np.random.default_rng(0)
    ch = PauliChannel((0, 1), np.r_[0.9, rng.dirichlet(np.ones(15)) * 0.1])
    for r in (0.3, 1.0):
        q = build_quasiprobability(ch, r, method="exact")
        target = ch.probs * (1 - r)
        target[0] = 1 - target[1:].sum()
        np.testing.assert_allclose(compose_quasi_with_channel(q, ch), target, atol=1e-14)
    lin = build_quasiprobability(ch, 1.0)
    # the linear form is only first-order exact
    err = np.abs(compose_quasi_with_channel(lin, ch) - np.eye(16)[0]).max()
    assert 0 < err < 2 * ch.total_error**2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_quasi_normalized_and_monotone(seed, r):
    rng = np.random.default_rng(seed)
    ch = PauliChannel((0, 1), np.r_[0.8, rng.dirichlet(np.ones(15)) * 0.2])
    for method in ("linear", "exact"):
        q = build_quasiprobability(ch, r, method)
        assert q.q.sum() == pytest.approx(1.0, abs=1e-12)
        assert q.p.sum() == pytest.approx(1.0, abs=1e-12)
        assert q.C_mit >= 1 - 1e-12
        assert build_quasiprobability(ch, min(1.0, r + 0.1), method).C_mit >= q.C_mit - 1e-12
    assert build_quasiprobability(ch, r).C_mit == pytest.approx(1 + 2 * r * ch.total_error, abs=1e-12)


def test_walsh_transform_roundtrip():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(16))
    np.testing.assert_allclose(probabilities_from_eigenvalues(pauli_eigenvalues(p, 2), 2), p, atol=1e-15)


def test_plan_boundary_case():
    ch = PauliChannel.from_errors((0,), {"Z": 0.02})
    plan = plan_decoherence_control([ch], {"Z": 0.1}, 2.0)
    assert plan.dt_max == pytest.approx(0.2)
    assert plan.D == 10
    assert plan.factors[0][3] == pytest.approx(0.0, abs=1e-12)


def test_plan_forced_step():
    ch = PauliChannel.from_errors((0,), {"Z": 0.02})
    plan = plan_decoherence_control([ch], {"Z": 0.1}, 2.0, dt=0.1)
    assert plan.factors[0][3] == pytest.approx(0.5)
    assert plan.D == 20
    with pytest.raises(ValueError, match="Z@"):
        plan_decoherence_control([ch], {"Z": 0.1}, 2.0, dt=0.4)


def test_closed_system_limit():
    ch = PauliChannel.from_errors((0, 1), {"ZI": 0.02, "XX": 0.01})
    plan = plan_decoherence_control([ch], 0.0, 2.0, dt=0.25)
    np.testing.assert_allclose(plan.factors[0][1:], 1.0)
    assert math.isinf(plan.dt_max)


def test_realized_rates_match_targets():
    rng = np.random.default_rng(2)
    chans = synthetic_tiled_channels(4, rng, 1e-3, 2e-2)
    gamma = [{lab: 0.4 * e for lab, e in ch.errors().items() if set(lab) <= {"I", "Z"}} for ch in chans]
    plan = plan_decoherence_control(chans, gamma, 3.0)
    for ch, g, real in zip(plan.channels, plan.targets, plan.realized_rates()):
        for k in range(1, len(g)):
            if ch.probs[k] > g[k] * plan.dt:
                assert real[k] == pytest.approx(g[k], abs=1e-10)
    assert plan.dt <= plan.dt_max + 1e-12


def test_tied_binding_channels_get_zero_factor():
    ch = PauliChannel.from_errors((0, 1), {"ZI": 0.02, "IZ": 0.02})
    plan = plan_decoherence_control([ch], {"ZI": 0.1, "IZ": 0.1}, 2.0)
    r = dict(zip(ch.labels, plan.factors[0]))
    assert r["ZI"] == pytest.approx(0, abs=1e-12) and r["IZ"] == pytest.approx(0, abs=1e-12)


def _plan(r, D=1):
    return plan_from_factors([EPS], [r], 0.1, D)


def test_sample_no_mitigation():
    s = sample_insertions(_plan(0.0, 3), 1, seed=4)
    assert all(p.is_identity() for p in s.strings) and s.sign == 1 and s.weight == 1


def test_seeded_draw_hits_x():
    plan = _plan(1.0)
    for idx in range(2000):
        s = sample_insertions(plan, 1, seed=0, index=idx)
        if s.strings[0].word == "X":
            break
    else:
        pytest.fail("no X draw")
    assert s.sign == -1 and s.weight == pytest.approx(1.06)


def test_insertion_frequencies():
    plan = _plan(1.0, D=4)
    M = 40_000
    xs, zs, _ = sample_insertion_batch(plan, 1, M // 4, seed=9)
    keys = (xs * 2 + zs).ravel()
    p = plan.quasi[0].p
    # key order: x*2+z -> I=0, Z=1, X=2, Y=3
    for key, k in ((0, 0), (2, 1), (3, 2), (1, 3)):
        freq = np.mean(keys == key)
        sigma = math.sqrt(p[k] * (1 - p[k]) / M)
        assert abs(freq - p[k]) <= 3 * sigma + 1e-12


def test_batch_equals_single_draws():
    plan = _plan(0.7, D=3)
    xs, zs, signs = sample_insertion_batch(plan, 1, 5, seed=2, start=10)
    for i in range(5):
        s = sample_insertions(plan, 1, seed=2, index=10 + i)
        assert [p.x for p in s.strings] == xs[i].tolist()
        assert [p.z for p in s.strings] == zs[i].tolist()
        assert s.sign == signs[i]


def test_tiling_mismatch_rejected():
    with pytest.raises(ValueError):
        sample_insertions(_plan(0.5), 2, subgroups=[(1,)])


def test_mitigated_expectation_examples():
    mean, se = mitigated_expectation([1, 1, 1], [0.2, 0.4, 0.6], 1.5)
    assert mean == pytest.approx(0.6)
    rng = np.random.default_rng(3)
    M = 20_000
    signs = rng.choice([-1, 1], size=M)
    vals = rng.choice([-1.0, 1.0], size=M)
    mean, se = mitigated_expectation(signs, vals, 2.0)
    assert abs(mean) < 4 * se
    assert se == pytest.approx(2.0 / math.sqrt(M), rel=0.02)


def _exhaustive_mean(ch, r, D, method, H, rho0, dt):
    """Sum over every insertion sequence weighted by its quasi-probability."""
    plan = plan_from_factors([ch], [r], dt, D, method)
    q = plan.quasi[0].q
    n = H.n
    layer = build_trotter_layer(H, TrotterPlan(1, dt, 1))
    model = DeviceModel(n, [ch])
    strings = [p.embed(n, ch.subgroup) for p in all_paulis(len(ch.subgroup))]
    total = 0
    for combo in itertools.product(range(len(q)), repeat=D):
        w = np.prod([q[k] for k in combo])
        if w == 0:
            continue
        st_ = execute(layer, D, model, insertions=[strings[k] for k in combo], rho0=rho0).states[-1]
        total = total + w * st_
    return plan, total


@pytest.mark.parametrize("D", [1, 2])
def test_exhaustive_average_is_reduced_channel(D):
    H = build_chain_hamiltonian(ChainParams.default_chain(2))
    ch = PauliChannel.from_errors((0, 1), {"ZI": 0.02, "IZ": 0.01, "XX": 0.015, "YZ": 0.005})
    rho0 = basis_state("10")
    plan, avg = _exhaustive_mean(ch, 0.6, D, "exact", H, rho0, 0.1)
    ref = trotterized_lindblad(H, plan.reduced_channels(), rho0, D, 0.1)[-1]
    assert np.abs(avg - ref).max() < 1e-10


def test_cost_examples():
    assert total_cost(0.0, 3, 10) == 1
    assert total_cost(0.03, 3, 10) == pytest.approx(1.06**30, rel=1e-14)
    assert total_cost(0.03, 3, 10) == pytest.approx(5.7435, abs=1e-4)
    assert math.log(total_cost(0.03, 3, 20)) == pytest.approx(2 * math.log(total_cost(0.03, 3, 10)), rel=1e-14)
    assert default_sample_count(1.0) == 90
    assert subgroup_count(5) == 4 and subgroup_count(5, K=1) == 5


def test_iteration_cost():
    q = build_quasiprobability(EPS, 1.0)
    assert iteration_cost([q]) == pytest.approx(1.06)
    ch = PauliChannel.from_errors((0, 1), {"ZI": 0.01, "XX": 0.02})
    costs = []
    for n in range(2, 7):
        qs = [build_quasiprobability(PauliChannel(sub, ch.probs), 1.0) for sub in [(m, m + 1) for m in range(n - 1)]]
        costs.append(iteration_cost(qs))
        assert costs[-1] == pytest.approx(build_quasiprobability(ch, 1.0).C_mit ** (n - 1), rel=1e-14)
    assert all(b > a for a, b in zip(costs, costs[1:]))
    assert iteration_cost([build_quasiprobability(ch, 1.0)]) >= iteration_cost([build_quasiprobability(ch, 0.4)])
    assert product_cost([[q], [q]]) == pytest.approx(1.06**2)


def test_uniform_product_matches_closed_form():
    eps_r = 0.04
    ch = PauliChannel.from_errors((0, 1), {"ZI": eps_r / 2, "XX": eps_r / 2})
    n, D = 4, 7
    layer = [build_quasiprobability(PauliChannel(sub, ch.probs), 1.0) for sub in [(0, 1), (1, 2), (2, 3)]]
    assert product_cost([layer] * D) == pytest.approx(total_cost(eps_r, n - 1, D), rel=1e-10)
    assert mitigated_error(ch, 1.0) == pytest.approx(eps_r)


def test_fit_exact_slope():
    eps_r = 0.03
    series = {n: [(D, total_cost(eps_r, n - 1, D)) for D in (5, 10, 20, 40)] for n in (2, 3, 4, 5)}
    fit = fit_cost_scaling(series)
    np.testing.assert_allclose(fit.slopes, [(n - 1) * math.log(1 + 2 * eps_r) for n in (2, 3, 4, 5)], atol=1e-12)
    assert fit.residuals.max() < 1e-10
    lam_fit = fit_cost_scaling(series, eps_r={n: eps_r for n in series}, n_of_key=lambda n: n - 1)
    assert lam_fit.coef == pytest.approx(math.log(1 + 2 * eps_r) / eps_r, rel=1e-10)


def test_slope_linear_in_r():
    eps = 0.05
    series = {r: [(D, total_cost(r * eps, 1, D)) for D in (5, 10, 20)] for r in (0.2, 0.4, 0.6, 0.8, 1.0)}
    fit = fit_cost_scaling(series)
    assert fit.coef_residual < 0.05


def test_error_budget():
    assert max_error_budget(1, 5, 50, 2, 1, 1e8) == pytest.approx(0.1 + math.log(1e8) / 10000)
    assert max_error_budget(1, 5, 50, 2, 1, 1e8) == pytest.approx(0.10184, abs=1e-5)
    assert max_error_budget(1, 5, 50, 2, 1, 1) == pytest.approx(0.1)
    n, J, E, t, et, G, lam, M = 2, 0.5, 10.0, 1.5, 0.1, 0.3, 1.2, 1e6
    D = n * J * (J + E) * t**2 / et
    closed = et * G / (n * J * (J + E) * t) + et**2 * math.log(M) / (2 * lam * n**3 * J**2 * (J + E) ** 2 * t**4)
    assert max_error_budget(G, t, D, n, lam, M) == pytest.approx(closed, rel=1e-12)
    assert chain_depth_estimate(n, 1, J, E, t, et) == math.ceil(D - 1e-9)


def test_cost_model():
    cm = CostModel(0.05, 2, 10, M_max=100)
    assert cm.C_tot == pytest.approx(1.1**20)
    assert cm.M_required == default_sample_count(cm.C_tot)
    assert cm.feasible == (cm.C_tot**2 <= 100)


def test_plan_roundtrip_bit_for_bit():
    chans = synthetic_tiled_channels(3, np.random.default_rng(4), 1e-3, 2e-2)
    plan = plan_from_factors(chans, [0.3, 0.7], 0.25, 8, "exact")
    import json

    again = MitigationPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    for a, b in zip(plan.quasi, again.quasi):
        assert a.q.tobytes() == b.q.tobytes()
    assert again.C_tot == plan.C_tot


def test_factor_validation():
    with pytest.raises(ValueError):
        build_quasiprobability(EPS, 1.5)
    with pytest.raises(ValueError):
        build_quasiprobability(EPS, {"Q": 0.1})
