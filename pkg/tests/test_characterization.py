import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noise_forge.channels import PauliChannel
from noise_forge.characterization import (
    CBConfig,
    FidelityEstimate,
    ProbeFit,
    channel_fidelities,
    default_probes,
    fit_decay,
    make_clifford_identity_variant,
    pauli_fidelity,
    reconstruct_error_probabilities,
    reconstruct_tiled_channels,
    run_cycle_benchmark,
)
from noise_forge.emulator import DeviceModel, execute, synthetic_tiled_channels
from noise_forge.hamiltonian import ChainParams, Hamiltonian, TrotterPlan, build_chain_hamiltonian, build_trotter_layer
from noise_forge.lindblad import basis_state
from noise_forge.pauli import PauliString, all_paulis

P = PauliString.from_label


def chain_variant(n=2, dt=0.05):
    H = build_chain_hamiltonian(ChainParams.default_chain(n))
    layer = build_trotter_layer(H, TrotterPlan(1, dt, 1))
    return layer, make_clifford_identity_variant(layer)


def single_qubit_variant():
    H = Hamiltonian(1, ((1.0, P("Z")),))
    return make_clifford_identity_variant(build_trotter_layer(H, TrotterPlan(1, 0.1, 1)))


def estimate_from(fvals: dict, n: int) -> FidelityEstimate:
    est = FidelityEstimate(n, (2, 4))
    for lab, f in fvals.items():
        est.fits[lab] = ProbeFit(f, 1.0, 0.0, 0.0, np.array([f**2, f**4]))
    return est


def test_variant_examples():
    layer, var = chain_variant()
    assert var.cnot_count == layer.cnot_count == 4
    assert [g.qubits for g in var.gates if g.kind == "cx"] == [g.qubits for g in layer.gates if g.kind == "cx"]
    U = var.unitary()
    assert np.allclose(U, U[0, 0] * np.eye(4), atol=1e-12)
    assert make_clifford_identity_variant(var) == var
    np.testing.assert_allclose(U @ U, np.eye(4), atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_variant_keeps_cx_placement(n):
    layer, var = chain_variant(n)
    assert [i for i, g in enumerate(layer.gates) if g.kind == "cx"] == [i for i, g in enumerate(var.gates) if g.kind == "cx"]
    assert np.allclose(var.unitary(), np.eye(1 << n), atol=1e-12)


def test_pauli_fidelity_examples():
    ident = PauliChannel.identity((0,))
    assert all(pauli_fidelity(ident, a) == 1 for a in all_paulis(1))
    ch = PauliChannel.from_errors((0,), {"Z": 0.05})
    assert pauli_fidelity(ch, P("X")) == pytest.approx(0.90)
    assert pauli_fidelity(ch, P("Y")) == pytest.approx(0.90)
    assert pauli_fidelity(ch, P("Z")) == pytest.approx(1.0)
    dep = PauliChannel.from_errors((0,), {"X": 0.01, "Y": 0.01, "Z": 0.01})
    assert pauli_fidelity(dep, P("X")) == pytest.approx(0.96)


def test_cb_noiseless():
    var = single_qubit_variant()
    est = run_cycle_benchmark(DeviceModel.noiseless(1), var, CBConfig())
    for lab in "XYZ":
        assert est.f(lab) == pytest.approx(1.0, abs=1e-12)


def test_cb_exact_dephasing():
    var = single_qubit_variant()
    model = DeviceModel(1, [PauliChannel.from_errors((0,), {"Z": 0.05})])
    est = run_cycle_benchmark(model, var, CBConfig(probes=["X"]))
    assert est.f("X") == pytest.approx(0.90, abs=1e-6)


def test_cb_sampled_dephasing():
    var = single_qubit_variant()
    model = DeviceModel(1, [PauliChannel.from_errors((0,), {"Z": 0.05})])
    est = run_cycle_benchmark(model, var, CBConfig(probes=["X"], shots=100_000, mode="sampled", seed=1))
    assert est.f("X") == pytest.approx(0.90, abs=0.005)


def test_cb_rejects_non_identity_layer():
    layer, _ = chain_variant()
    with pytest.raises(ValueError):
        run_cycle_benchmark(DeviceModel.noiseless(2), layer, CBConfig())


def test_reconstruct_examples():
    ones = estimate_from({"X": 1.0, "Y": 1.0, "Z": 1.0}, 1)
    ch = reconstruct_error_probabilities(ones, 1)
    np.testing.assert_allclose(ch.probs, [1, 0, 0, 0], atol=1e-15)
    ch = reconstruct_error_probabilities(estimate_from({"X": 0.9, "Y": 0.9, "Z": 1.0}, 1), 1)
    np.testing.assert_allclose(ch.probs, [0.95, 0, 0, 0.05], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_reconstruct_inverts_fidelities(seed, K):
    rng = np.random.default_rng(seed)
    ch = PauliChannel(tuple(range(K)), rng.dirichlet(np.ones(4**K)))
    f = channel_fidelities(ch)
    labels = [p.word for p in all_paulis(K)]
    est = estimate_from(dict(zip(labels[1:], f[1:])), K)
    np.testing.assert_allclose(reconstruct_error_probabilities(est, K).probs, ch.probs, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_tiled_reconstruction_exact(n):
    chans = synthetic_tiled_channels(n, np.random.default_rng(n), 1e-3, 2e-2)
    model = DeviceModel(n, chans)
    _, var = chain_variant(n)
    est = run_cycle_benchmark(model, var, CBConfig())
    found = reconstruct_tiled_channels(est, model.subgroups)
    for a, b in zip(found, chans):
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-8)


def test_monotone_in_injected_error():
    var = single_qubit_variant()
    fs = []
    for eps in (0.01, 0.02, 0.04):
        model = DeviceModel(1, [PauliChannel.from_errors((0,), {"Z": eps, "X": 0.01})])
        fs.append(run_cycle_benchmark(model, var, CBConfig(probes=["X", "Y"])).f("Y"))
    assert fs[0] > fs[1] > fs[2]


def test_sampled_consistency_within_three_sigma():
    _, var = chain_variant()
    rng = np.random.default_rng(123)
    inside = total = 0
    for trial in range(20):
        ch = PauliChannel.from_errors((0, 1), {lab: rng.uniform(1e-3, 2e-2) for lab in ("ZI", "IZ", "XX", "YY", "XY")})
        est = run_cycle_benchmark(DeviceModel(2, [ch]), var, CBConfig(shots=100_000, mode="sampled", seed=trial))
        found = reconstruct_error_probabilities(est, 2, (0, 1))
        # eps = 4^-K sum_a s(a, k) f_a, so the variances add with weight 16^-K
        se_f = np.array([est.fits[p.word].stderr for p in list(all_paulis(2))[1:]])
        se_eps = np.sqrt((se_f**2).sum()) / 16
        dev = np.abs(found.probs[1:] - ch.probs[1:])
        inside += int((dev <= 3 * se_eps).sum())
        total += dev.size
    assert inside / total >= 0.99


def test_fit_decay_flags_sign_flip_and_reports_stderr():
    fit = fit_decay([2, 4, 8], [0.81, 0.6561, -0.43])
    assert fit.flagged
    exact = fit_decay([2, 4, 8, 16], [0.9**m for m in (2, 4, 8, 16)])
    assert exact.f == pytest.approx(0.9, abs=1e-14) and exact.stderr < 1e-12
    assert exact.A == pytest.approx(1.0, abs=1e-12)


def test_spam_kept_in_amplitude():
    var = single_qubit_variant()
    model = DeviceModel(1, [PauliChannel.from_errors((0,), {"Z": 0.05})], readout_error=0.05)
    est = run_cycle_benchmark(model, var, CBConfig(probes=["X"], shots=1_000_000, mode="sampled", seed=2))
    assert est.f("X") == pytest.approx(0.90, abs=0.003)
    assert est.fits["X"].A == pytest.approx(0.9, abs=0.02)


def test_default_probes():
    assert len(default_probes(2)) == 15
    probes = default_probes(3, [(0, 1), (1, 2)])
    assert len(probes) == len(set(probes)) == 15 + 15 - 3


def test_config_validation():
    with pytest.raises(ValueError):
        CBConfig(depths=(4, 2))
    with pytest.raises(ValueError):
        CBConfig(mode="fast")


def test_variant_channels_transfer_to_original_layer():
    layer, var = chain_variant()
    chans = synthetic_tiled_channels(2, np.random.default_rng(5), 1e-3, 2e-2)
    est = run_cycle_benchmark(DeviceModel(2, chans), var, CBConfig())
    found = reconstruct_tiled_channels(est, [(0, 1)])
    rho0 = basis_state("10")
    a = execute(layer, 30, DeviceModel(2, chans), rho0=rho0).states
    b = execute(layer, 30, DeviceModel(2, found), rho0=rho0).states
    assert np.abs(a - b).max() < 1e-8
