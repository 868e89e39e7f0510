import numpy as np
import pytest
from scipy.linalg import expm

from noise_forge.hamiltonian import (
    ChainParams,
    Hamiltonian,
    TrotterPlan,
    build_chain_hamiltonian,
    build_tfim_hamiltonian,
    build_trotter_layer,
    chain_depth_estimate,
    commutator_norm,
    depth_estimate,
    product_formula_unitary,
)
from noise_forge.pauli import PauliString


def _as_dict(H):
    return {p.word: c for c, p in H.terms}


def test_default_chain_two_sites():
    H = build_chain_hamiltonian(ChainParams((121.5, 121.0), (0.5,)))
    assert _as_dict(H) == {"ZI": -60.75, "IZ": -60.5, "XX": 0.25, "YY": 0.25}
    assert ChainParams.default_chain(2) == ChainParams((121.5, 121.0), (0.5,))


def test_chain_zero_and_three_sites():
    H = build_chain_hamiltonian(ChainParams((0, 0), (0,)))
    assert all(c == 0 for c in H.coefficients)
    H3 = build_chain_hamiltonian(ChainParams((1, 1, 1), (2, 2)))
    assert len(H3.terms) == 7
    d = _as_dict(H3)
    assert [d[w] for w in ("ZII", "IZI", "IIZ")] == [-0.5] * 3
    assert [d[w] for w in ("XXI", "YYI", "IXX", "IYY")] == [1.0] * 4


def test_tfim_examples():
    assert _as_dict(build_tfim_hamiltonian(2, 0.5236, 1)) == {"ZZ": -0.5236, "XI": 1.0, "IX": 1.0}
    assert all(c == 0 for c in build_tfim_hamiltonian(3, 0, 0).coefficients)
    assert build_tfim_hamiltonian(3, 1, 2).coefficients == [-1, -1, 2, 2, 2]


def test_chain_layer_structure():
    H = build_chain_hamiltonian(ChainParams.default_chain(2))
    layer = build_trotter_layer(H, TrotterPlan(1, 0.1, 1))
    assert layer.cnot_count == 4
    kinds = [g.kind for g in layer.gates]
    # Z rotations come first, then the XX and YY exponentials
    assert kinds[:2] == ["rz", "rz"]
    assert kinds.count("cx") == 4


@pytest.mark.parametrize("n", [2, 3, 4])
def test_two_cnots_per_two_qubit_term(n):
    for H in (build_chain_hamiltonian(ChainParams.default_chain(n)), build_tfim_hamiltonian(n, 0.5, 1.0)):
        two = sum(1 for _, p in H.terms if p.weight == 2)
        for order in (1, 2):
            layer = build_trotter_layer(H, TrotterPlan(order, 0.1, 1))
            # the symmetric formula runs every exponential twice
            assert layer.cnot_count == 2 * two * order


def test_zero_step_is_identity():
    H = build_chain_hamiltonian(ChainParams.default_chain(3))
    U = build_trotter_layer(H, TrotterPlan(1, 0.0, 1)).unitary()
    phase = U[0, 0]
    assert np.max(np.abs(U - phase * np.eye(8))) < 1e-12


def _dist_up_to_phase(A, B):
    ph = np.trace(B.conj().T @ A)
    ph = ph / abs(ph)
    return np.linalg.norm(A - ph * B, 2)


def test_layer_close_to_exponential():
    H = build_chain_hamiltonian(ChainParams.default_chain(2))
    dt = 0.01
    U = build_trotter_layer(H, TrotterPlan(1, dt, 1)).unitary()
    exact = expm(-1j * H.to_matrix() * dt)
    assert _dist_up_to_phase(U, exact) < commutator_norm(H, 1) * dt**2


@pytest.mark.parametrize("order", [1, 2])
def test_circuit_matches_product_formula(order):
    H = build_tfim_hamiltonian(3, 0.7, 0.4)
    U = build_trotter_layer(H, TrotterPlan(order, 0.3, 1)).unitary()
    assert _dist_up_to_phase(U, product_formula_unitary(H, 0.3, order)) < 1e-12


def _trotter_error(H, t, D, order):
    U1 = product_formula_unitary(H, t / D, order)
    return _dist_up_to_phase(np.linalg.matrix_power(U1, D), expm(-1j * H.to_matrix() * t))


@pytest.mark.parametrize("n", [2, 3])
def test_first_order_error_scaling(n):
    H = build_tfim_hamiltonian(n, 0.8, 0.6)
    errs = [_trotter_error(H, 1.0, D, 1) for D in (8, 16, 32, 64)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 2) < 0.2)


def test_second_order_error_scaling():
    H = build_chain_hamiltonian(ChainParams((1.0, 0.3, -0.4), (0.5, 0.7)))
    Ds = np.array([8, 16, 32, 64])
    errs = [_trotter_error(H, 1.0, D, 2) for D in Ds]
    slope = -np.polyfit(np.log(Ds), np.log(errs), 1)[0]
    assert slope >= 1.8


def test_depth_estimates():
    assert depth_estimate(1, 1, 1, 1) == 1
    assert depth_estimate(4, 2, 0.1, 1) == 160
    assert depth_estimate(4, 2, 0.1, 2) == 18
    assert chain_depth_estimate(1, 1, 1, 0, 1, 1) == 1
    assert chain_depth_estimate(2, 1, 0.5, 121.5, 1, 0.1) == 1220
    D1 = chain_depth_estimate(3, 1, 0.5, 10, 2, 0.05)
    D2 = chain_depth_estimate(3, 1, 0.5, 10, 2, 0.1)
    assert D2 == -(-D1 // 2) or abs(D2 - D1 / 2) <= 1


def test_commutator_norms():
    H = Hamiltonian(2, ((1.0, PauliString.from_label("ZI")), (0.5, PauliString.from_label("ZZ"))))
    assert commutator_norm(H, 1) == 0
    H1 = Hamiltonian(1, ((1.0, PauliString.from_label("X")), (1.0, PauliString.from_label("Z"))))
    assert commutator_norm(H1, 1) == pytest.approx(4.0, abs=1e-12)
    a = commutator_norm(build_chain_hamiltonian(ChainParams.default_chain(2)), 1)
    assert 0 < a < np.inf


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_chain_hamiltonian(ChainParams((1.0, 2.0), (0.5, 0.5)))
    with pytest.raises(ValueError):
        TrotterPlan(3, 0.1, 1)
    with pytest.raises(ValueError):
        Hamiltonian(2, ((np.nan, PauliString.from_label("ZI")),))
    with pytest.raises(ValueError):
        build_trotter_layer(Hamiltonian(3, ((1.0, PauliString.from_label("XIX")),)), TrotterPlan(1, 0.1, 1))


def test_hamiltonian_roundtrip():
    H = build_tfim_hamiltonian(3, 0.5236, 1.0)
    assert Hamiltonian.from_dict(H.to_dict()) == H
