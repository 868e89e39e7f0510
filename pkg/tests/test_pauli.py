import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noise_forge.pauli import (
    GateOp,
    PauliString,
    all_paulis,
    apply_pauli,
    circuit_unitary,
    clifford_conjugate,
    commutes,
    pauli_index,
    pauli_labels,
    pauli_mul,
)
from oracles import CX, H_GATE, S_GATE, random_density, word_matrix, words

P = PauliString.from_label


def test_mul_identity():
    r = pauli_mul(P("II"), P("XZ"))
    assert r.word == "XZ" and r.phase == 0


def test_mul_xy_is_iz():
    r = pauli_mul(P("X"), P("Y"))
    assert r.word == "Z" and r.sign == 1j


def test_mul_xz_zx_is_yy():
    r = pauli_mul(P("XZ"), P("ZX"))
    assert r.word == "YY" and r.sign == 1
    np.testing.assert_allclose(r.to_matrix(), word_matrix("XZ") @ word_matrix("ZX"), atol=1e-14)


@pytest.mark.parametrize("a,b,s", [("X", "X", 1), ("X", "Z", -1), ("XX", "ZZ", 1)])
def test_commutes_examples(a, b, s):
    assert commutes(P(a), P(b)) == s


@pytest.mark.parametrize("n", [1, 2])
def test_mul_matches_matrices_exhaustively(n):
    ps = list(all_paulis(n))
    for a, b in itertools.product(ps, ps):
        np.testing.assert_allclose(pauli_mul(a, b).to_matrix(), a.to_matrix() @ b.to_matrix(), atol=1e-14)


@pytest.mark.parametrize("n", [1, 2])
def test_mul_associative_with_phases(n):
    ps = [PauliString(p.n, p.x, p.z, ph) for p in all_paulis(n) for ph in (0, 1)]
    for a, b, c in itertools.product(ps, repeat=3):
        lhs = pauli_mul(pauli_mul(a, b), c)
        rhs = pauli_mul(a, pauli_mul(b, c))
        assert (lhs.x, lhs.z, lhs.phase) == (rhs.x, rhs.z, rhs.phase)


@pytest.mark.parametrize("n", [1, 2])
def test_commutes_matches_product_order(n):
    ps = list(all_paulis(n))
    for a, b in itertools.product(ps, ps):
        ab, ba = pauli_mul(a, b), pauli_mul(b, a)
        sign = ab.sign / ba.sign
        assert commutes(a, b) == round(sign.real)


def test_all_paulis_order_and_index():
    labs = [p.word for p in all_paulis(2)]
    assert labs == words(2) == pauli_labels(2)
    assert [pauli_index(p) for p in all_paulis(2)] == list(range(16))


def test_cx_conjugates_x_on_control():
    g = GateOp("cx", (0, 1))
    out = clifford_conjugate(g, P("XI"))
    assert out.word == "XX" and out.sign == 1


def test_h_conjugates_x_to_z():
    out = clifford_conjugate(GateOp("h", (0,)), P("X"))
    assert out.word == "Z" and out.sign == 1


def test_identity_fixed_by_every_gate():
    for g in [GateOp("h", (0,)), GateOp("s", (1,)), GateOp("cx", (1, 0)), GateOp("rz", (0,), np.pi / 2)]:
        assert clifford_conjugate(g, P("II")).word == "II"


def _gate_matrices():
    yield GateOp("h", (0,)), np.kron(H_GATE, np.eye(2))
    yield GateOp("h", (1,)), np.kron(np.eye(2), H_GATE)
    yield GateOp("s", (0,)), np.kron(S_GATE, np.eye(2))
    yield GateOp("sdg", (1,)), np.kron(np.eye(2), S_GATE.conj())
    yield GateOp("cx", (0, 1)), CX
    swap = np.eye(4)[[0, 2, 1, 3]]
    yield GateOp("cx", (1, 0)), swap @ CX @ swap
    for letter in "xyz":
        yield GateOp(letter, (1,)), np.kron(np.eye(2), word_matrix(letter.upper()))
    for k in range(4):
        th = k * np.pi / 2
        yield GateOp("rz", (0,), th), np.kron(np.diag([np.exp(-1j * th / 2), np.exp(1j * th / 2)]), np.eye(2))


def test_clifford_conjugate_matches_dense_for_all_two_qubit_strings():
    for g, U in _gate_matrices():
        np.testing.assert_allclose(circuit_unitary([g], 2), U, atol=1e-12)
        for p in all_paulis(2):
            out = clifford_conjugate(g, p)
            np.testing.assert_allclose(out.to_matrix(), U @ p.to_matrix() @ U.conj().T, atol=1e-12)


def test_apply_pauli_examples():
    zero = np.diag([1.0, 0.0]).astype(complex)
    np.testing.assert_allclose(apply_pauli(zero, P("Z")), zero)
    np.testing.assert_allclose(apply_pauli(zero, P("X")), np.diag([0.0, 1.0]))
    plus = np.full((2, 2), 0.5, dtype=complex)
    np.testing.assert_allclose(apply_pauli(plus, P("Z")), np.array([[0.5, -0.5], [-0.5, 0.5]]))


pauli_words = st.integers(1, 3).flatmap(lambda n: st.text("IXYZ", min_size=n, max_size=n))


@settings(max_examples=60, deadline=None)
@given(pauli_words, st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_apply_pauli_matches_dense_and_is_involution(word, phase, seed):
    p = PauliString(len(word), P(word).x, P(word).z, phase)
    rho = random_density(len(word), np.random.default_rng(seed))
    M = p.to_matrix()
    out = apply_pauli(rho, p)
    np.testing.assert_allclose(out, M @ rho @ M.conj().T, atol=1e-12)
    np.testing.assert_allclose(apply_pauli(out, p), rho, atol=1e-12)


def test_apply_pauli_on_stack():
    rng = np.random.default_rng(3)
    stack = np.array([random_density(2, rng) for _ in range(4)])
    out = apply_pauli(stack, P("XY"))
    for a, b in zip(stack, out):
        np.testing.assert_allclose(b, apply_pauli(a, P("XY")), atol=1e-14)


def test_label_parsing_and_validation():
    assert P("-iYY").sign == -1j
    with pytest.raises(ValueError):
        P("XQ")
    with pytest.raises(ValueError):
        GateOp("cx", (0, 0))
