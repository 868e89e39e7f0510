"""Dense-matrix oracles, written without the package's fast paths."""

from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
LETTERS = {"I": I2, "X": X, "Y": Y, "Z": Z}
H_GATE = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_GATE = np.diag([1, 1j])
CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def word_matrix(word: str) -> np.ndarray:
    return reduce(np.kron, [LETTERS[c] for c in word])


def words(n: int) -> list[str]:
    out = [""]
    for _ in range(n):
        out = [w + c for w in out for c in "IXYZ"]
    return out


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    d = 1 << n
    a = rng.normal(size=(d, rank or d)) + 1j * rng.normal(size=(d, rank or d))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def pauli_channel_dense(rho: np.ndarray, errors: dict[str, float], qubits, n: int) -> np.ndarray:
    """Kraus sum of a Pauli channel given as ``{word: prob}`` on ``qubits``."""
    out = np.zeros_like(rho)
    for w, p in errors.items():
        full = ["I"] * n
        for q, c in zip(qubits, w):
            full[q] = c
        P = word_matrix("".join(full))
        out += p * P @ rho @ P.conj().T
    return out


def lindblad_rhs(H: np.ndarray, jumps, rho: np.ndarray) -> np.ndarray:
    out = -1j * (H @ rho - rho @ H)
    for g, L in jumps:
        LdL = L.conj().T @ L
        out += g * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out
