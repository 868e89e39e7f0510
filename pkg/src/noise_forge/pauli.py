"""Pauli-string algebra, Clifford conjugation and dense matrix helpers.

Qubit ``q`` of an ``n``-qubit register is letter ``q`` of a word (left to right)
and the ``q``-th factor of the Kronecker product, i.e. qubit 0 is the most
significant bit of a computational-basis index.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
_PHASES = (1, 1j, -1, -1j)

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
H2 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S2 = np.array([[1, 0], [0, 1j]], dtype=complex)
CX4 = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
LETTER_MATRIX = {"I": I2, "X": X2, "Y": Y2, "Z": Z2}


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    """Signed Pauli word stored as x/z bitmasks plus a phase exponent.

    The operator is ``i**phase * P_0 (x) P_1 (x) ...`` with the Hermitian
    letters I, X, Y, Z. Bit ``q`` of ``x``/``z`` belongs to qubit ``q``.
    """

    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("qubit count must be non-negative")
        limit = 1 << self.n
        if not (0 <= self.x < limit and 0 <= self.z < limit):
            raise ValueError("bitmask exceeds qubit count")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """Parse ``"XIZ"``, ``"-XY"``, ``"+iZ"`` or ``"-iYY"``."""
        s = label.strip()
        phase = 0
        if s.startswith("+"):
            s = s[1:]
        elif s.startswith("-"):
            phase = 2
            s = s[1:]
        if s.startswith("i"):
            phase += 1
            s = s[1:]
        x = z = 0
        for q, ch in enumerate(s):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {label!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(len(s), x, z, phase)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0, 0)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        bx, bz = _LETTER_BITS[letter]
        return cls(n, bx << qubit, bz << qubit)

    @property
    def word(self) -> str:
        return "".join(
            _BITS_LETTER[((self.x >> q) & 1, (self.z >> q) & 1)] for q in range(self.n)
        )

    @property
    def sign(self) -> complex:
        return _PHASES[self.phase]

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x | self.z
        return tuple(q for q in range(self.n) if (m >> q) & 1)

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def unsigned(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, 0)

    def __str__(self) -> str:
        prefix = ("+", "+i", "-", "-i")[self.phase]
        return prefix + self.word

    def __mul__(self, other: "PauliString") -> "PauliString":
        return pauli_mul(self, other)

    def to_matrix(self) -> np.ndarray:
        mat = np.ones((1, 1), dtype=complex)
        for ch in self.word:
            mat = np.kron(mat, LETTER_MATRIX[ch])
        return self.sign * mat

    def action(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(perm, amp)`` with ``P|b> = amp[b] |perm[b]>``."""
        return _pauli_action(self.n, self.x, self.z, self.phase)

    def embed(self, n: int, qubits: Sequence[int]) -> "PauliString":
        """Place this ``K``-qubit word on ``qubits`` of an ``n``-qubit register."""
        if len(qubits) != self.n:
            raise ValueError("subgroup width does not match word length")
        x = z = 0
        for j, q in enumerate(qubits):
            if not 0 <= q < n:
                raise ValueError(f"qubit {q} out of range for n={n}")
            x |= ((self.x >> j) & 1) << q
            z |= ((self.z >> j) & 1) << q
        return PauliString(n, x, z, self.phase)

    def restrict(self, qubits: Sequence[int]) -> "PauliString":
        """Letters of this string on ``qubits`` (phase dropped)."""
        x = z = 0
        for j, q in enumerate(qubits):
            x |= ((self.x >> q) & 1) << j
            z |= ((self.z >> q) & 1) << j
        return PauliString(len(qubits), x, z, 0)


@lru_cache(maxsize=4096)
def _pauli_action(n: int, x: int, z: int, phase: int) -> tuple[np.ndarray, np.ndarray]:
    dim = 1 << n
    b = np.arange(dim)
    # basis index bit (n-1-q) holds qubit q
    xm = _reverse_bits(x, n)
    zm = _reverse_bits(z, n)
    ym = xm & zm
    perm = b ^ xm
    # Y|0> = i|1>, Y|1> = -i|0>; Z|1> = -|1>
    parity_z = np.array([_popcount(v) & 1 for v in (b & zm)])
    n_y = _popcount(ym)
    amp = (-1.0) ** parity_z * (1j**n_y) * _PHASES[phase]
    amp = amp.astype(complex)
    perm.setflags(write=False)
    amp.setflags(write=False)
    return perm, amp


def _reverse_bits(mask: int, n: int) -> int:
    out = 0
    for q in range(n):
        if (mask >> q) & 1:
            out |= 1 << (n - 1 - q)
    return out


def _check_len(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise ValueError(f"length mismatch: {a.n} vs {b.n}")


def pauli_mul(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with exact four-unit phase."""
    _check_len(a, b)
    x = a.x ^ b.x
    z = a.z ^ b.z
    # P = i^{|x&z|} X^x Z^z, and Z^z1 X^x2 = (-1)^{|z1&x2|} X^x2 Z^z1
    e = (
        a.phase
        + b.phase
        + _popcount(a.x & a.z)
        + _popcount(b.x & b.z)
        + 2 * _popcount(a.z & b.x)
        - _popcount(x & z)
    )
    return PauliString(a.n, x, z, e % 4)


def commutes(a: PauliString, b: PauliString) -> int:
    """+1 if the strings commute, -1 otherwise."""
    _check_len(a, b)
    return -1 if (_popcount(a.x & b.z) + _popcount(a.z & b.x)) & 1 else 1


def all_paulis(n: int) -> Iterator[PauliString]:
    """All ``4**n`` unsigned words, ordered by base-4 digits I<X<Y<Z with
    qubit 0 most significant (``II, IX, IY, IZ, XI, ...``)."""
    for letters in itertools.product("IXYZ", repeat=n):
        yield PauliString.from_label("".join(letters))


def pauli_index(p: PauliString) -> int:
    """Position of ``p`` in :func:`all_paulis` order."""
    k = 0
    for ch in p.word:
        k = 4 * k + "IXYZ".index(ch)
    return k


def pauli_labels(n: int) -> list[str]:
    return ["".join(t) for t in itertools.product("IXYZ", repeat=n)]


def apply_pauli(rho: np.ndarray, p: PauliString) -> np.ndarray:
    """``P rho P^dagger``; the phase of ``p`` cancels.

    Works on a single ``(d, d)`` matrix or a stack ``(..., d, d)``.
    """
    d = rho.shape[-1]
    if rho.shape[-2] != d or d != 1 << p.n:
        raise ValueError(f"dimension mismatch: rho is {rho.shape}, string has n={p.n}")
    perm, amp = p.action()
    # out[perm[a], perm[b]] = amp[a] rho[a, b] amp[b]^*, and perm is an involution
    a = amp[perm]
    out = np.take(np.take(rho, perm, axis=-2), perm, axis=-1)
    out *= a[:, None] * a.conj()[None, :]
    return out


# ---------------------------------------------------------------- gates


CLIFFORD_KINDS = frozenset({"h", "cx", "s", "sdg", "x", "y", "z"})
SINGLE_KINDS = frozenset({"rz", "rx", "ry", "h", "s", "sdg", "x", "y", "z", "u"})


@dataclass(frozen=True)
class GateOp:
    """One gate of a circuit.

    ``kind`` is one of ``rz rx ry`` (angle in ``param``), ``h s sdg x y z``,
    ``u`` (explicit 2x2 ``matrix``), ``cx`` (``qubits=(control, target)``),
    ``reset`` and ``greset`` (``matrix`` holds the pre unitary U and
    ``post`` the post unitary V).
    """

    kind: str
    qubits: tuple[int, ...]
    param: float = 0.0
    matrix: tuple | None = field(default=None, compare=False)
    post: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        qs = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qs)
        if len(set(qs)) != len(qs):
            raise ValueError(f"repeated operand in {self.kind} {qs}")
        want = 2 if self.kind == "cx" else 1
        if self.kind not in SINGLE_KINDS | {"cx", "reset", "greset"}:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(qs) != want:
            raise ValueError(f"{self.kind} takes {want} operand(s), got {qs}")
        if any(q < 0 for q in qs):
            raise ValueError("negative qubit index")

    def local_matrix(self) -> np.ndarray:
        """Unitary on the gate's own qubits (2x2 or 4x4)."""
        k = self.kind
        if k == "rz":
            return np.diag([cmath.exp(-0.5j * self.param), cmath.exp(0.5j * self.param)])
        if k == "rx":
            c, s = math.cos(self.param / 2), math.sin(self.param / 2)
            return np.array([[c, -1j * s], [-1j * s, c]])
        if k == "ry":
            c, s = math.cos(self.param / 2), math.sin(self.param / 2)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if k == "h":
            return H2
        if k == "s":
            return S2
        if k == "sdg":
            return S2.conj()
        if k in ("x", "y", "z"):
            return LETTER_MATRIX[k.upper()]
        if k == "u":
            return np.array(self.matrix, dtype=complex).reshape(2, 2)
        if k == "cx":
            return CX4
        raise ValueError(f"{k} is not unitary")

    def is_clifford(self) -> bool:
        if self.kind in CLIFFORD_KINDS:
            return True
        if self.kind == "rz":
            quarter = self.param / (math.pi / 2)
            return abs(quarter - round(quarter)) < 1e-12
        return False


def matrix_tuple(m: np.ndarray) -> tuple:
    return tuple(complex(v) for v in np.asarray(m).ravel())


def embed_operator(op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full-register matrix of ``op`` acting on ``qubits`` (in that order)."""
    k = len(qubits)
    if op.shape != (1 << k, 1 << k):
        raise ValueError("operator size does not match qubit list")
    dim = 1 << n
    others = [q for q in range(n) if q not in qubits]
    order = list(qubits) + others
    full = np.kron(op, np.eye(1 << (n - k), dtype=complex))
    # full acts on qubits ordered as `order`; permute to natural order
    t = full.reshape([2] * (2 * n))
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(dim, dim)


def gate_unitary(g: GateOp, n: int) -> np.ndarray:
    if any(q >= n for q in g.qubits):
        raise ValueError(f"gate {g.kind}{g.qubits} out of range for n={n}")
    return embed_operator(g.local_matrix(), g.qubits, n)


def circuit_unitary(gates: Sequence[GateOp], n: int) -> np.ndarray:
    u = np.eye(1 << n, dtype=complex)
    for g in gates:
        u = gate_unitary(g, n) @ u
    return u


def _conj_single(kind: str, letter: str, param: float) -> tuple[str, int]:
    """(letter, phase exponent) of G L G^dagger for single-qubit Clifford G."""
    if letter == "I":
        return "I", 0
    if kind == "h":
        return {"X": ("Z", 0), "Y": ("Y", 2), "Z": ("X", 0)}[letter]
    if kind in ("s", "sdg") or kind == "rz":
        if kind == "rz":
            turns = int(round(param / (math.pi / 2))) % 4
        else:
            turns = 1 if kind == "s" else 3
        out, ph = letter, 0
        for _ in range(turns):
            # S X S^dag = Y, S Y S^dag = -X
            if out == "X":
                out = "Y"
            elif out == "Y":
                out, ph = "X", ph + 2
        return out, ph % 4
    if kind in ("x", "y", "z"):
        return letter, 0 if letter == kind.upper() else 2
    raise ValueError(f"{kind} is not a supported Clifford gate")


def clifford_conjugate(g: GateOp, p: PauliString) -> PauliString:
    """Signed Pauli string ``G p G^dagger``."""
    if not g.is_clifford():
        raise ValueError(f"gate {g.kind}({g.param}) is not Clifford")
    if any(q >= p.n for q in g.qubits):
        raise ValueError("gate acts outside the string")
    if g.kind == "cx":
        c, t = g.qubits
        xc, zc = (p.x >> c) & 1, (p.z >> c) & 1
        xt, zt = (p.x >> t) & 1, (p.z >> t) & 1
        # X_c -> X_c X_t, Z_t -> Z_c Z_t
        nxt, nzc = xt ^ xc, zc ^ zt
        x = (p.x & ~(1 << t)) | (nxt << t)
        z = (p.z & ~(1 << c)) | (nzc << c)
        # sign rule on Hermitian letters (Aaronson-Gottesman)
        flip = xc & zt & (xt ^ zc ^ 1)
        return PauliString(p.n, x, z, (p.phase + 2 * flip) % 4)
    q = g.qubits[0]
    letter = p.word[q]
    new, ph = _conj_single(g.kind, letter, g.param)
    bx, bz = _LETTER_BITS[new]
    x = (p.x & ~(1 << q)) | (bx << q)
    z = (p.z & ~(1 << q)) | (bz << q)
    return PauliString(p.n, x, z, (p.phase + ph) % 4)
