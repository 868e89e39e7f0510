"""Pauli-sum Hamiltonians, Trotter layers as gate lists, and depth heuristics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .pauli import GateOp, PauliString, circuit_unitary

DENSE_LIMIT = 6


@dataclass(frozen=True)
class Hamiltonian:
    n: int
    terms: tuple[tuple[float, PauliString], ...]

    def __post_init__(self):
        terms = tuple((float(c), p) for c, p in self.terms)
        for c, p in terms:
            if not math.isfinite(c):
                raise ValueError("non-finite coefficient")
            if p.n != self.n:
                raise ValueError(f"term {p} has length {p.n}, expected {self.n}")
            if p.phase != 0:
                raise ValueError("term strings must be unsigned (Hermitian)")
        object.__setattr__(self, "terms", terms)

    @property
    def coefficients(self) -> list[float]:
        return [c for c, _ in self.terms]

    def term_matrices(self) -> list[np.ndarray]:
        return [c * p.to_matrix() for c, p in self.terms]

    def to_matrix(self) -> np.ndarray:
        dim = 1 << self.n
        h = np.zeros((dim, dim), dtype=complex)
        for m in self.term_matrices():
            h += m
        return h

    def to_dict(self) -> dict:
        return {"n": self.n, "terms": [[c, p.word] for c, p in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "Hamiltonian":
        return cls(d["n"], tuple((c, PauliString.from_label(w)) for c, w in d["terms"]))


@dataclass(frozen=True)
class ChainParams:
    site_energies: tuple[float, ...]
    couplings: tuple[float, ...]

    @property
    def n(self) -> int:
        return len(self.site_energies)

    @classmethod
    def default_chain(cls, n: int) -> "ChainParams":
        """Site energies ``122 - 0.5 m`` (m = 1..n) and uniform coupling 0.5."""
        return cls(tuple(122 - 0.5 * m for m in range(1, n + 1)), (0.5,) * (n - 1))


def build_chain_hamiltonian(p: ChainParams) -> Hamiltonian:
    """Excitation-transfer chain: ``-E_m/2 Z_m`` then ``J/2 (XX + YY)`` per bond."""
    n = p.n
    if n < 2:
        raise ValueError("chain needs at least two sites")
    if len(p.couplings) != n - 1:
        raise ValueError(f"expected {n - 1} couplings, got {len(p.couplings)}")
    terms = [(-e / 2, PauliString.single(n, m, "Z")) for m, e in enumerate(p.site_energies)]
    for m, j in enumerate(p.couplings):
        for letter in "XY":
            pair = PauliString.from_label(letter * 2).embed(n, (m, m + 1))
            terms.append((j / 2, pair))
    return Hamiltonian(n, tuple(terms))


def build_tfim_hamiltonian(n: int, J: float, h: float) -> Hamiltonian:
    """Transverse-field Ising chain ``-J sum ZZ + h sum X``."""
    if n < 2:
        raise ValueError("TF Ising chain needs n >= 2")
    terms = [(-J, PauliString.from_label("ZZ").embed(n, (m, m + 1))) for m in range(n - 1)]
    terms += [(h, PauliString.single(n, m, "X")) for m in range(n)]
    return Hamiltonian(n, tuple(terms))


@dataclass(frozen=True)
class TrotterPlan:
    order: int
    dt: float
    layers: int
    eps_trot: float | None = None
    alpha_comm: float | None = None
    lattice_dim: int = 1

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"unsupported Trotter order {self.order}")
        if self.dt < 0:
            raise ValueError("time step must be non-negative")
        if self.layers < 1:
            raise ValueError("need at least one layer")

    @property
    def total_time(self) -> float:
        return self.layers * self.dt

    @classmethod
    def for_time(cls, t: float, layers: int, order: int = 1, **kw) -> "TrotterPlan":
        return cls(order=order, dt=t / layers, layers=layers, **kw)


@dataclass(frozen=True)
class TrotterCircuit:
    """One Trotter layer as an ordered gate list.

    ``cnot_layers`` groups gate indices of controlled-NOTs that form one
    twirling target each.
    """

    n: int
    gates: tuple[GateOp, ...]
    cnot_layers: tuple[tuple[int, ...], ...]
    dt: float
    order: int = 1

    def __post_init__(self):
        for g in self.gates:
            if any(q >= self.n for q in g.qubits):
                raise ValueError(f"gate {g.kind}{g.qubits} out of range for n={self.n}")

    def unitary(self) -> np.ndarray:
        return circuit_unitary([g for g in self.gates if g.kind not in ("reset", "greset")], self.n)

    @property
    def cnot_count(self) -> int:
        return sum(1 for g in self.gates if g.kind == "cx")

    def with_gates(self, gates: Sequence[GateOp]) -> "TrotterCircuit":
        return TrotterCircuit(self.n, tuple(gates), _group_cnots(gates), self.dt, self.order)


def _group_cnots(gates: Sequence[GateOp]) -> tuple[tuple[int, ...], ...]:
    return tuple((i,) for i, g in enumerate(gates) if g.kind == "cx")


# basis change B with B Z B^dag = letter, listed as (gates before, gates after)
_BASIS = {
    "Z": ((), ()),
    "X": (("h",), ("h",)),
    "Y": (("sdg", "h"), ("h", "s")),
}


def _term_gates(coef: float, p: PauliString, tau: float) -> list[GateOp]:
    """Gates for ``exp(-i coef P tau)``; only weight <= 2 adjacent terms."""
    support = p.support
    angle = 2 * coef * tau
    if not support:
        return []
    if len(support) > 2:
        raise ValueError(f"term {p.word} acts on more than two qubits")
    if len(support) == 2 and support[1] - support[0] != 1:
        raise ValueError(f"term {p.word} couples non-adjacent qubits")
    word = p.word
    pre: list[GateOp] = []
    post: list[GateOp] = []
    for q in support:
        before, after = _BASIS[word[q]]
        pre += [GateOp(k, (q,)) for k in before]
        post += [GateOp(k, (q,)) for k in after]
    if len(support) == 1:
        core = [GateOp("rz", support, angle)]
    else:
        c, t = support
        core = [GateOp("cx", (c, t)), GateOp("rz", (t,), angle), GateOp("cx", (c, t))]
    return pre + core + post


def build_trotter_layer(H: Hamiltonian, plan: TrotterPlan) -> TrotterCircuit:
    """Gate list for one product-formula step of length ``plan.dt``."""
    if plan.order == 1:
        seq = [(c, p, plan.dt) for c, p in H.terms]
    elif plan.order == 2:
        half = [(c, p, plan.dt / 2) for c, p in H.terms]
        seq = half + half[::-1]
    else:
        raise ValueError(f"unsupported Trotter order {plan.order}")
    gates: list[GateOp] = []
    for c, p, tau in seq:
        gates += _term_gates(c, p, tau)
    return TrotterCircuit(H.n, tuple(gates), _group_cnots(gates), plan.dt, plan.order)


def product_formula_unitary(H: Hamiltonian, dt: float, order: int = 1) -> np.ndarray:
    """``U_k(dt)`` assembled from exact term exponentials (no gate decomposition)."""
    mats = H.term_matrices()
    dim = 1 << H.n
    u = np.eye(dim, dtype=complex)
    if order == 1:
        for m in mats:
            u = expm(-1j * m * dt) @ u
    elif order == 2:
        for m in mats + mats[::-1]:
            u = expm(-1j * m * dt / 2) @ u
    else:
        raise ValueError(f"unsupported Trotter order {order}")
    return u


def depth_estimate(alpha_comm: float, t: float, eps_trot: float, order: int, constant: float = 1.0) -> int:
    """Layer count ``ceil(C alpha^{1/k} t^{1+1/k} / eps^{1/k})``."""
    if min(alpha_comm, t, eps_trot, order, constant) <= 0:
        raise ValueError("depth estimate needs positive inputs")
    k = order
    val = constant * alpha_comm ** (1 / k) * t ** (1 + 1 / k) / eps_trot ** (1 / k)
    return max(1, math.ceil(val - 1e-9))


def chain_depth_estimate(n: int, d: int, J: float, E: float, t: float, eps_trot: float, constant: float = 1.0) -> int:
    """First-order layer count for a chain (d=1) or square grid (d=2)."""
    if d not in (1, 2):
        raise ValueError("lattice dimension must be 1 or 2")
    if min(n, J, t, eps_trot, constant) <= 0 or E < 0:
        raise ValueError("chain depth estimate needs positive inputs")
    val = constant * n**d * J * (J + E) * t**2 / eps_trot
    return max(1, math.ceil(val - 1e-9))


def commutator_norm(H: Hamiltonian, order: int) -> float:
    """Sum of spectral norms of all nested commutators of depth ``order``."""
    if H.n > DENSE_LIMIT:
        raise ValueError(f"dense commutator evaluation limited to n <= {DENSE_LIMIT}")
    if order < 1:
        raise ValueError("order must be >= 1")
    mats = H.term_matrices()
    total = 0.0
    for idx in itertools.product(range(len(mats)), repeat=order + 1):
        acc = mats[idx[0]]
        for j in idx[1:]:
            acc = mats[j] @ acc - acc @ mats[j]
            if not acc.any():
                break
        if acc.any():
            total += float(np.linalg.norm(acc, 2))
    return total
