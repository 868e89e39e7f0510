"""Noise channels acting on full-register density matrices.

Covers stochastic Pauli channels on qubit subgroups, amplitude damping,
reset and generalized reset, plus the conversion of a per-layer channel into
the Lindblad generator it approximates when applied every ``dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pauli import I2, PauliString, all_paulis, apply_pauli, commutes, pauli_labels

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
DEFAULT_P_ER = 1e-3


def _check_prob(name: str, v: float) -> None:
    if not (0.0 <= v <= 1.0) or math.isnan(v):
        raise ValueError(f"{name}={v} outside [0, 1]")


def apply_local_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray], qubit: int) -> np.ndarray:
    """``sum_j K_j rho K_j^dag`` with 2x2 Kraus operators on one qubit.

    Accepts ``(d, d)`` or a stack ``(s, d, d)``.
    """
    d = rho.shape[-1]
    n = d.bit_length() - 1
    if not 0 <= qubit < n:
        raise ValueError(f"qubit {qubit} out of range for n={n}")
    lead = rho.shape[:-2]
    a, b = 1 << qubit, 1 << (n - qubit - 1)
    t = rho.reshape(lead + (a, 2, b, a, 2, b))
    out = np.zeros_like(t)
    for k in kraus:
        k = np.asarray(k, dtype=complex)
        tmp = np.einsum("ij,...ajbckd->...aibckd", k, t)
        out += np.einsum("...aibckd,lk->...aibcld", tmp, k.conj())
    return out.reshape(rho.shape)


@dataclass(frozen=True)
class PauliChannel:
    """Stochastic Pauli channel on an ordered qubit subgroup.

    ``probs[k]`` is the probability of the ``k``-th word in
    :func:`~noise_forge.pauli.all_paulis` order; ``probs[0]`` is the
    no-error probability.
    """

    subgroup: tuple[int, ...]
    probs: np.ndarray = field(compare=False)

    def __post_init__(self):
        sub = tuple(int(q) for q in self.subgroup)
        object.__setattr__(self, "subgroup", sub)
        if len(set(sub)) != len(sub):
            raise ValueError("repeated qubit in subgroup")
        p = np.asarray(self.probs, dtype=float).copy()
        if p.shape != (4 ** len(sub),):
            raise ValueError(f"expected {4 ** len(sub)} probabilities, got {p.shape}")
        if np.any(p < -1e-15) or np.any(p > 1 + 1e-15):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return len(self.subgroup)

    @property
    def labels(self) -> list[str]:
        return pauli_labels(self.K)

    @classmethod
    def from_errors(cls, subgroup: Sequence[int], errors: Mapping[str, float]) -> "PauliChannel":
        """Build from non-identity error probabilities; the identity takes the rest."""
        K = len(subgroup)
        labels = pauli_labels(K)
        p = np.zeros(4**K)
        for lab, v in errors.items():
            if len(lab) != K or lab not in labels:
                raise ValueError(f"label {lab!r} does not match subgroup width {K}")
            _check_prob(f"eps[{lab}]", v)
            if lab != labels[0]:
                p[labels.index(lab)] += v
        p[0] = 1.0 - p[1:].sum()
        if p[0] < -1e-15:
            raise ValueError("error probabilities sum above one")
        return cls(tuple(subgroup), np.clip(p, 0.0, 1.0))

    @classmethod
    def identity(cls, subgroup: Sequence[int]) -> "PauliChannel":
        p = np.zeros(4 ** len(subgroup))
        p[0] = 1.0
        return cls(tuple(subgroup), p)

    @classmethod
    def from_probs_clamped(cls, subgroup: Sequence[int], probs: Sequence[float]) -> "PauliChannel":
        """Clamp negative entries to zero and renormalize."""
        p = np.clip(np.asarray(probs, dtype=float), 0.0, None)
        s = p.sum()
        if s <= 0:
            raise ValueError("no positive probability mass")
        return cls(tuple(subgroup), p / s)

    def errors(self) -> dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.labels[1:], self.probs[1:]) if v != 0.0}

    @property
    def total_error(self) -> float:
        return float(self.probs[1:].sum())

    def strings(self, n: int) -> list[PauliString]:
        return [p.embed(n, self.subgroup) for p in all_paulis(self.K)]

    def to_dict(self) -> dict:
        return {"subgroup": list(self.subgroup), "errors": self.errors()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PauliChannel":
        return cls.from_errors(d["subgroup"], d.get("errors", {}))


def compose_pauli_channels(a: PauliChannel, b: PauliChannel) -> PauliChannel:
    """Channel ``a`` after ``b`` on the same subgroup (group convolution)."""
    if a.subgroup != b.subgroup:
        raise ValueError("subgroups differ")
    K = a.K
    words = list(all_paulis(K))
    index = {(w.x, w.z): i for i, w in enumerate(words)}
    out = np.zeros(4**K)
    for i, wi in enumerate(words):
        if a.probs[i] == 0:
            continue
        for j, wj in enumerate(words):
            if b.probs[j] == 0:
                continue
            out[index[(wi.x ^ wj.x, wi.z ^ wj.z)]] += a.probs[i] * b.probs[j]
    return PauliChannel(a.subgroup, out / out.sum())


def apply_pauli_channel(rho: np.ndarray, ch: PauliChannel) -> np.ndarray:
    """``sum_k eps_k P_k rho P_k`` with subgroup words embedded in the register."""
    d = rho.shape[-1]
    n = d.bit_length() - 1
    if any(q >= n for q in ch.subgroup):
        raise ValueError(f"subgroup {ch.subgroup} out of range for n={n}")
    out = np.zeros_like(rho)
    for eps, p in zip(ch.probs, ch.strings(n)):
        if eps != 0.0:
            out += eps * apply_pauli(rho, p)
    return out


def pauli_channel_superop(ch: PauliChannel, n: int) -> np.ndarray:
    """Row-major superoperator ``S`` with ``vec(E(rho)) = S @ vec(rho)``."""
    dim = 1 << n
    s = np.zeros((dim * dim, dim * dim), dtype=complex)
    for eps, p in zip(ch.probs, ch.strings(n)):
        if eps != 0.0:
            m = p.to_matrix()
            s += eps * np.kron(m, m.conj())
    return s


def pauli_eigenvalue(ch: PauliChannel, a: PauliString) -> float:
    """Factor by which the channel scales the ``a`` component (Pauli fidelity)."""
    if a.n != ch.K:
        raise ValueError("probe width must equal subgroup width")
    return float(sum(e * commutes(a, p) for e, p in zip(ch.probs, all_paulis(ch.K))))


# ------------------------------------------------------- non-Pauli channels


@dataclass(frozen=True)
class AmplitudeDampingSpec:
    """Per-qubit damping probabilities ``w_m = sin^2(theta_m / 2)``."""

    w: Mapping[int, float]

    def __post_init__(self):
        for q, v in self.w.items():
            _check_prob(f"w[{q}]", v)

    @classmethod
    def from_angles(cls, angles: Mapping[int, float]) -> "AmplitudeDampingSpec":
        return cls({q: math.sin(th / 2) ** 2 for q, th in angles.items()})

    def angle(self, qubit: int) -> float:
        return 2 * math.asin(math.sqrt(self.w[qubit]))


@dataclass(frozen=True)
class ResetSpec:
    """Stochastic reset slots applied once per layer.

    With ``pre``/``post`` unitaries the slot is a generalized reset: the
    qubit is rotated by ``pre^dag``, reset to ``|0>``, then rotated by ``post``.
    """

    w: Mapping[int, float]
    p_er: float = DEFAULT_P_ER
    pre: np.ndarray | None = field(default=None, compare=False)
    post: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        for q, v in self.w.items():
            _check_prob(f"w[{q}]", v)
        _check_prob("p_er", self.p_er)
        for name in ("pre", "post"):
            u = getattr(self, name)
            if u is not None:
                u = np.asarray(u, dtype=complex)
                if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, I2, atol=1e-12):
                    raise ValueError(f"{name} is not a 2x2 unitary")
                object.__setattr__(self, name, u)

    @property
    def generalized(self) -> bool:
        return self.pre is not None or self.post is not None

    def unitaries(self) -> tuple[np.ndarray, np.ndarray]:
        u = I2 if self.pre is None else self.pre
        v = I2 if self.post is None else self.post
        return u, v


def amplitude_damping_kraus(w: float) -> list[np.ndarray]:
    _check_prob("w", w)
    return [np.diag([1.0, math.sqrt(1 - w)]).astype(complex), math.sqrt(w) * SIGMA_MINUS]


def apply_amplitude_damping(rho: np.ndarray, qubit: int, w: float) -> np.ndarray:
    return apply_local_kraus(rho, amplitude_damping_kraus(w), qubit)


def reset_kraus(U: np.ndarray = I2, V: np.ndarray = I2) -> list[np.ndarray]:
    """Kraus pair ``|Psi><Phi|`` and ``|Psi><Phi_perp|`` of the reset map."""
    psi = V[:, 0]
    phi, phi_perp = U[:, 0], U[:, 1]
    return [np.outer(psi, phi.conj()), np.outer(psi, phi_perp.conj())]


def apply_reset_channel(rho: np.ndarray, qubit: int, w: float, p_er: float = DEFAULT_P_ER) -> np.ndarray:
    """``(1-w) rho + w [p_er rho + (1-p_er) R(rho)]`` with R the reset to |0>."""
    _check_prob("w", w)
    _check_prob("p_er", p_er)
    keep = 1 - w + w * p_er
    reset = apply_local_kraus(rho, reset_kraus(), qubit)
    return keep * rho + (1 - keep) * reset


def apply_generalized_reset(rho: np.ndarray, qubit: int, p: float, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``(1-p) rho + p V(rho)`` resetting into ``V|0>`` from the ``U`` basis."""
    _check_prob("p", p)
    for name, m in (("U", U), ("V", V)):
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2) or not np.allclose(m.conj().T @ m, I2, atol=1e-12):
            raise ValueError(f"{name} is not a 2x2 unitary")
    mapped = apply_local_kraus(rho, reset_kraus(np.asarray(U, complex), np.asarray(V, complex)), qubit)
    return (1 - p) * rho + p * mapped


def apply_reset_spec(rho: np.ndarray, spec: ResetSpec) -> np.ndarray:
    u, v = spec.unitaries()
    for q, w in spec.w.items():
        if w == 0.0:
            continue
        eff = w * (1 - spec.p_er)
        rho = apply_generalized_reset(rho, q, eff, u, v)
    return rho


def reset_dephasing_byproduct(w: float) -> float:
    """Z-flip probability ``p`` with reset(w) = AD(w) after Z-dephasing(p).

    Exact split of the standard reset: ``(1 - 2p) sqrt(1 - w) = 1 - w``.
    For small ``w`` this is ``w/4 + O(w^2)``.
    """
    _check_prob("w", w)
    return (1 - math.sqrt(1 - w)) / 2


# ------------------------------------------------------- Lindblad specs


@dataclass
class LindbladSpec:
    """Rates of a Markovian generator.

    ``pauli_rates`` maps full-register words to rates; ``damping_rates``
    maps qubits to sigma-minus rates; ``jumps`` holds extra
    ``(rate, qubit, 2x2 operator)`` jump terms (generalized resets).
    """

    n: int
    hamiltonian: object | None = None
    pauli_rates: dict[str, float] = field(default_factory=dict)
    damping_rates: dict[int, float] = field(default_factory=dict)
    jumps: list[tuple[float, int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        for lab, r in self.pauli_rates.items():
            if len(lab) != self.n:
                raise ValueError(f"rate label {lab!r} has wrong length")
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError(f"rate {lab}={r} must be finite and >= 0")
        for q, r in self.damping_rates.items():
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError(f"damping rate on {q} must be finite and >= 0")
        for r, _, _ in self.jumps:
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError("jump rate must be finite and >= 0")

    def is_empty(self) -> bool:
        return (
            not any(self.pauli_rates.values())
            and not any(self.damping_rates.values())
            and not any(r for r, _, _ in self.jumps)
        )

    def merged(self, other: "LindbladSpec") -> "LindbladSpec":
        if other.n != self.n:
            raise ValueError("register size mismatch")
        pr = dict(self.pauli_rates)
        for k, v in other.pauli_rates.items():
            pr[k] = pr.get(k, 0.0) + v
        dr = dict(self.damping_rates)
        for k, v in other.damping_rates.items():
            dr[k] = dr.get(k, 0.0) + v
        return LindbladSpec(
            self.n,
            self.hamiltonian if self.hamiltonian is not None else other.hamiltonian,
            pr,
            dr,
            list(self.jumps) + list(other.jumps),
        )

    def jump_operators(self) -> list[tuple[float, np.ndarray]]:
        """All ``(rate, full-register L)`` pairs of the dissipator."""
        from .pauli import embed_operator

        out = []
        for lab, r in self.pauli_rates.items():
            if r and set(lab) != {"I"}:
                out.append((r, PauliString.from_label(lab).to_matrix()))
        for q, r in self.damping_rates.items():
            if r:
                out.append((r, embed_operator(SIGMA_MINUS, (q,), self.n)))
        for r, q, op in self.jumps:
            if r:
                out.append((r, embed_operator(np.asarray(op, complex), (q,), self.n)))
        return out


def channel_to_dissipator(ch, dt: float, n: int | None = None) -> LindbladSpec:
    """Generator realized by applying ``ch`` once every ``dt``.

    Pauli channel: rate ``eps_k / dt`` per word. Amplitude damping: ``w/dt``.
    Standard reset: damping ``w/dt`` plus Z dephasing at a quarter of it.
    Generalized reset: jumps ``|Psi><Phi|`` and ``|Psi><Phi_perp|`` at ``p/dt``.
    Reset failure scales the effective application probability by ``1 - p_er``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(ch, PauliChannel):
        n = n if n is not None else max(ch.subgroup) + 1
        rates = {}
        for eps, p in zip(ch.probs[1:], ch.strings(n)[1:]):
            if eps > 0:
                rates[p.word] = rates.get(p.word, 0.0) + eps / dt
        return LindbladSpec(n, pauli_rates=rates)
    if isinstance(ch, AmplitudeDampingSpec):
        n = n if n is not None else max(ch.w, default=0) + 1
        return LindbladSpec(n, damping_rates={q: w / dt for q, w in ch.w.items() if w > 0})
    if isinstance(ch, ResetSpec):
        n = n if n is not None else max(ch.w, default=0) + 1
        spec = LindbladSpec(n)
        if not ch.generalized:
            for q, w in ch.w.items():
                g = w * (1 - ch.p_er) / dt
                if g > 0:
                    spec.damping_rates[q] = g
                    z = PauliString.single(n, q, "Z").word
                    spec.pauli_rates[z] = spec.pauli_rates.get(z, 0.0) + g / 4
            return spec
        u, v = ch.unitaries()
        a, b = reset_kraus(u, v)
        for q, w in ch.w.items():
            g = w * (1 - ch.p_er) / dt
            if g > 0:
                spec.jumps += [(g, q, a), (g, q, b)]
        return spec
    raise TypeError(f"cannot convert {type(ch).__name__} to a dissipator")


def dephasing_channel(qubit: int, p: float) -> PauliChannel:
    return PauliChannel.from_errors((qubit,), {"Z": p})


def is_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> bool:
    if not np.allclose(rho, rho.conj().T, atol=1e-12):
        return False
    if abs(np.trace(rho) - 1) > atol:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -atol)


__all__ = [
    "AmplitudeDampingSpec",
    "LindbladSpec",
    "PauliChannel",
    "ResetSpec",
    "apply_amplitude_damping",
    "apply_generalized_reset",
    "apply_local_kraus",
    "apply_pauli_channel",
    "apply_reset_channel",
    "apply_reset_spec",
    "channel_to_dissipator",
    "compose_pauli_channels",
    "pauli_channel_superop",
    "pauli_eigenvalue",
    "reset_dephasing_byproduct",
]
