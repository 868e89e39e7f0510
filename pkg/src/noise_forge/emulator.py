"""Noisy-device emulator for Trotter circuits.

Every layer runs: layer unitary (with optional coherent ZZ kicks after each
controlled-NOT), the intrinsic Pauli channels, an optional PEC insertion, and
finally the reset slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channels import PauliChannel, ResetSpec, apply_pauli_channel, apply_reset_spec, pauli_channel_superop
from .hamiltonian import TrotterCircuit
from .pauli import (
    GateOp,
    PauliString,
    all_paulis,
    apply_pauli,
    clifford_conjugate,
    embed_operator,
    gate_unitary,
    matrix_tuple,
)

Z2Z = np.diag([1, -1, -1, 1]).astype(complex)


def pair_tiling(n: int) -> list[tuple[int, int]]:
    """Nearest-neighbour pairs: even bonds first, then odd bonds."""
    even = [(m, m + 1) for m in range(0, n - 1, 2)]
    odd = [(m, m + 1) for m in range(1, n - 1, 2)]
    return even + odd


def single_qubit_owner(n: int) -> dict[int, tuple[int, int]]:
    """Subgroup that carries each qubit's single-qubit errors.

    The even bond containing the qubit, or the odd bond for the last qubit of
    an odd-length chain.
    """
    owner: dict[int, tuple[int, int]] = {}
    for pair in pair_tiling(n):
        for q in pair:
            owner.setdefault(q, pair)
    return owner


def allowed_labels(n: int, pair: tuple[int, int]) -> list[str]:
    """Non-identity two-letter labels a tiling subgroup may carry."""
    owner = single_qubit_owner(n)
    out = []
    for p in list(all_paulis(2))[1:]:
        lab = p.word
        if lab[0] != "I" and lab[1] != "I":
            out.append(lab)
        elif lab[0] != "I" and owner[pair[0]] == pair:
            out.append(lab)
        elif lab[1] != "I" and owner[pair[1]] == pair:
            out.append(lab)
    return out


def synthetic_tiled_channels(
    n: int, rng: np.random.Generator, low: float, high: float, K: int = 2
) -> list[PauliChannel]:
    """Random channels with every allowed error probability drawn in [low, high]."""
    if K == 1 or n == 1:
        return [
            PauliChannel.from_errors((q,), {lab: rng.uniform(low, high) for lab in "XYZ"})
            for q in range(n)
        ]
    chans = []
    for pair in pair_tiling(n):
        labs = allowed_labels(n, pair)
        chans.append(PauliChannel.from_errors(pair, {lab: rng.uniform(low, high) for lab in labs}))
    return chans


def _validate_attribution(n: int, noise: Sequence[PauliChannel]) -> None:
    seen: dict[tuple[int, int], tuple[int, ...]] = {}
    subs = set()
    for ch in noise:
        if any(q >= n for q in ch.subgroup):
            raise ValueError(f"subgroup {ch.subgroup} out of range for n={n}")
        key = tuple(sorted(ch.subgroup))
        if key in subs:
            raise ValueError(f"subgroup {ch.subgroup} listed twice")
        subs.add(key)
        for eps, p in zip(ch.probs[1:], ch.strings(n)[1:]):
            if eps > 0:
                k = (p.x, p.z)
                if k in seen:
                    raise ValueError(
                        f"error {p.word} attributed to both {seen[k]} and {ch.subgroup}; "
                        "overlapping subgroups would cancel it twice"
                    )
                seen[k] = ch.subgroup


@dataclass
class DeviceModel:
    """Emulated device: intrinsic per-layer noise plus execution knobs."""

    n: int
    noise: Sequence[PauliChannel] = ()
    coherent_angle: float = 0.0
    resets: Sequence[ResetSpec] = ()
    readout_error: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        self.noise = tuple(self.noise)
        self.resets = tuple(self.resets)
        _validate_attribution(self.n, self.noise)
        if not 0 <= self.readout_error <= 1:
            raise ValueError("readout error must lie in [0, 1]")
        for r in self.resets:
            if any(q >= self.n for q in r.w):
                raise ValueError("reset slot out of range")

    @property
    def subgroups(self) -> list[tuple[int, ...]]:
        return [ch.subgroup for ch in self.noise]

    @classmethod
    def noiseless(cls, n: int) -> "DeviceModel":
        return cls(n)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "noise": [ch.to_dict() for ch in self.noise],
            "coherent_angle": self.coherent_angle,
            "readout_error": self.readout_error,
            "seed": self.seed,
            "resets": [],
        }
        for r in self.resets:
            entry = {"w": {str(q): v for q, v in r.w.items()}, "p_er": r.p_er}
            if r.generalized:
                u, v = r.unitaries()
                entry["pre"] = [[[z.real, z.imag] for z in row] for row in u]
                entry["post"] = [[[z.real, z.imag] for z in row] for row in v]
            d["resets"].append(entry)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "DeviceModel":
        resets = []
        for r in d.get("resets", []):
            kw = {}
            for name in ("pre", "post"):
                if name in r:
                    kw[name] = np.array([[complex(a, b) for a, b in row] for row in r[name]])
            resets.append(ResetSpec({int(q): v for q, v in r["w"].items()}, r.get("p_er", 1e-3), **kw))
        return cls(
            n=d["n"],
            noise=[PauliChannel.from_dict(c) for c in d.get("noise", [])],
            coherent_angle=d.get("coherent_angle", 0.0),
            resets=resets,
            readout_error=d.get("readout_error", 0.0),
            seed=d.get("seed"),
        )


@dataclass
class ExecutionResult:
    """Output of :func:`execute`.

    ``states`` holds ``D + 1`` density matrices (index 0 is the input) in
    exact mode; ``counts`` holds per-layer bitstring counts in sampled mode.
    """

    n: int
    dt: float
    states: np.ndarray | None = None
    counts: np.ndarray | None = None
    shots: int = 0
    sign: int = 1
    weight: float = 1.0

    @property
    def times(self) -> np.ndarray:
        size = len(self.states) if self.states is not None else len(self.counts)
        return self.dt * np.arange(size)

    def populations(self) -> np.ndarray:
        if self.states is not None:
            return np.real(np.diagonal(self.states, axis1=-2, axis2=-1))
        return self.counts / self.shots


# ----------------------------------------------------------- layer unitary


def noisy_layer_unitary(circuit: TrotterCircuit, coherent_angle: float = 0.0) -> np.ndarray:
    """Layer unitary including a ``exp(-i a/2 ZZ)`` kick after every CX."""
    n = circuit.n
    u = np.eye(1 << n, dtype=complex)
    kick = None
    if coherent_angle:
        kick = np.diag(np.exp(-0.5j * coherent_angle * np.diag(Z2Z).real))
    for g in circuit.gates:
        if g.kind in ("reset", "greset"):
            raise ValueError("reset gates inside a layer are not unitary; use DeviceModel.resets")
        u = gate_unitary(g, n) @ u
        if kick is not None and g.kind == "cx":
            u = embed_operator(kick, g.qubits, n) @ u
    return u


class _LayerCache:
    def __init__(self, coherent_angle: float):
        self.angle = coherent_angle
        self._cache: dict[int, tuple[TrotterCircuit, np.ndarray]] = {}

    def __call__(self, circuit: TrotterCircuit) -> np.ndarray:
        hit = self._cache.get(id(circuit))
        if hit is None or hit[0] is not circuit:
            hit = (circuit, noisy_layer_unitary(circuit, self.angle))
            self._cache[id(circuit)] = hit
        return hit[1]


def _layer_circuits(circuit, layers: int) -> list[TrotterCircuit]:
    if isinstance(circuit, TrotterCircuit):
        return [circuit] * layers
    seq = list(circuit)
    if len(seq) != layers:
        raise ValueError(f"got {len(seq)} layer circuits for {layers} layers")
    return seq


def _readout_probs(p: np.ndarray, n: int, flip: float) -> np.ndarray:
    if not flip:
        return p
    conf = np.array([[1 - flip, flip], [flip, 1 - flip]])
    t = p.reshape((2,) * n)
    for q in range(n):
        t = np.moveaxis(np.tensordot(conf, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def _rng(seed, stream: int | None = None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if stream is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def execute(
    circuit: TrotterCircuit | Sequence[TrotterCircuit],
    layers: int,
    model: DeviceModel,
    mode: str = "exact",
    insertions: Sequence[PauliString] | None = None,
    rho0: np.ndarray | None = None,
    shots: int | None = None,
    seed=None,
) -> ExecutionResult:
    """Run ``layers`` Trotter layers of ``circuit`` on the emulated device.

    ``circuit`` may be a list with one (e.g. independently twirled) circuit
    per layer. ``insertions`` gives one full-register Pauli string per layer.
    In sampled mode ``shots`` bitstrings are drawn after every layer.
    """
    circuits = _layer_circuits(circuit, layers)
    n = model.n
    if any(c.n != n for c in circuits):
        raise ValueError("circuit qubit count differs from device model")
    if insertions is not None and len(insertions) != layers:
        raise ValueError(f"{len(insertions)} insertions for {layers} layers")
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sampled" and (shots is None or shots <= 0):
        raise ValueError("sampled mode needs a positive shot count")
    dim = 1 << n
    if rho0 is None:
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.asarray(rho0, dtype=complex)
        if rho.shape != (dim, dim):
            raise ValueError("initial state dimension mismatch")
    unitary = _LayerCache(model.coherent_angle)
    states = [rho]
    for d, circ in enumerate(circuits):
        u = unitary(circ)
        rho = u @ rho @ u.conj().T
        for ch in model.noise:
            rho = apply_pauli_channel(rho, ch)
        if insertions is not None and not insertions[d].is_identity():
            rho = apply_pauli(rho, insertions[d])
        for r in model.resets:
            rho = apply_reset_spec(rho, r)
        states.append(rho)
    dt = circuits[0].dt if circuits else 0.0
    states = np.array(states)
    if mode == "exact":
        return ExecutionResult(n, dt, states=states)
    rng = _rng(seed if seed is not None else model.seed)
    counts = np.empty((len(states), dim), dtype=np.int64)
    for i, s in enumerate(states):
        p = np.clip(np.real(np.diagonal(s)), 0, None)
        p = _readout_probs(p / p.sum(), n, model.readout_error)
        counts[i] = rng.multinomial(shots, p / p.sum())
    return ExecutionResult(n, dt, counts=counts, shots=shots)


def execute_batch(
    circuit: TrotterCircuit,
    layers: int,
    model: DeviceModel,
    ins_x: np.ndarray,
    ins_z: np.ndarray,
    rho0: np.ndarray | None = None,
    observable=None,
) -> np.ndarray:
    """Exact-mode runs of many insertion sequences at once.

    ``ins_x``/``ins_z`` are ``(samples, layers)`` bitmask arrays of the
    inserted strings. Returns populations ``(samples, layers + 1, 2**n)``,
    or ``observable(states)`` per layer if given (stacked on axis 1).
    """
    n = model.n
    dim = 1 << n
    S = ins_x.shape[0]
    if ins_x.shape != (S, layers) or ins_z.shape != (S, layers):
        raise ValueError("insertion arrays must be (samples, layers)")
    if circuit.n != n:
        raise ValueError("circuit qubit count differs from device model")
    if rho0 is None:
        rho0 = np.zeros((dim, dim), dtype=complex)
        rho0[0, 0] = 1.0
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), (S, dim, dim)).copy()
    # unitary and intrinsic noise folded into one row-major superoperator
    sop = unitary_superop(noisy_layer_unitary(circuit, model.coherent_angle))
    for ch in model.noise:
        sop = pauli_channel_superop(ch, n) @ sop
    sop_t = np.ascontiguousarray(sop.T)
    read = observable if observable is not None else (lambda r: np.real(np.diagonal(r, axis1=-2, axis2=-1)))
    out = [read(rho)]
    for d in range(layers):
        rho = (rho.reshape(S, dim * dim) @ sop_t).reshape(S, dim, dim)
        keys = ins_x[:, d].astype(np.int64) * (1 << n) + ins_z[:, d]
        for key in np.unique(keys):
            if key == 0:
                continue
            sel = keys == key
            p = PauliString(n, int(key >> n), int(key & (dim - 1)))
            rho[sel] = apply_pauli(rho[sel], p)
        for r in model.resets:
            rho = apply_reset_spec(rho, r)
        out.append(read(rho))
    return np.stack(out, axis=1)


# ------------------------------------------------------ randomized compiling


_LETTER_GATE = {"X": "x", "Y": "y", "Z": "z"}


def dress_cnots(circuit: TrotterCircuit, paulis: Sequence[PauliString]) -> tuple[list[GateOp], complex]:
    """Insert ``P`` before and ``G P G^dag`` after each CX group.

    Returns the new gate list (with explicit Pauli gates) and the global
    phase picked up from the signs of the conjugated strings.
    """
    if len(paulis) != len(circuit.cnot_layers):
        raise ValueError("need one Pauli string per CX group")
    where = {}
    for group, p in zip(circuit.cnot_layers, paulis):
        where[group[0]] = (group, p)
    gates: list[GateOp] = []
    phase: complex = 1
    i = 0
    while i < len(circuit.gates):
        if i not in where:
            gates.append(circuit.gates[i])
            i += 1
            continue
        group, p = where[i]
        members = [circuit.gates[j] for j in group]
        qubits = sorted({q for g in members for q in g.qubits})
        full = p.embed(circuit.n, qubits) if p.n == len(qubits) else p
        after = full
        for g in members:
            after = clifford_conjugate(g, after)
        for q in qubits:
            letter = full.word[q]
            if letter != "I":
                gates.append(GateOp(_LETTER_GATE[letter], (q,)))
        gates.extend(members)
        for q in qubits:
            letter = after.word[q]
            if letter != "I":
                gates.append(GateOp(_LETTER_GATE[letter], (q,)))
        phase *= after.sign
        i = group[-1] + 1
    return gates, phase


def merge_single_qubit_runs(gates: Sequence[GateOp], n: int, phase: complex = 1, only_pauli_runs: bool = True) -> list[GateOp]:
    """Fuse consecutive single-qubit gates per qubit into ``u`` gates.

    With ``only_pauli_runs`` a run is fused only if it contains an inserted
    Pauli gate; other runs are left as they were. A fused run takes the
    position of its last gate, so unfused gates keep their order. ``phase``
    is folded into one fused gate.
    """
    out: list[GateOp | None] = []
    pending: dict[int, list[int]] = {q: [] for q in range(n)}
    state = {"phase": phase}

    def flush(q: int) -> None:
        run = pending[q]
        pending[q] = []
        if not run:
            return
        if only_pauli_runs and not any(out[i].kind in ("x", "y", "z") for i in run):
            if state["phase"] == 1:
                return
        m = np.eye(2, dtype=complex)
        for i in run:
            m = out[i].local_matrix() @ m
            out[i] = None
        if state["phase"] != 1:
            m = state["phase"] * m
            state["phase"] = 1
        out[run[-1]] = GateOp("u", (q,), matrix=matrix_tuple(m))

    for g in gates:
        if len(g.qubits) == 1 and g.kind not in ("reset", "greset"):
            pending[g.qubits[0]].append(len(out))
            out.append(g)
            continue
        for q in g.qubits:
            flush(q)
        out.append(g)
    for q in range(n):
        flush(q)
    if state["phase"] != 1:
        raise RuntimeError("global phase could not be absorbed")
    return [g for g in out if g is not None]


def randomized_compile(circuit: TrotterCircuit, R: int, seed=None) -> list[TrotterCircuit]:
    """``R`` logically equivalent copies with random Pauli dressings on each CX."""
    if R < 1:
        raise ValueError("need at least one compiled copy")
    rng = _rng(seed)
    out = []
    for _ in range(R):
        paulis = []
        for group in circuit.cnot_layers:
            width = len({q for j in group for q in circuit.gates[j].qubits})
            k = int(rng.integers(4**width))
            x = z = 0
            for q in range(width):
                digit = (k >> (2 * q)) & 3
                x |= (digit & 1) << q
                z |= (digit >> 1) << q
            paulis.append(PauliString(width, x, z))
        gates, phase = dress_cnots(circuit, paulis)
        merged = merge_single_qubit_runs(gates, circuit.n, phase)
        out.append(circuit.with_gates(merged))
    return out


def twirled_layers(circuit: TrotterCircuit, layers: int, seed=None) -> list[TrotterCircuit]:
    """One independently twirled copy per layer."""
    return randomized_compile(circuit, layers, seed)


# ------------------------------------------------------------ measurement


def measure_pauli(
    result: ExecutionResult,
    observable: PauliString,
    shots: int | None = None,
    layer: int = -1,
    seed=None,
) -> tuple[float, float]:
    """Expectation value and standard error of ``observable`` after ``layer``.

    Exact results give ``Tr[O rho]`` (stderr 0) unless ``shots`` is set, in
    which case ``shots`` +-1 outcomes are drawn in the observable's eigenbasis.
    Sampled results support diagonal (I/Z) observables from the counts.
    """
    if observable.n != result.n:
        raise ValueError("observable length differs from register size")
    if shots is not None and shots <= 0:
        raise ValueError("shot count must be positive")
    if result.states is not None:
        rho = result.states[layer]
        val = float(np.real(np.trace(observable.to_matrix() @ rho)))
        if shots is None:
            return val, 0.0
        rng = _rng(seed)
        p_plus = min(1.0, max(0.0, (1 + val) / 2))
        k = rng.binomial(shots, p_plus)
        mean = (2 * k - shots) / shots
        return mean, math.sqrt(max(1 - mean**2, 1.0 / shots) / shots)
    if observable.x != 0:
        raise ValueError("sampled counts only measure diagonal (I/Z) observables")
    counts = result.counts[layer]
    M = int(counts.sum())
    perm, amp = observable.action()
    eig = np.real(amp)
    mean = float(eig @ counts / M)
    var = float((eig**2) @ counts / M - mean**2)
    return mean, math.sqrt(max(var, 1.0 / M) / M)


# ------------------------------------------------------ process matrices


def unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u, u.conj())


def pauli_process_matrix(superop: np.ndarray, n: int) -> np.ndarray:
    """``chi`` with ``E(rho) = sum_ab chi_ab P_a rho P_b`` (Pauli order of all_paulis)."""
    d = 1 << n
    basis = [p.to_matrix() for p in all_paulis(n)]
    chi = np.empty((d * d, d * d), dtype=complex)
    for a, pa in enumerate(basis):
        for b, pb in enumerate(basis):
            chi[a, b] = np.vdot(np.kron(pa, pb.conj()), superop) / d**2
    return chi


def effective_noise_channel(circuits: Sequence[TrotterCircuit], coherent_angle: float, ideal: np.ndarray) -> np.ndarray:
    """Superoperator of the twirl-averaged noise ``avg(U_noisy) o U_ideal^{-1}``."""
    avg = sum(unitary_superop(noisy_layer_unitary(c, coherent_angle)) for c in circuits) / len(circuits)
    return avg @ unitary_superop(ideal.conj().T)


def off_diagonal_residue(chi: np.ndarray) -> float:
    """Largest off-diagonal process-matrix magnitude."""
    off = chi - np.diag(np.diag(chi))
    return float(np.abs(off).max())
