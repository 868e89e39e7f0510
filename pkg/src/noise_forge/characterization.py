"""Cycle benchmarking of a Trotter layer and Pauli error reconstruction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channels import PauliChannel
from .emulator import DeviceModel, allowed_labels, execute, randomized_compile
from .hamiltonian import TrotterCircuit
from .pauli import GateOp, PauliString, all_paulis, commutes, pauli_labels
from .pec import pauli_eigenvalues, probabilities_from_eigenvalues
from .workers import parallel_map

DEFAULT_DEPTHS = (2, 4, 8, 16)


@dataclass
class CBConfig:
    depths: Sequence[int] = DEFAULT_DEPTHS
    shots: int = 100_000
    probes: Sequence[str] | None = None
    R: int = 1
    seed: int = 0
    mode: str = "exact"

    def __post_init__(self):
        self.depths = tuple(int(m) for m in self.depths)
        if len(self.depths) < 2:
            raise ValueError("cycle benchmarking needs at least two depths")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])) or self.depths[0] < 1:
            raise ValueError("depths must be positive and strictly increasing")
        if self.shots <= 0:
            raise ValueError("shots per point must be positive")
        if self.R < 1:
            raise ValueError("need at least one twirl copy")
        if self.mode not in ("exact", "sampled"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class ProbeFit:
    f: float
    A: float
    residual: float
    stderr: float
    values: np.ndarray
    flagged: bool = False


@dataclass
class FidelityEstimate:
    """Fitted decay base per probe label (full-register words)."""

    n: int
    depths: tuple[int, ...]
    fits: dict[str, ProbeFit] = field(default_factory=dict)

    def f(self, label: str) -> float:
        if set(label) == {"I"}:
            return 1.0
        return self.fits[label].f

    def flagged(self) -> list[str]:
        return [lab for lab, fit in self.fits.items() if fit.flagged]

    def table_rows(self) -> list[tuple]:
        """Rows ``(probe, depth, value)`` followed by nothing else; fits are separate."""
        rows = []
        for lab, fit in self.fits.items():
            for m, v in zip(self.depths, fit.values):
                rows.append((lab, m, float(v)))
        return rows


# ------------------------------------------------------------ layer variant


def make_clifford_identity_variant(layer: TrotterCircuit) -> TrotterCircuit:
    """The layer with every Z-rotation angle set to zero (same CX skeleton)."""
    gates = []
    for g in layer.gates:
        if g.kind == "rz":
            gates.append(GateOp("rz", g.qubits, 0.0))
        elif g.kind in ("rx", "ry", "u"):
            raise ValueError(f"parameterized non-Z gate {g.kind} on {g.qubits}")
        else:
            gates.append(g)
    return layer.with_gates(gates)


def pauli_fidelity(ch: PauliChannel, a: PauliString) -> float:
    """``f_a = sum_k eps_k s(a, k)`` for a probe on the channel's subgroup."""
    if a.n != len(ch.subgroup):
        raise ValueError("probe width differs from subgroup width")
    return float(sum(e * commutes(a, p) for e, p in zip(ch.probs, all_paulis(a.n))))


def channel_fidelities(ch: PauliChannel) -> np.ndarray:
    return pauli_eigenvalues(ch.probs, len(ch.subgroup))


# ------------------------------------------------------------------- fitting


def fit_decay(depths: Sequence[int], values: Sequence[float], shots: int | None = None) -> ProbeFit:
    """Least squares of ``ln|v|`` against depth; returns ``f = exp(slope)``.

    With ``shots`` the points are weighted by their binomial variance and the
    slope error is propagated to ``f``.
    """
    m = np.asarray(depths, dtype=float)
    v = np.asarray(values, dtype=float)
    flagged = bool(np.any(v <= 0))
    mag = np.maximum(np.abs(v), 1e-300)
    y = np.log(mag)
    A = np.vstack([m, np.ones_like(m)]).T
    if shots:
        var = np.maximum(1 - mag**2, 1.0 / shots) / shots / mag**2
        w = 1 / var
    else:
        w = np.ones_like(m)
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    slope, icept = coef
    pred = A @ coef
    residual = float(np.abs(pred - y).max())
    if shots:
        cov = np.linalg.inv(A.T @ (A * w[:, None]))
        se_slope = math.sqrt(cov[0, 0])
    elif len(m) > 2:
        dof = len(m) - 2
        s2 = float(((pred - y) ** 2).sum()) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        se_slope = math.sqrt(cov[0, 0])
    else:
        se_slope = 0.0
    f = math.exp(slope)
    return ProbeFit(f, math.exp(icept), residual, f * se_slope, v, flagged)


# ------------------------------------------------------------ benchmarking


def default_probes(n: int, subgroups: Sequence[Sequence[int]] | None = None) -> list[str]:
    """All non-identity strings supported on one of the subgroups (or on all n qubits)."""
    if not subgroups:
        return [p.word for p in list(all_paulis(n))[1:]]
    seen = []
    for sub in subgroups:
        for p in list(all_paulis(len(sub)))[1:]:
            w = p.embed(n, sub).word
            if w not in seen:
                seen.append(w)
    return seen


def _probe_values(model: DeviceModel, layers: list[TrotterCircuit], a: PauliString, depths) -> np.ndarray:
    """Exact ``<a>`` after each depth, starting from ``(I + a) / 2^n``."""
    dim = 1 << model.n
    amat = a.to_matrix()
    rho0 = (np.eye(dim) + amat) / dim
    res = execute(layers, len(layers), model, rho0=rho0)
    return np.array([np.real(np.trace(amat @ res.states[m])) for m in depths])


def _run_probe(args) -> tuple[str, ProbeFit]:
    label, idx, model, layerV, cfg = args
    a = PauliString.from_label(label)
    dmax = cfg.depths[-1]
    per_copy = []
    for c in range(cfg.R):
        seed = np.random.SeedSequence(cfg.seed, spawn_key=(idx, c))
        if model.coherent_angle:
            layers = randomized_compile(layerV, dmax, seed=np.random.default_rng(seed))
        else:
            # a Pauli twirl leaves stochastic Pauli noise unchanged
            layers = [layerV] * dmax
        per_copy.append(_probe_values(model, layers, a, cfg.depths))
    per_copy = np.array(per_copy)
    if cfg.mode == "exact":
        return label, fit_decay(cfg.depths, per_copy.mean(axis=0))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(idx, cfg.R)))
    spam = (1 - 2 * model.readout_error) ** a.weight
    split = np.full(cfg.R, cfg.shots // cfg.R)
    split[: cfg.shots % cfg.R] += 1
    means = []
    for j in range(len(cfg.depths)):
        plus = 0
        for c in range(cfg.R):
            p = min(1.0, max(0.0, (1 + spam * per_copy[c, j]) / 2))
            plus += rng.binomial(split[c], p)
        means.append((2 * plus - cfg.shots) / cfg.shots)
    return label, fit_decay(cfg.depths, means, shots=cfg.shots)


def run_cycle_benchmark(model: DeviceModel, layerV: TrotterCircuit, cfg: CBConfig, workers: int | None = None) -> FidelityEstimate:
    """Decay of each probe under repeated application of ``layerV``.

    Resets are switched off: the benchmark characterizes the intrinsic layer
    noise only.
    """
    if layerV.n != model.n:
        raise ValueError("layer qubit count differs from device model")
    if not np.allclose(layerV.unitary(), np.eye(1 << model.n), atol=1e-10):
        raise ValueError("cycle benchmarking expects the Clifford-identity layer variant")
    bare = replace(model, resets=())
    probes = list(cfg.probes) if cfg.probes is not None else default_probes(model.n, bare.subgroups)
    for lab in probes:
        if len(lab) != model.n or set(lab) - set("IXYZ") or set(lab) == {"I"}:
            raise ValueError(f"invalid probe {lab!r}")
    jobs = [(lab, i, bare, layerV, cfg) for i, lab in enumerate(probes)]
    est = FidelityEstimate(model.n, cfg.depths)
    for lab, fit in parallel_map(_run_probe, jobs, workers):
        est.fits[lab] = fit
    return est


# ------------------------------------------------------------ reconstruction


def reconstruct_error_probabilities(
    f: FidelityEstimate, K: int, subgroup: Sequence[int] | None = None
) -> PauliChannel:
    """Invert probe fidelities on one subgroup to error probabilities.

    Negative probabilities are clamped to zero and the rest renormalized.
    """
    subgroup = tuple(range(K)) if subgroup is None else tuple(subgroup)
    if len(subgroup) != K:
        raise ValueError("subgroup width differs from K")
    fvec = np.empty(4**K)
    missing = []
    for i, p in enumerate(all_paulis(K)):
        w = p.embed(f.n, subgroup).word
        if i == 0:
            fvec[0] = 1.0
        elif w in f.fits:
            fvec[i] = f.fits[w].f
        else:
            missing.append(w)
    if missing:
        raise ValueError(f"missing probes: {missing}")
    eps = probabilities_from_eigenvalues(fvec, K)
    if np.all(eps >= 0):
        return PauliChannel(subgroup, eps / eps.sum())
    return PauliChannel.from_probs_clamped(subgroup, eps)


def reconstruct_tiled_channels(f: FidelityEstimate, subgroups: Sequence[Sequence[int]], iterations: int = 50, tol: float = 1e-13) -> list[PauliChannel]:
    """Per-subgroup channels from probes of an overlapping tiling.

    A probe on one subgroup also decays through errors that other subgroups
    place on its qubits. Their eigenvalues are divided out iteratively, and
    labels a subgroup does not own (single-qubit errors attributed elsewhere)
    are kept at zero.
    """
    n = f.n
    subs = [tuple(s) for s in subgroups]
    measured = []
    for sub in subs:
        K = len(sub)
        measured.append(np.array([f.f(p.embed(n, sub).word) for p in all_paulis(K)]))
    masks = []
    for sub in subs:
        K = len(sub)
        if K == 2 and len(subs) > 1:
            ok = set(allowed_labels(n, sub))
            masks.append(np.array([i == 0 or lab in ok for i, lab in enumerate(pauli_labels(K))]))
        else:
            masks.append(np.ones(4**K, dtype=bool))
    chans = [PauliChannel.identity(s) for s in subs]
    for _ in range(iterations):
        new = []
        for m, sub in enumerate(subs):
            K = len(sub)
            fm = measured[m].copy()
            for i, p in enumerate(all_paulis(K)):
                full = p.embed(n, sub)
                for j, other in enumerate(chans):
                    if j == m:
                        continue
                    fm[i] /= _eigen_on(other, full)
            eps = probabilities_from_eigenvalues(fm, K)
            eps[~masks[m]] = 0.0
            eps[0] = 0.0
            eps = np.clip(eps, 0.0, None)
            eps[0] = 1.0 - eps.sum()
            new.append(PauliChannel.from_probs_clamped(sub, eps))
        delta = max(float(np.abs(a.probs - b.probs).max()) for a, b in zip(new, chans))
        chans = new
        if delta < tol:
            break
    return chans


def _eigen_on(ch: PauliChannel, full: PauliString) -> float:
    a = full.restrict(ch.subgroup)
    if a.is_identity():
        return 1.0
    return pauli_fidelity(ch, a)
