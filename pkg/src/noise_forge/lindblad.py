"""Classical reference dynamics: RK4 Lindblad solver and Trotterized channels."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channels import (
    AmplitudeDampingSpec,
    LindbladSpec,
    PauliChannel,
    ResetSpec,
    apply_amplitude_damping,
    apply_pauli_channel,
    apply_reset_spec,
)
from .errors import NumericalError
from .hamiltonian import Hamiltonian, product_formula_unitary

log = logging.getLogger(__name__)

TRACE_ABORT = 1e-6


def liouvillian(spec: LindbladSpec) -> np.ndarray:
    """Row-major superoperator of ``-i[H, .] + sum_j g_j D[L_j]``."""
    dim = 1 << spec.n
    eye = np.eye(dim, dtype=complex)
    L = np.zeros((dim * dim, dim * dim), dtype=complex)
    if spec.hamiltonian is not None:
        h = spec.hamiltonian.to_matrix() if isinstance(spec.hamiltonian, Hamiltonian) else np.asarray(spec.hamiltonian)
        L += -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, op in spec.jump_operators():
        ldl = op.conj().T @ op
        L += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return L


@dataclass
class LindbladRun:
    spec: LindbladSpec
    rho0: np.ndarray
    t: float
    dt: float
    stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.t < 0:
            raise ValueError("need dt > 0 and t >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.steps % self.stride:
            raise ValueError("step count must be a multiple of the stride")
        steps = self.t / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("t must be an integer multiple of dt")

    @property
    def steps(self) -> int:
        return int(round(self.t / self.dt))

    @classmethod
    def for_layers(cls, spec: LindbladSpec, rho0: np.ndarray, layer_dt: float, layers: int, substeps: int = 20) -> "LindbladRun":
        """Run emitting one state per layer boundary, ``dt = layer_dt / substeps``."""
        return cls(spec, rho0, layer_dt * layers, layer_dt / substeps, substeps)


def rk4_step_matrix(L: np.ndarray, dt: float) -> np.ndarray:
    """One classic RK4 step for the linear generator ``L``.

    The generator is time independent, so the four stages collapse into the
    polynomial ``sum_{j<=4} (dt L)^j / j!``.
    """
    hL = dt * L
    step = np.eye(len(L), dtype=complex)
    term = np.eye(len(L), dtype=complex)
    for j in range(1, 5):
        term = term @ hL / j
        step = step + term
    return step


def rk4_propagate(run: LindbladRun) -> np.ndarray:
    """Classic RK4 on ``drho/dt = L[rho]``; returns states every ``stride`` steps.

    The ``stride`` steps between outputs are applied as one matrix power of
    the RK4 step, which is the same arithmetic map at a fraction of the cost.
    Each emitted state is symmetrized and checked for trace drift.
    """
    dim = 1 << run.spec.n
    rho = np.asarray(run.rho0, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"initial state shape {rho.shape} does not match n={run.spec.n}")
    hop = np.linalg.matrix_power(rk4_step_matrix(liouvillian(run.spec), run.dt), run.stride)
    v = rho.reshape(-1).copy()
    tr0 = np.trace(rho).real
    out = [rho.copy()]
    for s in range(1, run.steps // run.stride + 1):
        v = hop @ v
        m = v.reshape(dim, dim)
        m = 0.5 * (m + m.conj().T)
        v = m.reshape(-1)
        drift = abs(np.trace(m).real - tr0)
        # a positive state has no entry larger than its trace
        blowup = np.abs(v).max() - abs(tr0)
        if drift > TRACE_ABORT or blowup > TRACE_ABORT or not np.all(np.isfinite(v)):
            raise NumericalError(
                f"RK4 unstable at step {s * run.stride}: trace drift {drift:.3e}, "
                f"entry excess {blowup:.3e} (dt={run.dt:.3g})"
            )
        out.append(m.copy())
    states = np.array(out)
    floor = min(np.linalg.eigvalsh(r).min() for r in states)
    if floor < -1e-10:
        log.warning("RK4 eigenvalue floor %.3e below -1e-10", floor)
    return states


def step_doubling_error(run: LindbladRun) -> float:
    """Max-norm change of the emitted states when ``dt`` is halved."""
    coarse = rk4_propagate(run)
    fine = rk4_propagate(LindbladRun(run.spec, run.rho0, run.t, run.dt / 2, run.stride * 2))
    return float(np.abs(coarse - fine).max())


def reference_states(
    spec: LindbladSpec,
    rho0: np.ndarray,
    layer_dt: float,
    layers: int,
    substeps: int = 20,
    tol: float = 1e-8,
    max_substeps: int = 1 << 20,
) -> np.ndarray:
    """RK4 states at every layer boundary, refining ``dt`` until halving it
    changes the output by less than ``tol``."""
    while substeps <= max_substeps:
        run = LindbladRun.for_layers(spec, rho0, layer_dt, layers, substeps)
        try:
            coarse = rk4_propagate(run)
            fine = rk4_propagate(LindbladRun.for_layers(spec, rho0, layer_dt, layers, 2 * substeps))
        except NumericalError:
            substeps *= 2
            continue
        if np.abs(coarse - fine).max() < tol:
            return fine
        substeps *= 2
    raise NumericalError(f"RK4 did not converge to {tol} with {max_substeps} substeps per layer")


def _apply_layer_channel(rho: np.ndarray, ch) -> np.ndarray:
    if isinstance(ch, PauliChannel):
        return apply_pauli_channel(rho, ch)
    if isinstance(ch, AmplitudeDampingSpec):
        for q, w in ch.w.items():
            rho = apply_amplitude_damping(rho, q, w)
        return rho
    if isinstance(ch, ResetSpec):
        return apply_reset_spec(rho, ch)
    if callable(ch):
        return ch(rho)
    raise TypeError(f"unsupported channel {type(ch).__name__}")


def trotterized_lindblad(
    H: Hamiltonian,
    channels: Sequence[object | Callable[[np.ndarray], np.ndarray]],
    rho0: np.ndarray,
    layers: int,
    dt: float,
    order: int = 1,
) -> np.ndarray:
    """Alternate the exact product-formula step and the per-layer channels."""
    dim = 1 << H.n
    rho = np.asarray(rho0, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValueError(f"initial state shape {rho.shape} does not match n={H.n}")
    u = product_formula_unitary(H, dt, order)
    out = [rho]
    for _ in range(layers):
        rho = u @ rho @ u.conj().T
        for ch in channels:
            rho = _apply_layer_channel(rho, ch)
        out.append(rho)
    return np.array(out)


def populations(states: np.ndarray) -> np.ndarray:
    """Computational-basis populations of one state or a series."""
    states = np.asarray(states)
    return np.real(np.diagonal(states, axis1=-2, axis2=-1))


def reduced_density_matrix(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Partial trace onto ``keep`` (in the given order); accepts a stack."""
    rho = np.asarray(rho)
    lead = rho.shape[:-2]
    n = rho.shape[-1].bit_length() - 1
    keep = list(keep)
    drop = [q for q in range(n) if q not in keep]
    nl = len(lead)
    t = rho.reshape(lead + (2,) * (2 * n))
    perm = list(range(nl)) + [nl + q for q in keep + drop] + [nl + n + q for q in keep + drop]
    t = t.transpose(perm)
    dk, dd = 1 << len(keep), 1 << len(drop)
    t = t.reshape(lead + (dk, dd, dk, dd))
    return np.einsum("...ajbj->...ab", t)


def eta_metric(rho_q, rho_c) -> np.ndarray:
    """Mean absolute population difference per time point.

    Inputs are state series ``(T, d, d)`` or population series ``(T, d)``.
    """
    pa = _as_populations(rho_q)
    pb = _as_populations(rho_c)
    if pa.shape != pb.shape:
        raise ValueError(f"time grids differ: {pa.shape} vs {pb.shape}")
    return np.mean(np.abs(pa - pb), axis=-1)


def _as_populations(x) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim == 3:
        return populations(a)
    if a.ndim == 2:
        return a.real
    raise ValueError("expected a (T, d, d) state series or (T, d) population series")


def basis_state(bits: str | Sequence[int]) -> np.ndarray:
    """Density matrix of ``|b_0 b_1 ...>`` (qubit 0 first)."""
    bits = [int(b) for b in bits]
    idx = 0
    for b in bits:
        idx = 2 * idx + b
    dim = 1 << len(bits)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[idx, idx] = 1.0
    return rho


def max_population_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(populations(a) - populations(b)).max())

