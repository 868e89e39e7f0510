"""End-to-end building blocks shared by the CLI and the acceptance runs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import (
    DEFAULT_P_ER,
    LindbladSpec,
    PauliChannel,
    ResetSpec,
    channel_to_dissipator,
    compose_pauli_channels,
    reset_dephasing_byproduct,
)
from .emulator import (
    DeviceModel,
    allowed_labels,
    execute,
    execute_batch,
    pair_tiling,
    randomized_compile,
    single_qubit_owner,
    synthetic_tiled_channels,
)
from .hamiltonian import ChainParams, Hamiltonian, TrotterCircuit, build_chain_hamiltonian
from .lindblad import basis_state, reference_states, trotterized_lindblad
from .pauli import PauliString, pauli_labels
from .pec import (
    MitigationPlan,
    _finish_plan,
    default_sample_count,
    iteration_cost,
    plan_decoherence_control,
    sample_insertion_batch,
    sample_stream,
)
from .workers import parallel_map

DEFAULT_CHUNK = 2048


@dataclass
class ChainSetup:
    H: Hamiltonian
    channels: list[PauliChannel]
    rho0: np.ndarray

    @property
    def n(self) -> int:
        return self.H.n


def chain_setup(n: int, noise_seed: int, low: float = 1e-3, high: float = 2e-2) -> ChainSetup:
    """Chain with the default parameters, ``|1,0,...,0>`` and random tiled noise."""
    H = build_chain_hamiltonian(ChainParams.default_chain(n))
    chans = synthetic_tiled_channels(n, np.random.default_rng(noise_seed), low, high)
    return ChainSetup(H, chans, basis_state("1" + "0" * (n - 1)))


# ------------------------------------------------------------------ resets


def reset_probability(rate: float, dt: float, exact: bool = True) -> float:
    """Reset probability per layer realizing damping ``rate``.

    ``exact`` uses ``1 - exp(-rate dt)``, for which one reset equals the
    damping-plus-quarter-dephasing generator integrated over ``dt``; otherwise
    the first-order ``rate dt``.
    """
    if rate < 0 or dt <= 0:
        raise ValueError("need rate >= 0 and dt > 0")
    w = -math.expm1(-rate * dt) if exact else rate * dt
    if w > 1:
        raise ValueError(f"reset probability {w} above one; reduce the time step")
    return w


def reset_for_damping(rates: Mapping[int, float], dt: float, p_er: float = DEFAULT_P_ER, exact: bool = True) -> ResetSpec:
    """Reset slots whose effective probability (after failures) realizes ``rates``."""
    w = {}
    for q, g in rates.items():
        target = reset_probability(g, dt, exact)
        w[q] = min(1.0, target / (1 - p_er))
    return ResetSpec(w, p_er)


def effective_reset_probability(spec: ResetSpec, qubit: int) -> float:
    return spec.w.get(qubit, 0.0) * (1 - spec.p_er)


def fold_reset_byproduct(channels: Sequence[PauliChannel], reset: ResetSpec, n: int) -> list[PauliChannel]:
    """Channels seen by PEC: the reset's Z-dephasing part composed into the
    subgroup that owns each qubit's single-qubit errors."""
    if reset.generalized:
        raise ValueError("byproduct folding is defined for the standard reset only")
    out = list(channels)
    owner = single_qubit_owner(n) if n > 1 else {0: (0,)}
    for q in reset.w:
        p = reset_dephasing_byproduct(effective_reset_probability(reset, q))
        if p == 0:
            continue
        home = owner[q]
        for i, ch in enumerate(out):
            if tuple(ch.subgroup) == tuple(home) or (len(ch.subgroup) == 1 and ch.subgroup[0] == q):
                label = "".join("Z" if s == q else "I" for s in ch.subgroup)
                out[i] = compose_pauli_channels(PauliChannel.from_errors(ch.subgroup, {label: p}), ch)
                break
        else:
            raise ValueError(f"no noise subgroup owns qubit {q}")
    return out


# ---------------------------------------------------------------- planning


def reduced(ch: PauliChannel, r) -> PauliChannel:
    """``eps_k (1 - r_k)`` with the identity absorbing the rest."""
    from .pec import _factor_array

    rk = _factor_array(ch, r)
    e = ch.probs * (1 - rk)
    e[0] = 1 - e[1:].sum()
    return PauliChannel(ch.subgroup, e)


def plan_to_targets(
    noise: Sequence[PauliChannel], targets: Sequence[PauliChannel], dt: float, D: int, method: str = "linear"
) -> MitigationPlan:
    """Factors ``r_k = 1 - target_k / eps_k`` turning ``noise`` into ``targets``."""
    if len(noise) != len(targets):
        raise ValueError("need one target per noise channel")
    factors, gammas = [], []
    for ch, tg in zip(noise, targets):
        if tuple(ch.subgroup) != tuple(tg.subgroup):
            raise ValueError("target subgroup differs from noise subgroup")
        r = np.zeros_like(ch.probs)
        for k in range(1, len(r)):
            if tg.probs[k] > ch.probs[k] * (1 + 1e-12):
                raise ValueError(f"target for {ch.labels[k]} on {ch.subgroup} exceeds the device error")
            r[k] = 1.0 - tg.probs[k] / ch.probs[k] if ch.probs[k] > 0 else 1.0
        r = np.clip(r, 0.0, 1.0)
        factors.append(r)
        g = tg.probs / dt
        g[0] = 0.0
        gammas.append(g)
    return _finish_plan(list(noise), factors, gammas, dt, dt, D, method)


def factor_map(ch: PauliChannel, rule: Callable[[str], float]) -> dict[str, float]:
    """Per-label factors from a rule on the label."""
    return {lab: rule(lab) for lab in pauli_labels(len(ch.subgroup))[1:]}


def dephasing_rule(high: float, low: float) -> Callable[[str], float]:
    """``high`` on strings made of Z and I only, ``low`` elsewhere."""
    return lambda lab: high if set(lab) <= {"Z", "I"} else low


def uniform_tiled_channels(n: int, eps_single: float, eps_pair: float) -> list[PauliChannel]:
    """Pair-tiled channels with one probability for single-qubit strings and
    one for two-qubit strings."""
    chans = []
    for pair in pair_tiling(n):
        errs = {lab: eps_single if "I" in lab else eps_pair for lab in allowed_labels(n, pair)}
        chans.append(PauliChannel.from_errors(pair, errs))
    return chans


def single_qubit_rates(ch: PauliChannel, n: int, rate: float) -> dict[str, float]:
    """``rate`` on the single-qubit strings the subgroup owns, zero elsewhere.

    Strings a folded byproduct creates on a qubit owned by another subgroup
    stay at zero and are mitigated away.
    """
    return {lab: rate for lab in allowed_labels(n, tuple(ch.subgroup)) if "I" in lab}


def controlled_iteration_cost(
    channels: Sequence[PauliChannel],
    n: int,
    dt: float,
    gamma_p: float,
    gamma_ad: float = 0.0,
    p_er: float = DEFAULT_P_ER,
    method: str = "linear",
) -> float:
    """``C_iter`` for uniform single-qubit Pauli rates plus reset damping.

    Two-qubit strings are fully mitigated; the reset's Z byproduct is folded
    in first so PEC also removes whatever exceeds the Pauli target.
    """
    seen = list(channels)
    if gamma_ad > 0:
        reset = reset_for_damping({q: gamma_ad for q in range(n)}, dt, p_er=p_er)
        seen = fold_reset_byproduct(seen, reset, n)
    gammas = [single_qubit_rates(c, n, gamma_p) for c in seen]
    plan = plan_decoherence_control(seen, gammas, dt, dt=dt, method=method)
    return iteration_cost(plan.quasi)


# ------------------------------------------------------------- reference


def lindblad_spec_for(H: Hamiltonian, channels: Sequence[PauliChannel], dt: float, damping: Mapping[int, float] | None = None) -> LindbladSpec:
    spec = LindbladSpec(H.n, H)
    for ch in channels:
        spec = spec.merged(channel_to_dissipator(ch, dt, H.n))
    if damping:
        spec = spec.merged(LindbladSpec(H.n, damping_rates=dict(damping)))
    return spec


def reference_populations(
    H: Hamiltonian,
    channels: Sequence[PauliChannel],
    rho0: np.ndarray,
    dt: float,
    D: int,
    damping: Mapping[int, float] | None = None,
    readout: Callable[[np.ndarray], np.ndarray] | None = None,
    substeps: int = 20,
) -> np.ndarray:
    """RK4 solution with rates ``eps_k / dt`` (plus damping), read out per layer."""
    states = reference_states(lindblad_spec_for(H, channels, dt, damping), rho0, dt, D, substeps=substeps)
    return (readout or _populations)(states)


def _populations(states: np.ndarray) -> np.ndarray:
    return np.real(np.diagonal(states, axis1=-2, axis2=-1))


# ------------------------------------------------------------ mitigation


@dataclass
class MitigatedSeries:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    samples: int
    C_tot: float


def _chunk_job(args):
    circuit, model, plan, start, size, seed, rho0, readout, shots = args
    xs, zs, signs = sample_insertion_batch(plan, model.n, size, seed=seed, start=start)
    if model.coherent_angle:
        vals = []
        for i in range(size):
            rng = sample_stream(seed, start + i)
            layers = randomized_compile(circuit, plan.D, seed=np.random.default_rng(rng.integers(2**63)))
            ins = [PauliString(model.n, int(a), int(b)) for a, b in zip(xs[i], zs[i])]
            st = execute(layers, plan.D, model, insertions=ins, rho0=rho0).states
            vals.append(readout(st))
        vals = np.array(vals)
    else:
        vals = execute_batch(circuit, plan.D, model, xs, zs, rho0, observable=readout)
    if shots:
        vals = _shot_sample(vals, shots, seed, start)
    w = signs.astype(float).reshape((-1,) + (1,) * (vals.ndim - 1))
    sv = w * vals
    return sv.sum(axis=0), (sv**2).sum(axis=0)


def _shot_sample(vals: np.ndarray, shots: int, seed: int, start: int) -> np.ndarray:
    out = np.empty_like(vals)
    for i in range(vals.shape[0]):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(start + i, 1)))
        for j in range(vals.shape[1]):
            p = np.clip(vals[i, j], 0, None)
            out[i, j] = rng.multinomial(shots, p / p.sum()) / shots
    return out


def run_mitigated(
    circuit: TrotterCircuit,
    model: DeviceModel,
    plan: MitigationPlan,
    samples: int | None = None,
    seed: int = 0,
    rho0: np.ndarray | None = None,
    readout: Callable[[np.ndarray], np.ndarray] | None = None,
    shots: int | None = None,
    chunk: int = DEFAULT_CHUNK,
    workers: int | None = None,
) -> MitigatedSeries:
    """Signed Monte Carlo estimate of the read-out series ``(D + 1, ...)``.

    ``readout`` maps a state stack ``(S, d, d)`` to values (default:
    populations). Each sample is executed exactly; ``shots`` adds multinomial
    sampling of the populations per sample. Without a coherent kick all
    samples share the circuit; with one, each sample gets fresh twirls.
    """
    from .pec import check_tiling

    check_tiling(plan, model.subgroups)
    M = samples if samples is not None else default_sample_count(plan.C_tot)
    if M < 2:
        raise ValueError("need at least two samples")
    readout = readout or _populations
    if shots is not None and readout is not _populations:
        raise ValueError("shot sampling is supported for population readout only")
    jobs = []
    for start in range(0, M, chunk):
        jobs.append((circuit, model, plan, start, min(chunk, M - start), seed, rho0, readout, shots))
    parts = parallel_map(_chunk_job, jobs, workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    C = plan.C_tot
    mean = C * s1 / M
    var = np.maximum(s2 / M - (s1 / M) ** 2, 0.0) * M / (M - 1)
    stderr = C * np.sqrt(var / M)
    return MitigatedSeries(plan.dt * np.arange(plan.D + 1), mean, stderr, M, C)


def expected_mitigated(
    H: Hamiltonian, circuit_unitary_dt: float, plan: MitigationPlan, rho0: np.ndarray, extra=(), order: int = 1
) -> np.ndarray:
    """Exact average the PEC estimator converges to (reduced channels per layer)."""
    return trotterized_lindblad(H, list(plan.reduced_channels()) + list(extra), rho0, plan.D, circuit_unitary_dt, order)


def middle_pair_populations(n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Readout of the populations of qubits ``n/2 - 1`` and ``n/2``."""
    from .lindblad import reduced_density_matrix

    keep = [n // 2 - 1, n // 2]

    def read(states: np.ndarray) -> np.ndarray:
        return _populations(reduced_density_matrix(states, keep))

    return read
