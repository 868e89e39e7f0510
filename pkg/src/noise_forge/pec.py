"""Partial probabilistic error cancellation: quasi-probabilities, rate planning,
signed insertion sampling, estimators and cost formulas."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channels import PauliChannel
from .pauli import PauliString, all_paulis, commutes, pauli_labels

CLAMP_TOL = 1e-12


@functools.lru_cache(maxsize=None)
def _commutation_signs(K: int) -> np.ndarray:
    """``+1/-1`` matrix of commutation between all K-qubit strings."""
    ps = list(all_paulis(K))
    return np.array([[float(commutes(a, b)) for b in ps] for a in ps])


def pauli_eigenvalues(probs: np.ndarray, K: int) -> np.ndarray:
    """Channel eigenvalues ``f_a = sum_k s(a,k) eps_k`` for all K-qubit strings."""
    return _commutation_signs(K) @ probs


def probabilities_from_eigenvalues(f: np.ndarray, K: int) -> np.ndarray:
    """Inverse transform ``eps_k = 4^-K sum_a s(a,k) f_a``."""
    return _commutation_signs(K).T @ f / 4**K


def _factor_array(ch: PauliChannel, r) -> np.ndarray:
    labels = pauli_labels(len(ch.subgroup))
    if isinstance(r, Mapping):
        unknown = set(r) - set(labels[1:])
        if unknown:
            raise ValueError(f"unknown Pauli labels in mitigation factors: {sorted(unknown)}")
        arr = np.array([0.0] + [float(r.get(lab, 0.0)) for lab in labels[1:]])
    elif np.ndim(r) == 0:
        arr = np.full(len(labels), float(r))
        arr[0] = 0.0
    else:
        arr = np.asarray(r, dtype=float).copy()
        if arr.shape != (len(labels),):
            raise ValueError(f"expected {len(labels)} mitigation factors, got {arr.shape}")
        arr[0] = 0.0
    if np.any(arr < -CLAMP_TOL) or np.any(arr > 1 + CLAMP_TOL) or not np.all(np.isfinite(arr)):
        raise ValueError("mitigation factors must lie in [0, 1]")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class QuasiProbability:
    """Signed decomposition ``sum_k q_k P_k`` of a (partial) inverse channel on one subgroup."""

    subgroup: tuple[int, ...]
    q: np.ndarray
    method: str = "linear"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (4 ** len(self.subgroup),):
            raise ValueError("quasi-probability length does not match subgroup")
        object.__setattr__(self, "q", q)

    @property
    def C_mit(self) -> float:
        return float(np.abs(self.q).sum())

    @property
    def p(self) -> np.ndarray:
        return np.abs(self.q) / self.C_mit

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.q < 0, -1, 1)

    @property
    def labels(self) -> list[str]:
        return pauli_labels(len(self.subgroup))

    def to_dict(self) -> dict:
        return {"subgroup": list(self.subgroup), "q": [float(v) for v in self.q], "method": self.method}

    @classmethod
    def from_dict(cls, d: Mapping) -> "QuasiProbability":
        return cls(tuple(d["subgroup"]), np.array(d["q"], dtype=float), d.get("method", "linear"))


def build_quasiprobability(ch: PauliChannel, r, method: str = "linear") -> QuasiProbability:
    """Partial inverse of ``ch`` scaled by per-string factors ``r``.

    ``linear`` is the first-order form ``q_0 = 1 + sum r eps``, ``q_k = -r eps``.
    ``exact`` solves for the quasi-probability whose composition with ``ch``
    is exactly the channel with ``eps_k (1 - r_k)``.
    """
    rk = _factor_array(ch, r)
    eps = ch.probs
    if method == "linear":
        q = -rk * eps
        q[0] = 1.0 + float((rk[1:] * eps[1:]).sum())
    elif method == "exact":
        K = len(ch.subgroup)
        target = eps * (1 - rk)
        target[0] = 1.0 - target[1:].sum()
        f_noise = pauli_eigenvalues(eps, K)
        if np.any(f_noise <= 0):
            raise ValueError("channel is not invertible (non-positive eigenvalue)")
        q = probabilities_from_eigenvalues(pauli_eigenvalues(target, K) / f_noise, K)
    else:
        raise ValueError(f"unknown quasi-probability method {method!r}")
    return QuasiProbability(tuple(ch.subgroup), q, method)


def compose_quasi_with_channel(quasi: QuasiProbability, ch: PauliChannel) -> np.ndarray:
    """Pauli weights of ``Q o N``; a probability vector only when ``Q`` exactly matches a channel."""
    K = len(ch.subgroup)
    return probabilities_from_eigenvalues(pauli_eigenvalues(quasi.q, K) * pauli_eigenvalues(ch.probs, K), K)


# ------------------------------------------------------------------ planning


@dataclass
class MitigationPlan:
    """Schedule realizing target rates: step, depth, factors and quasi-probabilities."""

    dt_max: float
    dt: float
    D: int
    channels: list[PauliChannel]
    factors: list[np.ndarray]
    targets: list[np.ndarray]
    quasi: list[QuasiProbability]
    method: str = "linear"

    @property
    def subgroups(self) -> list[tuple[int, ...]]:
        return [c.subgroup for c in self.channels]

    @property
    def C_iter(self) -> float:
        return iteration_cost(self.quasi)

    @property
    def C_tot(self) -> float:
        return self.C_iter**self.D

    @property
    def total_time(self) -> float:
        return self.D * self.dt

    def realized_rates(self) -> list[np.ndarray]:
        return [c.probs * (1 - r) / self.dt for c, r in zip(self.channels, self.factors)]

    def reduced_channels(self) -> list[PauliChannel]:
        """Channels with ``eps_k (1 - r_k)``: the per-layer noise the plan implements."""
        out = []
        for c, r in zip(self.channels, self.factors):
            e = c.probs * (1 - r)
            e[0] = 1 - e[1:].sum()
            out.append(PauliChannel(c.subgroup, e))
        return out

    def default_samples(self) -> int:
        return default_sample_count(self.C_tot)

    def to_dict(self) -> dict:
        return {
            "dt_max": self.dt_max,
            "dt": self.dt,
            "D": self.D,
            "method": self.method,
            "channels": [c.to_dict() for c in self.channels],
            "factors": [[float(v) for v in r] for r in self.factors],
            "targets": [[float(v) for v in g] for g in self.targets],
            "quasi": [q.to_dict() for q in self.quasi],
            "C_tot": self.C_tot,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MitigationPlan":
        return cls(
            dt_max=float(d["dt_max"]),
            dt=float(d["dt"]),
            D=int(d["D"]),
            channels=[PauliChannel.from_dict(c) for c in d["channels"]],
            factors=[np.array(r, dtype=float) for r in d["factors"]],
            targets=[np.array(g, dtype=float) for g in d["targets"]],
            quasi=[QuasiProbability.from_dict(q) for q in d["quasi"]],
            method=d.get("method", "linear"),
        )


def _rate_array(ch: PauliChannel, gamma) -> np.ndarray:
    labels = pauli_labels(len(ch.subgroup))
    if isinstance(gamma, Mapping):
        unknown = set(gamma) - set(labels[1:])
        if unknown:
            raise ValueError(f"unknown Pauli labels in target rates: {sorted(unknown)}")
        g = np.array([0.0] + [float(gamma.get(lab, 0.0)) for lab in labels[1:]])
    elif np.ndim(gamma) == 0:
        g = np.full(len(labels), float(gamma))
        g[0] = 0.0
    else:
        g = np.asarray(gamma, dtype=float).copy()
        g[0] = 0.0
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("target rates must be finite and non-negative")
    return g


def max_time_step(channels: Sequence[PauliChannel], gammas: Sequence[np.ndarray]) -> float:
    """``min eps_k / Gamma_k`` over channels with a positive target (inf if none)."""
    best = math.inf
    for ch, g in zip(channels, gammas):
        for k in range(1, len(g)):
            if g[k] > 0:
                if ch.probs[k] <= 0:
                    raise ValueError(
                        f"target rate {g[k]} for {ch.labels[k]} on {ch.subgroup} but the device has no such noise"
                    )
                best = min(best, ch.probs[k] / g[k])
    return best


def plan_decoherence_control(
    channels: Sequence[PauliChannel],
    gamma,
    t: float,
    dt: float | None = None,
    method: str = "linear",
) -> MitigationPlan:
    """Pick ``dt <= dt_max`` and factors ``r_k = 1 - Gamma_k dt / eps_k``.

    ``gamma`` is one rate map (label -> rate, or a scalar) shared by every
    channel, or a list with one map per channel. A forced ``dt`` larger than
    ``dt_max`` is rejected.
    """
    channels = list(channels)
    if t <= 0:
        raise ValueError("total time must be positive")
    if isinstance(gamma, (Mapping, int, float)) or np.ndim(gamma) == 0:
        gammas = [_rate_array(c, gamma) for c in channels]
    else:
        if len(gamma) != len(channels):
            raise ValueError("need one target-rate map per channel")
        gammas = [_rate_array(c, g) for c, g in zip(channels, gamma)]
    dt_max = max_time_step(channels, gammas)
    if dt is not None:
        if dt <= 0:
            raise ValueError("time step must be positive")
        if dt > dt_max * (1 + 1e-12):
            bad = []
            for c, g in zip(channels, gammas):
                for k in range(1, len(g)):
                    if g[k] * dt > c.probs[k] * (1 + 1e-12):
                        bad.append(f"{c.labels[k]}@{c.subgroup}")
            raise ValueError(f"time step {dt} exceeds dt_max {dt_max:.6g}; rate unreachable for {', '.join(bad)}")
        D = max(1, int(round(t / dt)))
        if abs(D * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError("total time must be an integer multiple of the forced time step")
    else:
        if math.isinf(dt_max):
            D = 1
        else:
            D = max(1, math.ceil(t / dt_max - 1e-9))
        dt = t / D
    factors = []
    for c, g in zip(channels, gammas):
        r = np.zeros(len(g))
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(c.probs > 0, 1 - g * dt / np.where(c.probs > 0, c.probs, 1), 1.0)
        raw[0] = 0.0
        r = np.clip(raw, 0.0, 1.0)
        r[np.abs(r) < CLAMP_TOL] = 0.0
        factors.append(r)
    return _finish_plan(channels, factors, gammas, dt, dt_max, D, method)


def plan_from_factors(
    channels: Sequence[PauliChannel], factors, dt: float, D: int, method: str = "linear"
) -> MitigationPlan:
    """Plan with given mitigation factors (scalar, label map, or one per channel)."""
    channels = list(channels)
    if isinstance(factors, (Mapping, int, float)) or np.ndim(factors) == 0:
        rs = [_factor_array(c, factors) for c in channels]
    else:
        if len(factors) != len(channels):
            raise ValueError("need one factor map per channel")
        rs = [_factor_array(c, f) for c, f in zip(channels, factors)]
    gammas = [c.probs * (1 - r) / dt for c, r in zip(channels, rs)]
    for g in gammas:
        g[0] = 0.0
    return _finish_plan(channels, rs, gammas, dt, dt, D, method)


def _finish_plan(channels, factors, gammas, dt, dt_max, D, method) -> MitigationPlan:
    quasi = [build_quasiprobability(c, r, method) for c, r in zip(channels, factors)]
    return MitigationPlan(dt_max, dt, D, list(channels), factors, gammas, quasi, method)


# ------------------------------------------------------------------ sampling


@dataclass
class InsertionSample:
    """One Monte Carlo draw: a full-register string per layer, the sign and weight."""

    strings: list[PauliString]
    sign: int
    weight: float


def _subgroup_tables(plan: MitigationPlan, n: int):
    tables = []
    for quasi in plan.quasi:
        strings = [p.embed(n, quasi.subgroup) for p in all_paulis(len(quasi.subgroup))]
        xs = np.array([s.x for s in strings], dtype=np.int64)
        zs = np.array([s.z for s in strings], dtype=np.int64)
        tables.append((quasi.p, quasi.signs, xs, zs))
    return tables


def check_tiling(plan: MitigationPlan, subgroups: Sequence[Sequence[int]]) -> None:
    if [tuple(s) for s in subgroups] != [tuple(s) for s in plan.subgroups]:
        raise ValueError(f"plan tiling {plan.subgroups} does not match device tiling {list(subgroups)}")


def _draw(rng: np.random.Generator, tables, D: int):
    x = np.zeros(D, dtype=np.int64)
    z = np.zeros(D, dtype=np.int64)
    sign = 1
    for p, signs, xs, zs in tables:
        k = rng.choice(len(p), size=D, p=p)
        x ^= xs[k]
        z ^= zs[k]
        sign *= int(np.prod(signs[k]))
    return x, z, sign


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for Monte Carlo sample ``index``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def sample_insertions(
    plan: MitigationPlan, n: int, subgroups: Sequence[Sequence[int]] | None = None, seed: int = 0, index: int = 0
) -> InsertionSample:
    """Draw one insertion string per layer (product over subgroups)."""
    if subgroups is not None:
        check_tiling(plan, subgroups)
    x, z, sign = _draw(sample_stream(seed, index), _subgroup_tables(plan, n), plan.D)
    strings = [PauliString(n, int(a), int(b)) for a, b in zip(x, z)]
    return InsertionSample(strings, sign, plan.C_tot)


def sample_insertion_batch(
    plan: MitigationPlan, n: int, samples: int, seed: int = 0, start: int = 0, subgroups=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bitmask arrays ``(samples, D)`` and signs for samples ``start..start+samples-1``.

    Sample ``i`` uses the same stream as ``sample_insertions(..., index=i)``.
    """
    if subgroups is not None:
        check_tiling(plan, subgroups)
    tables = _subgroup_tables(plan, n)
    xs = np.empty((samples, plan.D), dtype=np.int64)
    zs = np.empty((samples, plan.D), dtype=np.int64)
    signs = np.empty(samples, dtype=np.int64)
    for i in range(samples):
        xs[i], zs[i], signs[i] = _draw(sample_stream(seed, start + i), tables, plan.D)
    return xs, zs, signs


def mitigated_expectation(signs, values, C_tot: float) -> tuple[np.ndarray | float, np.ndarray | float]:
    """Mean and standard error of ``C_tot * sign * value`` over samples (axis 0)."""
    signs = np.asarray(signs, dtype=float)
    values = np.asarray(values, dtype=float)
    if signs.size == 0:
        raise ValueError("no samples")
    if signs.size < 2:
        raise ValueError("need at least two samples for an error estimate")
    w = (C_tot * signs).reshape((-1,) + (1,) * (values.ndim - 1))
    est = w * values
    mean = est.mean(axis=0)
    stderr = est.std(axis=0, ddof=1) / math.sqrt(len(signs))
    if np.ndim(mean) == 0:
        return float(mean), float(stderr)
    return mean, stderr


def default_sample_count(C_tot: float) -> int:
    return math.ceil(90 * C_tot**2 - 1e-9)


# ------------------------------------------------------------------ costs


def iteration_cost(quasi: Sequence[QuasiProbability]) -> float:
    """Per-layer cost: product of subgroup ``C_mit``."""
    return float(np.prod([q.C_mit for q in quasi])) if quasi else 1.0


def total_cost(eps_r: float, g_n: int, D: int) -> float:
    """``(1 + 2 eps_r)^(g(n) D)``."""
    if eps_r < 0:
        raise ValueError("eps_r must be non-negative")
    return (1 + 2 * eps_r) ** (g_n * D)


def product_cost(layers: Sequence[Sequence[QuasiProbability]]) -> float:
    """``prod_d prod_m C_mit`` over explicit per-layer quasi-probabilities."""
    c = 1.0
    for layer in layers:
        for q in layer:
            c *= q.C_mit
    return c


def subgroup_count(n: int, K: int = 2) -> int:
    """Number of K-qubit subgroups in the nearest-neighbour tiling."""
    if K == 1:
        return n
    return max(1, n - 1)


def mitigated_error(ch: PauliChannel, r) -> float:
    """``eps_r = sum_k eps_k r_k``."""
    rk = _factor_array(ch, r)
    return float((rk[1:] * ch.probs[1:]).sum())


@dataclass
class CostModel:
    eps_r: float
    g_n: int
    D: int
    alpha: float | None = None
    beta: float | None = None
    lam: float | None = None
    M_max: float = 1e8

    @property
    def C_tot(self) -> float:
        return total_cost(self.eps_r, self.g_n, self.D)

    @property
    def M_required(self) -> int:
        return default_sample_count(self.C_tot)

    @property
    def feasible(self) -> bool:
        return self.C_tot**2 <= self.M_max


@dataclass
class ScalingFit:
    slopes: np.ndarray
    intercepts: np.ndarray
    residuals: np.ndarray
    keys: np.ndarray
    coef: float = float("nan")
    coef_residual: float = float("nan")


def fit_cost_scaling(series: Mapping[float, Sequence[tuple[int, float]]], eps_r: Mapping[float, float] | None = None, n_of_key=None) -> ScalingFit:
    """Slope of ``ln C_tot`` versus ``D`` for each series.

    ``series`` maps a key (n or r) to ``(D, C_tot)`` points. Slopes are then
    fitted through the origin against the key, giving alpha/beta per unit
    key. If ``eps_r`` and ``n_of_key`` are given, lambda is extracted from
    ``slope = lambda * n * eps_r``.
    """
    keys, slopes, icepts, resid = [], [], [], []
    for key, pts in series.items():
        pts = list(pts)
        if len(pts) < 3:
            raise ValueError(f"series {key} needs at least 3 points")
        D = np.array([p[0] for p in pts], dtype=float)
        y = np.log(np.array([p[1] for p in pts], dtype=float))
        if np.ptp(D) == 0:
            raise ValueError(f"series {key} has a single depth")
        A = np.vstack([D, np.ones_like(D)]).T
        (s, b), *_ = np.linalg.lstsq(A, y, rcond=None)
        keys.append(key)
        slopes.append(s)
        icepts.append(b)
        resid.append(float(np.abs(A @ [s, b] - y).max()))
    keys = np.array(keys, dtype=float)
    slopes = np.array(slopes)
    fit = ScalingFit(slopes, np.array(icepts), np.array(resid), keys)
    if eps_r is not None and n_of_key is not None:
        x = np.array([n_of_key(k) * eps_r[k] for k in series])
    else:
        x = keys
    if np.any(x != 0):
        fit.coef = float(x @ slopes / (x @ x))
        pred = fit.coef * x
        fit.coef_residual = float(np.abs(pred - slopes).max() / np.abs(slopes).max())
    return fit


def max_error_budget(Gamma: float, t: float, D: int, n: int, lam: float, M_max: float) -> float:
    """``Gamma t / D + ln(M_max) / (2 lambda n D^2)``."""
    if min(t, D, n, lam, M_max) <= 0 or Gamma < 0:
        raise ValueError("error budget needs positive inputs")
    return Gamma * t / D + math.log(M_max) / (2 * lam * n * D**2)
