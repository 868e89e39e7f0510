"""Command line front door: characterize | plan | simulate | mitigate | cost."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import experiments as ex
from .channels import PauliChannel
from .characterization import (
    CBConfig,
    make_clifford_identity_variant,
    reconstruct_tiled_channels,
    run_cycle_benchmark,
)
from .config import MODES, ExperimentConfig, parse_config
from .emulator import DeviceModel, execute, measure_pauli, randomized_compile, synthetic_tiled_channels
from .errors import ConfigError, NumericalError
from .hamiltonian import (
    ChainParams,
    Hamiltonian,
    TrotterPlan,
    build_chain_hamiltonian,
    build_tfim_hamiltonian,
    build_trotter_layer,
)
from .lindblad import basis_state, eta_metric, populations, trotterized_lindblad
from .pauli import PauliString
from .pec import MitigationPlan, default_sample_count, plan_decoherence_control, total_cost
from .svgplot import line_chart

log = logging.getLogger("noise_forge")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
SERIES_COLUMNS = ("time", "observable_label", "value", "stderr", "eta")
COST_COLUMNS = ("n", "D", "r", "epsilon_r", "C_iter", "C_tot", "M_required")


# ------------------------------------------------------------------ helpers


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


class Writer:
    """Single writer for all artifacts of one run."""

    def __init__(self, out: Path, cfg: ExperimentConfig, svg: bool):
        self.out = out
        self.cfg = cfg
        self.svg = svg
        self.written: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, columns: Sequence[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.cfg.config_hash()} seed={self.cfg.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _num(c) for c in row])
        return self._put(name, buf.getvalue())

    def json(self, name: str, data) -> Path:
        return self._put(name, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def plot(self, name: str, series, **kw) -> Path | None:
        if not self.svg:
            return None
        return self._put(name, line_chart(series, **kw))

    def _put(self, name: str, text: str) -> Path:
        p = self.out / name
        p.write_text(text, encoding="utf-8")
        self.written.append(p)
        return p


def build_hamiltonian(cfg: ExperimentConfig) -> Hamiltonian:
    h = cfg.hamiltonian
    n = h["n"]
    if h["kind"] == "chain":
        base = ChainParams.default_chain(n)
        params = ChainParams(
            tuple(h.get("site_energies", base.site_energies)), tuple(h.get("couplings", base.couplings))
        )
        return build_chain_hamiltonian(params)
    return build_tfim_hamiltonian(n, h["J"], h["h"])


def device_channels(cfg: ExperimentConfig, n: int) -> list[PauliChannel]:
    d = cfg.device
    kind = d.get("noise_kind", "synthetic")
    if kind == "none":
        return []
    if kind == "synthetic":
        s = d["synthetic"]
        return synthetic_tiled_channels(n, np.random.default_rng(s["seed"]), s["low"], s["high"])
    chans = d["channels"]
    for ch in chans:
        if any(q >= n for q in ch.subgroup):
            raise ConfigError([f"device.noise: subgroup {list(ch.subgroup)} out of range for n={n}"])
    return chans


def schedule(cfg: ExperimentConfig) -> tuple[float, int]:
    """``(dt, D)`` from two of run.t, trotter.dt and trotter.layers."""
    t, dt, D = cfg.run["t"], cfg.trotter["dt"], cfg.trotter["layers"]
    if dt is not None and D is not None:
        return dt, D
    if dt is not None:
        D = round(t / dt)
        if not math.isclose(D * dt, t, rel_tol=1e-9) or D < 1:
            raise ConfigError([f"run.t: {t} is not a multiple of trotter.dt = {dt}"])
        return dt, D
    if D is not None and t is not None:
        return t / D, D
    raise ConfigError(["run.t: need two of run.t, trotter.dt and trotter.layers"])


def initial_state(cfg: ExperimentConfig, n: int) -> np.ndarray:
    bits = cfg.run.get("initial") or ("1" + "0" * (n - 1))
    if len(bits) != n:
        raise ConfigError([f"run.initial: expected {n} bits, got {len(bits)}"])
    return basis_state(bits)


def reset_spec(cfg: ExperimentConfig, dt: float):
    rates = cfg.device["damping_rates"]
    if not rates:
        return None
    return ex.reset_for_damping(rates, dt, cfg.device["p_er"], cfg.device["reset_map"] == "exact")


def substeps(cfg: ExperimentConfig, dt: float) -> int:
    """Initial RK4 substeps per layer; the solver refines further if needed."""
    rk = cfg.run.get("rk4_dt") or dt / 20
    return max(1, round(dt / rk))


def make_model(cfg: ExperimentConfig, n: int, chans, reset) -> DeviceModel:
    return DeviceModel(
        n,
        chans,
        coherent_angle=cfg.device["coherent_angle"],
        resets=[reset] if reset is not None else [],
        readout_error=cfg.device["readout_error"],
        seed=cfg.seed,
    )


def _labels(n: int) -> list[str]:
    return [format(i, f"0{n}b") for i in range(1 << n)]


def _series_rows(times, labels, values, stderr, eta):
    rows = []
    for i, t in enumerate(times):
        e = None if eta is None else float(eta[i])
        for j, lab in enumerate(labels):
            rows.append((float(t), lab, float(values[i, j]), float(stderr[i, j]), e))
    return rows


def write_reference(w: Writer, times, ref, n: int) -> None:
    labels = [f"pop[{b}]" for b in _labels(n)]
    zeros = np.zeros_like(ref)
    w.csv("reference.csv", SERIES_COLUMNS, _series_rows(times, labels, ref, zeros, None))


# ---------------------------------------------------------------- pipelines


def run_simulate(cfg: ExperimentConfig, w: Writer) -> None:
    H = build_hamiltonian(cfg)
    n = H.n
    dt, D = schedule(cfg)
    chans = device_channels(cfg, n)
    reset = reset_spec(cfg, dt)
    model = make_model(cfg, n, chans, reset)
    layer = build_trotter_layer(H, TrotterPlan(cfg.trotter["order"], dt, 1))
    rho0 = initial_state(cfg, n)
    circuits = layer
    if model.coherent_angle:
        circuits = randomized_compile(layer, D, seed=cfg.seed)
    shots = cfg.run["shots"]
    res = execute(circuits, D, model, mode="sampled" if shots else "exact", rho0=rho0, shots=shots, seed=cfg.seed)
    pops = res.populations()
    times = dt * np.arange(D + 1)
    stderr = np.sqrt(pops * (1 - pops) / shots) if shots else np.zeros_like(pops)
    eta = None
    if cfg.run["reference"]:
        damping = cfg.device["damping_rates"]
        ref_chans = list(chans)
        for q, g in damping.items():
            ref_chans.append(PauliChannel.from_errors((q,), {"Z": min(1.0, g * dt / 4)}))
        if cfg.run["reference"] == "trotter":
            if reset is not None:
                raise ConfigError(["run.reference: the Trotter reference has no damping; use 'rk4'"])
            ref = populations(trotterized_lindblad(H, chans, rho0, D, dt, cfg.trotter["order"]))
        else:
            ref = ex.reference_populations(H, ref_chans, rho0, dt, D, damping=damping, substeps=substeps(cfg, dt))
        eta = eta_metric(pops, ref)
        write_reference(w, times, ref, n)
    labels = [f"pop[{b}]" for b in _labels(n)]
    rows = _series_rows(times, labels, pops, stderr, eta)
    for word in cfg.run["observables"]:
        p = PauliString.from_label(word)
        if p.n != n:
            raise ConfigError([f"run.observables: {word} has length {p.n}, expected {n}"])
        for i, t in enumerate(times):
            v, se = measure_pauli(res, p, layer=i)
            rows.append((float(t), word, v, se, None))
    w.csv("simulate.csv", SERIES_COLUMNS, rows)
    series = [(lab, times, pops[:, j]) for j, lab in enumerate(labels)]
    w.plot("simulate.svg", series, title="Populations (device)", xlabel="time", ylabel="population")


def _targets(cfg: ExperimentConfig, chans, dt):
    pec = cfg.pec
    if pec["r"] is not None:
        return [ex.reduced(c, pec["r"]) for c in chans]
    if pec["rule"] is not None:
        rule = ex.dephasing_rule(pec["rule"].get("dephasing", 0.0), pec["rule"].get("other", 0.0))
        return [ex.reduced(c, ex.factor_map(c, rule)) for c in chans]
    raise AssertionError("gamma targets are built by plan_decoherence_control")


def build_plan(cfg: ExperimentConfig, H: Hamiltonian, chans) -> tuple[MitigationPlan, object]:
    """Mitigation plan plus the reset slots it was built for."""
    n = H.n
    if not chans:
        raise ConfigError(["device.noise: mitigation needs a noisy device"])
    pec = cfg.pec
    if pec["gamma"] is not None:
        t = cfg.run["t"]
        if t is None:
            dt0, D0 = schedule(cfg)
            t = dt0 * D0
        try:
            base = plan_decoherence_control(chans, pec["gamma"], t, dt=cfg.trotter["dt"], method=pec["method"])
        except ValueError as exc:
            raise ConfigError([f"pec.gamma: {exc}"]) from exc
        dt, D = base.dt, base.D
        targets = base.reduced_channels()
    else:
        dt, D = schedule(cfg)
        targets = _targets(cfg, chans, dt)
    reset = reset_spec(cfg, dt)
    seen = ex.fold_reset_byproduct(chans, reset, n) if reset is not None else list(chans)
    plan = ex.plan_to_targets(seen, targets, dt, D, pec["method"])
    return plan, reset


def run_plan(cfg: ExperimentConfig, w: Writer) -> None:
    H = build_hamiltonian(cfg)
    chans = device_channels(cfg, H.n)
    plan, reset = build_plan(cfg, H, chans)
    data = plan.to_dict()
    data["n"] = H.n
    data["samples_default"] = plan.default_samples()
    data["damping_rates"] = {str(q): g for q, g in cfg.device["damping_rates"].items()}
    w.json("plan.json", data)
    rows = []
    for ch, r, quasi in zip(plan.channels, plan.factors, plan.quasi):
        for k, lab in enumerate(ch.labels):
            rows.append(("-".join(map(str, ch.subgroup)), lab, float(ch.probs[k]), float(r[k]), float(quasi.q[k])))
    w.csv("plan.csv", ("subgroup", "label", "epsilon", "r", "q"), rows)


def load_plan(path: str) -> MitigationPlan:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return MitigationPlan.from_dict(data)
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError([f"pec.plan_file: unreadable plan ({exc})"]) from exc


def run_mitigate(cfg: ExperimentConfig, w: Writer) -> None:
    H = build_hamiltonian(cfg)
    n = H.n
    chans = device_channels(cfg, n)
    if cfg.pec["plan_file"] is not None:
        plan = load_plan(cfg.pec["plan_path"])
        reset = reset_spec(cfg, plan.dt)
        device_part = plan.channels
        if reset is not None:
            # the plan carries the byproduct-folded channels; the device does not
            device_part = chans
    else:
        plan, reset = build_plan(cfg, H, chans)
        device_part = chans
    model = make_model(cfg, n, device_part, reset)
    layer = build_trotter_layer(H, TrotterPlan(cfg.trotter["order"], plan.dt, 1))
    rho0 = initial_state(cfg, n)
    samples = cfg.pec["samples"]
    M = default_sample_count(plan.C_tot) if samples == "auto" else samples
    res = ex.run_mitigated(
        layer, model, plan, samples=M, seed=cfg.seed or 0, rho0=rho0, shots=cfg.run["shots"], chunk=cfg.pec["chunk"]
    )
    eta = None
    if cfg.run["reference"]:
        targets = plan.reduced_channels()
        damping = cfg.device["damping_rates"] if reset is not None else None
        if cfg.run["reference"] == "trotter" and damping is None:
            ref = populations(trotterized_lindblad(H, targets, rho0, plan.D, plan.dt, cfg.trotter["order"]))
        else:
            ref = ex.reference_populations(
                H, targets, rho0, plan.dt, plan.D, damping=damping, substeps=substeps(cfg, plan.dt)
            )
        eta = eta_metric(res.values, ref)
        write_reference(w, res.times, ref, n)
    labels = [f"pop[{b}]" for b in _labels(n)]
    w.csv("mitigate.csv", SERIES_COLUMNS, _series_rows(res.times, labels, res.values, res.stderr, eta))
    w.json(
        "mitigate_summary.json",
        {"samples": res.samples, "C_tot": res.C_tot, "dt": plan.dt, "D": plan.D, "eta_max": None if eta is None else float(eta.max())},
    )
    series = [(lab, res.times, res.values[:, j]) for j, lab in enumerate(labels)]
    w.plot("mitigate.svg", series, title="Mitigated populations", xlabel="time", ylabel="population")


def run_characterize(cfg: ExperimentConfig, w: Writer) -> None:
    H = build_hamiltonian(cfg)
    n = H.n
    dt = cfg.trotter["dt"]
    if dt is None:
        dt, _ = schedule(cfg)
    chans = device_channels(cfg, n)
    model = make_model(cfg, n, chans, None)
    layer = build_trotter_layer(H, TrotterPlan(cfg.trotter["order"], dt, 1))
    variant = make_clifford_identity_variant(layer)
    c = cfg.characterize
    cb = CBConfig(depths=c["depths"], shots=c["shots"], R=c["R"], seed=cfg.seed or 0, mode=c["mode"])
    est = run_cycle_benchmark(model, variant, cb)
    subgroups = model.subgroups or [tuple(range(min(2, n)))]
    found = reconstruct_tiled_channels(est, subgroups)
    w.json("channels.json", {"channels": [ch.to_dict() for ch in found]})
    w.csv("cb_decay.csv", ("probe", "depth", "value"), est.table_rows())
    w.csv(
        "cb_fits.csv",
        ("probe", "f", "A", "stderr", "residual", "flagged"),
        [(lab, f.f, f.A, f.stderr, f.residual, "yes" if f.flagged else "no") for lab, f in est.fits.items()],
    )
    rows = []
    for ch in found:
        for lab, v in zip(ch.labels, ch.probs):
            rows.append(("-".join(map(str, ch.subgroup)), lab, float(v)))
    w.csv("channel_eps.csv", ("subgroup", "label", "epsilon"), rows)
    series = [(lab, list(est.depths), [abs(v) for v in f.values]) for lab, f in est.fits.items()]
    w.plot("cb_decay.svg", series, title="Probe decays", xlabel="depth m", ylabel="|<a>|", logy=True)


def run_cost(cfg: ExperimentConfig, w: Writer) -> None:
    c = cfg.cost
    rows = []
    series = []
    for n in c["n"]:
        for r in c["r"]:
            eps_r = r * c["subgroup_error"]
            g = int(n) - 1
            c_iter = (1 + 2 * eps_r) ** g
            xs, ys = [], []
            for D in c["D"]:
                C = total_cost(eps_r, g, int(D))
                rows.append((int(n), int(D), float(r), eps_r, c_iter, C, default_sample_count(C)))
                xs.append(int(D))
                ys.append(C)
            series.append((f"n={int(n)} r={r:g}", xs, ys))
    w.csv("cost.csv", COST_COLUMNS, rows)
    w.plot("cost.svg", series, title="Total mitigation cost", xlabel="D", ylabel="C_tot", logy=True)


PIPELINES = {
    "simulate": run_simulate,
    "mitigate": run_mitigate,
    "plan": run_plan,
    "characterize": run_characterize,
    "cost": run_cost,
}


def run_pipeline(cfg: ExperimentConfig, out: str | Path = "out", svg: bool = True) -> list[Path]:
    w = Writer(Path(out), cfg, svg)
    PIPELINES[cfg.mode](cfg, w)
    return w.written


# ---------------------------------------------------------------------- main


def _error_record(kind: str, message: str, problems=None, out: Path | None = None) -> None:
    rec = {"status": "error", "kind": kind, "message": message}
    if problems:
        rec["problems"] = list(problems)
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noise-forge", description="Noise-assisted open-system simulation pipelines.")
    sub = ap.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} pipeline")
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--svg", choices=("on", "off"), default="on", help="write SVG plots")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = parse_config(args.config, mode=args.command, seed=args.seed)
        written = run_pipeline(cfg, out, svg=args.svg == "on")
    except ConfigError as exc:
        _error_record("config", str(exc), exc.problems, out)
        return EXIT_CONFIG
    except NumericalError as exc:
        _error_record("numerical", str(exc), None, out)
        return EXIT_NUMERICAL
    except (ValueError, RuntimeError, OSError) as exc:
        _error_record(type(exc).__name__, str(exc), None, out)
        return EXIT_FAILURE
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
