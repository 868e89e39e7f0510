"""Experiment configuration: JSON parsing, defaults and validation.

Every problem found is reported with a path-like locator; parsing does not
stop at the first one.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .channels import DEFAULT_P_ER, PauliChannel
from .errors import ConfigError

MODES = ("characterize", "plan", "simulate", "mitigate", "cost")
SAMPLED_MODES = ("mitigate",)


@dataclass
class ExperimentConfig:
    mode: str
    hamiltonian: dict
    device: dict
    trotter: dict
    pec: dict
    run: dict
    characterize: dict
    cost: dict
    raw: dict = field(repr=False)
    base_dir: Path = Path(".")

    @property
    def seed(self) -> int | None:
        return self.run.get("seed")

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


class _Checker:
    def __init__(self):
        self.problems: list[str] = []

    def add(self, where: str, msg: str) -> None:
        self.problems.append(f"{where}: {msg}")

    def number(self, d: Mapping, key: str, where: str, *, lo=None, hi=None, lo_open=False, integer=False, required=False, default=None):
        if key not in d or d[key] is None:
            if required:
                self.add(f"{where}.{key}", "missing required key")
            return default
        v = d[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(f"{where}.{key}", f"expected a number, got {type(v).__name__}")
            return default
        if integer and (not float(v).is_integer()):
            self.add(f"{where}.{key}", f"expected an integer, got {v}")
            return default
        if not math.isfinite(v):
            self.add(f"{where}.{key}", "must be finite")
            return default
        if lo is not None and (v < lo or (lo_open and v == lo)):
            self.add(f"{where}.{key}", f"value {v} out of range (must be {'>' if lo_open else '>='} {lo})")
            return default
        if hi is not None and v > hi:
            self.add(f"{where}.{key}", f"value {v} out of range (must be <= {hi})")
            return default
        return int(v) if integer else float(v)

    def block(self, d: Mapping, key: str, where: str, required=False) -> dict:
        v = d.get(key)
        if v is None:
            if required:
                self.add(f"{where}.{key}" if where else key, "missing required block")
            return {}
        if not isinstance(v, dict):
            self.add(f"{where}.{key}" if where else key, f"expected an object, got {type(v).__name__}")
            return {}
        return v


def load_json(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return data


def parse_config(source: str | Path | Mapping, mode: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validated config with defaults filled in, or ConfigError listing all problems."""
    if isinstance(source, Mapping):
        raw = json.loads(json.dumps(source))
        base = Path(".")
    else:
        raw = load_json(source)
        base = Path(source).resolve().parent
    if seed is not None:
        raw.setdefault("run", {})
        if isinstance(raw["run"], dict):
            raw["run"]["seed"] = seed
    c = _Checker()

    cfg_mode = raw.get("mode")
    if mode is None:
        mode = cfg_mode
    elif cfg_mode is not None and cfg_mode != mode:
        c.add("mode", f"config says {cfg_mode!r} but subcommand is {mode!r}")
    if mode not in MODES:
        c.add("mode", f"expected one of {', '.join(MODES)}, got {mode!r}")

    ham = _hamiltonian(raw, c, mode)
    trotter = _trotter(raw, c, mode)
    run = _run(raw, c, mode, trotter)
    device = _device(raw, c, base, ham)
    pec = _pec(raw, c, base, mode)
    chz = _characterize(raw, c)
    cost = _cost(raw, c, mode)

    if not c.problems and mode in ("plan", "mitigate"):
        _check_rates(device, pec, trotter, run, c)
    if c.problems:
        raise ConfigError(c.problems)
    return ExperimentConfig(mode, ham, device, trotter, pec, run, chz, cost, raw, base)


def _hamiltonian(raw, c: _Checker, mode) -> dict:
    h = c.block(raw, "hamiltonian", "", required=mode != "cost")
    kinds = [k for k in ("chain", "tfim") if k in h]
    unknown = sorted(set(h) - {"chain", "tfim"})
    for k in unknown:
        c.add(f"hamiltonian.{k}", "unknown Hamiltonian kind (use chain or tfim)")
    if mode == "cost" and not h:
        return {}
    if len(kinds) != 1:
        if not unknown:
            c.add("hamiltonian", f"exactly one of chain/tfim required, found {len(kinds)}")
        return {}
    kind = kinds[0]
    b = c.block(h, kind, "hamiltonian")
    where = f"hamiltonian.{kind}"
    n = c.number(b, "n", where, lo=2, integer=True, required=True)
    out = {"kind": kind, "n": n}
    if kind == "chain":
        for key, size in (("site_energies", n), ("couplings", None if n is None else n - 1)):
            if key in b:
                v = b[key]
                if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                    c.add(f"{where}.{key}", "expected a list of numbers")
                elif size is not None and len(v) != size:
                    c.add(f"{where}.{key}", f"expected {size} entries, got {len(v)}")
                else:
                    out[key] = [float(x) for x in v]
    else:
        out["J"] = c.number(b, "J", where, default=0.5236)
        out["h"] = c.number(b, "h", where, default=1.0)
    return out


def _trotter(raw, c: _Checker, mode) -> dict:
    t = c.block(raw, "trotter", "")
    out = {
        "order": c.number(t, "order", "trotter", integer=True, default=1),
        "dt": c.number(t, "dt", "trotter", lo=0, lo_open=True),
        "layers": c.number(t, "layers", "trotter", lo=1, integer=True),
    }
    if out["order"] not in (1, 2):
        c.add("trotter.order", f"unsupported order {out['order']} (use 1 or 2)")
    return out


def _run(raw, c: _Checker, mode, trotter) -> dict:
    r = c.block(raw, "run", "")
    out = {
        "t": c.number(r, "t", "run", lo=0, lo_open=True),
        "seed": c.number(r, "seed", "run", lo=0, integer=True),
        "shots": c.number(r, "shots", "run", lo=1, integer=True),
        "reference": r.get("reference", "rk4"),
        "rk4_dt": c.number(r, "rk4_dt", "run", lo=0, lo_open=True),
        "initial": r.get("initial"),
        "observables": r.get("observables", []),
    }
    if "shots" in r and r["shots"] is not None and isinstance(r["shots"], (int, float)) and r["shots"] <= 0:
        pass  # reported above as a range violation
    if out["reference"] is True:
        out["reference"] = "rk4"
    if out["reference"] not in ("rk4", "trotter", False, None):
        c.add("run.reference", "expected 'rk4', 'trotter' or false")
    if out["initial"] is not None and (not isinstance(out["initial"], str) or set(out["initial"]) - set("01")):
        c.add("run.initial", "expected a bitstring such as '10'")
    if not isinstance(out["observables"], list) or not all(isinstance(o, str) and o and not set(o) - set("IXYZ") for o in out["observables"]):
        c.add("run.observables", "expected a list of Pauli words")
    if mode in ("simulate", "mitigate", "characterize", "plan"):
        layers, dt, t = trotter.get("layers"), trotter.get("dt"), out["t"]
        if mode != "characterize":
            known = sum(v is not None for v in (layers, dt, t))
            if known < 2 and not (mode == "plan" and t is not None):
                c.add("run.t", "need two of run.t, trotter.dt and trotter.layers")
            elif known == 3 and not math.isclose(layers * dt, t, rel_tol=1e-9):
                c.add("trotter", f"layers * dt = {layers * dt} differs from run.t = {t}")
        if trotter.get("dt") is not None and out["rk4_dt"] is None:
            out["rk4_dt"] = trotter["dt"] / 20
    needs_seed = mode in SAMPLED_MODES or (mode == "simulate" and out["shots"] is not None)
    if mode == "characterize":
        needs_seed = (raw.get("characterize") or {}).get("mode", "exact") == "sampled"
    if needs_seed and out["seed"] is None:
        c.add("run.seed", f"seed required for sampled {mode} runs")
    return out


def _device(raw, c: _Checker, base: Path, ham) -> dict:
    d = c.block(raw, "device", "")
    noise = d.get("noise", {"synthetic": {}})
    out: dict[str, Any] = {
        "coherent_angle": c.number(d, "coherent_angle", "device", default=0.0),
        "readout_error": c.number(d, "readout_error", "device", lo=0, hi=1, default=0.0),
        "p_er": c.number(d, "p_er", "device", lo=0, hi=1, default=DEFAULT_P_ER),
        "damping_rates": {},
        "reset_map": d.get("reset_map", "exact"),
    }
    if out["reset_map"] not in ("exact", "linear"):
        c.add("device.reset_map", "expected 'exact' or 'linear'")
    dr = d.get("damping_rates", {})
    if not isinstance(dr, dict):
        c.add("device.damping_rates", "expected an object qubit -> rate")
    else:
        for q, g in dr.items():
            if not str(q).isdigit():
                c.add(f"device.damping_rates.{q}", "qubit index must be a non-negative integer")
            elif isinstance(g, bool) or not isinstance(g, (int, float)) or g < 0:
                c.add(f"device.damping_rates.{q}", f"rate must be a number >= 0, got {g!r}")
            elif ham.get("n") is not None and int(q) >= ham["n"]:
                c.add(f"device.damping_rates.{q}", f"qubit out of range for n={ham['n']}")
            else:
                out["damping_rates"][int(q)] = float(g)
    if not isinstance(noise, dict):
        c.add("device.noise", "expected an object")
        return out
    kinds = [k for k in ("synthetic", "channels", "from_characterization", "none") if k in noise]
    if len(kinds) != 1:
        c.add("device.noise", "exactly one of synthetic/channels/from_characterization/none required")
        return out
    kind = kinds[0]
    out["noise_kind"] = kind
    if kind == "synthetic":
        s = noise["synthetic"] if isinstance(noise["synthetic"], dict) else {}
        lo = c.number(s, "low", "device.noise.synthetic", lo=0, hi=0.25, default=1e-3)
        hi = c.number(s, "high", "device.noise.synthetic", lo=0, hi=0.25, default=2e-2)
        if lo is not None and hi is not None and lo > hi:
            c.add("device.noise.synthetic", "low exceeds high")
        out["synthetic"] = {
            "seed": c.number(s, "seed", "device.noise.synthetic", lo=0, integer=True, default=0),
            "low": lo,
            "high": hi,
        }
    elif kind == "channels":
        out["channels"] = _channels(noise["channels"], "device.noise.channels", c)
    elif kind == "from_characterization":
        p = noise["from_characterization"]
        path = Path(p) if Path(p).is_absolute() else base / p
        if not path.exists():
            c.add("device.noise.from_characterization", f"file not found: {p}")
        else:
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
                out["channels"] = _channels(data.get("channels"), f"{p}:channels", c)
            except (OSError, json.JSONDecodeError, AttributeError) as exc:
                c.add("device.noise.from_characterization", f"unreadable channel file ({exc})")
    return out


def _channels(v, where: str, c: _Checker):
    if not isinstance(v, list) or not v:
        c.add(where, "expected a non-empty list of channels")
        return []
    out = []
    for i, ch in enumerate(v):
        try:
            out.append(PauliChannel.from_dict(ch))
        except (KeyError, TypeError, ValueError) as exc:
            c.add(f"{where}[{i}]", str(exc))
    return out


def _pec(raw, c: _Checker, base: Path, mode) -> dict:
    p = c.block(raw, "pec", "")
    out = {
        "method": p.get("method", "linear"),
        "samples": p.get("samples", "auto"),
        "r": p.get("r"),
        "rule": p.get("rule"),
        "gamma": p.get("gamma"),
        "plan_file": p.get("plan_file"),
        "chunk": c.number(p, "chunk", "pec", lo=1, integer=True, default=2048),
    }
    if out["method"] not in ("linear", "exact"):
        c.add("pec.method", "expected 'linear' or 'exact'")
    s = out["samples"]
    if s != "auto" and (isinstance(s, bool) or not isinstance(s, int) or s < 2):
        c.add("pec.samples", f"expected 'auto' or an integer >= 2, got {s!r}")
    r = out["r"]
    if r is not None:
        vals = r.values() if isinstance(r, dict) else [r]
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                c.add("pec.r", f"mitigation factor {v!r} out of range [0, 1]")
    rule = out["rule"]
    if rule is not None:
        if not isinstance(rule, dict) or set(rule) - {"dephasing", "other"}:
            c.add("pec.rule", "expected {'dephasing': r1, 'other': r2}")
        else:
            for k, v in rule.items():
                if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                    c.add(f"pec.rule.{k}", f"mitigation factor {v!r} out of range [0, 1]")
    g = out["gamma"]
    if g is not None:
        vals = g.values() if isinstance(g, dict) else [g]
        for v in vals:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                c.add("pec.gamma", f"target rate {v!r} must be >= 0")
    given = [k for k in ("r", "rule", "gamma", "plan_file") if out[k] is not None]
    if mode in ("plan", "mitigate") and len(given) != 1:
        c.add("pec", "exactly one of r, rule, gamma or plan_file required")
    if mode == "plan" and out["plan_file"] is not None:
        c.add("pec.plan_file", "plan mode builds a plan; give r, rule or gamma")
    if out["plan_file"] is not None:
        path = Path(out["plan_file"])
        path = path if path.is_absolute() else base / path
        if not path.exists():
            c.add("pec.plan_file", f"file not found: {out['plan_file']}")
        out["plan_path"] = str(path)
    return out


def _characterize(raw, c: _Checker) -> dict:
    b = c.block(raw, "characterize", "")
    depths = b.get("depths", [2, 4, 8, 16])
    if not isinstance(depths, list) or len(depths) < 2 or not all(isinstance(m, int) and m >= 1 for m in depths) or any(
        b2 <= a for a, b2 in zip(depths, depths[1:])
    ):
        c.add("characterize.depths", "expected >= 2 strictly increasing positive integers")
    mode = b.get("mode", "exact")
    if mode not in ("exact", "sampled"):
        c.add("characterize.mode", "expected 'exact' or 'sampled'")
    return {
        "depths": depths,
        "mode": mode,
        "shots": c.number(b, "shots", "characterize", lo=1, integer=True, default=100_000),
        "R": c.number(b, "R", "characterize", lo=1, integer=True, default=1),
    }


def _cost(raw, c: _Checker, mode) -> dict:
    b = c.block(raw, "cost", "", required=mode == "cost")
    out = {}
    for key, default in (("n", [2, 3, 4]), ("D", [5, 10, 20]), ("r", [1.0])):
        v = b.get(key, default)
        if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            c.add(f"cost.{key}", "expected a non-empty list of numbers")
            v = default
        out[key] = v
    for n in out["n"]:
        if n < 2 or not float(n).is_integer():
            c.add("cost.n", f"qubit count {n} must be an integer >= 2")
    for d in out["D"]:
        if d < 1 or not float(d).is_integer():
            c.add("cost.D", f"depth {d} must be a positive integer")
    for r in out["r"]:
        if not 0 <= r <= 1:
            c.add("cost.r", f"mitigation factor {r} out of range [0, 1]")
    out["subgroup_error"] = c.number(b, "subgroup_error", "cost", lo=0, hi=1, default=0.05)
    out["M_max"] = c.number(b, "M_max", "cost", lo=1, default=1e8)
    return out


def _check_rates(device, pec, trotter, run, c: _Checker) -> None:
    """Targets above ``eps_k / dt`` cannot be reached with a fixed step."""
    g = pec.get("gamma")
    dt = trotter.get("dt")
    chans = device.get("channels")
    if g is None or dt is None or not chans:
        return
    for ch in chans:
        for lab, eps in zip(ch.labels[1:], ch.probs[1:]):
            rate = g.get(lab, 0.0) if isinstance(g, dict) else g
            if rate * dt > eps * (1 + 1e-12):
                c.add(f"pec.gamma.{lab}", f"target {rate} exceeds eps/dt = {eps / dt:.6g} on subgroup {list(ch.subgroup)}")
