"""
Command-line interface: ``optisense <command> --config run.yaml``.

Every run is driven by a YAML config holding shared ``field``, ``noise`` and
``sensor`` blocks plus exactly one command block. Outputs are CSV files (and
SVG plots where useful) in the output directory, together with a
``manifest.json`` recording the config hash, seed and evaluation count.

Exit codes: 0 success, 1 runtime failure, 2 invalid config or arguments.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .control import read_sequence_csv, to_symmetric_intervals, write_sequence_csv, cp_sequence
from .errors import ArgumentError, InfeasibleError, OptisenseError
from .field import GaussianTrain, Multitone, SingleGaussian, Tabulated
from .mc_oracle import TrajectoryConfig, estimate_coherence, write_validation_csv
from .noise import (GaussianMixture, coherence_chi, fit_spectrum_from_decays, read_decays_csv,
                    read_spectrum_csv, write_mixture_csv)
from .optimizer import (NMOptions, TimePhase, grid_map, optimize_intervals, optimize_time_phase,
                        sweep_T, write_manifest, write_result_csv)
from .sensing import SensorParams, calibrate_c, predict_E, write_reports_csv
from .svg import heat_map, line_plot

THREADS_ENV = "OPTISENSE_THREADS"
COMMANDS = ("sweep", "optimize", "map", "mc-validate", "spectrum-estimate", "calibrate")

# key: (type, required, default); "list" means list of floats
_FLOAT, _INT, _BOOL, _STR, _LIST = "float", "int", "bool", "str", "list"
SCHEMA = {
    "field": {
        "kind": (_STR, True, None),
        "weights": (_LIST, False, None),
        "freqs_hz": (_LIST, False, None),
        "phases_rad": (_LIST, False, None),
        "sigma_s": (_FLOAT, False, None),
        "period_s": (_FLOAT, False, None),
        "reps": (_INT, False, None),
        "center_s": (_FLOAT, False, None),
        "samples_path": (_STR, False, None),
    },
    "noise": {
        "kind": (_STR, True, None),
        "amplitudes_per_s": (_LIST, False, None),
        "centers_rad_s": (_LIST, False, None),
        "widths_rad_s": (_LIST, False, None),
        "path": (_STR, False, None),
    },
    "sensor": {
        "gamma_hz_per_ut": (_FLOAT, False, 2.81e4),
    },
    "sweep": {
        "n": (_INT, False, None),
        "intervals_path": (_STR, False, None),
        "T_start_s": (_FLOAT, False, None),
        "T_stop_s": (_FLOAT, False, None),
        "T_steps": (_INT, False, None),
        "T_list_s": (_LIST, False, None),
        "alpha_rad": (_FLOAT, False, 0.0),
    },
    "optimize": {
        "space": (_STR, True, None),
        "n": (_INT, True, None),
        "T_min_s": (_FLOAT, False, None),
        "T_max_s": (_FLOAT, False, None),
        "alpha_min_rad": (_FLOAT, False, 0.0),
        "alpha_max_rad": (_FLOAT, False, 2 * math.pi),
        "alpha_fixed_rad": (_FLOAT, False, None),
        "T_s": (_FLOAT, False, None),
        "T_grid_s": (_LIST, False, None),
        "min_spacing_s": (_FLOAT, False, 6e-7),
        "max_spacing_s": (_FLOAT, False, math.inf),
        "allow_small_spacing": (_BOOL, False, False),
        "with_phase": (_BOOL, False, False),
        "warm_start_path": (_STR, False, None),
        "restarts": (_INT, False, None),
        "max_evals": (_INT, False, 20000),
        "xtol_s": (_FLOAT, False, 1e-9),
        "ftol": (_FLOAT, False, 1e-6),
    },
    "map": {
        "n": (_INT, True, None),
        "T_min_s": (_FLOAT, True, None),
        "T_max_s": (_FLOAT, True, None),
        "T_steps": (_INT, True, None),
        "alpha_min_rad": (_FLOAT, False, 0.0),
        "alpha_max_rad": (_FLOAT, False, 2 * math.pi),
        "alpha_steps": (_INT, True, None),
    },
    "mc_validate": {
        "cases": ("cases", True, None),
        "n_traj": (_INT, False, 10000),
        "dt_s": (_FLOAT, False, None),
        "fail_on_mismatch": (_BOOL, False, False),
    },
    "spectrum_estimate": {
        "decays_path": (_STR, True, None),
        "n_components": (_INT, True, None),
        "n_starts": (_INT, False, 16),
    },
    "calibrate": {
        "measured_path": (_STR, True, None),
        "theory_path": (_STR, False, None),
        "n": (_INT, False, None),
        "half_window": (_INT, False, 3),
    },
}
CASE_KEYS = {"n": _INT, "tau_s": _FLOAT, "noise": "noise"}
TOP_LEVEL = {"field", "noise", "sensor", "seed", "out"}
BLOCK_FOR = {c: c.replace("-", "_") for c in COMMANDS}
NEEDS = {
    "sweep": ("field", "noise"),
    "optimize": ("field", "noise"),
    "map": ("field", "noise"),
    "mc-validate": ("noise",),
    "spectrum-estimate": (),
    "calibrate": (),
}


class ConfigError(ArgumentError):
    pass


# -- config loading -----------------------------------------------------------------

def _line_index(text):
    """Map dotted key paths to 1-based line numbers."""
    index = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                index[path] = k.start_mark.line + 1
                walk(v, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                path = f"{prefix}[{i}]"
                index[path] = v.start_mark.line + 1
                walk(v, path)

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return index
    if root is not None:
        walk(root, "")
    return index


@dataclass
class RunConfig:
    command: str
    data: dict
    base_dir: Path
    lines: dict

    def where(self, key: str) -> str:
        line = self.lines.get(key)
        return f"{key} (line {line})" if line else key

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def block(self) -> dict:
        return self.data[BLOCK_FOR[self.command]]


def _coerce(value, kind, key, cfg_lines):
    loc = f"{key} (line {cfg_lines[key]})" if key in cfg_lines else key
    try:
        if kind == _FLOAT:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == _INT:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind == _BOOL:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == _STR:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == _LIST:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{loc}: expected {kind}, got {value!r}") from None
    return value


def _validate_block(name, raw, lines, schema=None):
    schema = schema or SCHEMA[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    out = {}
    for k in raw:
        if k not in schema:
            key = f"{name}.{k}"
            loc = f"{key} (line {lines[key]})" if key in lines else key
            raise ConfigError(f"{loc}: unknown key; allowed: {', '.join(schema)}")
    for k, (kind, required, default) in schema.items():
        key = f"{name}.{k}"
        if k in raw and raw[k] is not None:
            if kind == "cases":
                out[k] = _validate_cases(raw[k], key, lines)
            else:
                out[k] = _coerce(raw[k], kind, key, lines)
        elif required:
            raise ConfigError(f"{name}: missing required key '{k}'")
        else:
            out[k] = default
    return out


def _validate_cases(raw, key, lines):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{key}: expected a nonempty list of cases")
    cases = []
    for i, c in enumerate(raw):
        ck = f"{key}[{i}]"
        if not isinstance(c, dict):
            raise ConfigError(f"{ck}: expected a mapping")
        unknown = set(c) - set(CASE_KEYS)
        if unknown:
            raise ConfigError(f"{ck}: unknown keys {sorted(unknown)}")
        for req in ("n", "tau_s"):
            if req not in c:
                raise ConfigError(f"{ck}: missing '{req}'")
        case = {"n": _coerce(c["n"], _INT, f"{ck}.n", lines),
                "tau_s": _coerce(c["tau_s"], _FLOAT, f"{ck}.tau_s", lines)}
        if "noise" in c:
            case["noise"] = _validate_block(f"{ck}.noise", c["noise"], lines, SCHEMA["noise"])
        cases.append(case)
    return cases


def parse_config(text: str, command: str, base_dir: Path) -> RunConfig:
    """Parse and validate a YAML config for ``command``.

    Raises
    ------
    ConfigError
        With the offending key and line where possible.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML syntax error: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at top level")
    lines = _line_index(text)
    blocks = [k for k in raw if k in SCHEMA and k not in ("field", "noise", "sensor")]
    unknown = [k for k in raw if k not in SCHEMA and k not in TOP_LEVEL]
    if unknown:
        k = unknown[0]
        loc = f"{k} (line {lines[k]})" if k in lines else k
        raise ConfigError(f"{loc}: unknown top-level key; commands are {', '.join(COMMANDS)}")
    want = BLOCK_FOR[command]
    if len(blocks) != 1:
        raise ConfigError(f"config must contain exactly one command block, found {blocks or 'none'}")
    if blocks[0] != want:
        raise ConfigError(f"config holds a '{blocks[0]}' block but the command is '{command}'")
    data = {"seed": 0, "out": None}
    if "seed" in raw:
        data["seed"] = _coerce(raw["seed"], _INT, "seed", lines)
        if not 0 <= data["seed"] < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
    if "out" in raw:
        data["out"] = _coerce(raw["out"], _STR, "out", lines)
    for name in ("field", "noise", "sensor"):
        if name in raw:
            data[name] = _validate_block(name, raw[name], lines)
        elif name in NEEDS[command]:
            raise ConfigError(f"command '{command}' needs a '{name}' block")
    data.setdefault("sensor", _validate_block("sensor", {}, lines))
    data[want] = _validate_block(want, raw[want], lines)
    cfg = RunConfig(command, data, base_dir, lines)
    for key, rel in _referenced_paths(cfg):
        if not cfg.path(rel).exists():
            raise ConfigError(f"{cfg.where(key)}: file not found: {rel}")
    return cfg


def _strip_none(node):
    if isinstance(node, dict):
        return {k: _strip_none(v) for k, v in node.items() if v is not None}
    if isinstance(node, list):
        return [_strip_none(v) for v in node]
    return node


def dump_config(cfg: RunConfig) -> str:
    """Serialize the validated config back to YAML; ``parse_config`` inverts it."""
    return yaml.safe_dump(_strip_none(cfg.data), sort_keys=True)


def _referenced_paths(cfg):
    d = cfg.data
    if d.get("field", {}).get("samples_path"):
        yield "field.samples_path", d["field"]["samples_path"]
    if d.get("noise", {}).get("path"):
        yield "noise.path", d["noise"]["path"]
    for k, v in cfg.block().items():
        if k.endswith("_path") and v:
            yield f"{BLOCK_FOR[cfg.command]}.{k}", v


def load_config(path, command: str) -> RunConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), command, p.parent)


def resolve_config_path(path) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.suffix else p.name + ".yaml"
    bundled = resources.files("optisense") / "scenarios" / name
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file not found: {path}")


# -- model construction ---------------------------------------------------------------

def build_field(block: dict, cfg: RunConfig):
    kind = block["kind"]

    def need(*keys):
        miss = [k for k in keys if block.get(k) is None]
        if miss:
            raise ConfigError(f"field.kind={kind} needs {', '.join('field.' + k for k in miss)}")

    if kind == "multitone":
        need("weights", "freqs_hz")
        return Multitone(block["weights"], block["freqs_hz"], block["phases_rad"])
    if kind == "gaussian_train":
        need("sigma_s", "period_s", "reps")
        return GaussianTrain(block["sigma_s"], block["period_s"], block["reps"])
    if kind == "single_gaussian":
        need("sigma_s", "center_s")
        return SingleGaussian(block["sigma_s"], block["center_s"])
    if kind == "tabulated":
        need("samples_path")
        d = np.loadtxt(cfg.path(block["samples_path"]), delimiter=",", skiprows=1, ndmin=2)
        return Tabulated(d[:, 0], d[:, 1])
    raise ConfigError(f"{cfg.where('field.kind')}: unknown field kind {kind!r}; "
                      "use multitone, gaussian_train, single_gaussian or tabulated")


def build_noise(block: dict, cfg: RunConfig, where="noise"):
    kind = block["kind"]
    if kind == "zero":
        return GaussianMixture.zero()
    if kind == "mixture":
        keys = ("amplitudes_per_s", "centers_rad_s", "widths_rad_s")
        miss = [k for k in keys if block.get(k) is None]
        if miss:
            raise ConfigError(f"{where}.kind=mixture needs {', '.join(miss)}")
        return GaussianMixture(*(block[k] for k in keys))
    if kind == "file":
        if not block.get("path"):
            raise ConfigError(f"{where}.kind=file needs {where}.path")
        return read_spectrum_csv(cfg.path(block["path"]))
    raise ConfigError(f"{cfg.where(where + '.kind')}: unknown noise kind {kind!r}; use zero, mixture or file")


def _t_grid(b, cfg):
    if b.get("T_list_s"):
        return np.array(b["T_list_s"])
    if None in (b.get("T_start_s"), b.get("T_stop_s"), b.get("T_steps")):
        raise ConfigError("sweep needs T_list_s or T_start_s, T_stop_s and T_steps")
    if b["T_steps"] < 1:
        raise ConfigError(f"{cfg.where('sweep.T_steps')}: empty T grid")
    return np.linspace(b["T_start_s"], b["T_stop_s"], b["T_steps"])


# -- commands -------------------------------------------------------------------------

def cmd_sweep(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    Ts = _t_grid(b, cfg)
    if Ts.size == 0:
        raise ConfigError("sweep: empty T grid")
    if np.any(Ts <= 0) or np.any(np.diff(Ts) <= 0):
        raise ConfigError("sweep: T values must be positive and increasing")
    if b["intervals_path"]:
        family = to_symmetric_intervals(read_sequence_csv(cfg.path(b["intervals_path"])))
    elif b["n"]:
        family = b["n"]
    else:
        raise ConfigError("sweep needs 'n' or 'intervals_path'")
    model = build_field(cfg.data["field"], cfg)
    spec = build_noise(cfg.data["noise"], cfg)
    params = SensorParams(cfg.data["sensor"]["gamma_hz_per_ut"])
    reports = sweep_T(model, spec, family, Ts, params, alpha=b["alpha_rad"], threads=threads)
    write_reports_csv(reports, out / "sweep.csv")
    T_us = [r.T * 1e6 for r in reports]
    inv = np.array([0.0 if math.isinf(r.eta) else 1.0 / r.eta for r in reports])
    ph = np.abs([r.phi for r in reports])
    line_plot(out / "sweep.svg", T_us,
              {"1/eta (normalized)": inv / (inv.max() or 1.0),
               "|phi| (normalized)": ph / (ph.max() or 1.0)},
              title="Sensing-time sweep", xlabel="T (us)", ylabel="relative value")
    return {"n_evals": len(reports)}


def _write_restarts(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T_s", "restart", "eta"])
        for T, i, e in rows:
            w.writerow([f"{T:.12g}" if T is not None else "", i, f"{e:.12g}"])


def cmd_optimize(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    model = build_field(cfg.data["field"], cfg)
    spec = build_noise(cfg.data["noise"], cfg)
    params = SensorParams(cfg.data["sensor"]["gamma_hz_per_ut"])
    seed = cfg.data["seed"]
    space = b["space"]
    if space == "time_phase":
        if b["T_min_s"] is None or b["T_max_s"] is None:
            raise ConfigError("optimize.space=time_phase needs T_min_s and T_max_s")
        tp = TimePhase(b["T_min_s"], b["T_max_s"], b["alpha_min_rad"], b["alpha_max_rad"],
                       b["alpha_fixed_rad"])
        opts = NMOptions(xtol=(b["xtol_s"], 1e-6), ftol=b["ftol"], max_evals=b["max_evals"])
        res = optimize_time_phase(model, spec, b["n"], tp, params, opts,
                                  restarts=8 if b["restarts"] is None else b["restarts"],
                                  seed=seed, threads=threads)
        rows = [(None, i, e) for i, e in enumerate(res.restart_bests)]
    elif space == "intervals":
        opts = NMOptions(xtol=b["xtol_s"], ftol=b["ftol"], max_evals=b["max_evals"])
        x0 = None
        T = b["T_grid_s"] if b["T_grid_s"] else b["T_s"]
        if b["warm_start_path"]:
            warm = read_sequence_csv(cfg.path(b["warm_start_path"]))
            x0 = to_symmetric_intervals(warm).taus
            if x0.size != b["n"]:
                raise ConfigError(f"warm start has {x0.size} pulses, optimize.n is {b['n']}")
            if T is None:
                T = warm.total_time
        if T is None:
            raise ConfigError("optimize.space=intervals needs T_s, T_grid_s or warm_start_path")
        if np.ndim(T) == 0 and b["n"] * b["min_spacing_s"] > T:
            raise InfeasibleError(
                f"constraint report: n * min_spacing = {b['n']} * {b['min_spacing_s']:.3g} s = "
                f"{b['n'] * b['min_spacing_s']:.6g} s exceeds T = {T:.6g} s")
        res = optimize_intervals(model, spec, b["n"], T, params, opts,
                                 min_spacing=b["min_spacing_s"], max_spacing=b["max_spacing_s"],
                                 allow_small_spacing=b["allow_small_spacing"],
                                 with_phase=b["with_phase"],
                                 restarts=2 if b["restarts"] is None else b["restarts"],
                                 x0=x0, threads=threads)
        if res.per_T:
            rows = [(t, i, e) for t, r in res.per_T for i, e in enumerate(r.restart_bests)]
        else:
            rows = [(res.sequence.total_time, i, e) for i, e in enumerate(res.restart_bests)]
    else:
        raise ConfigError(f"{cfg.where('optimize.space')}: unknown space {space!r}; "
                          "use time_phase or intervals")
    write_result_csv(res, out / "optimum.csv")
    write_sequence_csv(res.sequence, out / "sequence.csv")
    _write_restarts(out / "restarts.csv", rows)
    return {"n_evals": res.n_evals, "eta": res.eta, "converged": res.converged}


def cmd_map(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    if b["T_steps"] < 1 or b["alpha_steps"] < 1:
        raise ConfigError("map: grid steps must be positive")
    if not 0 < b["T_min_s"] <= b["T_max_s"]:
        raise ConfigError("map: need 0 < T_min_s <= T_max_s")
    model = build_field(cfg.data["field"], cfg)
    spec = build_noise(cfg.data["noise"], cfg)
    params = SensorParams(cfg.data["sensor"]["gamma_hz_per_ut"])
    gm = grid_map(model, spec, b["n"], (b["T_min_s"], b["T_max_s"]),
                  (b["alpha_min_rad"], b["alpha_max_rad"]), (b["T_steps"], b["alpha_steps"]),
                  params, threads=threads)
    gm.write_csv(out / "map.csv")
    heat_map(out / "map.svg", gm.T * 1e6, gm.alpha, gm.inv_eta, title="1/eta over (T, alpha)",
             xlabel="T (us)", ylabel="alpha (rad)")
    T, a, v = gm.argmax()
    return {"n_evals": int(gm.inv_eta.size), "argmax_T_s": T, "argmax_alpha_rad": a}


def cmd_mc_validate(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    seed = cfg.data["seed"]
    rows, failures = [], 0
    for i, case in enumerate(b["cases"]):
        nb = case.get("noise", cfg.data["noise"])
        spec = build_noise(nb, cfg, where=f"mc_validate.cases[{i}].noise")
        seq = cp_sequence(case["n"], case["tau_s"])
        chi = coherence_chi(seq, spec)
        lo_hi = spec.support()
        w_max = max([hi for _, hi in lo_hi] or [1.0])
        dt = b["dt_s"] if b["dt_s"] else 0.5 * math.pi / w_max
        tc = TrajectoryConfig(dt=dt, n_traj=b["n_traj"], seed=(seed + i) % 2 ** 64, omega_max=w_max)
        est = estimate_coherence(seq, spec, tc, threads=threads)
        if abs(est.coherence - math.exp(-chi)) > 3 * est.stderr:
            failures += 1
        rows.append((chi, est))
    write_validation_csv(rows, out / "validation.csv")
    if failures:
        print(f"mc-validate: {failures} of {len(rows)} cases outside the 3-sigma band", file=sys.stderr)
        if b["fail_on_mismatch"]:
            raise RuntimeError("Monte Carlo validation failed")
    return {"n_evals": len(rows) * b["n_traj"], "failures": failures}


def cmd_spectrum_estimate(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    curves = read_decays_csv(cfg.path(b["decays_path"]))
    fit = fit_spectrum_from_decays(curves, b["n_components"], n_starts=b["n_starts"],
                                   seed=cfg.data["seed"])
    write_mixture_csv(fit.spectrum, out / "spectrum.csv")
    with open(out / "points.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_rad_s", "S_per_s", "residual_per_s", "T2_s", "T2_err_s"])
        for row in zip(fit.omega, fit.S, fit.residuals, fit.t2, fit.t2_err):
            w.writerow([f"{v:.12g}" for v in row])
    grid = np.linspace(fit.omega.min(), fit.omega.max(), 400)
    pts = np.interp(grid, fit.omega, fit.S)
    line_plot(out / "spectrum.svg", grid, {"fitted mixture": fit.spectrum(grid),
                                           "CP estimates (interpolated)": pts},
              title="Noise spectrum estimate", xlabel="omega (rad/s)", ylabel="S (1/s)")
    return {"n_evals": len(curves)}


def _read_two_columns(path, first, second_options):
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    if first not in header or not any(s in header for s in second_options):
        raise ConfigError(f"{path}: needs columns {first} and one of {', '.join(second_options)}")
    i = header.index(first)
    j = header.index(next(s for s in second_options if s in header))
    return [(float(r[i]), float(r[j])) for r in rows]


def cmd_calibrate(cfg: RunConfig, out: Path, threads: int) -> dict:
    b = cfg.block()
    measured = _read_two_columns(cfg.path(b["measured_path"]), "T_s", ("E",))
    if b["theory_path"]:
        theory = _read_two_columns(cfg.path(b["theory_path"]), "T_s", ("eta_uT_per_sqrtHz",))
    else:
        if not b["n"] or "field" not in cfg.data or "noise" not in cfg.data:
            raise ConfigError("calibrate needs theory_path, or n with field and noise blocks")
        model = build_field(cfg.data["field"], cfg)
        spec = build_noise(cfg.data["noise"], cfg)
        Ts = sorted({t for t, _ in measured})
        reps = sweep_T(model, spec, b["n"], Ts, SensorParams(cfg.data["sensor"]["gamma_hz_per_ut"]))
        theory = [(r.T, r.eta) for r in reps]
    cal = calibrate_c(measured, theory, half_window=b["half_window"])
    with open(out / "calibration.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["C", "dC", "E_max", "E_max_err", "T_peak_s", "eta_min"])
        w.writerow([f"{v:.12g}" for v in (cal.C, cal.dC, cal.E_max, cal.E_max_err, cal.T_peak, cal.eta_min)])
    T = np.array([t for t, _ in theory])
    eta = np.array([e for _, e in theory])
    E, lo, hi = predict_E(cal, eta)
    with open(out / "prediction.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["T_s", "E_pred", "E_lo", "E_hi"])
        for row in zip(T, E, lo, hi):
            w.writerow([f"{v:.12g}" for v in row])
    return {"n_evals": len(theory), "C": cal.C, "dC": cal.dC}


HANDLERS = {
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "map": cmd_map,
    "mc-validate": cmd_mc_validate,
    "spectrum-estimate": cmd_spectrum_estimate,
    "calibrate": cmd_calibrate,
}


# -- entry point ----------------------------------------------------------------------

def _epilog() -> str:
    lines = ["commands:",
             "  sweep              CP (or interval template) sensitivity versus T",
             "  optimize           Nelder-Mead over (T, alpha) or symmetric intervals",
             "  map                brute-force 1/eta over a (T, alpha) grid",
             "  mc-validate        Monte Carlo check of exp(-chi)",
             "  spectrum-estimate  gaussian-mixture spectrum from CP decays",
             "  calibrate          calibration constant C = E_max * eta_min",
             "",
             "config keys (YAML; top level: seed, out, field, noise, sensor and one command block):"]
    for block, keys in SCHEMA.items():
        items = ", ".join(f"{k}{'*' if req else ''}" for k, (_, req, _) in keys.items())
        lines.append(f"  {block}: {items}")
    lines += ["  mc_validate.cases[]: n*, tau_s*, noise", "  (* required)",
              "  field.kind: multitone | gaussian_train | single_gaussian | tabulated",
              "  noise.kind: zero | mixture | file",
              "  optimize.space: time_phase | intervals",
              "",
              f"environment: {THREADS_ENV} sets the default for --threads",
              "exit codes: 0 ok, 1 runtime failure, 2 invalid config"]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="optisense",
        description="Design and validate pulsed control for qubit magnetometry.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS, help="what to run")
    p.add_argument("--config", required=True, help="YAML config path or bundled scenario name")
    p.add_argument("--out", help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, help="64-bit seed (overrides config 'seed')")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be a 64-bit unsigned integer")
            cfg.data["seed"] = args.seed
        threads = args.threads
        if threads is None:
            env = os.environ.get(THREADS_ENV)
            try:
                threads = int(env) if env else 1
            except ValueError:
                raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(args.out or cfg.data["out"] or ".")
    except (ConfigError, ArgumentError) as exc:
        print(f"optisense: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        out.mkdir(parents=True, exist_ok=True)
        info = HANDLERS[args.command](cfg, out, threads)
    except ConfigError as exc:
        print(f"optisense: invalid config: {exc}", file=sys.stderr)
        return 2
    except (OptisenseError, RuntimeError, ValueError, OSError, ArithmeticError) as exc:
        print(f"optisense: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    write_manifest(out / "manifest.json", cfg.data, cfg.data["seed"], info.pop("n_evals", 0),
                   command=args.command, **{k: v for k, v in info.items() if np.isscalar(v)})
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
