"""Command-line driver.

    fieldprobe <subcommand> --config run.yaml [--out DIR] [--workers N] [--format csv|json]

Subcommands ``von-neumann``, ``udw`` and ``qbm`` run the named model (the
config's ``model`` key may be omitted or must agree); ``sweep`` runs the
config's model and requires a ``sweep`` block; ``validate`` only prints
diagnostics.  See README.md for the config schema.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__

log = logging.getLogger("fieldprobe")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3

MODELS = ("von_neumann", "udw", "qbm")

# defaults double as the schema: a key absent here is rejected
PARAM_DEFAULTS = {
    "von_neumann": {
        "lambda": 1.0, "s_X": 1.0, "s_T": 1.0, "mass": 0.0,
        "sigma_X": math.sqrt(0.5), "sigma_P": math.sqrt(0.5),
        "field_mean": 0.0, "field_var": None,
    },
    "udw": {
        "lambda": 1.0, "s_X": 1.0, "s_T": 5.0, "t_center": None, "mass": 0.0,
        "levels": [[1.0, 1.0]],
        "packet": {"k0": 1.0, "sigma_k": 0.1, "distance": 20.0},
    },
    "qbm": {
        "M": 1.0, "omega0": None, "lambda": None,
        "omega_bar": 1.0, "gamma_ratio": None,
        "cutoff_ratio": 1000.0,
        "pulse": {"k0_ratio": 4.0, "sigma_ratio": 1.0, "distance": 6.0},
    },
}
SCALAR_PARAMS = {
    "von_neumann": ("lambda", "s_X", "s_T", "mass", "sigma_X", "sigma_P", "field_mean", "field_var"),
    "udw": ("lambda", "s_X", "s_T", "t_center", "mass"),
    "qbm": ("M", "omega0", "lambda", "omega_bar", "gamma_ratio", "cutoff_ratio"),
}
NUMERICS_DEFAULTS = {"rtol": 1e-10, "dt": None}
OUTPUT_DEFAULTS = {"directory": "fieldprobe-out", "format": "csv"}
SWEEP_KEYS = {"parameter", "min", "max", "count", "spacing"}

COLUMNS = {
    "von_neumann": ["delta_F", "delta_F_closed", "noise_N", "noise_bound", "mean_X", "var_X", "snr"],
    "udw": ["p0", "p1", "p1_corotating", "p1_counterrotating", "total", "perturbative"],
    "qbm": ["gamma_ratio", "fwhm", "fwhm_over_2gamma", "antenna_residual", "noise_N"],
}


@dataclass
class Diagnostic:
    level: str  # "error" | "warning"
    message: str

    def __str__(self):
        return f"{self.level}: {self.message}"


@dataclass
class RunConfig:
    model: str
    params: dict
    sweep: dict | None
    numerics: dict
    output: dict
    raw: dict = field(default_factory=dict)

    def points(self) -> list[tuple[float | None, dict]]:
        if not self.sweep:
            return [(None, self.params)]
        sw = self.sweep
        n = sw["count"]
        if n == 1:
            vals = [float(sw["min"])]
        elif sw["spacing"] == "log":
            vals = np.logspace(math.log10(sw["min"]), math.log10(sw["max"]), n).tolist()
        else:
            vals = np.linspace(sw["min"], sw["max"], n).tolist()
        out = []
        for v in vals:
            p = copy.deepcopy(self.params)
            p[sw["parameter"]] = v
            out.append((v, p))
        return out

    def resolved(self) -> dict:
        return {"model": self.model, "params": self.params, "sweep": self.sweep,
                "numerics": self.numerics, "output": self.output}


def _merge(defaults: dict, given: dict, where: str, diags: list[Diagnostic]) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if key not in defaults:
            diags.append(Diagnostic("error", f"unknown key '{where}.{key}'"))
            continue
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                diags.append(Diagnostic("error", f"'{where}.{key}' must be a mapping"))
                continue
            out[key] = _merge(defaults[key], val, f"{where}.{key}", diags)
        else:
            out[key] = val
    return out


def parse_config(raw: dict, model_hint: str | None = None) -> tuple[RunConfig | None, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    if not isinstance(raw, dict):
        return None, [Diagnostic("error", "config must be a mapping")]
    for key in raw:
        if key not in {"model", "params", "sweep", "numerics", "output"}:
            diags.append(Diagnostic("error", f"unknown key '{key}'"))
    model = raw.get("model", model_hint)
    if model is not None:
        model = str(model).replace("-", "_")
    if model_hint is not None and model != model_hint:
        diags.append(Diagnostic("error", f"config model '{model}' does not match subcommand '{model_hint}'"))
        return None, diags
    if model not in MODELS:
        diags.append(Diagnostic("error", f"model must be one of {', '.join(MODELS)} (got {model!r})"))
        return None, diags
    params = _merge(PARAM_DEFAULTS[model], raw.get("params") or {}, "params", diags)
    numerics = _merge(NUMERICS_DEFAULTS, raw.get("numerics") or {}, "numerics", diags)
    output = _merge(OUTPUT_DEFAULTS, raw.get("output") or {}, "output", diags)
    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            diags.append(Diagnostic("error", "'sweep' must be a mapping"))
            sweep = None
        else:
            for key in sweep:
                if key not in SWEEP_KEYS:
                    diags.append(Diagnostic("error", f"unknown key 'sweep.{key}'"))
            sweep = {"spacing": "linear", "count": 1, **sweep}
            sweep.setdefault("max", sweep.get("min"))
    cfg = RunConfig(model, params, sweep, numerics, output, raw)
    diags.extend(_check_config(cfg))
    return cfg, diags


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_config(cfg: RunConfig) -> list[Diagnostic]:
    d: list[Diagnostic] = []
    rtol = cfg.numerics.get("rtol")
    if not (_is_number(rtol) and rtol > 0):
        d.append(Diagnostic("error", "numerics.rtol must be > 0"))
    dt = cfg.numerics.get("dt")
    if dt is not None and not (_is_number(dt) and dt > 0):
        d.append(Diagnostic("error", "numerics.dt must be > 0"))
    if cfg.output.get("format") not in ("csv", "json"):
        d.append(Diagnostic("error", "output.format must be csv or json"))
    sw = cfg.sweep
    if sw is not None:
        name = sw.get("parameter")
        if name not in SCALAR_PARAMS[cfg.model]:
            d.append(Diagnostic("error", f"sweep.parameter '{name}' is not a scalar parameter of "
                                         f"{cfg.model} ({', '.join(SCALAR_PARAMS[cfg.model])})"))
        if not (isinstance(sw.get("count"), int) and sw["count"] >= 1):
            d.append(Diagnostic("error", "sweep.count must be an integer >= 1"))
        if not (_is_number(sw.get("min")) and _is_number(sw.get("max"))):
            d.append(Diagnostic("error", "sweep.min and sweep.max must be numbers"))
        elif sw.get("spacing") == "log" and (sw["min"] <= 0 or sw["max"] <= 0):
            d.append(Diagnostic("error", "log sweep needs positive bounds"))
        if sw.get("spacing") not in ("linear", "log"):
            d.append(Diagnostic("error", "sweep.spacing must be linear or log"))
    if any(x.level == "error" for x in d):
        return d
    seen = set()
    for _, p in cfg.points():
        for diag in _check_point(cfg.model, p):
            if str(diag) not in seen:
                seen.add(str(diag))
                d.append(diag)
    return d


def _check_point(model: str, p: dict) -> list[Diagnostic]:
    """Type checks plus physics-regime warnings for one parameter set."""
    d: list[Diagnostic] = []
    for key in SCALAR_PARAMS[model]:
        v = p.get(key)
        if v is not None and not _is_number(v):
            d.append(Diagnostic("error", f"params.{key} must be a finite number"))
    if d:
        return d
    try:
        if model == "von_neumann":
            _vn_inputs(p)
        elif model == "udw":
            F, psi, spec = _udw_inputs(p)
            if spec.epsilon1 * F.s_T < 5:
                d.append(Diagnostic("warning",
                                    f"switching noise regime: epsilon1*s_T = {spec.epsilon1 * F.s_T:.3g} < 5"))
            from .udw import VALIDITY_BOUND, excitation
            res = excitation(F, psi, spec, psi.m)
            if res.total > VALIDITY_BOUND:
                d.append(Diagnostic("warning", f"perturbative validity: P0+P1 = {res.total:.3g} > {VALIDITY_BOUND}"))
        else:
            det, pulse = _qbm_inputs(p)
            if det.cutoff.cutoff / det.omega_bar < 100:
                d.append(Diagnostic("warning", f"Markovian validity: cutoff/omega_bar = "
                                               f"{det.cutoff.cutoff / det.omega_bar:.3g} < 100"))
            if pulse["distance"] * det.Gamma < 5:
                d.append(Diagnostic("warning", f"transient threshold: |L|*Gamma = "
                                               f"{pulse['distance'] * det.Gamma:.3g} < 5"))
    except (ValueError, TypeError) as exc:
        d.append(Diagnostic("error", str(exc)))
    return d


# ---------------------------------------------------------------------------
# model inputs

def _vn_inputs(p):
    from .field import SmearingProfile
    from .von_neumann import ApparatusState
    F = SmearingProfile(p["lambda"], p["s_X"], p["s_T"])
    omega = ApparatusState(p["sigma_X"], p["sigma_P"])
    if p["mass"] < 0:
        raise ValueError("params.mass must be >= 0")
    return F, omega


def _udw_inputs(p):
    from .field import SmearingProfile, Wavepacket
    from .udw import DetectorSpectrum
    pk = p["packet"]
    for key in ("k0", "sigma_k", "distance"):
        if not _is_number(pk.get(key)):
            raise ValueError(f"params.packet.{key} must be a finite number")
    tc = p["t_center"] if p["t_center"] is not None else float(pk["distance"])
    F = SmearingProfile(p["lambda"], p["s_X"], p["s_T"], tc)
    psi = Wavepacket.toward_origin(pk["k0"], pk["sigma_k"], pk["distance"], p["mass"])
    levels = p["levels"]
    if not isinstance(levels, list) or not all(isinstance(x, (list, tuple)) and len(x) == 2 for x in levels):
        raise ValueError("params.levels must be a list of [epsilon, mu] pairs")
    return F, psi, DetectorSpectrum(tuple((float(e), complex(m)) for e, m in levels))


def _qbm_inputs(p):
    from .qbm import QbmDetector
    pulse = p["pulse"]
    for key in ("k0_ratio", "sigma_ratio", "distance"):
        if not (_is_number(pulse.get(key)) and pulse[key] > 0):
            raise ValueError(f"params.pulse.{key} must be a positive number")
    bare = p["omega0"] is not None or p["lambda"] is not None
    if bare:
        if p["omega0"] is None or p["lambda"] is None:
            raise ValueError("give both params.omega0 and params.lambda, or omega_bar and gamma_ratio")
        # the cutoff is expressed relative to omega0 here since omega_bar is derived
        det = QbmDetector(p["M"], p["omega0"], p["lambda"], p["cutoff_ratio"] * p["omega0"])
    else:
        if p["gamma_ratio"] is None:
            raise ValueError("params.gamma_ratio is required when omega0/lambda are not given")
        wb = p["omega_bar"]
        if not wb > 0:
            raise ValueError("params.omega_bar must be > 0")
        det = QbmDetector.from_rates(p["M"], wb, p["gamma_ratio"] * wb, p["cutoff_ratio"] * wb)
    return det, pulse


# ---------------------------------------------------------------------------
# point evaluation (runs in worker processes)

def _eval_point(model: str, p: dict, numerics: dict) -> list[float]:
    if model == "von_neumann":
        from .von_neumann import (delta_F, delta_F_massless_closed, pointer_statistics,
                                  smeared_vacuum_variance)
        F, omega = _vn_inputs(p)
        dF = delta_F(F, p["mass"], rtol=min(numerics["rtol"], 1e-8))
        closed = delta_F_massless_closed(F) if p["mass"] == 0 else math.nan
        var = p["field_var"] if p["field_var"] is not None else smeared_vacuum_variance(F, p["mass"])
        r = pointer_statistics(p["field_mean"], var, omega, dF)
        return [dF, closed, r.noise_N, math.sqrt(abs(dF)), r.mean_X, r.var_X, r.snr]
    if model == "udw":
        from .udw import VALIDITY_BOUND, p0, p1_terms
        F, psi, spec = _udw_inputs(p)
        noise = p0(F, spec, psi.m)
        terms = p1_terms(F, psi, spec, rtol=numerics["rtol"])
        co = sum(a for a, _ in terms)
        counter = sum(b for _, b in terms)
        total = noise + co + counter
        return [noise, co + counter, co, counter, total, float(total <= VALIDITY_BOUND)]
    return _qbm_point(p, numerics)


def _qbm_point(p: dict, numerics: dict) -> list[float]:
    from .field import Wavepacket, coherent_field_mean
    from .numerics import TimeGrid
    from .qbm import antenna_residual, markovian_response, resonance_fwhm, vacuum_noise
    det, pulse = _qbm_inputs(p)
    wb, G = det.omega_bar, det.Gamma
    fwhm = resonance_fwhm(det)
    # antenna check with a coherent pulse aimed at the detector
    dist = pulse["distance"] / wb
    alpha = Wavepacket.toward_origin(pulse["k0_ratio"] * wb, pulse["sigma_ratio"] * wb, dist)
    dt = numerics["dt"]
    if dt is None:
        dt = min(0.01 / wb, 0.1 / (2 * G)) if G > 0 else 0.01 / wb
    grid = TimeGrid.spanning(2 * dist, dt)
    phi = coherent_field_mean(alpha, det.cutoff, grid.times)
    resid = antenna_residual(det, markovian_response(det, grid), phi)["residual"] if G > 0 else math.nan
    return [G / wb, fwhm, fwhm / (2 * G) if G > 0 else math.nan, resid, vacuum_noise(det)]


def _worker(args):
    index, value, model, p, numerics = args
    try:
        row = _eval_point(model, p, numerics)
        return index, value, "ok", "", row
    except Exception as exc:  # crash isolation: a failing point must not stop the sweep
        return index, value, "error", f"{type(exc).__name__}: {exc}", [math.nan] * len(COLUMNS[model])


# ---------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return "%.17g" % x


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(x) for x in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, header: list[str], rows: list[list]) -> None:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return x
    doc = {"columns": header, "rows": [[clean(x) for x in r] for r in rows]}
    path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: RunConfig, *, out_dir: Path | None = None, workers: int | None = None,
        fmt: str | None = None) -> tuple[dict, int]:
    """Evaluate every sweep point and write data plus manifest.

    Returns (manifest, exit code)."""
    start = time.perf_counter()
    out_dir = Path(out_dir or cfg.output["directory"])
    fmt = fmt or cfg.output["format"]
    points = cfg.points()
    jobs = [(i, v, cfg.model, p, cfg.numerics) for i, (v, p) in enumerate(points)]
    workers = workers or os.cpu_count() or 1
    log.info("running %d point(s) of %s with %d worker(s)", len(jobs), cfg.model, workers)
    if workers == 1 or len(jobs) == 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, jobs))  # map keeps sweep order

    sweep_col = cfg.sweep["parameter"] if cfg.sweep else None
    header = ["index"] + ([f"sweep_{sweep_col}"] if sweep_col else []) + COLUMNS[cfg.model] + ["status"]
    rows = []
    for index, value, status, _, row in results:
        rows.append([index] + ([value] if sweep_col else []) + list(row) + [status])

    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / f"{cfg.model}.{fmt}"
    (_write_csv if fmt == "csv" else _write_json)(data_path, header, rows)
    manifest = {
        "version": __version__,
        "config": cfg.resolved(),
        "duration_s": time.perf_counter() - start,
        "points": [{"index": i, "value": v, "status": s, "message": m}
                   for i, v, s, m, _ in results],
        "files": {data_path.name: _sha256(data_path)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, default=str) + "\n",
                                           encoding="utf-8")
    failed = sum(1 for r in results if r[2] != "ok")
    return manifest, EXIT_PARTIAL if failed else EXIT_OK


def validate(cfg_raw: dict, model_hint: str | None = None) -> list[Diagnostic]:
    _, diags = parse_config(cfg_raw, model_hint)
    return diags


def load_config(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fieldprobe", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("von-neumann", "udw", "qbm", "sweep", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        raw = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except yaml.YAMLError as exc:
        print(f"error: malformed config: {exc}", file=sys.stderr)
        return EXIT_INVALID

    hint = None if args.command in ("sweep", "validate") else args.command.replace("-", "_")
    cfg, diags = parse_config(raw, hint)
    for d in diags:
        print(d, file=sys.stderr if args.command != "validate" else sys.stdout)
    if args.command == "validate":
        return EXIT_INVALID if any(d.level == "error" for d in diags) else EXIT_OK
    if cfg is None or any(d.level == "error" for d in diags):
        return EXIT_INVALID
    if args.command == "sweep" and not cfg.sweep:
        print("error: the sweep subcommand needs a 'sweep' block", file=sys.stderr)
        return EXIT_INVALID
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        manifest, code = run(cfg, out_dir=args.out, workers=args.workers, fmt=args.format)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    n_bad = sum(1 for p in manifest["points"] if p["status"] != "ok")
    print(f"{len(manifest['points']) - n_bad}/{len(manifest['points'])} point(s) ok; "
          f"wrote {', '.join(manifest['files'])}")
    return code


if __name__ == "__main__":
    sys.exit(main())
