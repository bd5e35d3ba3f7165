"""Command-line experiment driver.

Every subcommand resolves its parameters from built-in defaults, then an
optional INI file (``--config``), then command-line flags, validates them
against a fixed schema, runs, and writes its artifacts together with a
``manifest.json`` holding the resolved configuration and the sha256 of every
artifact.  The worker count and the output directory are left out of the
manifest because they never change the numbers.

Exit codes: 0 ok, 1 integrity failure in ``report``, 2 configuration error,
3 hypothesis violation or degenerate input, 4 non-contraction or
existence-horizon signal.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .estimators import (DegenerateInputError, HypothesisViolation, loglog_svg, rows_to_csv,
                         verify_lemma21, verify_probabilistic_strichartz, write_report)
from .fitting import fit_power_law, jsonable
from .noise import hs_norm, parse_phi, sample_convolution, save_noise_path
from .parallel import THREADS_ENV, default_threads, rng_state, stream_rng
from .presets import CASES, build_u0
from .propagator import WrapAroundError, decay_row, dispersive_decay_fit, time_ladder
from .randomization import RandomizationSpec, draw_coefficients, wiener_randomize
from .solver import (ExistenceHorizonExceeded, NonlinearitySpec, SolverConfig,
                     check_case_hypotheses, first_contraction_ratio, local_existence_probe,
                     picard_solve, splitstep_solve, working_norm)
from .spectral import GridSpec, NormSpec, Trajectory, sobolev_norms, write_field

EXIT_OK = 0
EXIT_INTEGRITY = 1
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_HORIZON = 4


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ value types

def _float(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip().lower()
    if text in ("inf", "infinity", "+inf"):
        return math.inf
    return float(text)


def _int(text) -> int:
    value = _float(text)
    if not float(value).is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [_float(x) for x in str(text).split(",") if x.strip()]


def _choice(*options: str) -> Callable[[Any], str]:
    def parse(text) -> str:
        if str(text) not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return str(text)
    parse.__name__ = "one of " + "|".join(options)
    return parse


def _pairs(text) -> list[tuple[float, float]]:
    """``q:r,q:r,...``."""
    out = []
    for item in filter(None, (p.strip() for p in str(text).split(","))):
        q, sep, r = item.partition(":")
        if not sep:
            raise ValueError(f"pair {item!r} is not of the form q:r")
        out.append((_float(q), _float(r)))
    if not out:
        raise ValueError("need at least one q:r pair")
    return out


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[Any], Any]
    default: Any = None
    help: str = ""


COMMON = (
    Key("seed", _int, None, "master seed for every random stream"),
    Key("threads", _int, None, f"worker threads (default ${THREADS_ENV} or 1)"),
    Key("out", str, None, "output directory (default runs/<command>)"),
)

GRID = (
    Key("d", _int, None, "space dimension"),
    Key("L", _float, None, "box side length"),
    Key("N", _int, None, "grid points per axis (power of 2)"),
)

SOLVER = (
    Key("case", _choice("ia", "ib", "ii"), "ia", "solution class preset"),
    *GRID,
    Key("p", _float, None, "nonlinearity power"),
    Key("s0", _float, None, "regularity of the initial data"),
    Key("s", _float, None, "regularity of the noise"),
    Key("phi", str, None, "noise operator family:key=value,..."),
    Key("u0", str, None, "initial data preset or field file"),
    Key("T", _float, None, "time horizon"),
    Key("steps", _int, None, "time steps"),
    Key("tol", _float, 1e-10, "Picard relative tolerance"),
    Key("max_iters", _int, 60, "Picard iteration cap"),
    Key("dealias", _choice("auto", "on", "off"), "auto", "2/3-rule dealiasing"),
    Key("q", _float, None, "time exponent of the (i.b) working norm"),
)

SCHEMA: dict[str, tuple[Key, ...]] = {
    "sample-noise": (
        Key("d", _int, 1), Key("L", _float, 20.0), Key("N", _int, 64),
        Key("phi", str, "powerlaw:alpha=1.0,s=0", "noise operator"),
        Key("T", _float, 1.0), Key("steps", _int, 16),
        Key("replicas", _int, 1, "number of independent paths"),
    ),
    "randomize": (
        Key("input", str, None, "field file to randomize (overrides u0)"),
        Key("u0", str, "rough:beta=1.5", "profile preset when no input file is given"),
        Key("d", _int, 2), Key("L", _float, 8.0), Key("N", _int, 64),
        Key("dist", _choice("gaussian", "bernoulli"), "gaussian"),
        Key("sigma", _float, 1.0, "coefficient standard deviation"),
        Key("window", _choice("raised-cosine", "constant"), "raised-cosine"),
        Key("samples", _int, 1, "number of randomized copies"),
    ),
    "solve": SOLVER + (Key("method", _choice("picard", "splitstep"), "picard"),),
    "probe-existence": SOLVER + (
        Key("paths", _int, 10, "number of sampled paths"),
        Key("T_max", _float, None, "top of the horizon ladder (default 2 * preset T)"),
        Key("rungs", _int, 5, "ladder rungs, halving from T_max"),
    ),
    "verify-dispersive": (
        Key("d", _int, 1), Key("L", _float, 200.0), Key("N", _int, 4096),
        Key("r", _float, math.inf, "Lebesgue exponent"),
        Key("preset", _choice("gaussian"), "gaussian"),
        Key("width", _float, 0.5, "Gaussian width"),
        Key("t_min", _float, 0.5), Key("t_max", _float, 5.0),
        Key("per_decade", _int, 8, "ladder points per decade"),
    ),
    "verify-lemma21": (
        Key("d", _int, 2), Key("L", _float, 16.0), Key("N", _int, 32),
        Key("phi", str, "powerlaw:alpha=2.0,s=0"),
        Key("s", _float, 0.0), Key("q", _float, 8.0), Key("r", _float, 4.0),
        Key("rho", _float, 2.0, "moment order"),
        Key("samples", _int, 200, "paths per horizon"),
        Key("T_max", _float, 1.0), Key("points", _int, 8, "horizons over one decade"),
        Key("steps", _int, 16),
    ),
    "verify-pstrichartz": (
        Key("d", _int, 2), Key("L", _float, 8.0), Key("N", _int, 64),
        Key("u0", str, "rough:beta=1.5"),
        Key("dist", _choice("gaussian", "bernoulli"), "gaussian"),
        Key("sigma", _float, 1.0), Key("window", _choice("raised-cosine", "constant"), "raised-cosine"),
        Key("pairs", _pairs, "20:20", "space-time exponents q:r,..."),
        Key("s", _float, 0.0), Key("T", _float, 1.0),
        Key("samples", _int, 500), Key("steps", _int, 32),
        Key("refine", _bool, True, "repeat on the N -> 2N grid"),
    ),
    "verify-contraction": SOLVER + (
        Key("horizons", _floats, "0.2,0.1,0.05,0.025", "horizons sharing one noise path"),
        Key("steps_max", _int, 128, "time steps on the largest horizon"),
    ),
    "report": (
        Key("input", str, "runs", "directory tree of run outputs"),
    ),
}

SAMPLING = {"sample-noise", "randomize", "solve", "probe-existence", "verify-lemma21",
            "verify-pstrichartz", "verify-contraction"}

HELP = {
    "sample-noise": "sample stochastic-convolution paths",
    "randomize": "Wiener-randomize an initial profile",
    "solve": "solve one sample path in a preset solution class",
    "probe-existence": "bisect the Picard existence horizon over many paths",
    "verify-dispersive": "fit the L^r decay exponent of the free flow",
    "verify-lemma21": "T-scaling and phi-homogeneity of stochastic-convolution moments",
    "verify-pstrichartz": "randomized Strichartz quantiles and their grid stability",
    "verify-contraction": "first contraction ratio of the Duhamel map against T",
    "report": "verify manifests and index every run below a directory",
}


# ------------------------------------------------------------------ config resolution

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snlslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in SCHEMA.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="INI file; keys in [common] and [%s]" % name)
        for key in COMMON + keys:
            flag = "--" + key.name.replace("_", "-")
            default = "" if key.default is None else f" (default {key.default})"
            p.add_argument(flag, dest=key.name, default=None, help=key.help + default)
    return parser


def read_config(path: str, command: str) -> dict[str, str]:
    """Keys from ``[common]`` and ``[<command>]``; any other section or key is an error."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    allowed = {k.name for k in COMMON + SCHEMA[command]}
    values: dict[str, str] = {}
    for section in cp.sections():
        if section not in ("common", command):
            if section in SCHEMA:
                continue
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in cp.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown config key '{key}' in [{section}]")
            values[key] = value
    return values


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    keys = COMMON + SCHEMA[command]
    raw: dict[str, Any] = {k.name: k.default for k in keys}
    if args.config:
        raw.update(read_config(args.config, command))
    for key in keys:
        flag = getattr(args, key.name, None)
        if flag is not None:
            raw[key.name] = flag
    cfg: dict[str, Any] = {}
    for key in keys:
        value = raw[key.name]
        if value is None:
            cfg[key.name] = None
            continue
        try:
            cfg[key.name] = key.parse(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for '{key.name}': {exc}") from None
    if command in SAMPLING and cfg["seed"] is None:
        raise ConfigError(f"'seed' is required for {command}")
    if cfg["threads"] is not None and cfg["threads"] < 1:
        raise ConfigError("'threads' must be at least 1")
    return cfg


def apply_case_defaults(cfg: dict[str, Any]) -> dict[str, Any]:
    preset = CASES[cfg["case"]]
    for name in ("d", "L", "N", "p", "s0", "s", "phi", "u0", "T", "steps"):
        if cfg[name] is None:
            cfg[name] = getattr(preset, name)
    return cfg


# ------------------------------------------------------------------ artifacts

def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n")
    return path


def write_manifest(out: Path, command: str, cfg: dict[str, Any], artifacts: list[Path],
                   result: dict | None = None) -> Path:
    config = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": cfg.get("seed"),
        "artifacts": {str(p.relative_to(out)): sha256(p) for p in sorted(set(artifacts))},
        "result": result or {},
    }
    return write_json(out / "manifest.json", manifest)


def make_grid(cfg: dict[str, Any]) -> GridSpec:
    try:
        return GridSpec(cfg["d"], cfg["L"], cfg["N"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


def make_phi(cfg, grid):
    try:
        return parse_phi(cfg["phi"], grid)
    except ValueError as exc:
        raise ConfigError(f"invalid value for 'phi': {exc}") from None


def make_u0(text: str, grid: GridSpec):
    try:
        return build_u0(text, grid)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"invalid initial data {text!r}: {exc}") from None


def make_randomization(cfg) -> RandomizationSpec:
    dist = "complex-gaussian" if cfg["dist"] == "gaussian" else "bernoulli"
    if not cfg["sigma"] > 0:
        raise ConfigError("'sigma' must be positive")
    return RandomizationSpec(dist, cfg["sigma"] ** 2, cfg["window"])


# ------------------------------------------------------------------ subcommands

def cmd_sample_noise(cfg, out: Path, threads: int):
    grid = make_grid(cfg)
    phi = make_phi(cfg, grid)
    artifacts: list[Path] = []
    rows = []
    for i in range(cfg["replicas"]):
        path = sample_convolution(phi, cfg["steps"], cfg["T"], stream_rng(cfg["seed"], "sample-noise", i))
        sub = out / f"path_{i:04d}"
        save_noise_path(path, sub, {"master_seed": cfg["seed"], "stream": "sample-noise", "replica": i})
        artifacts.extend(sorted(sub.iterdir()))
        final = np.atleast_1d(sobolev_norms(grid, path.values[-1], 0.0, 2.0))[0]
        rows.append({"replica": i, "T": cfg["T"], "L2_final": final})
    summary = out / "paths.csv"
    summary.write_text(rows_to_csv(rows))
    artifacts.append(summary)
    return artifacts, {"hs_norm": hs_norm(phi, 0.0), "replicas": cfg["replicas"]}


def cmd_randomize(cfg, out: Path, threads: int):
    if cfg["input"]:
        from .spectral import read_field
        try:
            u0 = read_field(cfg["input"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read input field: {exc}") from None
    else:
        u0 = make_u0(cfg["u0"], make_grid(cfg))
    spec = make_randomization(cfg)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    lineage = []
    for i in range(cfg["samples"]):
        rng = stream_rng(cfg["seed"], "randomize", i)
        state = rng_state(rng)
        coeffs = draw_coefficients(u0.grid, spec, rng)
        field = wiener_randomize(u0, spec, coefficients=coeffs)
        target = out / f"randomized_{i:04d}.bin"
        write_field(target, field)
        artifacts.append(target)
        lineage.append({"replica": i, "stream": "randomize", "rng_state": state,
                        "n_coefficients": int(coeffs.size)})
    artifacts.append(write_json(out / "coefficients.json", {"master_seed": cfg["seed"],
                                                             "distribution": spec.distribution,
                                                             "sigma2": spec.sigma2,
                                                             "window": spec.window,
                                                             "lineage": lineage}))
    return artifacts, {"samples": cfg["samples"]}


def _solver_setup(cfg):
    cfg = apply_case_defaults(cfg)
    grid = make_grid(cfg)
    problems = check_case_hypotheses(cfg["case"], cfg["d"], cfg["p"], cfg["s0"], cfg["s"])
    if problems:
        raise HypothesisViolation(f"case ({cfg['case']}): " + "; ".join(problems))
    try:
        norm = working_norm(cfg["case"], cfg["d"], cfg["p"], cfg["s0"], cfg["s"], q=cfg["q"])
        dealias = {"auto": None, "on": True, "off": False}[cfg["dealias"]]
        solver = SolverConfig(cfg["T"], cfg["steps"], cfg["max_iters"], cfg["tol"], dealias, norm)
        nonlin = NonlinearitySpec(cfg["p"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, grid, make_phi(cfg, grid), make_u0(cfg["u0"], grid), solver, nonlin


def _norm_rows(traj: Trajectory, norm, ratio_t: np.ndarray | None) -> list[dict]:
    grid = traj.grid
    l2 = np.atleast_1d(sobolev_norms(grid, traj.values, 0.0, 2.0))
    hs = np.atleast_1d(sobolev_norms(grid, traj.values, norm.s1, 2.0))
    wsr = np.atleast_1d(sobolev_norms(grid, traj.values, norm.s1, norm.r))
    rows = []
    for j, t in enumerate(traj.times):
        ratio = None if ratio_t is None or not np.isfinite(ratio_t[j]) else float(ratio_t[j])
        rows.append({"t": float(t), "L2": l2[j], "H^s1": hs[j], "W^s1,r": wsr[j],
                     "contraction_ratio": ratio})
    return rows


def _pointwise_first_ratio(u0, psi, solver, nonlin) -> np.ndarray:
    """||Gamma^2 0 (t) - Gamma 0 (t)|| / ||Gamma 0 (t)|| in W^{s1, r} at each time."""
    from .solver import _gamma
    grid = psi.grid
    u0c = u0.frequency()
    v1 = _gamma(np.zeros_like(psi.values), psi, u0c, solver, nonlin)
    v2 = _gamma(v1, psi, u0c, solver, nonlin)
    num = solver.norm.pointwise(grid, v2 - v1)
    den = solver.norm.pointwise(grid, v1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def cmd_solve(cfg, out: Path, threads: int):
    cfg, grid, phi, u0, solver, nonlin = _solver_setup(cfg)
    rng = stream_rng(cfg["seed"], "solve", 0)
    psi = sample_convolution(phi, solver.M, solver.T, rng)
    out.mkdir(parents=True, exist_ok=True)
    result: dict[str, Any] = {"method": cfg["method"], "hs_norm": hs_norm(phi, 0.0)}
    if cfg["method"] == "splitstep":
        traj = splitstep_solve(u0, solver, nonlin, psi)
        ratio_t = None
    else:
        res = picard_solve(u0, psi, solver, nonlin)
        traj = res.u
        ratio_t = _pointwise_first_ratio(u0, psi, solver, nonlin)
        result.update(iterations=res.iterations, ratios=res.ratios, updates=res.updates)
    tdir = out / "trajectory"
    tdir.mkdir(exist_ok=True)
    records = []
    for j in range(len(traj)):
        target = tdir / f"u_{j:05d}.bin"
        write_field(target, traj[j])
        records.append(target)
    traj_manifest = write_json(tdir / "manifest.json", {
        "grid": {"d": grid.d, "L": grid.L, "N": grid.N}, "T": solver.T, "M": solver.M,
        "records": [p.name for p in records], "noise_seed_record": psi.seed_record,
        "phi": psi.phi_label})
    norms = out / "norms.csv"
    norms.write_text(rows_to_csv(_norm_rows(traj, solver.norm, ratio_t)))
    return records + [traj_manifest, norms], result


def cmd_probe_existence(cfg, out: Path, threads: int):
    cfg, grid, phi, u0, solver, nonlin = _solver_setup(cfg)
    if cfg["T_max"] is None:
        cfg["T_max"] = 2.0 * cfg["T"]
    report = local_existence_probe(u0, phi, solver, nonlin, cfg["seed"], cfg["paths"],
                                   cfg["T_max"], cfg["rungs"], threads)
    rows = [{"path": i, "T_est": t, "rung": r} for i, (t, r) in enumerate(zip(report.T_est, report.rung))]
    payload = {"ladder": report.ladder, "summary": report.summary(), "paths": rows}
    arts = write_report(out, "existence", rows, payload)
    summary = report.summary()
    code = EXIT_HORIZON if summary["positive"] < summary["n_paths"] else EXIT_OK
    if code:
        print(f"existence horizon below the ladder for {summary['n_paths'] - summary['positive']} "
              f"of {summary['n_paths']} paths", file=sys.stderr)
    return arts, summary, code


def cmd_verify_dispersive(cfg, out: Path, threads: int):
    grid = make_grid(cfg)
    u0 = make_u0(f"gaussian:amp=1.0,width={cfg['width']!r}", grid)
    try:
        times = time_ladder(cfg["t_min"], cfg["t_max"], cfg["per_decade"])
        fit = dispersive_decay_fit(u0, cfg["r"], times, threads)
    except WrapAroundError as exc:
        raise HypothesisViolation(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    meta = fit.metadata
    rows = [{"t": t, "norm": n, "ratio": q} for t, n, q in zip(meta["times"], meta["norms"], meta["ratios"])]
    arts = write_report(out, "decay", rows, {"fit": fit.as_dict(), "summary": decay_row(fit)})
    arts.append(loglog_svg(out / "decay.svg", meta["times"], meta["norms"], fit, "t",
                           f"||S(t) u0||_L^{cfg['r']}"))
    return arts, decay_row(fit)


def cmd_verify_lemma21(cfg, out: Path, threads: int):
    grid = make_grid(cfg)
    phi = make_phi(cfg, grid)
    ladder = np.geomspace(cfg["T_max"] / 10.0, cfg["T_max"], cfg["points"])
    if len(ladder) < 4:
        raise ConfigError("'points' must be at least 4")
    rep = verify_lemma21(phi, cfg["s"], cfg["q"], cfg["r"], ladder, cfg["rho"], cfg["samples"],
                         cfg["seed"], cfg["steps"], threads)
    arts = write_report(out, "lemma21", rep.rows(), rep.as_dict())
    arts.append(loglog_svg(out / "lemma21.svg", rep.T_ladder, rep.estimates, rep.fit, "T",
                           "moment of ||Psi||"))
    lo, hi = rep.fit.ci_95
    return arts, {"theta_hat": rep.fit.exponent_hat, "ci_95": [lo, hi],
                  "doubled_ratio": rep.doubled_ratio, "rho_meets_minkowski": rep.rho_meets_minkowski}


def cmd_verify_pstrichartz(cfg, out: Path, threads: int):
    grid = make_grid(cfg)
    make_u0(cfg["u0"], grid)  # validate once on the base grid
    spec = make_randomization(cfg)
    norms = [NormSpec(cfg["s"], r, q, cfg["T"]) for q, r in cfg["pairs"]]
    entries = verify_probabilistic_strichartz(lambda g: build_u0(cfg["u0"], g), spec, norms,
                                              cfg["samples"], cfg["seed"], cfg["steps"],
                                              cfg["refine"], grid, threads)
    rows = [e.row() for e in entries]
    payload = {"rows": rows, "tail_fits": [e.coarse.as_dict() for e in entries]}
    arts = write_report(out, "pstrichartz", rows, payload)
    return arts, {"flag_growth": [r["flag_growth"] for r in rows]}


def cmd_verify_contraction(cfg, out: Path, threads: int):
    cfg, grid, phi, u0, solver, nonlin = _solver_setup(cfg)
    horizons = sorted(cfg["horizons"], reverse=True)
    T0 = horizons[0]
    steps = []
    for T in horizons:
        n = cfg["steps_max"] * T / T0
        if abs(n - round(n)) > 1e-9 or round(n) < 2:
            raise ConfigError(f"horizon {T} is not a whole number (>= 2) of steps of size {T0 / cfg['steps_max']}")
        steps.append(int(round(n)))
    path = sample_convolution(phi, cfg["steps_max"], T0, stream_rng(cfg["seed"], "contraction", 0))
    rows = []
    for T, n in zip(horizons, steps):
        sub = path.restrict(n)
        c = SolverConfig(sub.T, n, solver.max_iters, solver.tol, solver.dealias, solver.norm)
        rows.append({"T": sub.T, "steps": n, "ratio": first_contraction_ratio(u0, sub, c, nonlin)})
    ratios = [r["ratio"] for r in rows]
    decreasing = all(a > b for a, b in zip(ratios, ratios[1:]))
    fit = None
    if len(rows) >= 4 and all(r > 0 for r in ratios):
        fit = fit_power_law([r["T"] for r in rows], ratios, seed=cfg["seed"])
    for r in rows:
        r["theta_hat"] = None if fit is None else fit.exponent_hat
    payload = {"rows": rows, "strictly_decreasing": decreasing,
               "fit": None if fit is None else fit.as_dict(), "noise_seed_record": path.seed_record}
    arts = write_report(out, "contraction", rows, payload)
    arts.append(loglog_svg(out / "contraction.svg", [r["T"] for r in rows], ratios, fit, "T",
                           "first contraction ratio"))
    return arts, {"strictly_decreasing": decreasing,
                  "theta_hat": None if fit is None else fit.exponent_hat}


def cmd_report(cfg, out: Path, threads: int):
    root = Path(cfg["input"])
    if not root.is_dir():
        raise ConfigError(f"no such directory: {root}")
    rows = []
    for manifest in sorted(root.rglob("manifest.json")):
        try:
            data = json.loads(manifest.read_text())
        except ValueError:
            continue
        if "command" not in data or "artifacts" not in data:
            continue
        base = manifest.parent
        for name, digest in sorted(data["artifacts"].items()):
            target = base / name
            ok = target.exists() and sha256(target) == digest
            rows.append({"run": str(base.relative_to(root)), "command": data["command"],
                         "seed": data.get("seed"), "artifact": name, "verified": ok})
    out.mkdir(parents=True, exist_ok=True)
    index = out / "report.csv"
    index.write_text(rows_to_csv(rows))
    bad = [r for r in rows if not r["verified"]]
    for r in bad:
        print(f"hash mismatch: {r['run']}/{r['artifact']}", file=sys.stderr)
    result = {"artifacts": len(rows), "mismatches": len(bad)}
    return [index], result, (EXIT_INTEGRITY if bad else EXIT_OK)


COMMANDS = {
    "sample-noise": cmd_sample_noise,
    "randomize": cmd_randomize,
    "solve": cmd_solve,
    "probe-existence": cmd_probe_existence,
    "verify-dispersive": cmd_verify_dispersive,
    "verify-lemma21": cmd_verify_lemma21,
    "verify-pstrichartz": cmd_verify_pstrichartz,
    "verify-contraction": cmd_verify_contraction,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        cfg = resolve(command, args)
        threads = cfg["threads"] if cfg["threads"] is not None else default_threads()
        out = Path(cfg["out"] or Path("runs") / command)
        if command == "report" and cfg["out"] is None:
            out = Path(cfg["input"])
        outcome = COMMANDS[command](cfg, out, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateInputError as exc:
        print(f"degenerate input: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ExistenceHorizonExceeded as exc:
        print(f"non-contraction: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    artifacts, result = outcome[0], outcome[1]
    code = outcome[2] if len(outcome) > 2 else EXIT_OK
    if command != "report":
        write_manifest(out, command, cfg, artifacts, result)
    print(json.dumps(jsonable({"command": command, "out": str(out), "result": result}), sort_keys=True))
    return code


def main(argv: list[str] | None = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
