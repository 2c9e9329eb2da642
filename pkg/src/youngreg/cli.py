"""Command-line experiment driver.

Settings resolve as flags > ``--config`` JSON > built-in defaults, and every
output file embeds the resolved config and the library version.  Exit codes:
0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import BUNDLED_FIELDS, FourierVectorField, bundled_field, estimate_averaging_constant
from .fbm import CholeskyError, HurstParams, SampledPath, read_path_csv, sample_path
from .oscillatory import Frequency, TableBudgetError, TableConfig, build_table, eval_Y
from .solver import SolveConfig, convergence_experiment, flow_lipschitz_estimate, solve_young_ode
from .stats import exp_moment_check, moment_check, moment_scaling, path_stats

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

COMMON = {"config": None, "workers": None, "out": None, "out_dir": "."}
PATH_DEFAULTS = {"H": 0.5, "d": 1, "depth": 10, "seed": 0, "path": None}
TABLE_DEFAULTS = {"n_max": 8, "m_max": 2, "omega_max": 8.0, "xi_max": 8.0}
SOLVE_DEFAULTS = {
    "field": "smooth_4pair",
    "H": 0.5,
    "depth": 12,
    "seed": 0,
    "path": None,
    "x0": None,
    "gamma": 0.55,
    "alpha": None,
    "step_safety": 0.9,
    "picard_tol": 1e-9,
    "max_picard": 200,
}

DEFAULTS = {
    "sample-fbm": {**PATH_DEFAULTS},
    "eval-y": {**PATH_DEFAULTS, "omega": 0.0, "xi": None, "s": 0.0, "t": 1.0},
    "estimate-k": {**PATH_DEFAULTS, **TABLE_DEFAULTS, "alpha": -0.8, "gamma": None},
    "stats": {**PATH_DEFAULTS, **TABLE_DEFAULTS, "lam": 0.2, "alpha": -0.8, "gamma": None, "n_paths": 1},
    "solve": {**SOLVE_DEFAULTS},
    "flow": {**SOLVE_DEFAULTS, "x0_grid": None},
    "converge": {**SOLVE_DEFAULTS, "field": "mollify_6atom", "scheme": "exp", "n_list": "1,2,4,8,16"},
    "moments": {
        "kind": "power",
        "H": 0.5,
        "d": 1,
        "omega": 0.0,
        "xi": "2",
        "s": 0.0,
        "t": 1.0,
        "p": 1,
        "n": 4000,
        "seed": 0,
        "depth": 10,
        "lam": 0.2,
        "n_list": "2000,8000",
    },
}


class ValidationError(ValueError):
    pass


def _floats(text, name: str) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        return np.asarray(text, dtype=float)
    try:
        return np.array([float(v) for v in str(text).split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"--{name}: expected comma-separated numbers, got {text!r}") from exc


def _ints(text, name: str) -> list[int]:
    vals = _floats(text, name)
    if np.any(vals != np.round(vals)):
        raise ValidationError(f"--{name}: expected integers")
    return [int(v) for v in vals]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default settings")
    p.add_argument("--workers", type=int, help="worker threads (fallback: YOUNGREG_WORKERS)")
    p.add_argument("--out", help="output file")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")


def _add_path(p: argparse.ArgumentParser) -> None:
    p.add_argument("--H", type=float, help="Hurst exponent")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--depth", type=int, help="grid depth (n_grid = 2^depth)")
    p.add_argument("--seed", type=int, help="path seed")
    p.add_argument("--path", help="read the path from a CSV instead of sampling")


def _add_table(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--omega-max", dest="omega_max", type=float)
    p.add_argument("--xi-max", dest="xi_max", type=float)


def _add_solve(p: argparse.ArgumentParser) -> None:
    p.add_argument("--field", help=f"field JSON file or bundled name {BUNDLED_FIELDS}")
    p.add_argument("--H", type=float)
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--path", help="read the path from a CSV instead of sampling")
    p.add_argument("--x0", help="initial point, comma-separated")
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha", type=float, help="default: 4 (gamma - 5/8) / H")
    p.add_argument("--step-safety", dest="step_safety", type=float)
    p.add_argument("--picard-tol", dest="picard_tol", type=float)
    p.add_argument("--max-picard", dest="max_picard", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="youngreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"youngreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-fbm", help="sample one fBm path to CSV", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_path(p)

    p = sub.add_parser("eval-y", help="oscillatory integral Y on one path", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_path(p)
    p.add_argument("--omega", type=float)
    p.add_argument("--xi")
    p.add_argument("--s", type=float)
    p.add_argument("--t", type=float)

    p = sub.add_parser("estimate-k", help="averaging constant estimate", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_path(p)
    _add_table(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float, help="default: 5/8 + H alpha / 4")

    p = sub.add_parser("stats", help="R, S, Q (and K) per path", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_path(p)
    _add_table(p)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--n-paths", dest="n_paths", type=int)

    p = sub.add_parser("solve", help="solve the Young ODE", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_solve(p)

    p = sub.add_parser("flow", help="flow Lipschitz estimate over an x0 grid", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_solve(p)
    p.add_argument("--x0-grid", dest="x0_grid", help="points separated by ';', coordinates by ','")

    p = sub.add_parser("converge", help="mollified-drift convergence experiment", argument_default=argparse.SUPPRESS)
    _add_common(p)
    _add_solve(p)
    p.add_argument("--scheme", choices=["exp", "power"])
    p.add_argument("--n-list", dest="n_list")

    p = sub.add_parser("moments", help="Monte-Carlo moments of Y", argument_default=argparse.SUPPRESS)
    _add_common(p)
    p.add_argument("--kind", choices=["power", "exp", "scaling"])
    p.add_argument("--H", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--xi")
    p.add_argument("--s", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--p", type=int)
    p.add_argument("--n", type=int, help="sample count")
    p.add_argument("--seed", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--n-list", dest="n_list", help="sample counts for --kind exp")
    return parser


def resolve_config(command: str, flags: dict) -> dict:
    """Merge defaults, the optional --config JSON and explicit flags."""
    cfg = {**COMMON, **DEFAULTS[command]}
    if flags.get("config"):
        try:
            with open(flags["config"]) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {flags['config']}: {exc}") from exc
        unknown = set(from_file) - set(cfg)
        if unknown:
            raise ValidationError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(from_file)
    cfg.update(flags)
    if cfg["workers"] is None and os.environ.get("YOUNGREG_WORKERS"):
        cfg["workers"] = int(os.environ["YOUNGREG_WORKERS"])
    if cfg["workers"] is not None and cfg["workers"] < 1:
        raise ValidationError("--workers must be >= 1")
    return cfg


# --- helpers ----------------------------------------------------------------


def _load_path(cfg: dict) -> SampledPath:
    if cfg.get("path"):
        with open(cfg["path"]) as fh:
            return read_path_csv(fh)
    params = HurstParams(cfg["H"], cfg.get("d", 1), 2 ** cfg["depth"], cfg["seed"])
    return sample_path(params)


def _load_field(source: str) -> FourierVectorField:
    if source in BUNDLED_FIELDS:
        return bundled_field(source)
    try:
        with open(source) as fh:
            return FourierVectorField.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read field {source}: {exc}") from exc


def _gamma_default(cfg: dict) -> float:
    return cfg["gamma"] if cfg.get("gamma") is not None else 5.0 / 8.0 + cfg["H"] * cfg["alpha"] / 4.0


def _table_cfg(cfg: dict) -> TableConfig:
    return TableConfig(cfg["n_max"], cfg["m_max"], cfg["omega_max"], cfg["xi_max"])


def _solve_cfg(cfg: dict) -> SolveConfig:
    alpha = cfg["alpha"] if cfg.get("alpha") is not None else 4.0 * (cfg["gamma"] - 5.0 / 8.0) / cfg["H"]
    return SolveConfig(
        gamma=cfg["gamma"],
        alpha=alpha,
        step_safety=cfg["step_safety"],
        picard_tol=cfg["picard_tol"],
        max_picard=cfg["max_picard"],
    )


def _solve_inputs(cfg: dict):
    b = _load_field(cfg["field"])
    cfg = {**cfg, "d": b.d}
    path = _load_path(cfg)
    if path.d != b.d:
        raise ValidationError("path and field dimensions differ")
    x0 = np.zeros(b.d) if cfg.get("x0") is None else _floats(cfg["x0"], "x0")
    if x0.shape != (b.d,):
        raise ValidationError(f"--x0 needs {b.d} components")
    return b, path, x0, _solve_cfg(cfg)


def _out_file(cfg: dict, default_name: str) -> Path:
    if cfg.get("out"):
        target = Path(cfg["out"])
    else:
        target = Path(cfg["out_dir"]) / default_name
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def _write_json(target: Path, command: str, cfg: dict, payload: dict) -> None:
    doc = {"version": __version__, "command": command, "config": cfg, **payload}
    target.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _meta_comment(command: str, cfg: dict) -> str:
    return json.dumps({"version": __version__, "command": command, "config": cfg}, sort_keys=True)


# --- subcommands ------------------------------------------------------------


def cmd_sample_fbm(cfg: dict) -> str:
    path = _load_path(cfg)
    target = _out_file(cfg, "path.csv")
    with open(target, "w") as fh:
        path.to_csv(fh, comment=_meta_comment("sample-fbm", cfg))
    return f"sample-fbm: wrote {target} ({path.n_grid + 1} rows, H={cfg['H']}, d={path.d})"


def cmd_eval_y(cfg: dict) -> str:
    path = _load_path(cfg)
    xi = _floats(cfg["xi"], "xi") if cfg.get("xi") is not None else np.zeros(path.d)
    y = eval_Y(path, cfg["s"], cfg["t"], Frequency(cfg["omega"], xi))
    target = _out_file(cfg, "eval_y.json")
    _write_json(target, "eval-y", cfg, {"re": y.value.real, "im": y.value.imag, "abs": abs(y.value), "abs_error_bound": float(y.abs_error_bound)})
    return f"eval-y: Y = {y.value.real:.17g}{y.value.imag:+.17g}j -> {target}"


def cmd_estimate_k(cfg: dict) -> str:
    path = _load_path(cfg)
    gamma = _gamma_default(cfg)
    table = build_table(path, _table_cfg(cfg))
    k = estimate_averaging_constant(path, cfg["alpha"], gamma, table)
    target = _out_file(cfg, "estimate_k.json")
    _write_json(target, "estimate-k", cfg, {"K_est": k, "gamma": gamma, "truncation": table.truncation()})
    return f"estimate-k: K_est = {k:.17g} (alpha={cfg['alpha']}, gamma={gamma:.6g}) -> {target}"


def cmd_stats(cfg: dict) -> str:
    gamma = _gamma_default(cfg)
    tcfg = _table_cfg(cfg)
    rows = []
    for i in range(cfg["n_paths"]):
        path = _load_path({**cfg, "seed": (cfg["seed"] ^ i) % 2**64}) if not cfg.get("path") else _load_path(cfg)
        table = build_table(path, tcfg)
        st = path_stats(path, cfg["lam"], table, cfg["H"])
        k = estimate_averaging_constant(path, cfg["alpha"], gamma, table)
        rows.append({"path_id": i, "K": k, "Q": st.Q, "R": st.R, "S": st.S, "lambda": cfg["lam"], "log_R": st.log_R, "log_S": st.log_S})
    target = _out_file(cfg, "stats.csv")
    with open(target, "w") as fh:
        fh.write(f"# {_meta_comment('stats', cfg)}\n")
        keys = list(rows[0])
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(str(r[k]) if isinstance(r[k], int) else f"{r[k]:.17g}" for k in keys) + "\n")
    q = rows[0]["Q"]
    return f"stats: {len(rows)} path(s), first Q = {q:.6g}, K = {rows[0]['K']:.6g} -> {target}"


def cmd_solve(cfg: dict) -> tuple[str, int]:
    b, path, x0, scfg = _solve_inputs(cfg)
    res = solve_young_ode(b, path, x0, scfg)
    target = _out_file(cfg, "solve.csv")
    with open(target, "w") as fh:
        res.to_csv(fh, config=cfg)
    sidecar = target.with_suffix(".json")
    sidecar.write_text(res.diagnostics_json(config=cfg) + "\n")
    code = EXIT_OK if res.status != "max_iter" else EXIT_NUMERICAL
    msg = f"solve: status={res.status}, windows={len(res.per_window)}, K_est={res.diagnostics['k_est']:.6g} -> {target}, {sidecar}"
    return msg, code


def cmd_flow(cfg: dict) -> str:
    b, path, x0, scfg = _solve_inputs(cfg)
    if cfg.get("x0_grid"):
        pts = np.array([_floats(chunk, "x0-grid") for chunk in cfg["x0_grid"].split(";")])
    else:
        offsets = 0.05 * np.vstack([np.zeros(b.d), np.eye(b.d), -np.eye(b.d)])
        pts = x0[None, :] + offsets
    if pts.ndim != 2 or pts.shape[1] != b.d:
        raise ValidationError(f"--x0-grid points need {b.d} coordinates")
    rep = flow_lipschitz_estimate(b, path, pts, scfg)
    target = _out_file(cfg, "flow.json")
    _write_json(target, "flow", cfg, {"lipschitz_estimate": rep.estimate, "jacobian_sup_norm": rep.jacobian_sup_norm, "statuses": rep.statuses})
    return f"flow: Lipschitz estimate {rep.estimate:.6g}, sup ||D|| {rep.jacobian_sup_norm:.6g} -> {target}"


def cmd_converge(cfg: dict) -> str:
    b, path, x0, scfg = _solve_inputs(cfg)
    rep = convergence_experiment(b, path, x0, cfg["scheme"], _ints(cfg["n_list"], "n-list"), scfg)
    target = _out_file(cfg, "converge.json")
    _write_json(target, "converge", cfg, {"reference_status": rep.reference_status, "rows": rep.rows})
    errs = ", ".join(f"{e:.3g}" for e in rep.errors)
    return f"converge: sup errors [{errs}] -> {target}"


def cmd_moments(cfg: dict) -> str:
    xi = _floats(cfg["xi"], "xi")
    kind = cfg["kind"]
    if kind == "power":
        rep = moment_check(cfg["H"], cfg["d"], cfg["omega"], xi, cfg["s"], cfg["t"], cfg["p"], cfg["n"], cfg["seed"], cfg["depth"], cfg["workers"])
        payload = {"report": json.loads(rep.to_json())}
        exact = f", exact {rep.exact:.6g}" if rep.exact is not None else ""
        msg = f"moments: E|Y|^{2 * cfg['p']} = {rep.mean:.6g} +- {rep.se:.2g}{exact}"
    elif kind == "exp":
        rep = exp_moment_check(cfg["H"], cfg["d"], cfg["omega"], xi, cfg["s"], cfg["t"], cfg["lam"], _ints(cfg["n_list"], "n-list"), cfg["seed"], cfg["depth"], cfg["workers"])
        payload = {"report": json.loads(rep.to_json())}
        msg = "moments: exp estimates " + ", ".join(f"{e.mean:.6g}" for e in rep.estimates)
    else:
        rep = moment_scaling(cfg["H"], cfg["n"], cfg["seed"], cfg["depth"], workers=cfg["workers"])
        payload = {"report": json.loads(rep.to_json())}
        msg = f"moments: scaling slope {rep.slope:.4f} over {len(rep.design)} design points"
    target = _out_file(cfg, "moments.json")
    _write_json(target, "moments", cfg, payload)
    return f"{msg} -> {target}"


HANDLERS = {
    "sample-fbm": cmd_sample_fbm,
    "eval-y": cmd_eval_y,
    "estimate-k": cmd_estimate_k,
    "stats": cmd_stats,
    "solve": cmd_solve,
    "flow": cmd_flow,
    "converge": cmd_converge,
    "moments": cmd_moments,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        cfg = resolve_config(ns.command, flags)
        out = HANDLERS[ns.command](cfg)
    except (CholeskyError, TableBudgetError, MemoryError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"youngreg {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, TypeError, KeyError) as exc:
        print(f"youngreg {ns.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    msg, code = out if isinstance(out, tuple) else (out, EXIT_OK)
    print(msg)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
