"""Command-line driver: ``entf gen | factorize | evaluate | export-maps | trace-compare``.

Every failure prints one JSON line ``{"error": <kind>, "message": <text>}``
to stderr and exits nonzero (2 for usage errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as tio
from .evaluation import evaluate_unmixing
from .extrapolation import ExtrapConfig, entf_rre, entf_tet
from .solver import EntfConfig, run_entf
from .synth import make_scene
from .tensor_core import ShapeError, frobenius_norm

METHODS = ("entf", "entf-rre", "entf-tet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return code


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    params = tio.SceneParams(
        bands=args.bands,
        width=args.width,
        height=args.height,
        endmembers=args.endmembers,
        snr=args.snr,
        seed=args.seed,
        endmember_family=args.endmember_family,
        abundance_family=args.abundance_family,
    )
    for name in ("bands", "width", "height", "endmembers"):
        if getattr(params, name) < 1:
            raise ValueError(f"--{name} must be a positive integer")
    scene = make_scene(
        params.bands, params.width, params.height, params.endmembers, params.snr,
        seed=params.seed,
        endmember_family=params.endmember_family,
        abundance_family=params.abundance_family,
    )
    out = tio.ensure_dir(args.out)
    tio.save_scene(scene, out, params)
    tio.dump_json(out / "config.json", {"scene": dataclasses.asdict(params)})
    return 0


# ---------------------------------------------------------------- factorize

_SOLVER_FLAGS = {
    "endmembers": "r",
    "lambda_s": "lambda_s",
    "lambda_x": "lambda_x",
    "lambda_y": "lambda_y",
    "rank_x": "rank_x",
    "gamma_asc": "gamma_asc",
    "mode": "mode",
    "eps_stop": "eps_stop",
    "max_iter": "max_iter",
    "seed": "seed",
}
_EXTRAP_FLAGS = {"order": "order", "probe": "probe", "probe_seed": "probe_seed"}


def _lambda_s(text: str):
    return text if text == "auto" else float(text)


def resolve_run(args) -> tuple:
    """Merge the config file (if any) with command-line flags; flags win."""
    rc = tio.load_run_config(args.config) if args.config else tio.RunConfig()
    method = args.method or rc.method
    solver = dict(rc.solver)
    for flag, key in _SOLVER_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            solver[key] = v
    if "r" not in solver:
        raise tio.ConfigError("endmember count missing: pass --endmembers or set solver.r")
    extrap = dict(rc.extrapolation)
    for flag, key in _EXTRAP_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            extrap[key] = v
    try:
        cfg = EntfConfig(**solver)
        cfg.validate()
        ecfg = None
        if method != "entf":
            ecfg = ExtrapConfig(method=method.split("-")[1], **extrap)
            ecfg.validate()
    except (TypeError, ValueError) as exc:
        raise tio.ConfigError(str(exc)) from exc
    return method, cfg, ecfg


def cmd_factorize(args) -> int:
    method, cfg, ecfg = resolve_run(args)
    a = tio.read_tensor(args.inp)
    resolved = cfg.resolve(a)
    out = tio.ensure_dir(args.out)
    t0 = time.perf_counter()
    if method == "entf":
        res = run_entf(a, cfg)
    elif method == "entf-rre":
        res = entf_rre(a, cfg, ecfg)
    else:
        res = entf_tet(a, cfg, ecfg)
    wall = time.perf_counter() - t0
    tio.write_tensor(out / "x.etnsr", res.x)
    tio.write_tensor(out / "y.etnsr", res.y)
    tio.write_trace_csv(out / "trace.csv", res.trace)
    files = {"x": "x.etnsr", "y": "y.etnsr", "trace": "trace.csv", "config": "config.json"}
    if ecfg is not None:
        tio.write_cycles_csv(out / "cycles.csv", res.cycles)
        files["cycles"] = "cycles.csv"
    norm_a = frobenius_norm(a)
    rel_err = frobenius_norm(a - res.reconstruction) / norm_a if norm_a > 0 else frobenius_norm(res.reconstruction)
    tio.dump_json(out / "config.json", tio.run_config_document(method, resolved, ecfg))
    tio.dump_json(out / "manifest.json", {
        "kind": "factorization",
        "method": method,
        "input": str(args.inp),
        "iterations": res.iterations,
        "converged": res.converged,
        "relative_error": rel_err,
        "final_objective": res.objective_history[-1] if res.objective_history else None,
        "extrapolation_cycles": len(res.cycles),
        "accepted_cycles": sum(1 for c in res.cycles if c[4]),
        "wall_time_s": wall,
        "files": files,
    })
    return 0


# ---------------------------------------------------------------- evaluate


def _check_shape(got, want, what: str, path_got, path_want) -> None:
    if tuple(got) != tuple(want):
        raise ShapeError(f"{what} shape mismatch: {path_got} has {tuple(got)}, {path_want} expects {tuple(want)}")


def cmd_evaluate(args) -> int:
    truth, est = Path(args.truth), Path(args.est)
    paths = {
        "a": truth / tio.SCENE_FILES["clean"],
        "x_true": truth / tio.SCENE_FILES["endmembers"],
        "y_true": truth / tio.SCENE_FILES["abundances"],
        "x_hat": est / "x.etnsr",
        "y_hat": est / "y.etnsr",
    }
    t = {k: tio.read_tensor(p) for k, p in paths.items()}
    _check_shape(t["x_hat"].shape, t["x_true"].shape, "endmember", paths["x_hat"], paths["x_true"])
    _check_shape(t["y_hat"].shape, t["y_true"].shape, "abundance", paths["y_hat"], paths["y_true"])
    _check_shape(
        (t["x_true"].shape[0],) + t["y_true"].shape[1:], t["a"].shape, "cube", paths["x_true"], paths["a"]
    )
    rep = evaluate_unmixing(t["a"], t["x_true"], t["y_true"], t["x_hat"], t["y_hat"])
    out = Path(args.out)
    tio.ensure_dir(out.parent if str(out.parent) else ".")
    out.write_text(rep.to_csv())
    out.with_suffix(".json").write_text(rep.to_json() + "\n")
    tio.dump_json(out.with_name(out.stem + ".config.json"), {
        "command": "evaluate", "truth": str(truth), "est": str(est), "out": str(out),
    })
    return 0


# ---------------------------------------------------------------- export-maps


def cmd_export_maps(args) -> int:
    y = tio.read_tensor(args.abundances)
    out = tio.ensure_dir(args.out)
    tio.write_abundance_maps(y, out)
    tio.dump_json(out / "config.json", {
        "command": "export-maps", "abundances": str(args.abundances), "out": str(out),
    })
    return 0


# ---------------------------------------------------------------- trace-compare


def cmd_trace_compare(args) -> int:
    rows = []
    for path in args.traces:
        tr = tio.read_trace_csv(path)
        if not tr:
            raise ValueError(f"{path}: empty trace")
        last = tr[-1]
        rows.append((str(path), last[0], last[1], last[2], last[3]))
    base = rows[0][1]
    lines = ["trace,iterations,final_objective,rel_change_x,rel_change_y,iterations_vs_first"]
    for path, it, obj, rx, ry in rows:
        lines.append(f"{path},{it},{obj!r},{rx!r},{ry!r},{it / base!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="entf", description="Einstein-product nonnegative tensor factorization.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser(
        "gen",
        help="generate a synthetic scene",
        description="Generate a synthetic scene. The SNR is 20*log10(||clean||_F / ||noise||_F) "
        "over the whole cube; omit --snr for a noiseless cube.",
    )
    g.add_argument("--bands", type=int, required=True)
    g.add_argument("--width", type=int, required=True)
    g.add_argument("--height", type=int, required=True)
    g.add_argument("--endmembers", type=int, required=True)
    g.add_argument("--snr", type=float, default=None, help="target SNR in dB (whole-cube Frobenius energy)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--endmember-family", choices=("smooth", "random"), default="smooth")
    g.add_argument("--abundance-family", choices=("dirichlet", "smooth"), default="dirichlet")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("factorize", help="factorize a cube", description="Factorize a nonnegative cube.")
    f.add_argument("--in", dest="inp", required=True, help="cube tensor file")
    f.add_argument("--method", choices=METHODS, default=None, help="default: config value, else entf")
    f.add_argument("--config", default=None, help="JSON run config; flags override its values")
    f.add_argument("--out", required=True)
    f.add_argument("--endmembers", type=int, default=None, help="number of endmembers r")
    f.add_argument("--lambda-s", type=_lambda_s, default=None, help="number or 'auto'")
    f.add_argument("--lambda-x", type=float, default=None)
    f.add_argument("--lambda-y", type=float, default=None)
    f.add_argument("--rank-x", type=int, default=None)
    f.add_argument("--gamma-asc", type=float, default=None)
    f.add_argument("--mode", choices=("unmixing", "denoising"), default=None)
    f.add_argument("--eps-stop", type=float, default=None)
    f.add_argument("--max-iter", type=int, default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--order", type=int, default=None, help="extrapolation order")
    f.add_argument("--probe", choices=("difference", "random"), default=None)
    f.add_argument("--probe-seed", type=int, default=None)
    f.set_defaults(func=cmd_factorize)

    e = sub.add_parser("evaluate", help="score an estimate against ground truth")
    e.add_argument("--truth", required=True, help="scene directory written by gen")
    e.add_argument("--est", required=True, help="directory written by factorize")
    e.add_argument("--out", required=True, help="CSV report path; JSON is written beside it")
    e.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("export-maps", help="write abundance maps as PGM images")
    m.add_argument("--abundances", required=True)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_export_maps)

    t = sub.add_parser("trace-compare", help="summarize solver traces side by side")
    t.add_argument("--traces", nargs="+", required=True)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    try:
        return args.func(args)
    except tio.ConfigError as exc:
        return _fail("config", str(exc), 1)
    except tio.TensorFormatError as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    except ShapeError as exc:
        return _fail("shape", str(exc), 1)
    except FloatingPointError as exc:
        return _fail("divergence", str(exc), 1)
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''}: {exc.strerror or exc}", 1)
    except (ValueError, ArithmeticError) as exc:
        return _fail("invalid", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
