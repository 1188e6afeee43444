"""Command-line entry point: ``wpcurv <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .fuchsian import InsufficientBallError
from .pipeline import Pipeline, PipelineError, RunConfig, _jsonable, convergence_sweep, thread_budget

log = logging.getLogger("wpcurv")

COMMANDS = ("surface", "enumerate", "basis", "tensor", "spectrum", "bounds", "theta", "constants", "sweep",
            "report")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with a [run] section")
    common.add_argument("--genus", type=int)
    common.add_argument("--radius", type=float, help="group-ball radius R (also the theta truncation radius)")
    common.add_argument("--grid-h", dest="grid_h", type=float, help="grid spacing (default: about 5000 nodes)")
    common.add_argument("--zero-tol", dest="zero_tol", type=float)
    common.add_argument("--cache-dir", dest="cache_dir")
    common.add_argument("--out", help="output JSON path (CSV extracts go next to it)")
    common.add_argument("--reproducible", action="store_true", default=None,
                        help="single-threaded, no timings: identical input gives identical bytes")
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wpcurv", description="Weil-Petersson curvature of a hyperbolic surface")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sweep":
            sp.add_argument("--parameter", choices=["h", "R"], default="h")
            sp.add_argument("--values", type=float, nargs="+", help="at least three values")
    return p


def _config(args) -> RunConfig:
    over = {k: getattr(args, k) for k in ("genus", "radius", "grid_h", "zero_tol", "cache_dir", "out",
                                          "reproducible", "threads")}
    if args.config:
        return RunConfig.from_file(args.config, **over)
    return RunConfig(**{k: v for k, v in over.items() if v is not None})


def _emit(payload: dict, cfg: RunConfig) -> str:
    text = json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n"
    if cfg.out:
        path = Path(cfg.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)
    return text


def _csv_dir(cfg: RunConfig) -> Path | None:
    return Path(cfg.out).parent if cfg.out else None


def _run(args) -> int:
    cfg = _config(args)
    pipe = Pipeline(cfg)
    cmd = args.command
    if cmd == "surface":
        _emit(pipe.surface_data(), cfg)
    elif cmd == "enumerate":
        t = time.perf_counter()
        data = pipe.ball_data()
        if not cfg.reproducible:
            data["seconds"] = time.perf_counter() - t
        _emit(data, cfg)
    elif cmd == "basis":
        _emit(pipe.basis_data(), cfg)
        if _csv_dir(cfg):
            pipe.basis.to_csv(_csv_dir(cfg) / "basis.csv")
    elif cmd == "tensor":
        _emit(pipe.curvature_data(), cfg)
    elif cmd == "spectrum":
        _emit(pipe.spectrum_data(), cfg)
        if _csv_dir(cfg):
            pipe.write_csv(_csv_dir(cfg))
    elif cmd == "theta":
        data = {"thickness": pipe.thickness.to_dict(), "theta_family": [s.to_dict() for s in pipe.family]}
        _emit(data, cfg)
        if _csv_dir(cfg):
            pipe.series.slice_to_csv(_csv_dir(cfg) / "series_slice.csv")
    elif cmd == "constants":
        _emit(pipe.constants_data(), cfg)
    elif cmd == "sweep":
        values = args.values or _default_sweep(pipe, args.parameter)
        table = convergence_sweep(cfg, args.parameter, values)
        _emit(table.to_dict(), cfg)
        if _csv_dir(cfg):
            table.to_csv(_csv_dir(cfg) / f"sweep_{args.parameter}.csv")
        return 0 if not table.warnings else 1
    elif cmd in ("bounds", "report"):
        rep = pipe.report()
        if cmd == "bounds":
            _emit({"ledger": rep.ledger}, cfg)
        else:
            _emit(rep.data, cfg)
            if _csv_dir(cfg):
                pipe.write_csv(_csv_dir(cfg))
        for e in rep.failures:
            log.error("ledger failure: %s (%s): lhs %r rhs %r", e["anchor"], e["claim"], e["lhs"], e["rhs"])
        return 0 if rep.passed else 1
    return 0


def _default_sweep(pipe: Pipeline, parameter: str) -> list[float]:
    if parameter == "R":
        return [6.0, 8.0, 10.0]
    h = pipe.cfg.grid_h or pipe.grid.h
    return [2.0 * h, h, 0.5 * h]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        with thread_budget(cfg):
            return _run(args)
    except PipelineError as exc:
        log.error("%s", exc)
        if isinstance(exc.cause, InsufficientBallError):
            log.error("enumeration insufficient: need radius >= %.4f", exc.cause.required_radius)
        sys.stderr.write(json.dumps({"error": str(exc), "stage": exc.stage, "partial": exc.partial},
                                    sort_keys=True, default=str) + "\n")
        return 2
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
