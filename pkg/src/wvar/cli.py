"""Command-line entry point: ``wvar {segment,fit,risk,run,simulate}``.

Settings resolve as command-line flag, then ``--config`` JSON file, then
built-in default. Every failure is reported with the stage that raised
it and exits non-zero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .em import FitResult, fit
from .mixture import TwoLayerMixture
from .pipeline import (
    PipelineError,
    RunConfig,
    _stage,
    run_pipeline,
    segment_returns,
    simulate,
    write_segments_csv,
)
from .risk import risk_report
from .series import load_prices, to_log_returns

log = logging.getLogger("wvar")

# flag dest -> RunConfig field
_FLAG_FIELDS = {
    "input": "input",
    "penalty": "penalty_weight",
    "k2": "k2",
    "k1": "k1",
    "alpha": "alpha",
    "gamma": "gamma",
    "min_seg_len": "min_segment_length",
    "restarts": "restarts",
    "max_iters": "max_iters",
    "tol": "rel_tol",
    "seed": "seed",
    "out_dir": "out_dir",
    "emit": "emit",
    "basis": "basis",
}


def _add_common(p: argparse.ArgumentParser, *, segmentation=False, em=False, risk=False):
    p.add_argument("--config", help="flat JSON file of RunConfig keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    if segmentation:
        p.add_argument("--input", help="CSV with date,close columns")
        p.add_argument("--penalty", type=float, help="linear penalty per change point (2.5)")
        p.add_argument("--gamma", type=float, help="RBF bandwidth (median heuristic if unset)")
        p.add_argument("--min-seg-len", dest="min_seg_len", type=int)
    if em:
        p.add_argument("--k2", type=int, help="number of scenarios (5)")
        p.add_argument("--k1", type=int, help="Gaussians per scenario (3)")
        p.add_argument("--restarts", type=int)
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--tol", type=float, help="relative log-likelihood tolerance")
    if risk:
        p.add_argument("--alpha", type=float, help="confidence level (0.95)")
        p.add_argument("--basis", choices=["fitted_mixture", "empirical"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wvar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="detect change points, write segments.csv")
    _add_common(p, segmentation=True)

    p = sub.add_parser("fit", help="segment and fit the two-layer mixture, write model.json")
    _add_common(p, segmentation=True, em=True)

    p = sub.add_parser("risk", help="VaR/WVaR/BVaR from a saved model")
    _add_common(p, risk=True)
    p.add_argument("--model", required=True, help="model.json written by `fit`")
    p.add_argument("--input", help="price CSV (needed for --basis empirical)")

    p = sub.add_parser("run", help="full pipeline")
    _add_common(p, segmentation=True, em=True, risk=True)
    p.add_argument("--emit", help="comma list of json,csv,svg")

    p = sub.add_parser("simulate", help="sample a price CSV from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--counts", help="comma list of returns per segment (default: model lengths)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            values.update(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise PipelineError("config", f"cannot read {path}: {exc}") from exc
        if not isinstance(values, dict):
            raise PipelineError("config", "config file must hold a JSON object")
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    try:
        return RunConfig.from_mapping(values)
    except TypeError as exc:
        raise PipelineError("config", str(exc)) from exc


def _dump(doc) -> None:
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def _load_returns(cfg: RunConfig):
    if cfg.input is None:
        raise PipelineError("config", "no input file given")
    prices = _stage("load", load_prices, cfg.input)
    return _stage("returns", to_log_returns, prices)


def cmd_segment(cfg: RunConfig) -> int:
    returns = _load_returns(cfg)
    kernel, result = segment_returns(returns, cfg)
    out = Path(cfg.out_dir)
    _stage("emit", out.mkdir, parents=True, exist_ok=True)
    _stage("emit", write_segments_csv, returns, result.segmentation, out / "segments.csv")
    seg = result.segmentation
    _dump({"n_breakpoints": len(seg.breakpoints), "breakpoints": list(seg.breakpoints),
           "gamma": kernel.gamma, "penalized_objective": result.penalized_objective})
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    returns = _load_returns(cfg)
    _, result = segment_returns(returns, cfg)
    fitted: FitResult = _stage("fit", fit, returns, result.segmentation, cfg.fit_config)
    out = Path(cfg.out_dir)
    _stage("emit", out.mkdir, parents=True, exist_ok=True)
    path = out / "model.json"
    _stage("emit", path.write_text, json.dumps(fitted.to_dict(), indent=2) + "\n", encoding="utf-8")
    _dump({"model": str(path), "log_likelihood": fitted.log_likelihood,
           "iterations": fitted.iterations, "converged": fitted.converged})
    return 0


def cmd_risk(cfg: RunConfig, model_path: str) -> int:
    model = _stage("risk", TwoLayerMixture.load, model_path)
    returns = _load_returns(cfg) if cfg.basis == "empirical" else None
    report = _stage("risk", risk_report, model, cfg.alpha, cfg.basis, returns)
    _dump(report.to_dict())
    return 0


def cmd_run(cfg: RunConfig) -> int:
    rep = run_pipeline(cfg)
    seg = rep.segmentation.segmentation
    log.info("%d change points; var=%.6f wvar=%.6f bvar=%.6f", len(seg.breakpoints),
             rep.risk.var, rep.risk.wvar, rep.risk.bvar)
    _dump({"out_dir": cfg.out_dir, "n_breakpoints": len(seg.breakpoints), **rep.risk.to_dict()})
    return 0


def cmd_simulate(args) -> int:
    counts = None
    if args.counts:
        try:
            counts = [int(c) for c in args.counts.split(",")]
        except ValueError:
            raise PipelineError("simulate", f"bad --counts {args.counts!r}") from None
    series = simulate(args.model, counts, args.seed, args.out)
    _dump({"out": args.out, "n_prices": len(series)})
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s | %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        cfg = resolve_config(args)
        if args.command == "segment":
            return cmd_segment(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "risk":
            return cmd_risk(cfg, args.model)
        return cmd_run(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
