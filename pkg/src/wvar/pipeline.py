"""End-to-end pipeline: prices -> returns -> change points -> EM fit -> risk."""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from .em import FitConfig, FitResult, fit
from .mixture import TwoLayerMixture, sample
from .risk import RiskReport, empirical_var, one_layer_overestimation_check, risk_report
from .segmentation import (
    KernelSpec,
    Segmentation,
    SegmentationResult,
    detect_changepoints,
    median_heuristic_bandwidth,
)
from .series import PriceSeries, ReturnSeries, load_prices, to_log_returns, write_prices

EMIT_CHOICES = ("json", "csv", "svg")
SIM_START = dt.date(2000, 1, 3)
SIM_START_PRICE = 100.0


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    penalty_weight: float = 2.5
    k2: int = 5
    k1: int = 3
    alpha: float = 0.95
    gamma: float | None = None
    min_segment_length: int = 2
    max_iters: int = 500
    rel_tol: float = 1e-8
    restarts: int = 10
    seed: int = 0
    variance_floor_factor: float = 1e-6
    out_dir: str = "out"
    emit: tuple[str, ...] = EMIT_CHOICES
    basis: str = "fitted_mixture"

    def __post_init__(self):
        emit = tuple(self.emit.split(",")) if isinstance(self.emit, str) else tuple(self.emit)
        emit = tuple(e.strip() for e in emit if e.strip())
        bad = set(emit) - set(EMIT_CHOICES)
        if bad:
            raise PipelineError("config", f"unknown emit targets {sorted(bad)}")
        object.__setattr__(self, "emit", emit)
        if not 0.5 < self.alpha < 1:
            raise PipelineError("config", f"alpha must lie in (0.5, 1), got {self.alpha}")
        if not self.penalty_weight > 0:
            raise PipelineError("config", "penalty must be positive")

    @property
    def fit_config(self) -> FitConfig:
        return FitConfig(k2=self.k2, k1=self.k1, max_iters=self.max_iters, rel_tol=self.rel_tol,
                         restarts=self.restarts, seed=self.seed,
                         variance_floor_factor=self.variance_floor_factor)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise PipelineError("config", f"unknown config keys {sorted(unknown)}")
        return cls(**values)

    def echo(self) -> dict:
        """Result-affecting settings; the output location is left out."""
        doc = asdict(self)
        doc["emit"] = list(self.emit)
        del doc["out_dir"]
        return doc


@dataclass
class PipelineReport:
    config: RunConfig
    prices: PriceSeries
    returns: ReturnSeries
    kernel: KernelSpec
    segmentation: SegmentationResult
    fit: FitResult
    risk: RiskReport
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        seg = self.segmentation.segmentation
        dates = [self.returns.timestamps[b].isoformat() for b in seg.breakpoints]
        return {
            "segmentation": {
                "n_breakpoints": len(seg.breakpoints),
                "breakpoints": list(seg.breakpoints),
                "breakpoint_dates": dates,
                "n_returns": seg.series_length,
                "gamma": self.kernel.gamma,
                "penalty_weight": self.segmentation.penalty_weight,
                "total_cost": self.segmentation.total_cost,
                "penalized_objective": self.segmentation.penalized_objective,
            },
            "fit": {
                "log_likelihood": self.fit.log_likelihood,
                "iterations": self.fit.iterations,
                "converged": self.fit.converged,
                "restart_index": self.fit.restart_index,
                "model": self.fit.model.to_dict(),
            },
            "risk": self.risk.to_dict(),
            "diagnostics": dict(self.diagnostics),
            "provenance": {
                "config": self.config.echo(),
                "seed": self.config.seed,
                "tool_version": __version__,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PipelineError:
        raise
    except (ValueError, OSError) as exc:
        raise PipelineError(name, str(exc)) from exc


def segment_returns(returns: ReturnSeries, cfg: RunConfig):
    x = returns.returns
    if len(x) == 0 or np.ptp(x) == 0:
        raise PipelineError("segmentation", "degenerate series: all returns are equal")
    if cfg.gamma is None:
        kernel = _stage("segmentation", median_heuristic_bandwidth, x, seed=cfg.seed)
    else:
        kernel = _stage("segmentation", KernelSpec, cfg.gamma)
    result = _stage("segmentation", detect_changepoints, x, cfg.penalty_weight, kernel,
                    cfg.min_segment_length)
    return kernel, result


def run_pipeline(cfg: RunConfig, write: bool = True) -> PipelineReport:
    if cfg.input is None:
        raise PipelineError("config", "no input file given")
    prices = _stage("load", load_prices, cfg.input)
    returns = _stage("returns", to_log_returns, prices)
    kernel, seg_result = segment_returns(returns, cfg)
    seg = seg_result.segmentation
    fitted = _stage("fit", fit, returns, seg, cfg.fit_config)
    report = _stage("risk", risk_report, fitted.model, cfg.alpha, cfg.basis, returns)

    diagnostics = {}
    two_layer, flattened = [], []
    for t in range(seg.n_segments):
        a, b = one_layer_overestimation_check(fitted.model, t, cfg.alpha)
        two_layer.append(a)
        flattened.append(b)
    diagnostics["two_layer_wvar"] = max(two_layer)
    diagnostics["flattened_wvar"] = max(flattened)
    if len(returns) >= 20:
        diagnostics["empirical_var"] = _stage("risk", empirical_var, returns, cfg.alpha)

    result = PipelineReport(cfg, prices, returns, kernel, seg_result, fitted, report, diagnostics)
    if write:
        _stage("emit", write_outputs, result)
    return result


def write_outputs(rep: PipelineReport) -> list[Path]:
    out = Path(rep.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in rep.config.emit:
        path = out / "report.json"
        path.write_text(rep.to_json(), encoding="utf-8")
        written.append(path)
    if "csv" in rep.config.emit:
        path = out / "segments.csv"
        write_segments_csv(rep.returns, rep.segmentation.segmentation, path)
        written.append(path)
    if "svg" in rep.config.emit:
        path = out / "figure.svg"
        emit_svg(rep.prices, rep.returns, rep.segmentation.segmentation, rep.risk, path)
        written.append(path)
    return written


def write_segments_csv(returns: ReturnSeries, seg: Segmentation, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["breakpoint", "index", "date"])
        for k, b in enumerate(seg.breakpoints, start=1):
            writer.writerow([k, b, returns.timestamps[b].isoformat()])


# -- figure -------------------------------------------------------------

SVG_WIDTH = 900.0
PANEL_HEIGHT = 260.0
MARGIN = 40.0
RISK_STYLE = {"var": "#1f77b4", "wvar": "#d62728", "bvar": "#2ca02c"}


class _Axis:
    """Affine map from data to pixel coordinates (pixel y grows downward)."""

    def __init__(self, lo, hi, top, height):
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.05 * (hi - lo)
        self.lo, self.hi = lo - pad, hi + pad
        self.top, self.height = top, height

    def y(self, v):
        return self.top + self.height * (self.hi - v) / (self.hi - self.lo)

    def value(self, y):
        return self.hi - (y - self.top) * (self.hi - self.lo) / self.height

    def attrs(self):
        return (f'data-ymin="{self.lo!r}" data-ymax="{self.hi!r}" '
                f'data-top="{self.top!r}" data-height="{self.height!r}"')


def _xs(n):
    plot_w = SVG_WIDTH - 2 * MARGIN
    if n <= 1:
        return np.full(n, MARGIN)
    return MARGIN + plot_w * np.arange(n) / (n - 1)


def _polyline(xs, ys, color):
    pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="0.8" points="{pts}"/>'


def emit_svg(prices: PriceSeries, returns: ReturnSeries, seg: Segmentation,
             report: RiskReport, path) -> Path:
    """Price panel with change-point markers over a returns panel with risk lines.

    A breakpoint at return index ``b`` is drawn at price index ``b + 1``,
    the first price of the new segment. Risk lines sit at the negated
    VaR/WVaR/BVaR values.
    """
    if seg.series_length != len(returns):
        raise ValueError("segmentation does not match the return series")
    p = prices.prices
    r = returns.returns
    px = _xs(len(p))
    top1 = MARGIN
    top2 = MARGIN * 2 + PANEL_HEIGHT
    height = top2 + PANEL_HEIGHT + MARGIN
    price_axis = _Axis(float(p.min()), float(p.max()), top1, PANEL_HEIGHT)
    levels = {name: -getattr(report, name) for name in ("var", "wvar", "bvar")}
    lo = min(float(r.min()), *levels.values())
    hi = max(float(r.max()), *levels.values())
    ret_axis = _Axis(lo, hi, top2, PANEL_HEIGHT)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {SVG_WIDTH:.0f} {height:.0f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<g class="price-panel" {price_axis.attrs()}>',
        f'<text x="{MARGIN}" y="{top1 - 10}" font-size="12">price '
        f'({escape(prices.timestamps[0].isoformat())} to {escape(prices.timestamps[-1].isoformat())})</text>',
        _polyline(px, price_axis.y(p), "#333333"),
    ]
    for b in seg.breakpoints:
        x = px[b + 1]
        parts.append(f'<line class="changepoint" data-index="{b}" x1="{x:.3f}" x2="{x:.3f}" '
                     f'y1="{top1:.3f}" y2="{top1 + PANEL_HEIGHT:.3f}" stroke="#ff7f0e" '
                     f'stroke-dasharray="3,3"/>')
    parts.append("</g>")

    parts += [
        f'<g class="returns-panel" {ret_axis.attrs()}>',
        f'<text x="{MARGIN}" y="{top2 - 10}" font-size="12">log returns, alpha={report.alpha:g}</text>',
        _polyline(px[1:], ret_axis.y(r), "#777777"),
    ]
    for name, level in levels.items():
        y = ret_axis.y(level)
        parts.append(f'<line class="risk-line" data-measure="{name}" data-value="{level!r}" '
                     f'x1="{MARGIN:.3f}" x2="{SVG_WIDTH - MARGIN:.3f}" y1="{y:.3f}" y2="{y:.3f}" '
                     f'stroke="{RISK_STYLE[name]}"/>')
        parts.append(f'<text x="{SVG_WIDTH - MARGIN + 2:.3f}" y="{y + 4:.3f}" font-size="10" '
                     f'fill="{RISK_STYLE[name]}">{name}</text>')
    parts += ["</g>", "</svg>"]

    path = Path(path)
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return path


# -- simulation ----------------------------------------------------------

def simulate(model_path, counts=None, seed: int = 0, out=None) -> PriceSeries:
    """Sample returns from a saved model and integrate them into prices from 100."""
    model = _stage("simulate", TwoLayerMixture.load, model_path)
    returns = _stage("simulate", sample, model, seed, counts)
    prices = SIM_START_PRICE * np.exp(np.concatenate([[0.0], np.cumsum(returns.returns)]))
    stamps = tuple(SIM_START + dt.timedelta(days=k) for k in range(len(prices)))
    series = _stage("simulate", PriceSeries, stamps, prices)
    if out is not None:
        _stage("simulate", write_prices, out, stamps, prices)
    return series
