"""Attribution heatmaps (SVG) and metric reports (JSON plus text)."""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeMismatch
from .metrics import EvalReport

PANEL_NAMES = ("V", "AP", "ML")
WHITE = np.array([255.0, 255.0, 255.0])
DEEP_RED = np.array([139.0, 0.0, 0.0])

_W, _H, _MARGIN, _GAP = 640, 150, 50, 30


def attribution_color(value: float, vmax: float) -> str:
    """Hex colour on the white to deep-red scale over ``[0, vmax]``."""
    frac = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    rgb = np.rint(WHITE + frac * (DEEP_RED - WHITE)).astype(int)
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_heatmap(aggregate, curves, anchors: Sequence[float] = (0.0,),
                   title: Optional[str] = None) -> str:
    """SVG with one panel per axis (V, AP, ML).

    Each panel draws the mean acceleration curve as a chain of short
    segments, one per sample, coloured by that sample's mean |SHAP| value.
    ``anchors`` are times (in samples) of heel contacts; the first one is
    drawn as the left heel contact reference line, later ones dashed.
    """
    agg = np.asarray(aggregate, dtype=np.float64)
    cur = np.asarray(curves, dtype=np.float64)
    if agg.ndim != 2 or agg.shape[1] != 3 or cur.shape != agg.shape:
        raise ShapeMismatch(f"aggregate {agg.shape} and curves {cur.shape} must both be (time, 3)")
    T = agg.shape[0]
    vmax = float(agg.max()) if agg.size else 0.0
    vmax = max(vmax, 0.0)
    height = _MARGIN + 3 * (_H + _GAP) + 60
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(_W + 2 * _MARGIN),
                     height=str(height), viewBox=f"0 0 {_W + 2 * _MARGIN} {height}")
    if title:
        ET.SubElement(svg, "title").text = title

    def x_of(t):
        return _MARGIN + (t / max(T - 1, 1)) * _W

    for a, name in enumerate(PANEL_NAMES):
        top = _MARGIN + a * (_H + _GAP)
        g = ET.SubElement(svg, "g", {"class": "panel", "id": f"panel-{name.lower()}"})
        label = ET.SubElement(g, "text", x=str(_MARGIN - 40), y=f"{top + _H / 2:.1f}")
        label.text = name
        ET.SubElement(g, "rect", x=str(_MARGIN), y=str(top), width=str(_W), height=str(_H),
                      fill="none", stroke="#999999")
        y = cur[:, a]
        lo, hi = float(y.min()), float(y.max())
        span = hi - lo if hi > lo else 1.0

        def y_of(v):
            return top + _H - 5 - (v - lo) / span * (_H - 10)

        xs = np.array([x_of(t) for t in range(T)])
        ys = np.array([y_of(v) for v in y])
        # sample t covers the half-way points to its neighbours
        mid_x = np.r_[xs[0], (xs[:-1] + xs[1:]) / 2, xs[-1]]
        mid_y = np.r_[ys[0], (ys[:-1] + ys[1:]) / 2, ys[-1]]
        curve = ET.SubElement(g, "g", {"class": "curve"})
        for t in range(T):
            pts = f"{mid_x[t]:.2f},{mid_y[t]:.2f} {xs[t]:.2f},{ys[t]:.2f} {mid_x[t + 1]:.2f},{mid_y[t + 1]:.2f}"
            ET.SubElement(curve, "polyline", {"points": pts, "fill": "none", "stroke-width": "3",
                                               "stroke": attribution_color(agg[t, a], vmax),
                                               "data-sample": str(t)})
        for k, anchor in enumerate(anchors):
            ax = f"{x_of(float(anchor)):.2f}"
            attrs = {"x1": ax, "x2": ax, "y1": str(top), "y2": str(top + _H), "stroke": "#000000",
                     "class": "anchor"}
            if k:
                attrs["stroke-dasharray"] = "4,3"
            ET.SubElement(g, "line", attrs)
            if a == 0:
                txt = ET.SubElement(g, "text", x=str(float(ax) + 3), y=str(top - 5))
                txt.text = "left heel contact" if k == 0 else "right heel contact"

    # colour scale legend
    legend_top = _MARGIN + 3 * (_H + _GAP)
    leg = ET.SubElement(svg, "g", {"class": "legend"})
    defs = ET.SubElement(leg, "defs")
    grad = ET.SubElement(defs, "linearGradient", id="shap-scale")
    ET.SubElement(grad, "stop", {"offset": "0", "stop-color": attribution_color(0, 1)})
    ET.SubElement(grad, "stop", {"offset": "1", "stop-color": attribution_color(1, 1)})
    ET.SubElement(leg, "rect", x=str(_MARGIN), y=str(legend_top), width="200", height="12",
                  fill="url(#shap-scale)", stroke="#999999")
    ET.SubElement(leg, "text", x=str(_MARGIN), y=str(legend_top + 28)).text = "0"
    ET.SubElement(leg, "text", x=str(_MARGIN + 200), y=str(legend_top + 28)).text = f"{vmax:.3g}"
    ET.SubElement(leg, "text", x=str(_MARGIN + 220), y=str(legend_top + 11)).text = "mean |SHAP|"
    return ET.tostring(svg, encoding="unicode")


def save_heatmap(path, aggregate, curves, anchors=(0.0,), title=None) -> None:
    Path(path).write_text(render_heatmap(aggregate, curves, anchors, title))


def _pct(x: float) -> str:
    return f"{100 * x:.1f}%"


def format_metrics_row(accuracy: float, precision: float, recall: float, f1: float,
                       auc: float) -> str:
    """``81.4% 82.7% 76.3% 79.3% 0.89`` style row."""
    if any(math.isnan(v) for v in (accuracy, precision, recall, f1, auc)):
        raise ValueError("metrics must be numbers")
    return " ".join([_pct(accuracy), _pct(precision), _pct(recall), _pct(f1), f"{auc:.2f}"])


def write_report(report: EvalReport, trials, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` and ``<path>.txt``; returns both paths.

    ``trials`` is a list of hyperparameter-search trials (possibly empty).
    """
    base = Path(path)
    if base.suffix in (".json", ".txt"):
        base = base.with_suffix("")
    trials = list(trials or [])
    doc = {"evaluation": report.to_dict(), "trials": [t.to_json() for t in trials]}
    json_path, txt_path = base.with_suffix(".json"), base.with_suffix(".txt")
    json_path.write_text(json.dumps(doc, indent=2))

    lines = ["Accuracy Precision Recall F1 AUC",
             format_metrics_row(report.accuracy, report.precision, report.recall, report.f1,
                                report.auc),
             "",
             "tp={tp} fp={fp} tn={tn} fn={fn}".format(**vars(report.confusion))]
    if trials:
        lines += ["", "trial objective duration_s config"]
        for t in trials:
            obj = "failed" if not math.isfinite(t.objective) else f"{t.objective:.4f}"
            lines.append(f"{t.trial_index} {obj} {t.duration_s:.2f} "
                         f"{json.dumps(t.config, sort_keys=True)}")
    txt_path.write_text("\n".join(lines) + "\n")
    return json_path, txt_path


def read_report(path) -> tuple[EvalReport, list]:
    from .hyperopt import Trial

    doc = json.loads(Path(path).read_text())
    return EvalReport.from_dict(doc["evaluation"]), [Trial.from_json(t) for t in doc["trials"]]
