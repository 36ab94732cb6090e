"""Result bundles and their on-disk forms: report.json, bands.csv, checks.txt, SVG."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__


class IoFailure(OSError):
    pass


def jsonable(obj):
    """Recursively convert results into plain JSON values; non-finite floats become None."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if hasattr(obj, "passed") and "passed" not in out:
            out["passed"] = bool(obj.passed)
        return out
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@dataclass
class ResultBundle:
    tool_version: str
    input_sha256: str
    input_path: str
    config: dict
    spec: dict
    connectivity: dict | None = None
    normalization_shift: float | None = None
    band_structure: dict | None = None
    guided: dict | None = None
    mu: dict | None = None
    delta_profile: dict | None = None
    reports: list = field(default_factory=list)
    created: str = ""

    def to_json(self) -> str:
        return json.dumps(jsonable(self), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ResultBundle:
        data = json.loads(text)
        data.pop("passed", None)
        return cls(**data)

    @property
    def all_passed(self) -> bool:
        return all(r.get("passed", True) for r in self.reports if not r.get("informational"))


def new_bundle(spec_dict: dict, sha: str, path: str, config: dict) -> ResultBundle:
    return ResultBundle(tool_version=__version__, input_sha256=sha, input_path=str(path),
                        config=jsonable(config), spec=jsonable(spec_dict))


def _g(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def bands_csv(bundle: ResultBundle) -> str:
    dim = int(bundle.spec["dim_total"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["kind"] + [f"theta_{i + 1}" for i in range(dim)] + ["j", "value"])
    if bundle.band_structure:
        for pt, row in zip(bundle.band_structure["points"], bundle.band_structure["branches"]):
            for j, val in enumerate(row):
                w.writerow(["h0"] + [_g(x) for x in pt] + [j + 1, _g(val)])
    if bundle.guided:
        for pt, row in zip(bundle.guided["points"], bundle.guided["curves"]):
            for j, val in enumerate(row):
                if val is None:
                    continue
                pad = [""] * (dim - len(pt))
                w.writerow(["guided"] + [_g(x) for x in pt] + pad + [j + 1, _g(val)])
    return buf.getvalue()


def checks_text(bundle: ResultBundle) -> str:
    lines = []
    for rep in bundle.reports:
        head = "PASS" if rep["passed"] else "FAIL"
        if rep.get("informational"):
            head = "INFO"
        lines.append(f"[{head}] {rep['theorem']}")
        for r in rep["records"]:
            margin = "n/a" if r["margin"] is None else format(r["margin"], ".6e")
            lines.append(f"  j={r['j']} claimed={r['claimed']} computed={r['computed']} margin={margin} "
                         f"{r['status']} {'ok' if r['passed'] else 'FAILED'}" + (f" ({r['notes']})" if r["notes"] else ""))
        lines.extend(f"  note: {n}" for n in rep["notes"])
    return "\n".join(lines) + "\n"


def write_report(bundle: ResultBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {"report.json": bundle.to_json(), "bands.csv": bands_csv(bundle), "checks.txt": checks_text(bundle)}
        paths = []
        for name, text in files.items():
            p = out / name
            with open(p, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            paths.append(p)
    except OSError as exc:
        raise IoFailure(f"cannot write report to {out}: {exc}") from exc
    return paths


# --------------------------------------------------------------------- SVG

_W, _H, _PAD = 640, 480, 60


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_document(bundle: ResultBundle) -> str | None:
    """Band diagram for one or two guided dimensions; None otherwise."""
    d = int(bundle.spec["dim_guided"])
    if d not in (1, 2):
        return None
    h0 = bundle.band_structure["bands"] if bundle.band_structure else []
    g = bundle.guided or {"points": [], "curves": []}
    pts = np.array(g["points"], dtype=float).reshape(-1, d) if g["points"] else np.zeros((0, d))
    curves = np.array([[np.nan if v is None else v for v in row] for row in g["curves"]], dtype=float)
    curves = curves.reshape(len(pts), -1) if len(pts) else np.zeros((0, 0))
    vals = [x for b in h0 for x in b] + [0.0] + [float(v) for v in curves[np.isfinite(curves)]]
    ymin, ymax = min(vals), max(vals)
    span = ymax - ymin or 1.0
    ymin, ymax = ymin - 0.05 * span, ymax + 0.05 * span

    def X(t):
        return _PAD + (t + np.pi) / (2 * np.pi) * (_W - 2 * _PAD)

    def Y(e):
        return _H - _PAD - (e - ymin) / (ymax - ymin) * (_H - 2 * _PAD)

    parts = [f'<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{_H}" '
             f'viewBox="0 0 {_W} {_H}">',
             f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']
    for a, b in h0:
        y0, y1 = Y(b), Y(a)
        parts.append(f'<rect x="{X(-np.pi):.3f}" y="{y0:.3f}" width="{X(np.pi) - X(-np.pi):.3f}" '
                     f'height="{max(y1 - y0, 0.5):.3f}" fill="#9ecae1" fill-opacity="0.5"/>')
    parts.append(f'<line x1="{X(-np.pi):.3f}" y1="{Y(0):.3f}" x2="{X(np.pi):.3f}" y2="{Y(0):.3f}" '
                 f'stroke="black" stroke-dasharray="6,4"/>')
    colors = ["#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"]
    if d == 1 and len(pts):
        order = np.argsort(pts[:, 0])
        for j in range(curves.shape[1]):
            seg = []
            for i in order:
                v = curves[i, j]
                if np.isfinite(v):
                    seg.append(f"{X(pts[i, 0]):.3f},{Y(v):.3f}")
                elif seg:
                    parts.append(_polyline(seg, colors[j % len(colors)]))
                    seg = []
            if seg:
                parts.append(_polyline(seg, colors[j % len(colors)]))
    elif d == 2 and len(pts):
        # project onto theta_1: one min/max bar per column and band
        for j in range(curves.shape[1]):
            for t1 in np.unique(pts[:, 0]):
                col = curves[pts[:, 0] == t1, j]
                col = col[np.isfinite(col)]
                if len(col):
                    parts.append(f'<line x1="{X(t1):.3f}" y1="{Y(col.max()):.3f}" x2="{X(t1):.3f}" '
                                 f'y2="{Y(col.min()):.3f}" stroke="{colors[j % len(colors)]}" stroke-width="3" '
                                 f'stroke-opacity="0.7"/>')
    x0, x1, yb, yt = X(-np.pi), X(np.pi), Y(ymin), Y(ymax)
    parts += [f'<line x1="{x0:.3f}" y1="{yb:.3f}" x2="{x1:.3f}" y2="{yb:.3f}" stroke="black"/>',
              f'<line x1="{x0:.3f}" y1="{yb:.3f}" x2="{x0:.3f}" y2="{yt:.3f}" stroke="black"/>',
              f'<text x="{(x0 + x1) / 2:.3f}" y="{_H - 15}" text-anchor="middle" font-size="14">'
              f'{"theta" if d == 1 else "theta_1 (range over theta_2)"}</text>',
              f'<text x="18" y="{(yb + yt) / 2:.3f}" text-anchor="middle" font-size="14" '
              f'transform="rotate(-90 18 {(yb + yt) / 2:.3f})">energy</text>',
              f'<text x="{x0:.3f}" y="{yb + 18:.3f}" text-anchor="middle" font-size="12">-pi</text>',
              f'<text x="{x1:.3f}" y="{yb + 18:.3f}" text-anchor="middle" font-size="12">pi</text>',
              f'<text x="{x0 - 6:.3f}" y="{yb:.3f}" text-anchor="end" font-size="12">{ymin:.3g}</text>',
              f'<text x="{x0 - 6:.3f}" y="{yt + 4:.3f}" text-anchor="end" font-size="12">{ymax:.3g}</text>',
              f'<text x="{_W / 2:.3f}" y="24" text-anchor="middle" font-size="14">'
              f'{_esc(Path(bundle.input_path).name)}: guided bands</text>',
              "</svg>"]
    return "\n".join(parts) + "\n"


def _polyline(seg, color):
    return f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(seg)}"/>'


def render_svg(bundle: ResultBundle, out_dir) -> Path | None:
    doc = svg_document(bundle)
    if doc is None:
        return None
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "bands.svg"
        path.write_text(doc, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write SVG to {out}: {exc}") from exc
    return path
