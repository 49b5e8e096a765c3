"""File formats: CSV with '#' metadata headers, JSON manifests, SVG plots, 16-bit PNG.

Everything written here is a deterministic function of its inputs: floats
use the shortest round-trip representation, JSON keys are sorted and no
timestamps are recorded, so identical runs give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1


class MalformedFileError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path, columns: Sequence[str], rows, meta: Optional[dict] = None) -> Path:
    """Write rows under '# key: value' header lines and a column-name row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"schema_version": SCHEMA_VERSION, **(meta or {})}
    buf = io.StringIO()
    for k in sorted(meta):
        val = meta[k]
        val = canonical_json(val) if isinstance(val, (dict, list, tuple)) else fmt(val)
        buf.write(f"# {k}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Return (metadata, column names, rows as strings)."""
    text = Path(path).read_text()
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if sep:
                meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise MalformedFileError(f"{path}: no column header")
    cols, data = [c.strip() for c in rows[0]], rows[1:]
    for i, r in enumerate(data):
        if len(r) != len(cols):
            raise MalformedFileError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(cols)}")
    return meta, cols, data


def numeric_columns(path, required: Sequence[str], optional: Sequence[str] = ()) -> tuple[dict, dict]:
    """Read named float columns; missing required columns or bad numbers raise."""
    meta, cols, data = read_csv(path)
    out = {}
    for name in list(required) + list(optional):
        if name not in cols:
            if name in required:
                raise MalformedFileError(f"{path}: missing column {name!r}")
            continue
        j = cols.index(name)
        try:
            out[name] = np.array([float(r[j]) for r in data])
        except ValueError as exc:
            raise MalformedFileError(f"{path}: column {name!r}: {exc}") from None
    return meta, out


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: {exc}") from None


# -- images --------------------------------------------------------------------


def write_png16(path, counts, meta: Optional[dict] = None) -> Path:
    """Counts as a 16-bit grayscale PNG (clipped to 0..65535)."""
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.clip(np.rint(np.asarray(counts, dtype=float)), 0, 65535).astype(np.uint16)
    info = PngInfo()
    for k, v in sorted({"schema_version": SCHEMA_VERSION, **(meta or {})}.items()):
        info.add_text(k, canonical_json(v) if isinstance(v, (dict, list, tuple)) else fmt(v))
    Image.fromarray(a).save(path, pnginfo=info)
    return path


def read_png16(path) -> tuple[np.ndarray, dict]:
    from PIL import Image

    with Image.open(path) as im:
        a = np.array(im, dtype=float)
        meta = dict(getattr(im, "text", {}) or {})
    return a, meta


# -- SVG -----------------------------------------------------------------------

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def nice_ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    if not hi > lo:
        return np.array([lo])
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    return np.arange(math.ceil(lo / step), math.floor(hi / step) + 1) * step


def _num(v: float) -> str:
    return f"{v:.2f}"


class SvgPlot:
    """Minimal line/band/polyline plot rendered to a standalone SVG string."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 420):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.layers = []

    def line(self, x, y, color=None, width=1.5, dash=None, label=None):
        self.layers.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, dash, label))

    def band(self, x, lo, hi, color=None, opacity=0.25):
        self.layers.append(("band", np.asarray(x, float), np.asarray(lo, float), np.asarray(hi, float),
                            color, opacity))

    def points(self, x, y, color=None, r=2.5, label=None):
        self.layers.append(("points", np.asarray(x, float), np.asarray(y, float), color, r, label))

    def _bounds(self):
        xs, ys = [], []
        for layer in self.layers:
            if layer[0] == "band":
                xs.append(layer[1])
                ys += [layer[2], layer[3]]
            else:
                xs.append(layer[1])
                ys.append(layer[2])
        x = np.concatenate(xs) if xs else np.zeros(1)
        y = np.concatenate(ys) if ys else np.zeros(1)
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        if x.size == 0:
            x = np.zeros(1)
        if y.size == 0:
            y = np.zeros(1)
        x0, x1, y0, y1 = float(x.min()), float(x.max()), float(y.min()), float(y.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        W, H = self.width, self.height
        ml, mr, mt, mb = 70, 20, 30, 50
        x0, x1, y0, y1 = self._bounds()
        pw, ph = W - ml - mr, H - mt - mb

        def px(v):
            return ml + (v - x0) / (x1 - x0) * pw

        def py(v):
            return mt + ph - (v - y0) / (y1 - y0) * ph

        def path(x, y):
            # NaN breaks the path into pieces
            parts, cur = [], []
            for a, b in zip(x, y):
                if math.isfinite(a) and math.isfinite(b):
                    cur.append(f"{_num(px(a))},{_num(py(b))}")
                elif cur:
                    parts.append(cur)
                    cur = []
            if cur:
                parts.append(cur)
            return " ".join("M" + " L".join(p) for p in parts)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
               f'font-family="sans-serif" font-size="11">',
               f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>']
        if self.title:
            out.append(f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(self.title)}</text>')
        out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        for t in nice_ticks(x0, x1):
            out.append(f'<line x1="{_num(px(t))}" y1="{mt + ph}" x2="{_num(px(t))}" y2="{mt + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{_num(px(t))}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
        for t in nice_ticks(y0, y1):
            out.append(f'<line x1="{ml - 4}" y1="{_num(py(t))}" x2="{ml}" y2="{_num(py(t))}" stroke="black"/>')
            out.append(f'<text x="{ml - 6}" y="{_num(py(t) + 4)}" text-anchor="end">{t:.4g}</text>')
        if self.xlabel:
            out.append(f'<text x="{ml + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{_esc(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                       f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(self.ylabel)}</text>')
        out.append(f'<clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/></clipPath>')
        out.append('<g clip-path="url(#plot)">')
        legend = []
        for n, layer in enumerate(self.layers):
            kind = layer[0]
            if kind == "band":
                _, x, lo, hi, color, op = layer
                color = color or PALETTE[n % len(PALETTE)]
                ok = np.isfinite(lo) & np.isfinite(hi)
                if np.any(ok):
                    pts = [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x[ok], hi[ok])]
                    pts += [f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x[ok][::-1], lo[ok][::-1])]
                    out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="{op}" stroke="none"/>')
            elif kind == "line":
                _, x, y, color, width, dash, label = layer
                color = color or PALETTE[n % len(PALETTE)]
                d = path(x, y)
                if d:
                    extra = f' stroke-dasharray="{dash}"' if dash else ""
                    out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>')
                if label:
                    legend.append((label, color))
            else:
                _, x, y, color, r, label = layer
                color = color or PALETTE[n % len(PALETTE)]
                for a, b in zip(x, y):
                    if math.isfinite(a) and math.isfinite(b):
                        out.append(f'<circle cx="{_num(px(a))}" cy="{_num(py(b))}" r="{r}" fill="{color}"/>')
                if label:
                    legend.append((label, color))
        out.append("</g>")
        for i, (label, color) in enumerate(legend):
            yy = mt + 14 + 14 * i
            out.append(f'<line x1="{ml + pw - 120}" y1="{yy - 4}" x2="{ml + pw - 100}" y2="{yy - 4}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{ml + pw - 95}" y="{yy}">{_esc(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render())
        return path


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
