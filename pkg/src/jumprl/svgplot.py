"""Tiny dependency-free SVG plotting: line plots with confidence bands,
scatter plots, and bar charts. Enough to mirror the evaluation figures."""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


class SvgFigure:
    def __init__(self, title="", xlabel="", ylabel="", width=640, height=420):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.width = width
        self.height = height
        self.margin = dict(left=64, right=16, top=36, bottom=46)
        self._series = []  # (kind, payload, label, color)

    def line(self, x, y, label="", color=None):
        self._series.append(("line", (np.asarray(x, float), np.asarray(y, float)), label, color))
        return self

    def band(self, x, lo, hi, label="", color=None):
        payload = (np.asarray(x, float), np.asarray(lo, float), np.asarray(hi, float))
        self._series.append(("band", payload, label, color))
        return self

    def scatter(self, x, y, label="", color=None):
        self._series.append(("scatter", (np.asarray(x, float), np.asarray(y, float)), label, color))
        return self

    def bars(self, labels, values, label="", color=None):
        self._series.append(("bars", (list(labels), np.asarray(values, float)), label, color))
        return self

    # -- rendering -----------------------------------------------------------

    def _data_range(self):
        xs, ys = [], []
        for kind, payload, _, _ in self._series:
            if kind == "bars":
                ys.append(payload[1])
                xs.append(np.arange(len(payload[0]) + 1, dtype=float))
            elif kind == "band":
                xs.append(payload[0])
                ys.append(payload[1])
                ys.append(payload[2])
            else:
                xs.append(payload[0])
                ys.append(payload[1])
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x = np.concatenate([np.asarray(v).ravel() for v in xs])
        y = np.concatenate([np.asarray(v).ravel() for v in ys])
        x = x[np.isfinite(x)]
        y = y[np.isfinite(y)]
        if x.size == 0 or y.size == 0:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = float(y.min()), float(y.max())
        if x0 == x1:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y0 == y1:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def _ticks(self, lo, hi, n=5):
        span = hi - lo
        if span <= 0 or not np.isfinite(span):
            return [lo]
        raw = span / n
        mag = 10.0 ** np.floor(np.log10(raw))
        step = min(
            (m * mag for m in (1, 2, 5, 10)),
            key=lambda s: abs(span / s - n),
        )
        first = np.ceil(lo / step) * step
        return list(np.arange(first, hi + 0.5 * step, step))

    def render(self):
        x0, x1, y0, y1 = self._data_range()
        m = self.margin
        pw = self.width - m["left"] - m["right"]
        ph = self.height - m["top"] - m["bottom"]

        def sx(x):
            return m["left"] + (x - x0) / (x1 - x0) * pw

        def sy(y):
            return m["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
            f'<text x="{self.width / 2:.0f}" y="20" text-anchor="middle" '
            f'font-size="14" font-family="sans-serif">{self.title}</text>',
        ]
        # axes and ticks
        parts.append(
            f'<rect x="{m["left"]}" y="{m["top"]}" width="{pw}" height="{ph}" '
            f'fill="none" stroke="#333"/>'
        )
        for tx in self._ticks(x0, x1):
            parts.append(
                f'<line x1="{sx(tx):.1f}" y1="{m["top"] + ph}" x2="{sx(tx):.1f}" '
                f'y2="{m["top"] + ph + 4}" stroke="#333"/>'
                f'<text x="{sx(tx):.1f}" y="{m["top"] + ph + 16}" text-anchor="middle" '
                f'font-size="10" font-family="sans-serif">{tx:g}</text>'
            )
        for ty in self._ticks(y0, y1):
            parts.append(
                f'<line x1="{m["left"] - 4}" y1="{sy(ty):.1f}" x2="{m["left"]}" '
                f'y2="{sy(ty):.1f}" stroke="#333"/>'
                f'<text x="{m["left"] - 7}" y="{sy(ty) + 3:.1f}" text-anchor="end" '
                f'font-size="10" font-family="sans-serif">{ty:g}</text>'
            )
        parts.append(
            f'<text x="{m["left"] + pw / 2:.0f}" y="{self.height - 8}" text-anchor="middle" '
            f'font-size="12" font-family="sans-serif">{self.xlabel}</text>'
        )
        parts.append(
            f'<text x="14" y="{m["top"] + ph / 2:.0f}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif" transform="rotate(-90 14 {m["top"] + ph / 2:.0f})">'
            f"{self.ylabel}</text>"
        )

        legend_y = m["top"] + 6
        for idx, (kind, payload, label, color) in enumerate(self._series):
            col = color or PALETTE[idx % len(PALETTE)]
            if kind == "band":
                x, lo, hi = payload
                ok = np.isfinite(lo) & np.isfinite(hi)
                pts = [f"{sx(v):.1f},{sy(w):.1f}" for v, w in zip(x[ok], hi[ok])]
                pts += [f"{sx(v):.1f},{sy(w):.1f}" for v, w in zip(x[ok][::-1], lo[ok][::-1])]
                parts.append(
                    f'<polygon points="{" ".join(pts)}" fill="{col}" opacity="0.18"/>'
                )
            elif kind == "line":
                x, y = payload
                ok = np.isfinite(y)
                pts = " ".join(f"{sx(v):.1f},{sy(w):.1f}" for v, w in zip(x[ok], y[ok]))
                parts.append(
                    f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.6"/>'
                )
                for v, w in zip(x[ok], y[ok]):
                    parts.append(f'<circle cx="{sx(v):.1f}" cy="{sy(w):.1f}" r="2.2" fill="{col}"/>')
            elif kind == "scatter":
                x, y = payload
                ok = np.isfinite(y)
                for v, w in zip(x[ok], y[ok]):
                    parts.append(
                        f'<circle cx="{sx(v):.1f}" cy="{sy(w):.1f}" r="1.8" fill="{col}" opacity="0.55"/>'
                    )
            elif kind == "bars":
                labels, values = payload
                n = len(labels)
                for j, (lab, val) in enumerate(zip(labels, values)):
                    bx0 = sx(j + 0.15)
                    bx1 = sx(j + 0.85)
                    parts.append(
                        f'<rect x="{bx0:.1f}" y="{sy(val):.1f}" width="{bx1 - bx0:.1f}" '
                        f'height="{sy(max(y0, 0.0)) - sy(val):.1f}" fill="{col}" opacity="0.8"/>'
                        f'<text x="{(bx0 + bx1) / 2:.1f}" y="{m["top"] + ph + 16}" '
                        f'text-anchor="middle" font-size="10" font-family="sans-serif">{lab}</text>'
                    )
            if label:
                ly = legend_y + 14 * sum(1 for s in self._series[:idx] if s[2])
                parts.append(
                    f'<rect x="{m["left"] + pw - 130}" y="{ly}" width="12" height="4" fill="{col}"/>'
                    f'<text x="{m["left"] + pw - 114}" y="{ly + 6}" font-size="11" '
                    f'font-family="sans-serif">{label}</text>'
                )
        parts.append("</svg>")
        return "\n".join(parts)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.render())
        return path
