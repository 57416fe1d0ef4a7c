"""Minimal static SVG plots written as text."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

PALETTE = ("#1f4e79", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class SvgPlot:
    def __init__(self, xlim, ylim, width=640, height=480, margin=60, title="", xlabel="", ylabel="", logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.xlim = tuple(np.log10(xlim) if logx else xlim)
        self.ylim = tuple(np.log10(ylim) if logy else ylim)
        if self.xlim[0] == self.xlim[1]:
            self.xlim = (self.xlim[0] - 0.5, self.xlim[1] + 0.5)
        if self.ylim[0] == self.ylim[1]:
            self.ylim = (self.ylim[0] - 0.5, self.ylim[1] + 0.5)
        self.w, self.h, self.m = width, height, margin
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.items = []
        self.legend = []

    def _px(self, x, y):
        x = np.log10(x) if self.logx else np.asarray(x, dtype=float)
        y = np.log10(y) if self.logy else np.asarray(y, dtype=float)
        X = self.m + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (self.w - 2 * self.m)
        Y = self.h - self.m - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (self.h - 2 * self.m)
        return X, Y

    def polyline(self, x, y, color=None, width=1.2, label=None, dash=None):
        color = color or PALETTE[len(self.legend) % len(PALETTE)]
        X, Y = self._px(x, y)
        ok = np.isfinite(X) & np.isfinite(Y)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X[ok], Y[ok]))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} points="{pts}"/>')
        if label:
            self.legend.append((label, color))

    def markers(self, x, y, color=None, r=3.0, label=None):
        color = color or PALETTE[len(self.legend) % len(PALETTE)]
        X, Y = self._px(x, y)
        for a, b in zip(np.atleast_1d(X), np.atleast_1d(Y)):
            if np.isfinite(a) and np.isfinite(b):
                self.items.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" fill="{color}"/>')
        if label:
            self.legend.append((label, color))

    def contours(self, X, Y, Z, levels: Iterable[float], color="#999999", width=0.8):
        import contourpy

        gen = contourpy.contour_generator(X, Y, Z)
        for lev in levels:
            for seg in gen.lines(lev):
                self.polyline(seg[:, 0], seg[:, 1], color=color, width=width, dash="4,3")

    def _axes(self):
        out = []
        x0, x1 = self.m, self.w - self.m
        y0, y1 = self.h - self.m, self.m
        out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#000"/>')
        for k in range(5):
            fx = self.xlim[0] + k / 4 * (self.xlim[1] - self.xlim[0])
            fy = self.ylim[0] + k / 4 * (self.ylim[1] - self.ylim[0])
            px = x0 + k / 4 * (x1 - x0)
            py = y0 - k / 4 * (y0 - y1)
            lx = _fmt(10**fx) if self.logx else _fmt(fx)
            ly = _fmt(10**fy) if self.logy else _fmt(fy)
            out.append(f'<text x="{_fmt(px)}" y="{y0 + 18}" font-size="11" text-anchor="middle">{lx}</text>')
            out.append(f'<text x="{x0 - 6}" y="{_fmt(py + 4)}" font-size="11" text-anchor="end">{ly}</text>')
        out.append(f'<text x="{self.w / 2}" y="{self.m / 2}" font-size="14" text-anchor="middle">{_esc(self.title)}</text>')
        out.append(f'<text x="{self.w / 2}" y="{self.h - 12}" font-size="12" text-anchor="middle">{_esc(self.xlabel)}</text>')
        out.append(
            f'<text x="16" y="{self.h / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {self.h / 2})">{_esc(self.ylabel)}</text>'
        )
        for i, (lab, col) in enumerate(self.legend):
            yy = self.m + 16 + 16 * i
            out.append(f'<line x1="{x1 - 130}" y1="{yy - 4}" x2="{x1 - 110}" y2="{yy - 4}" stroke="{col}" stroke-width="2"/>')
            out.append(f'<text x="{x1 - 104}" y="{yy}" font-size="11">{_esc(lab)}</text>')
        return out

    def render(self) -> str:
        head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" viewBox="0 0 {self.w} {self.h}">'
        clip = (
            f'<clipPath id="c"><rect x="{self.m}" y="{self.m}" width="{self.w - 2 * self.m}" height="{self.h - 2 * self.m}"/></clipPath>'
        )
        body = "\n".join(self.items)
        return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', clip, f'<g clip-path="url(#c)">', body, "</g>", *self._axes(), "</svg>\n"])


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def padded(lo, hi, frac=0.05):
    d = (hi - lo) * frac or 1.0
    return lo - d, hi + d
