"""Standalone SVG renderings with CSV twins of the plotted numbers.

Output is byte-deterministic: coordinates use fixed two-decimal formatting,
CSV values use ``repr``, and nothing depends on time or environment.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .env import GridAction, GridSpec, enumerate_transitions
from .errors import InputError
from .rewards import TabularReward

CELL = 40
MARGIN = 10
LEGEND_H = 46
FONT = 'font-family="sans-serif"'

NEG_COLOR = (33, 102, 172)
ZERO_COLOR = (247, 247, 247)
POS_COLOR = (178, 24, 43)
SEPARATOR_COLOR = "#999999"

WALL_NOTE = "moves into a wall are drawn as that cell's self-transition"


def fmt(x: float) -> str:
    return f"{x:.2f}"


@dataclass
class SvgDoc:
    """An SVG fragment of known size plus the CSV twin of its data."""

    width: float
    height: float
    body: str
    csv: str | None = None
    kind: str = "svg"
    meta: dict = field(default_factory=dict)

    def to_svg(self) -> str:
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{fmt(self.width)}" '
            f'height="{fmt(self.height)}" viewBox="0 0 {fmt(self.width)} {fmt(self.height)}">\n'
            f"{self.body}</svg>\n"
        )

    def nested(self, x: float, y: float) -> str:
        return (
            f'<svg x="{fmt(x)}" y="{fmt(y)}" width="{fmt(self.width)}" height="{fmt(self.height)}">\n'
            f"{self.body}</svg>\n"
        )


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- colour scale ------------------------------------------------------------


def scale_limit(lo: float, hi: float) -> float:
    """Half-width of the zero-centred colour range covering ``[lo, hi]``."""
    return max(abs(lo), abs(hi))


def color_position(value: float, lo: float, hi: float) -> float:
    """Position in ``[0, 1]`` on the diverging scale; 0.5 is zero."""
    m = scale_limit(lo, hi)
    if m == 0:
        return 0.5
    return float(np.clip(0.5 + 0.5 * value / m, 0.0, 1.0))


def color(value: float, lo: float, hi: float) -> str:
    t = color_position(value, lo, hi)
    if t >= 0.5:
        a, b, w = ZERO_COLOR, POS_COLOR, 2 * t - 1
    else:
        a, b, w = ZERO_COLOR, NEG_COLOR, 1 - 2 * t
    rgb = [round(ca + (cb - ca) * w) for ca, cb in zip(a, b)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def shared_scale(rewards: Sequence[TabularReward]) -> tuple[float, float]:
    return (min(float(r.values.min()) for r in rewards), max(float(r.values.max()) for r in rewards))


def _legend(x: float, y: float, width: float, lo: float, hi: float, note: str | None) -> str:
    n = 20
    seg = width / n
    m = scale_limit(lo, hi)
    parts = []
    for k in range(n):
        v = -m + 2 * m * (k + 0.5) / n
        parts.append(
            f'<rect x="{fmt(x + k * seg)}" y="{fmt(y)}" width="{fmt(seg)}" height="10" fill="{color(v, lo, hi)}"/>\n'
        )
    parts.append(f'<text x="{fmt(x)}" y="{fmt(y + 22)}" font-size="10" {FONT}>min {lo:.4g}</text>\n')
    parts.append(
        f'<text x="{fmt(x + width)}" y="{fmt(y + 22)}" font-size="10" text-anchor="end" {FONT}>max {hi:.4g}</text>\n'
    )
    if note:
        parts.append(f'<text x="{fmt(x)}" y="{fmt(y + 34)}" font-size="8" {FONT}>{escape(note)}</text>\n')
    return "".join(parts)


# --- gridworld heatmap -------------------------------------------------------


def _triangle(a: GridAction, left: float, top: float, size: float) -> list[tuple[float, float]]:
    cx, cy = left + size / 2, top + size / 2
    right, bottom = left + size, top + size
    return {
        GridAction.UP: [(cx, cy), (left, top), (right, top)],
        GridAction.DOWN: [(cx, cy), (right, bottom), (left, bottom)],
        GridAction.LEFT: [(cx, cy), (left, bottom), (left, top)],
        GridAction.RIGHT: [(cx, cy), (right, top), (right, bottom)],
    }[a]


def render_grid_heatmap(
    r: TabularReward, spec: GridSpec, scale: tuple[float, float] | None = None, note: str | None = WALL_NOTE
) -> SvgDoc:
    """Five glyphs per cell: a centre circle for Stay and a triangle per move.

    ``scale`` fixes the legend bounds (shared across panels); ``None`` uses
    the data range.  Colours diverge from white at zero.
    """
    if (r.spec.width, r.spec.height) != (spec.width, spec.height):
        raise InputError("reward table does not match the grid")
    values = np.asarray(r.values, dtype=float)
    if values.shape != (spec.n_states, len(GridAction)) or not np.all(np.isfinite(values)):
        raise InputError("reward table is incomplete")
    lo, hi = scale if scale is not None else (float(values.min()), float(values.max()))
    if lo > hi:
        raise InputError("scale minimum exceeds maximum")
    if values.min() < lo - 1e-12 or values.max() > hi + 1e-12:
        raise InputError("scale does not cover the data range")

    parts = []
    for s in range(spec.n_states):
        x, y = spec.cell(s)
        left = MARGIN + x * CELL
        top = MARGIN + (spec.height - 1 - y) * CELL
        for a in (GridAction.UP, GridAction.DOWN, GridAction.LEFT, GridAction.RIGHT):
            pts = " ".join(f"{fmt(px)},{fmt(py)}" for px, py in _triangle(a, left, top, CELL))
            parts.append(
                f'<polygon class="glyph" points="{pts}" fill="{color(values[s, a], lo, hi)}" stroke="#ffffff" stroke-width="0.5"/>\n'
            )
        parts.append(
            f'<circle class="glyph" cx="{fmt(left + CELL / 2)}" cy="{fmt(top + CELL / 2)}" r="{fmt(CELL * 0.18)}" '
            f'fill="{color(values[s, GridAction.STAY], lo, hi)}" stroke="#ffffff" stroke-width="0.5"/>\n'
        )
    grid_w = spec.width * CELL
    grid_h = spec.height * CELL
    parts.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{grid_w}" height="{grid_h}" fill="none" stroke="#333333" stroke-width="1"/>\n'
    )
    parts.append(_legend(MARGIN, MARGIN + grid_h + 8, grid_w, lo, hi, note))

    t = enumerate_transitions(spec)
    rows = [[int(t.s[i]), int(t.a[i]), int(t.s_next[i]), repr(float(values[t.s[i], t.a[i]]))] for i in range(len(t))]
    return SvgDoc(
        width=grid_w + 2 * MARGIN,
        height=grid_h + 2 * MARGIN + LEGEND_H,
        body="".join(parts),
        csv=_csv(["s_index", "a_index", "s_next_index", "value"], rows),
        kind="heatmap",
        meta={"scale": (lo, hi)},
    )


# --- reward-over-time trace --------------------------------------------------

PLOT_W = 600
PLOT_H = 200
PAD_L, PAD_R, PAD_T, PAD_B = 56, 12, 24, 36


def y_range(values: np.ndarray) -> tuple[float, float]:
    """Data range padded by 5% of its span (or of the magnitude when flat)."""
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    pad = 0.05 * span if span > 0 else 0.05 * max(abs(hi), 1.0)
    return lo - pad, hi + pad


def render_timeline(
    rewards_per_step: Sequence[Sequence[float]],
    title: str = "",
    xlabel: str = "step",
    ylabel: str = "reward",
) -> SvgDoc:
    """One polyline through all episodes, gray vertical lines between them."""
    episodes = [np.asarray(e, dtype=float).reshape(-1) for e in rewards_per_step]
    if not episodes or any(e.size == 0 for e in episodes):
        raise InputError("timeline needs at least one non-empty episode")
    values = np.concatenate(episodes)
    if not np.all(np.isfinite(values)):
        raise InputError("timeline values must be finite")
    y0, y1 = y_range(values)
    n = len(values)

    def px(i: float) -> float:
        return PAD_L + (PLOT_W * i / (n - 1) if n > 1 else PLOT_W / 2)

    def py(v: float) -> float:
        return PAD_T + PLOT_H * (y1 - v) / (y1 - y0)

    parts = []
    if title:
        parts.append(f'<text x="{fmt(PAD_L)}" y="16" font-size="12" {FONT}>{escape(title)}</text>\n')
    parts.append(
        f'<rect x="{PAD_L}" y="{PAD_T}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#333333" stroke-width="1"/>\n'
    )
    if y0 < 0 < y1:
        parts.append(
            f'<line class="zero" x1="{PAD_L}" y1="{fmt(py(0))}" x2="{PAD_L + PLOT_W}" y2="{fmt(py(0))}" stroke="#dddddd" stroke-width="1"/>\n'
        )
    offset = 0
    for e in episodes[:-1]:
        offset += len(e)
        xs = fmt(px(offset - 0.5))
        parts.append(
            f'<line class="separator" x1="{xs}" y1="{PAD_T}" x2="{xs}" y2="{PAD_T + PLOT_H}" stroke="{SEPARATOR_COLOR}" stroke-width="1"/>\n'
        )
    pts = " ".join(f"{fmt(px(i))},{fmt(py(v))}" for i, v in enumerate(values))
    parts.append(f'<polyline class="trace" points="{pts}" fill="none" stroke="#1f4e79" stroke-width="1.2"/>\n')
    parts.append(f'<text x="{fmt(PAD_L - 4)}" y="{fmt(PAD_T + 8)}" font-size="9" text-anchor="end" {FONT}>{y1:.3g}</text>\n')
    parts.append(
        f'<text x="{fmt(PAD_L - 4)}" y="{fmt(PAD_T + PLOT_H)}" font-size="9" text-anchor="end" {FONT}>{y0:.3g}</text>\n'
    )
    parts.append(
        f'<text x="{fmt(PAD_L + PLOT_W / 2)}" y="{fmt(PAD_T + PLOT_H + 26)}" font-size="10" text-anchor="middle" {FONT}>{escape(xlabel)}</text>\n'
    )
    ly = PAD_T + PLOT_H / 2
    parts.append(
        f'<text x="14" y="{fmt(ly)}" font-size="10" text-anchor="middle" transform="rotate(-90 14 {fmt(ly)})" {FONT}>{escape(ylabel)}</text>\n'
    )
    rows = [[ep, t, repr(float(v))] for ep, e in enumerate(episodes) for t, v in enumerate(e)]
    return SvgDoc(
        width=PAD_L + PLOT_W + PAD_R,
        height=PAD_T + PLOT_H + PAD_B,
        body="".join(parts),
        csv=_csv(["episode", "t", "value"], rows),
        kind="timeline",
        meta={"y_range": (y0, y1), "n_points": n, "n_separators": len(episodes) - 1},
    )


# --- panels ------------------------------------------------------------------

TITLE_H = 22
ROW_TITLE_W = 180


def render_panel(
    docs: Sequence[Sequence[SvgDoc]],
    row_titles: Sequence[str] | None = None,
    col_titles: Sequence[str] | None = None,
    title: str = "",
) -> SvgDoc:
    """Lay documents out on a titled grid; columns and rows size to their largest member."""
    rows = [list(r) for r in docs]
    if not rows or not rows[0]:
        raise InputError("panel needs at least one document")
    n_cols = len(rows[0])
    if any(len(r) != n_cols for r in rows):
        raise InputError("panel grid is ragged")
    if row_titles is not None and len(row_titles) != len(rows):
        raise InputError("one row title per row")
    if col_titles is not None and len(col_titles) != n_cols:
        raise InputError("one column title per column")

    col_w = [max(r[j].width for r in rows) for j in range(n_cols)]
    row_h = [max(d.height for d in r) for r in rows]
    left0 = ROW_TITLE_W if row_titles else 0
    top0 = (TITLE_H if title else 0) + (TITLE_H if col_titles else 0)
    parts = []
    if title:
        parts.append(f'<text x="8" y="16" font-size="14" font-weight="bold" {FONT}>{escape(title)}</text>\n')
    if col_titles:
        y = top0 - 6
        x = left0
        for j, ct in enumerate(col_titles):
            parts.append(
                f'<text x="{fmt(x + col_w[j] / 2)}" y="{fmt(y)}" font-size="12" text-anchor="middle" {FONT}>{escape(ct)}</text>\n'
            )
            x += col_w[j]
    y = top0
    for i, r in enumerate(rows):
        if row_titles:
            parts.append(
                f'<text x="8" y="{fmt(y + row_h[i] / 2)}" font-size="12" {FONT}>{escape(row_titles[i])}</text>\n'
            )
        x = left0
        for j, d in enumerate(r):
            parts.append(f"<g class=\"cell\" data-row={quoteattr(str(i))} data-col={quoteattr(str(j))}>\n")
            parts.append(d.nested(x, y))
            parts.append("</g>\n")
            x += col_w[j]
        y += row_h[i]
    return SvgDoc(
        width=left0 + sum(col_w),
        height=y,
        body="".join(parts),
        kind="panel",
        meta={"shape": (len(rows), n_cols), "children": rows},
    )
