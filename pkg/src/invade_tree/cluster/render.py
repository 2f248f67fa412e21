"""SVG drawing of an invasion run, coloured by invasion time."""
from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np

from .invasion import InvasionTrace


def hue_color(h: float) -> str:
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, 1.0, 0.95)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def layout(parent: np.ndarray) -> np.ndarray:
    """Tidy x positions: leaves in depth-first order, parents centred over their children.

    Children are visited in increasing vertex id.
    """
    n = parent.shape[0]
    kids: list[list[int]] = [[] for _ in range(n)]
    for v in range(1, n):
        kids[parent[v]].append(v)  # ids increase, so each list is already sorted
    x = np.zeros(n)
    order = []
    stack = [0]
    while stack:  # preorder, children left to right
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(kids[v]))
    leaf = 0
    for v in order:
        if not kids[v]:
            x[v] = leaf
            leaf += 1
    for v in reversed(order):
        if kids[v]:
            x[v] = 0.5 * (x[kids[v][0]] + x[kids[v][-1]])
    return x


def render_svg(trace: InvasionTrace, out, width: float = 800.0, row: float = 6.0) -> str:
    """Write the invaded tree to ``out``; edge i (1-based invasion step) has hue i/M."""
    M = trace.steps
    if M < 1:
        raise ValueError("empty trace")
    x = layout(trace.parent)
    span = max(x.max(), 1.0)
    sx = (width - 20.0) / span
    depth = int(trace.height.max())
    height = 20.0 + row * depth
    lines = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width:.0f}" height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<g stroke-width="{max(0.3, min(2.0, 400.0 / (M + 1) ** 0.5)):.2f}" stroke-linecap="round">',
    ]
    for i in range(1, M + 1):
        p = trace.parent[i]
        lines.append(
            f'<line x1="{10 + sx * x[p]:.2f}" y1="{10 + row * trace.height[p]:.2f}" '
            f'x2="{10 + sx * x[i]:.2f}" y2="{10 + row * trace.height[i]:.2f}" '
            f'stroke="{hue_color(i / M)}"/>'
        )
    lines += ["</g>", "</svg>", ""]
    doc = "\n".join(lines)
    Path(out).write_text(doc, encoding="utf-8")
    return doc
