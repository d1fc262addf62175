"""Fixation heatmaps: a duration-weighted Gaussian KDE rendered into an SVG.

The density is rasterized at screen resolution and embedded as a PNG; AOI
outlines are drawn as vector shapes on top.
"""
from __future__ import annotations

import base64
import io
from typing import Iterable, Sequence

import numpy as np
from matplotlib import colormaps
from matplotlib.image import imsave

from .aoi import AoiMap, Rect
from .recording import ScreenGeometry


def fixation_density(points: np.ndarray, weights: np.ndarray | None, geometry: ScreenGeometry,
                     sigma_px: float = 25.0) -> np.ndarray:
    """Kernel density on the pixel grid, shape ``(height, width)``, integrating to 1.

    The isotropic Gaussian kernel is separable, so the density is an outer
    product sum ``Gy^T diag(w) Gx`` evaluated at pixel centers.
    """
    if sigma_px <= 0:
        raise ValueError("sigma_px must be positive")
    W, H = geometry.resolution_px
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    if len(pts) == 0 or w.sum() <= 0:
        return np.zeros((H, W))
    xs = np.arange(W) + 0.5
    ys = np.arange(H) + 0.5
    norm = 1.0 / (np.sqrt(2 * np.pi) * sigma_px)
    gx = norm * np.exp(-0.5 * ((xs[None, :] - pts[:, :1]) / sigma_px) ** 2)
    gy = norm * np.exp(-0.5 * ((ys[None, :] - pts[:, 1:]) / sigma_px) ** 2)
    return (gy * (w / w.sum())[:, None]).T @ gx


def _png_data_uri(density: np.ndarray, cmap: str, max_alpha: float) -> str:
    peak = density.max()
    z = density / peak if peak > 0 else density
    rgba = colormaps[cmap](z)
    rgba[..., 3] = max_alpha * np.sqrt(z)
    buf = io.BytesIO()
    imsave(buf, rgba, format="png", metadata={"Software": None})
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _rect_svg(r: Rect, cls: str) -> str:
    return f'<rect class="{cls}" x="{r.x:g}" y="{r.y:g}" width="{r.w:g}" height="{r.h:g}"/>'


def _poly_svg(poly: np.ndarray, cls: str, label: str) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in poly)
    return f'<polygon class="{cls}" data-region="{label}" points="{pts}"/>'


def heatmap_svg(points, weights, geometry: ScreenGeometry, *, sigma_px: float = 25.0,
                rects: Sequence[Rect] = (), aoi_map: AoiMap | None = None, title: str = "",
                cmap: str = "inferno", max_alpha: float = 0.85) -> str:
    """SVG document with the density image and AOI overlays.

    ``rects`` are main-AOI outlines; ``aoi_map`` adds facial sub-region hulls.
    """
    W, H = geometry.resolution_px
    dens = fixation_density(points, weights, geometry, sigma_px)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        "<style>.aoi{fill:none;stroke:#2b8cbe;stroke-width:2}"
        ".region{fill:none;stroke:#7bccc4;stroke-width:1}"
        "text{font-family:sans-serif;font-size:14px;fill:#333}</style>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
        f'<image x="0" y="0" width="{W}" height="{H}" href="{_png_data_uri(dens, cmap, max_alpha)}"/>',
    ]
    parts += [_rect_svg(r, "aoi") for r in rects]
    if aoi_map is not None:
        for face in aoi_map.faces:
            parts += [_poly_svg(poly, "region", label) for label, poly in face.regions.items()
                      if len(poly) >= 3]
    if title:
        parts.append(f'<text x="8" y="20">{_escape(title)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def collect_fixations(fixations: Iterable, step: int, trial_ids: set[int] | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Centroids and durations of fixations in ``step`` (optionally restricted to some trials)."""
    pts, w = [], []
    for f in fixations:
        if f.step_index != step or (trial_ids is not None and f.trial_id not in trial_ids):
            continue
        pts.append(f.centroid_px)
        w.append(f.duration_ms)
    return np.array(pts, dtype=float).reshape(-1, 2), np.array(w, dtype=float)
