"""Glyph rendering of SPD images: one ellipse per node, hue by anisotropy.

The SVG output is a pure function of the image (fixed float formatting,
no timestamps), so renders of identical inputs are byte-identical and
text-diffable in tests. Ellipse radii are the square roots of the tensor
eigenvalues, the rotation follows the principal eigenvector, and the
fill hue encodes the geometric anisotropy (dispersion of log
eigenvalues): blue for isotropic, red for strongly anisotropic.
"""

from __future__ import annotations

import numpy as np

from ..field import ManifoldImage
from ..manifold import ManifoldKind

#: anisotropy value rendered fully red
GA_SATURATION = 2.0

_CELL = 24.0
_MARGIN = 14.0


def geometric_anisotropy(eigvals):
    """Dispersion of log eigenvalues: zero iff the tensor is isotropic."""
    logs = np.log(eigvals)
    mean = np.mean(logs, axis=-1, keepdims=True)
    return np.sqrt(np.sum((logs - mean) ** 2, axis=-1))


def _f(x: float) -> str:
    return f"{x:.4f}"


def spd_glyphs(image: ManifoldImage):
    """Per-node (radii, angle_deg, anisotropy) of the 2x2 glyph tensors.

    SPD(3) tensors are projected to their upper-left 2x2 block for the
    in-plane glyph; the anisotropy uses the full eigenvalue set.
    """
    if image.kind.family != "spd":
        raise ValueError("glyph rendering is defined for SPD images")
    n = image.kind.param
    flat = image.values.reshape(-1, image.kind.payload_dim)
    if n == 2:
        mats = np.empty((flat.shape[0], 2, 2))
        mats[:, 0, 0] = flat[:, 0]
        mats[:, 0, 1] = mats[:, 1, 0] = flat[:, 1]
        mats[:, 1, 1] = flat[:, 2]
        full = mats
    else:
        full = np.empty((flat.shape[0], 3, 3))
        full[:, 0, 0] = flat[:, 0]
        full[:, 0, 1] = full[:, 1, 0] = flat[:, 1]
        full[:, 0, 2] = full[:, 2, 0] = flat[:, 2]
        full[:, 1, 1] = flat[:, 3]
        full[:, 1, 2] = full[:, 2, 1] = flat[:, 4]
        full[:, 2, 2] = flat[:, 5]
        mats = full[:, :2, :2]
    w2, q2 = np.linalg.eigh(mats)
    radii = np.sqrt(np.maximum(w2, 1e-14))[:, ::-1]  # major first
    major = q2[:, :, 1]
    angles = np.degrees(np.arctan2(major[:, 1], major[:, 0])) % 180.0
    ga = geometric_anisotropy(np.maximum(np.linalg.eigvalsh(full), 1e-14))
    return radii, angles, ga


def render_spd_svg(image: ManifoldImage) -> str:
    """Deterministic SVG text for an SPD image."""
    radii, angles, ga = spd_glyphs(image)
    shape = image.grid.shape
    width = _MARGIN * 2 + _CELL * (shape[0] - 1)
    height = _MARGIN * 2 + _CELL * (shape[1] - 1)
    scale = 0.5 * _CELL / max(float(np.max(radii)), 1e-12)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}" '
        f'viewBox="0 0 {_f(width)} {_f(height)}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    idx = 0
    for i in range(shape[0]):
        for j in range(shape[1]):
            cx = _MARGIN + _CELL * i
            cy = height - (_MARGIN + _CELL * j)  # x2 axis points up
            rx, ry = radii[idx] * scale
            hue = 240.0 * max(0.0, 1.0 - float(ga[idx]) / GA_SATURATION)
            lines.append(
                f'<ellipse cx="{_f(cx)}" cy="{_f(cy)}" rx="{_f(rx)}" ry="{_f(ry)}" '
                f'transform="rotate({_f(-angles[idx])} {_f(cx)} {_f(cy)})" '
                f'fill="hsl({_f(hue)},90%,55%)" fill-opacity="0.85" '
                'stroke="black" stroke-width="0.4"/>'
            )
            idx += 1
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_spd(image: ManifoldImage, out_path, png: bool = False):
    """Write the SVG render; optionally also rasterize a PNG twin."""
    svg = render_spd_svg(image)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    if png:
        _render_png(image, str(out_path).rsplit(".", 1)[0] + ".png")
    return out_path


def _render_png(image: ManifoldImage, out_path):
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt
    from matplotlib.patches import Ellipse

    radii, angles, ga = spd_glyphs(image)
    shape = image.grid.shape
    scale = 0.5 / (image.grid.shape[0] - 1) / max(float(np.max(radii)), 1e-12)
    fig, ax = plt.subplots(figsize=(6, 6))
    idx = 0
    for i in range(shape[0]):
        for j in range(shape[1]):
            x = i / (shape[0] - 1)
            y = j / (shape[1] - 1)
            hue = max(0.0, 1.0 - float(ga[idx]) / GA_SATURATION)
            ax.add_patch(
                Ellipse(
                    (x, y),
                    2 * radii[idx, 0] * scale,
                    2 * radii[idx, 1] * scale,
                    angle=angles[idx],
                    facecolor=(1.0 - hue, 0.1, hue),
                    edgecolor="black",
                    linewidth=0.3,
                    alpha=0.85,
                )
            )
            idx += 1
    ax.set_xlim(-0.05, 1.05)
    ax.set_ylim(-0.05, 1.05)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
