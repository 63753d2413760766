"""
SVG figures: grand maximal heat maps and Whitney ball overlays
"""

import io
import logging
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from app.services.grid import Ball, GridFunction  # noqa: E402

logger = logging.getLogger(__name__)

_SVG_META = {"Date": None}


def _to_svg(fig) -> str:
    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "hardy-lab"}):
        fig.savefig(buffer, format="svg", bbox_inches="tight", metadata=_SVG_META)
    plt.close(fig)
    return buffer.getvalue()


def function_svg(f: GridFunction, title: str = "") -> str:
    """Line plot (1-D) or heat map (2-D) of a sampled function"""
    grid = f.grid
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    if grid.dim == 1:
        ax.plot(grid.axes[0], f.samples, color="#2c5282", lw=1.0)
        ax.set_xlabel("x")
        ax.grid(True, ls=":", alpha=0.4)
    else:
        (x0, x1), (y0, y1) = grid.box
        im = ax.imshow(
            f.samples.T, origin="lower", extent=(x0, x1, y0, y1), aspect="auto", cmap="viridis"
        )
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    ax.set_title(title, fontsize=9)
    return _to_svg(fig)


def whitney_overlay_svg(
    f: GridFunction, balls: Sequence[Ball], title: str = "", omega: Optional[object] = None
) -> str:
    """
    Input function with the Whitney balls drawn over it

    Args:
        f: Sampled input
        balls: Cover balls
        title: Figure title
        omega: Optional level-set mask shaded in 1-D

    Returns:
        SVG document text
    """
    grid = f.grid
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    if grid.dim == 1:
        x = grid.axes[0]
        ax.plot(x, f.samples, color="#2c5282", lw=1.0)
        if omega is not None:
            ax.fill_between(x, 0, 1, where=omega, transform=ax.get_xaxis_transform(), alpha=0.15)
        for ball in balls:
            c, r = ball.center[0], ball.radius
            ax.hlines(0.0, c - r, c + r, colors="#c53030", lw=2.0)
        ax.set_xlabel("x")
    else:
        (x0, x1), (y0, y1) = grid.box
        ax.imshow(f.samples.T, origin="lower", extent=(x0, x1, y0, y1), cmap="Greys")
        for ball in balls:
            ax.add_patch(Circle(ball.center, ball.radius, fill=False, ec="#c53030", lw=0.5))
        ax.set_aspect("equal")
    ax.set_title(title or f"{len(balls)} Whitney balls", fontsize=9)
    logger.debug(f"Rendering overlay with {len(balls)} balls")
    return _to_svg(fig)
