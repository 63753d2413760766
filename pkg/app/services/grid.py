"""
Discrete representation of functions on the line and the plane

Uniform cell-centred grids, midpoint quadrature, moments, the smooth bump,
mollification and the CSV function format.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from app.core.config import settings
from app.core.exceptions import InputFormatError, PreconditionError

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]
MultiIndex = Tuple[int, ...]

# Relative slack for the closed-ball node test
_TIE_SLACK = 1e-12


@dataclass(frozen=True)
class Ball:
    """Ball B(center, radius) in R^n"""

    center: Point
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise PreconditionError("ball radius must be positive", radius=self.radius)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def volume(self) -> float:
        """Analytic Lebesgue measure"""
        if self.dim == 1:
            return 2.0 * self.radius
        return math.pi * self.radius ** 2

    @property
    def sup_abs(self) -> float:
        """sup of |x| over the ball"""
        return float(np.linalg.norm(self.center)) + self.radius

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance of points (..., n) to the center"""
        diff = np.asarray(points, dtype=float) - np.asarray(self.center)
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed membership test; nodes on the sphere count as inside"""
        diff = np.asarray(points, dtype=float) - np.asarray(self.center)
        d2 = np.sum(diff * diff, axis=-1)
        return d2 <= self.radius ** 2 * (1.0 + _TIE_SLACK)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Grid:
    """Uniform grid of cell centres over an axis-aligned box"""

    dim: int
    box: Tuple[Tuple[float, float], ...]
    resolution: int

    def __post_init__(self) -> None:
        box = tuple((float(a), float(b)) for a, b in self.box)
        object.__setattr__(self, "box", box)
        if self.dim not in (1, 2):
            raise PreconditionError("grid dimension must be 1 or 2", dim=self.dim)
        if len(box) != self.dim:
            raise PreconditionError("box must have one interval per axis", box=box)
        if any(not b > a for a, b in box):
            raise PreconditionError("degenerate box", box=box)
        res = int(self.resolution)
        if res < 2 or res & (res - 1):
            raise PreconditionError("resolution must be a power of two >= 2", resolution=res)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def node_count(self) -> int:
        return self.resolution ** self.dim

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.box])

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def spacing(self) -> np.ndarray:
        return self.widths / self.resolution

    @property
    def min_spacing(self) -> float:
        return float(self.spacing.min())

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def cell_diameter(self) -> float:
        return float(np.linalg.norm(self.spacing))

    @cached_property
    def axes(self) -> List[np.ndarray]:
        return [
            a + (np.arange(self.resolution) + 0.5) * h
            for (a, _), h in zip(self.box, self.spacing)
        ]

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape grid.shape + (dim,)"""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @property
    def center(self) -> Point:
        return tuple(0.5 * (self.lower + self.upper))

    def window(self, ball: Ball, pad: int = 1) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Index window [lo, hi) that contains every node of the ball"""
        lo, hi = [], []
        for axis, (a, _) in enumerate(self.box):
            h = self.spacing[axis]
            c = ball.center[axis]
            first = math.floor((c - ball.radius - a) / h - 0.5) - pad
            last = math.ceil((c + ball.radius - a) / h - 0.5) + pad
            lo.append(min(max(first, 0), self.resolution))
            hi.append(min(max(last + 1, 0), self.resolution))
        return tuple(lo), tuple(hi)

    def window_slices(self, lo: Sequence[int], hi: Sequence[int]) -> Tuple[slice, ...]:
        return tuple(slice(int(l), int(h)) for l, h in zip(lo, hi))

    def local_mask(self, ball: Ball) -> Tuple[Tuple[slice, ...], np.ndarray]:
        """Membership mask restricted to the ball's index window"""
        lo, hi = self.window(ball)
        slices = self.window_slices(lo, hi)
        return slices, ball.contains(self.points[slices])

    def ball_mask(self, ball: Ball) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        slices, local = self.local_mask(ball)
        mask[slices] = local
        return mask

    def ball_measure(self, ball: Ball) -> float:
        """Node measure of the ball: node count times cell volume"""
        _, local = self.local_mask(ball)
        return float(local.sum()) * self.cell_volume

    def to_dict(self) -> dict:
        return {"dim": self.dim, "box": [list(b) for b in self.box], "resolution": self.resolution}


@dataclass(eq=False)
class GridFunction:
    """Samples of a real function at every grid node"""

    grid: Grid
    samples: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.samples, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.node_count:
                raise InputFormatError(
                    "sample count does not match node count",
                    samples=values.size,
                    nodes=self.grid.node_count,
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise PreconditionError("non-finite samples")
        values.setflags(write=False)
        self.samples = values

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_callable(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, func(grid.points))

    def with_samples(self, samples: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, samples)

    def _other(self, other: Union["GridFunction", float]) -> Union[np.ndarray, float]:
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise PreconditionError("functions live on different grids")
            return other.samples
        return float(other)

    def __add__(self, other: Union["GridFunction", float]) -> "GridFunction":
        return self.with_samples(self.samples + self._other(other))

    __radd__ = __add__

    def __sub__(self, other: Union["GridFunction", float]) -> "GridFunction":
        return self.with_samples(self.samples - self._other(other))

    def __mul__(self, other: Union["GridFunction", float]) -> "GridFunction":
        return self.with_samples(self.samples * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> "GridFunction":
        return self.with_samples(self.samples / float(other))

    def __neg__(self) -> "GridFunction":
        return self.with_samples(-self.samples)

    def __abs__(self) -> "GridFunction":
        return self.with_samples(np.abs(self.samples))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0

    def is_zero(self) -> bool:
        return not np.any(self.samples)

    def support_mask(self) -> np.ndarray:
        return self.samples != 0


@dataclass(eq=False)
class Patch:
    """A function that vanishes outside the index window [lo, lo + shape)"""

    grid: Grid
    lo: Tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.lo = tuple(int(v) for v in self.lo)
        self.values = np.asarray(self.values, dtype=float)

    @property
    def hi(self) -> Tuple[int, ...]:
        return tuple(l + s for l, s in zip(self.lo, self.values.shape))

    @property
    def slices(self) -> Tuple[slice, ...]:
        return self.grid.window_slices(self.lo, self.hi)

    @property
    def points(self) -> np.ndarray:
        return self.grid.points[self.slices]

    def window_values(self, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """Values over another window, zero where the patch is absent"""
        out = np.zeros(tuple(h - l for l, h in zip(lo, hi)))
        src, dst = [], []
        for own_lo, own_hi, l, h in zip(self.lo, self.hi, lo, hi):
            a, b = max(own_lo, l), min(own_hi, h)
            if a >= b:
                return out
            src.append(slice(a - own_lo, b - own_lo))
            dst.append(slice(a - l, b - l))
        out[tuple(dst)] = self.values[tuple(src)]
        return out

    def to_function(self) -> GridFunction:
        samples = np.zeros(self.grid.shape)
        samples[self.slices] = self.values
        return GridFunction(self.grid, samples)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def integral(self) -> float:
        return float(self.values.sum()) * self.grid.cell_volume


@dataclass(frozen=True)
class BallFamily:
    """Finite family of balls standing in for the sup over all balls"""

    balls: Tuple[Ball, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "balls", tuple(self.balls))

    def __len__(self) -> int:
        return len(self.balls)

    def __iter__(self) -> Iterator[Ball]:
        return iter(self.balls)

    def require_nonempty(self) -> None:
        if not self.balls:
            raise PreconditionError("ball family is empty")

    def digest(self) -> str:
        """Stable hash of the family, reported next to every sup"""
        h = hashlib.sha256()
        for ball in self.balls:
            h.update(",".join(f"{c:.17g}" for c in ball.center).encode())
            h.update(f";{ball.radius:.17g}|".encode())
        return h.hexdigest()

    @classmethod
    def _lattice(cls, grid: Grid, per_axis: int, radii: Sequence[float]) -> "BallFamily":
        inner = [
            np.linspace(a + 0.1 * (b - a), b - 0.1 * (b - a), per_axis) for a, b in grid.box
        ]
        centers = np.stack(np.meshgrid(*inner, indexing="ij"), axis=-1).reshape(-1, grid.dim)
        usable = [r for r in radii if r >= grid.spacing.max()]
        return cls(tuple(Ball(tuple(c), r) for c in centers for r in usable))

    @classmethod
    def coarse(cls, grid: Grid) -> "BallFamily":
        """Centers on a coarse sub-grid times eight dyadic radii"""
        base = 0.25 * float(grid.widths.min())
        return cls._lattice(grid, 9 if grid.dim == 1 else 5, [base * 2.0 ** -j for j in range(8)])

    @classmethod
    def fine(cls, grid: Grid) -> "BallFamily":
        """Denser centers and half-dyadic radii"""
        base = 0.25 * float(grid.widths.min())
        return cls._lattice(
            grid, 17 if grid.dim == 1 else 9, [base * 2.0 ** (-j / 2) for j in range(16)]
        )

    @classmethod
    def random(
        cls, grid: Grid, count: int, seed: int = 0, min_radius: Optional[float] = None
    ) -> "BallFamily":
        """Seeded family with uniform centers and log-uniform radii"""
        rng = np.random.default_rng(seed)
        lo = grid.lower + 0.1 * grid.widths
        hi = grid.upper - 0.1 * grid.widths
        r_min = min_radius if min_radius is not None else 2.0 * float(grid.spacing.max())
        r_max = 0.25 * float(grid.widths.min())
        balls = []
        for _ in range(count):
            center = rng.uniform(lo, hi)
            radius = math.exp(rng.uniform(math.log(r_min), math.log(r_max)))
            balls.append(Ball(tuple(center), radius))
        return cls(tuple(balls))

    @classmethod
    def centered(cls, grid: Grid, center: Point, radii: Sequence[float]) -> "BallFamily":
        return cls(tuple(Ball(center, r) for r in radii))


def _region_values(f: Union[GridFunction, Patch], region: Optional[Ball]) -> np.ndarray:
    if isinstance(f, Patch):
        values, points = f.values, f.points
        if region is None:
            return values
        return np.where(region.contains(points), values, 0.0)
    if region is None:
        return f.samples
    slices, local = f.grid.local_mask(region)
    if not local.any():
        raise PreconditionError("empty region", ball=region)
    return np.where(local, f.samples[slices], 0.0)


def integrate(f: Union[GridFunction, Patch], region: Optional[Ball] = None) -> float:
    """
    Midpoint-rule integral over a ball or over the whole box

    Args:
        f: Sampled function
        region: Ball, or None for the whole box

    Returns:
        Sum of samples times the cell volume over the nodes in the region
    """
    return float(np.sum(_region_values(f, region))) * f.grid.cell_volume


def multi_indices(dim: int, degree: int) -> List[MultiIndex]:
    """All multi-indices with |alpha| <= degree in graded order"""
    out: List[MultiIndex] = []
    for total in range(degree + 1):
        if dim == 1:
            out.append((total,))
        else:
            out.extend((total - j, j) for j in range(total + 1))
    return out


def monomials(
    points: np.ndarray,
    center: Sequence[float],
    scale: float,
    indices: Sequence[MultiIndex],
) -> np.ndarray:
    """Evaluate ((x - center)/scale)^alpha for every alpha; shape points.shape[:-1] + (len,)"""
    u = (np.asarray(points, dtype=float) - np.asarray(center)) / scale
    cols = []
    for alpha in indices:
        col = np.ones(u.shape[:-1])
        for axis, power in enumerate(alpha):
            if power:
                col = col * u[..., axis] ** power
        cols.append(col)
    return np.stack(cols, axis=-1)


def moment(
    f: Union[GridFunction, Patch],
    alpha: MultiIndex,
    center: Optional[Sequence[float]] = None,
    scale: float = 1.0,
    s_max: Optional[int] = None,
) -> float:
    """Integral of f(x)·((x - center)/scale)^alpha, centered at the origin by default"""
    limit = settings.s_max if s_max is None else s_max
    if sum(alpha) > limit:
        raise PreconditionError("moment order above s_max", alpha=alpha, s_max=limit)
    if len(alpha) != f.grid.dim:
        raise PreconditionError("multi-index has wrong length", alpha=alpha)
    origin = center if center is not None else (0.0,) * f.grid.dim
    points = f.points if isinstance(f, Patch) else f.grid.points
    values = f.values if isinstance(f, Patch) else f.samples
    weight = monomials(points, origin, scale, [alpha])[..., 0]
    return float(np.sum(values * weight)) * f.grid.cell_volume


def bump_profile(r2: np.ndarray) -> np.ndarray:
    """exp(-1/(1 - r^2)) inside the unit ball, 0 outside"""
    r2 = np.asarray(r2, dtype=float)
    inside = r2 < 1.0
    safe = np.where(inside, 1.0 - r2, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


def smooth_transition(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1"""
    u = np.asarray(u, dtype=float)

    def psi(v: np.ndarray) -> np.ndarray:
        pos = v > 0
        return np.where(pos, np.exp(-1.0 / np.where(pos, v, 1.0)), 0.0)

    left, right = psi(u), psi(1.0 - u)
    return left / (left + right)


def cutoff(r: np.ndarray) -> np.ndarray:
    """Radial cutoff equal to 1 on |x| <= 1 and supported in |x| <= 2"""
    return smooth_transition(2.0 - np.asarray(r, dtype=float))


def mollify(f: GridFunction, t: float) -> GridFunction:
    """
    Convolve with the unit-mass smooth bump at scale t

    Args:
        f: Sampled function
        t: Scale, at least one cell width

    Returns:
        f * bump_t as a grid function
    """
    grid = f.grid
    if t < grid.min_spacing * (1.0 - 1e-12):
        raise PreconditionError("scale below resolution", t=t, spacing=grid.min_spacing)
    if f.is_zero():
        return GridFunction.zeros(grid)

    reach = [int(math.floor(t / h * (1.0 + 1e-12))) for h in grid.spacing]
    offsets = np.meshgrid(
        *[np.arange(-k, k + 1) * h for k, h in zip(reach, grid.spacing)], indexing="ij"
    )
    r2 = sum(o * o for o in offsets) / (t * t)
    kernel = bump_profile(r2)
    kernel /= kernel.sum()

    logger.debug(f"Mollifying at scale {t} with kernel {kernel.shape}")
    return f.with_samples(ndimage.convolve(f.samples, kernel, mode="constant", cval=0.0))


def check_margin(f: GridFunction, margin: Optional[float] = None) -> None:
    """Require the support to stay a fixed fraction away from every box face"""
    frac = settings.support_margin if margin is None else margin
    support = f.support_mask()
    if not support.any():
        return
    grid = f.grid
    for axis, (a, b) in enumerate(grid.box):
        other = tuple(i for i in range(grid.dim) if i != axis)
        used = support.any(axis=other) if other else support
        coords = grid.axes[axis][used]
        lo, hi = a + frac * (b - a), b - frac * (b - a)
        if coords.min() < lo or coords.max() > hi:
            raise PreconditionError(
                "input not supported inside box margin",
                axis=axis,
                support=(float(coords.min()), float(coords.max())),
                allowed=(lo, hi),
            )


def csv_header(dim: int) -> str:
    return "x,value" if dim == 1 else "x,y,value"


def load_csv(path: Union[str, Path], grid: Grid) -> GridFunction:
    """
    Load a sampled function written row-major over the grid

    Args:
        path: CSV file with header ``x[,y],value``
        grid: Grid the rows must match node for node

    Returns:
        GridFunction with the file's values
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            header = handle.readline().strip().replace(" ", "")
            if header != csv_header(grid.dim):
                raise InputFormatError(
                    "unexpected CSV header", header=header, expected=csv_header(grid.dim)
                )
            table = np.loadtxt(handle, delimiter=",", ndmin=2)
    except OSError as e:
        raise InputFormatError(f"cannot read CSV: {e}", path=str(path)) from e
    except ValueError as e:
        raise InputFormatError(f"malformed CSV: {e}", path=str(path)) from e

    if table.shape != (grid.node_count, grid.dim + 1):
        raise InputFormatError(
            "incomplete grid in CSV", rows=table.shape[0], expected=grid.node_count
        )
    expected = grid.points.reshape(-1, grid.dim)
    if np.max(np.abs(table[:, : grid.dim] - expected)) > 1e-6 * grid.min_spacing:
        raise InputFormatError("CSV coordinates do not match the grid", path=str(path))
    if not np.all(np.isfinite(table[:, -1])):
        raise InputFormatError("non-finite values in CSV", path=str(path))

    logger.info(f"Loaded {grid.node_count} samples from {path}")
    return GridFunction(grid, table[:, -1].reshape(grid.shape))


def format_csv(f: GridFunction) -> str:
    """Row-major CSV text in the format read by load_csv"""
    grid = f.grid
    coords = grid.points.reshape(-1, grid.dim)
    values = f.samples.reshape(-1)
    lines = [csv_header(grid.dim)]
    for row, value in zip(coords, values):
        lines.append(",".join(f"{c:.17g}" for c in row) + f",{value:.17g}")
    return "\n".join(lines) + "\n"
