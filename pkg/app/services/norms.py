"""
Luxembourg quasi-norm, ball-localized L^q_phi norms, ball masses and the
atomic quasi-norm Lambda_q
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import ConvergenceError, NumericalError, PreconditionError
from app.schemas.reports import NormResult
from app.services.grid import Ball, Grid, GridFunction, Patch
from app.services.growth import GrowthFunction, ball_masses, t_grid

logger = logging.getLogger(__name__)

Sampled = Union[GridFunction, Patch]


@dataclass(eq=False)
class AtomEntry:
    """Multiple of an atom b supported in ball B, measured in L^q_phi(B)"""

    b: Sampled
    ball: Ball
    q: float = math.inf

    def __post_init__(self) -> None:
        if not self.q > 1:
            raise PreconditionError("atom order must exceed 1", q=self.q)

    def scaled(self, factor: float) -> "AtomEntry":
        if isinstance(self.b, Patch):
            return AtomEntry(Patch(self.b.grid, self.b.lo, self.b.values * factor), self.ball, self.q)
        return AtomEntry(self.b * factor, self.ball, self.q)

    def to_function(self) -> GridFunction:
        return self.b.to_function() if isinstance(self.b, Patch) else self.b


def _support(f: Sampled) -> Tuple[np.ndarray, np.ndarray]:
    """Nonzero node coordinates and absolute values"""
    if isinstance(f, Patch):
        values, points = f.values, f.points
    else:
        values, points = f.samples, f.grid.points
    mask = values != 0
    return points[mask], np.abs(values[mask])


class NormService:
    """Service for quasi-norm computations on one grid"""

    def __init__(self, grid: Grid, config: Settings = settings):
        self.grid = grid
        self.config = config
        self._indicator_cache: Dict[Tuple[str, Ball], float] = {}

    def _solve_unit_level(self, excess: Callable[[float], float], start: float) -> Tuple[float, int]:
        """
        Root of a decreasing map lambda -> excess(lambda)

        The bracket is grown geometrically from ``start`` and then bisected.
        """
        lo = hi = start
        steps = 0
        while excess(lo) < 0:
            lo /= 2.0
            steps += 1
            if steps > self.config.max_bracket_steps or lo == 0:
                raise ConvergenceError("no bracket for the norm", side="lower", steps=steps)
        while excess(hi) > 0:
            hi *= 2.0
            steps += 1
            if steps > self.config.max_bracket_steps or not math.isfinite(hi):
                raise ConvergenceError("no bracket for the norm", side="upper", steps=steps)
        if lo == hi:
            return lo, 0

        root, info = optimize.bisect(
            excess,
            lo,
            hi,
            xtol=1e-300,
            rtol=self.config.bisection_rtol,
            maxiter=4000,
            full_output=True,
        )
        return float(root), int(info.iterations)

    def _checked(self, value: float) -> float:
        if math.isnan(value):
            raise NumericalError("modular is not a number")
        return value

    def phi_ball_mass(self, gf: GrowthFunction, ball: Ball, t: float) -> float:
        """phi(B, t) = integral of phi(x, t) over B"""
        return float(ball_masses(gf, self.grid, ball, np.asarray([t]))[0])

    def modular(self, f: Sampled, gf: GrowthFunction, lam: float) -> float:
        """Integral of phi(x, |f(x)|/lam)"""
        points, values = _support(f)
        if values.size == 0:
            return 0.0
        return float(np.sum(gf(points, values / lam))) * self.grid.cell_volume

    def luxembourg_norm(self, f: Sampled, gf: GrowthFunction) -> NormResult:
        """
        Luxembourg quasi-norm inf{lam > 0: int phi(x, |f|/lam) <= 1}

        Args:
            f: Sampled function
            gf: Growth function

        Returns:
            Norm with the bisection iteration count
        """
        points, values = _support(f)
        if values.size == 0:
            return NormResult(norm=0.0)
        if not np.all(np.isfinite(values)):
            raise PreconditionError("non-finite samples")
        cell = self.grid.cell_volume

        def excess(lam: float) -> float:
            return self._checked(float(np.sum(gf(points, values / lam))) * cell - 1.0)

        norm, iterations = self._solve_unit_level(excess, float(values.max()))
        gap = abs(excess(norm))
        if gap > self.config.functional_tolerance:
            logger.error(f"Modular at the Luxembourg norm misses 1 by {gap:.3e}")
            raise ConvergenceError("modular not at the unit level", norm=norm, gap=gap)
        logger.debug(f"Luxembourg norm under {gf.key}: {norm} after {iterations} steps")
        return NormResult(norm=norm, iterations=iterations)

    def indicator_norm(self, gf: GrowthFunction, ball: Ball) -> float:
        """||chi_B||_{L^phi}, cached per growth function and ball"""
        key = (gf.key, ball)
        if key not in self._indicator_cache:
            slices, local = self.grid.local_mask(ball)
            points = self.grid.points[slices][local]
            if points.size == 0:
                raise PreconditionError("degenerate ball", ball=ball)
            cell = self.grid.cell_volume
            ones = np.ones(len(points))

            def excess(lam: float) -> float:
                return self._checked(float(np.sum(gf(points, ones / lam))) * cell - 1.0)

            self._indicator_cache[key] = self._solve_unit_level(excess, 1.0)[0]
        return self._indicator_cache[key]

    def _ball_window(self, ball: Ball) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        slack = ball.dilate(1.0 + self.grid.cell_diameter / ball.radius)
        return self.grid.window(slack)

    def lq_phi_ball_norm(
        self,
        f: Sampled,
        gf: GrowthFunction,
        ball: Ball,
        q: float,
        ts: Optional[np.ndarray] = None,
    ) -> NormResult:
        """
        Norm of f in L^q_phi(B): sup over t of (int |f|^q phi(x,t) / phi(B,t))^{1/q}

        Args:
            f: Function supported in the ball, up to one cell
            gf: Growth function
            ball: Ball B
            q: Order in (1, inf]
            ts: t values; the shared t-grid by default

        Returns:
            Norm with the t attaining the sup
        """
        if not q > 1:
            raise PreconditionError("order must exceed 1", q=q)
        points, values = _support(f)
        if points.size and np.max(ball.distance(points)) > ball.radius + self.grid.cell_diameter:
            raise PreconditionError("not supported in ball", ball=ball)

        lo, hi = self._ball_window(ball)
        slices = self.grid.window_slices(lo, hi)
        window_points = self.grid.points[slices]
        inside = ball.contains(window_points)
        if not inside.any():
            raise PreconditionError("degenerate ball", ball=ball)
        if values.size == 0:
            return NormResult(norm=0.0)
        if math.isinf(q):
            return NormResult(norm=float(values.max()))

        if isinstance(f, Patch):
            local = f.window_values(lo, hi)
        else:
            local = f.samples[slices]
        ts = t_grid(self.config) if ts is None else np.asarray(ts, dtype=float)
        weights = gf(window_points[..., None, :], ts)
        axes = tuple(range(self.grid.dim))
        powered = np.abs(local) ** q
        num = np.sum(powered[..., None] * weights, axis=axes)
        den = np.sum(inside.astype(float)[..., None] * weights, axis=axes)
        ratio = (num / den) ** (1.0 / q)
        k = int(np.argmax(ratio))
        return NormResult(norm=float(ratio[k]), witness_t=float(ts[k]))

    def entry_norm(self, entry: AtomEntry, gf: GrowthFunction) -> float:
        return self.lq_phi_ball_norm(entry.b, gf, entry.ball, entry.q).norm

    def lambda_q(self, entries: Sequence[AtomEntry], gf: GrowthFunction) -> NormResult:
        """
        Atomic quasi-norm inf{lam > 0: sum_j phi(B_j, ||b_j||/lam) <= 1}

        Args:
            entries: Atom multiples with their balls
            gf: Growth function

        Returns:
            Quasi-norm; 0 for an empty list
        """
        if not entries:
            return NormResult(norm=0.0)
        sizes = parallel_map(lambda e: self.entry_norm(e, gf), entries, self.config.threads)
        active = [(e, s) for e, s in zip(entries, sizes) if s > 0]
        if not active:
            return NormResult(norm=0.0)

        cell = self.grid.cell_volume
        ball_points: List[np.ndarray] = []
        for entry, _ in active:
            slices, local = self.grid.local_mask(entry.ball)
            ball_points.append(self.grid.points[slices][local])
        norms = np.array([s for _, s in active])

        def excess(lam: float) -> float:
            total = 0.0
            for pts, size in zip(ball_points, norms):
                total += float(np.sum(gf(pts, np.full(len(pts), size / lam)))) * cell
            return self._checked(total - 1.0)

        norm, iterations = self._solve_unit_level(excess, float(norms.max()))
        return NormResult(norm=norm, iterations=iterations)

    def size_sum_constant(self, entries: Sequence[AtomEntry], gf: GrowthFunction) -> float:
        """sum_j ||b_j|| ||chi_{B_j}|| divided by Lambda_q"""
        lam = self.lambda_q(entries, gf).norm
        if lam == 0:
            return 0.0
        total = sum(self.entry_norm(e, gf) * self.indicator_norm(gf, e.ball) for e in entries)
        return total / lam

    def power_sum_ratio(
        self,
        coefficients: Sequence[float],
        atoms: Sequence[AtomEntry],
        gf: GrowthFunction,
        gamma: float,
    ) -> float:
        """(sum |lambda_j|^gamma)^{1/gamma} divided by Lambda_q({lambda_j a_j})"""
        scaled = [a.scaled(c) for c, a in zip(coefficients, atoms)]
        lam = self.lambda_q(scaled, gf).norm
        power_sum = float(np.sum(np.abs(coefficients) ** gamma)) ** (1.0 / gamma)
        if lam == 0:
            return 0.0 if power_sum == 0 else math.inf
        return power_sum / lam

    def lphi_lambda_constant(self, entries: Sequence[AtomEntry], gf: GrowthFunction) -> float:
        """||sum_j b_j||_{L^phi} divided by Lambda_q"""
        lam = self.lambda_q(entries, gf).norm
        if lam == 0:
            return 0.0
        total = GridFunction.zeros(self.grid)
        for entry in entries:
            total = total + entry.to_function()
        return self.luxembourg_norm(total, gf).norm / lam
