"""
Whitney covers of super-level sets, smooth partitions of unity, weighted
polynomial projections and the Calderon-Zygmund decomposition
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, ndimage

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import (
    CoverError,
    DegenerateWeightError,
    InvariantError,
    PreconditionError,
)
from app.schemas.reports import CzDiagnostics
from app.services.grid import (
    Ball,
    Grid,
    GridFunction,
    MultiIndex,
    Patch,
    cutoff,
    moment,
    monomials,
    multi_indices,
)
from app.services.growth import GrowthFunction
from app.services.maximal import MaximalService, TestDictionary

logger = logging.getLogger(__name__)

_SLACK = 1.0 + 1e-12


@dataclass(eq=False)
class WhitneyCover:
    """Balls B(x_j, r_j) covering the nodes of an open set"""

    grid: Grid
    omega: np.ndarray
    balls: Tuple[Ball, ...]
    overlap: int = 0

    def __len__(self) -> int:
        return len(self.balls)


@dataclass(eq=False)
class PartitionOfUnity:
    """zeta_j = theta_j / sum_i theta_i restricted to the cover's set"""

    cover: WhitneyCover
    zetas: Tuple[Patch, ...]


@dataclass(frozen=True)
class LocalPolynomial:
    """Polynomial in the monomials ((x - center)/scale)^alpha"""

    center: Tuple[float, ...]
    scale: float
    indices: Tuple[MultiIndex, ...]
    coefficients: Tuple[float, ...]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        basis = monomials(points, self.center, self.scale, self.indices)
        return basis @ np.asarray(self.coefficients)


@dataclass(frozen=True)
class Projection:
    """Weighted projection with its conditioning data"""

    poly: LocalPolynomial
    gram_condition: float
    residual: float
    # rank equals the node count, so the fit interpolates
    exact: bool = False


@dataclass(eq=False)
class CzPart:
    """One bad part b_j = (f - P_j) zeta_j"""

    index: int
    ball: Ball
    zeta: Patch
    poly: LocalPolynomial
    b: Patch
    moment_residuals: List[float]
    gram_condition: float


@dataclass(eq=False)
class CzDecomposition:
    """f = g + sum_j b_j at height lam and degree s"""

    f: GridFunction
    g: GridFunction
    parts: List[CzPart]
    lam: float
    s: int
    cover: Optional[WhitneyCover] = None
    diagnostics: CzDiagnostics = field(default_factory=CzDiagnostics)

    @property
    def trivial(self) -> bool:
        return not self.parts

    def bad_sum(self) -> GridFunction:
        total = np.zeros(self.f.grid.shape)
        for part in self.parts:
            total[part.b.slices] += part.b.values
        return GridFunction(self.f.grid, total)


class CzdService:
    """Service for Calderon-Zygmund constructions on one grid"""

    def __init__(self, grid: Grid, config: Settings = settings, maximal: Optional[MaximalService] = None):
        self.grid = grid
        self.config = config
        self.maximal = maximal or MaximalService(grid, config)

    def whitney(self, omega: np.ndarray) -> WhitneyCover:
        """
        Whitney cover of an open node set

        Args:
            omega: Boolean node mask of the open set

        Returns:
            Cover whose four geometric properties were verified on the grid
        """
        grid = self.grid
        omega = np.asarray(omega, dtype=bool)
        if omega.shape != grid.shape:
            raise PreconditionError("mask shape does not match the grid")
        if not omega.any():
            return WhitneyCover(grid, omega, ())
        for axis in range(grid.dim):
            if np.take(omega, 0, axis=axis).any() or np.take(omega, -1, axis=axis).any():
                raise PreconditionError("level set not compactly contained")

        distance = ndimage.distance_transform_edt(omega, sampling=grid.spacing)
        unit = grid.min_spacing
        nodes = np.argwhere(omega)
        d = distance[omega]
        # r = unit * 2^(ceil(log2(d / 18 unit)) - 1) lies in [d/36, d/18)
        exponents = np.ceil(np.log2(d / (18.0 * unit))) - 1
        radii = unit * np.power(2.0, exponents)
        order = np.lexsort((np.arange(len(radii)), -radii))

        covered = np.zeros(grid.shape, dtype=bool)
        balls: List[Ball] = []
        for idx in order:
            node = tuple(nodes[idx])
            if covered[node]:
                continue
            ball = Ball(tuple(grid.points[node]), float(radii[idx]))
            balls.append(ball)
            slices, local = grid.local_mask(ball)
            covered[slices] |= local

        cover = WhitneyCover(grid, omega, tuple(balls))
        cover.overlap = self._verify_cover(cover, distance)
        logger.debug(f"Whitney cover: {len(balls)} balls, overlap {cover.overlap}")
        return cover

    def _verify_cover(self, cover: WhitneyCover, distance: np.ndarray) -> int:
        grid, omega = cover.grid, cover.omega
        count = np.zeros(grid.shape, dtype=int)
        quarter = np.zeros(grid.shape, dtype=int)
        dilated = np.zeros(grid.shape, dtype=int)
        for ball in cover.balls:
            slices, local = grid.local_mask(ball)
            count[slices] += local
            slices, local = grid.local_mask(ball.dilate(0.25))
            quarter[slices] += local
            slices, local = grid.local_mask(ball.dilate(18.0))
            dilated[slices] += local
            if local.any() and not np.all(omega[slices][local]):
                raise CoverError("18-fold dilate leaves the set", ball=ball)
            centre_distance = distance[self._node_index(ball)]
            if centre_distance ** 2 > (54.0 * ball.radius) ** 2 * _SLACK:
                raise CoverError("54-fold dilate misses the complement", ball=ball)

        if np.any(omega & (count == 0)):
            raise CoverError("cover misses nodes of the set")
        if np.any(quarter > 1):
            raise CoverError("quarter balls overlap")
        return int(dilated[omega].max())

    def _node_index(self, ball: Ball) -> Tuple[int, ...]:
        grid = self.grid
        return tuple(
            int(round((c - a) / h - 0.5)) for c, (a, _), h in zip(ball.center, grid.box, grid.spacing)
        )

    def partition_of_unity(self, cover: WhitneyCover) -> PartitionOfUnity:
        """
        Smooth partition of unity subordinate to the doubled cover balls

        Args:
            cover: Nonempty Whitney cover

        Returns:
            Patches zeta_j with sum_j zeta_j = 1 on the set
        """
        if not cover.balls:
            raise PreconditionError("partition of unity needs a nonempty cover")
        grid = self.grid
        thetas: List[Tuple[Tuple[int, ...], np.ndarray]] = []
        total = np.zeros(grid.shape)
        for ball in cover.balls:
            lo, hi = grid.window(ball.dilate(2.0))
            slices = grid.window_slices(lo, hi)
            theta = cutoff(ball.distance(grid.points[slices]) / ball.radius)
            total[slices] += theta
            thetas.append((lo, theta))

        zetas = []
        for lo, theta in thetas:
            slices = grid.window_slices(lo, tuple(l + s for l, s in zip(lo, theta.shape)))
            denom = total[slices]
            values = np.where(denom > 0, theta / np.where(denom > 0, denom, 1.0), 0.0)
            zetas.append(Patch(grid, lo, values))

        pou = PartitionOfUnity(cover, tuple(zetas))
        self._verify_partition(pou)
        return pou

    def _verify_partition(self, pou: PartitionOfUnity) -> None:
        grid = self.grid
        total = np.zeros(grid.shape)
        floor_ok = True
        for ball, zeta in zip(pou.cover.balls, pou.zetas):
            total[zeta.slices] += zeta.values
            if np.any(zeta.values < 0) or np.any(zeta.values > 1 + 1e-12):
                raise InvariantError("partition value outside [0, 1]", failed=["range"])
            inner = ball.contains(zeta.points)
            if inner.any() and zeta.values[inner].min() < (1.0 / pou.cover.overlap) * (1 - 1e-12):
                floor_ok = False
        omega = pou.cover.omega
        tol = self.config.partition_tolerance
        if np.max(np.abs(total[omega] - 1.0)) > tol or np.max(np.abs(total[~omega])) > tol:
            raise InvariantError("partition does not sum to the indicator", failed=["sum"])
        if not floor_ok:
            raise InvariantError("partition below 1/L on a cover ball", failed=["floor"])

    def project_values(
        self,
        values: np.ndarray,
        weight: Patch,
        center: Sequence[float],
        scale: float,
        s: int,
        scale_ref: Optional[float] = None,
        ball: Optional[Ball] = None,
    ) -> Projection:
        """
        Weighted least-squares projection onto polynomials of degree <= s

        Args:
            values: Samples on the weight's window
            weight: Nonnegative weight patch zeta
            center: Monomial center
            scale: Monomial scale
            s: Degree
            scale_ref: Reference magnitude for the orthogonality residual
            ball: Ball reported when the weight is degenerate

        Returns:
            Projection with Gram condition number and orthogonality residual
        """
        w = weight.values
        used = w > 0
        if not used.any():
            raise PreconditionError("projection weight has zero integral", ball=ball)
        indices = tuple(multi_indices(self.grid.dim, s))
        basis = monomials(weight.points[used], center, scale, indices)
        root = np.sqrt(w[used])
        target = values[used]
        coefficients, _, rank, singular = linalg.lstsq(basis * root[:, None], target * root)

        smax = float(singular.max()) if singular.size else 0.0
        smin = float(singular.min()) if singular.size == len(indices) else 0.0
        condition = (smax / smin) ** 2 if smin > 0 else math.inf
        residual_vec = basis.T @ (w[used] * (target - basis @ coefficients)) / w[used].sum()
        residual = float(np.max(np.abs(residual_vec)))
        ref = scale_ref if scale_ref is not None else float(np.max(np.abs(target)))
        tol = self.config.orthogonality_tolerance * max(ref, np.finfo(float).tiny)
        exact = int(rank) == int(used.sum())
        if condition > self.config.gram_condition_cap and not exact:
            logger.error(f"Degenerate weight: rank {rank} of {len(indices)} on {int(used.sum())} nodes")
            raise DegenerateWeightError(
                "degenerate weight", ball=ball, condition=condition, rank=int(rank)
            )
        if residual > tol:
            raise InvariantError(
                "projection residual not orthogonal", failed=["orthogonality"], residual=residual
            )
        poly = LocalPolynomial(tuple(center), float(scale), indices, tuple(float(c) for c in coefficients))
        return Projection(poly, condition, residual, exact=exact)

    def poly_project(
        self, f: GridFunction, zeta: Patch, ball: Ball, s: int
    ) -> Projection:
        """Projection of f against the weight zeta, monomials centered and scaled by the ball"""
        return self.project_values(
            f.samples[zeta.slices], zeta, ball.center, ball.radius, s, f.sup_norm(), ball
        )

    def moment_residuals(self, b: Patch, ball: Ball, s: int) -> List[float]:
        return [
            moment(b, alpha, center=ball.center, scale=ball.radius, s_max=self.config.s_max)
            for alpha in multi_indices(self.grid.dim, s)
        ]

    def _build_part(self, f: GridFunction, index: int, ball: Ball, zeta: Patch, s: int) -> CzPart:
        projection = self.poly_project(f, zeta, ball, s)
        residual = (f.samples[zeta.slices] - projection.poly(zeta.points)) * zeta.values
        if projection.exact:
            residual = np.zeros_like(residual)
        b = Patch(self.grid, zeta.lo, residual)
        return CzPart(
            index=index,
            ball=ball,
            zeta=zeta,
            poly=projection.poly,
            b=b,
            moment_residuals=self.moment_residuals(b, ball, s),
            gram_condition=projection.gram_condition,
        )

    def cz_decompose(
        self,
        f: GridFunction,
        gf: GrowthFunction,
        lam: float,
        s: int,
        dictionary: TestDictionary,
        fstar: Optional[GridFunction] = None,
        m_hat: Optional[int] = None,
        diagnostics: bool = True,
        omega: Optional[np.ndarray] = None,
    ) -> CzDecomposition:
        """
        Calderon-Zygmund decomposition of degree s and height lam

        Args:
            f: Sampled function
            gf: Growth function, used by the aggregate diagnostic
            lam: Height, positive
            s: Moment degree, at least m_hat
            dictionary: Test dictionary defining f*
            fstar: Precomputed grand maximal function of f
            m_hat: Estimated m(phi)
            diagnostics: Measure the part-size, overlap and pointwise constants
            omega: Precomputed level set {f* > lam}

        Returns:
            Decomposition with its measured diagnostics
        """
        if not lam > 0:
            raise PreconditionError("height must be positive", lam=lam)
        if s < 0 or (m_hat is not None and s < m_hat):
            raise PreconditionError("degree below m(phi)", s=s, m_hat=m_hat)
        if s > self.config.s_max:
            raise PreconditionError("degree above s_max", s=s, s_max=self.config.s_max)

        try:
            if fstar is None:
                fstar = self.maximal.grand_maximal(f, dictionary)
            if omega is None:
                omega = fstar.samples > lam
            if not omega.any():
                logger.debug(f"Height {lam} above max f*; trivial decomposition")
                return CzDecomposition(f=f, g=f, parts=[], lam=lam, s=s)

            cover = self.whitney(omega)
            pou = self.partition_of_unity(cover)
            parts = parallel_map(
                lambda item: self._build_part(f, item[0], item[1][0], item[1][1], s),
                list(enumerate(zip(cover.balls, pou.zetas))),
                self.config.threads,
            )
            decomposition = CzDecomposition(f=f, g=f, parts=parts, lam=lam, s=s, cover=cover)
            bad = decomposition.bad_sum()
            decomposition.g = f - bad
            residual = float(np.max(np.abs(f.samples - decomposition.g.samples - bad.samples)))

            diag = CzDiagnostics(
                overlap=cover.overlap,
                reconstruction_residual=residual,
                max_moment_residual=max(
                    (abs(r) for p in parts for r in p.moment_residuals), default=0.0
                ),
                gram_condition_max=max((p.gram_condition for p in parts), default=0.0),
            )
            diag.c2 = max(
                (float(np.max(np.abs(p.poly(p.zeta.points) * p.zeta.values))) / lam for p in parts),
                default=0.0,
            )
            if diagnostics:
                self._measure(decomposition, diag, gf, fstar, dictionary)
            decomposition.diagnostics = diag
        except Exception as e:
            logger.error(f"Calderon-Zygmund decomposition at height {lam} failed: {e}")
            raise

        logger.debug(f"Height {lam}: {len(parts)} parts, residual {residual:.3e}")
        return decomposition

    def _measure(
        self,
        dec: CzDecomposition,
        diag: CzDiagnostics,
        gf: GrowthFunction,
        fstar: GridFunction,
        dictionary: TestDictionary,
    ) -> None:
        grid = self.grid
        lam = dec.lam
        m_s = min(dec.s + 1, dictionary.m + 1)
        decay = grid.dim + m_s

        examined = [p for p in dec.parts if p.b.sup_norm() > 0]

        def local_constants(part: CzPart) -> Tuple[float, float]:
            star = self.maximal.grand_maximal_patch(part.b, dictionary)
            dist = part.ball.distance(star.points)
            near = dist <= 9.0 * part.ball.radius * _SLACK
            base = fstar.samples[star.slices]
            c3 = float(np.max(star.values[near] / base[near])) if near.any() else 0.0
            far = ~near
            c4 = 0.0
            if far.any():
                envelope = lam * (part.ball.radius / dist[far]) ** decay
                c4 = float(np.max(star.values[far] / envelope))
            return c3, c4

        pairs = parallel_map(local_constants, examined, self.config.threads)
        diag.c3 = max((c for c, _ in pairs), default=0.0)
        diag.c4 = max((c for _, c in pairs), default=0.0)
        diag.parts_examined = len(examined)

        # Pointwise bound for the good part
        points = grid.points.reshape(-1, grid.dim)
        envelope = np.zeros(len(points))
        for part in dec.parts:
            dist = part.ball.distance(points)
            envelope += (part.ball.radius / (dist + part.ball.radius)) ** decay
        gstar = self.maximal.grand_maximal(dec.g, dictionary).samples.reshape(-1)
        outside = (~dec.cover.omega).reshape(-1)
        excess = gstar - fstar.samples.reshape(-1) * outside
        diag.pointwise_bound = float(np.max(np.maximum(excess, 0.0) / (lam * envelope)))

        bstar = self.maximal.grand_maximal(dec.bad_sum(), dictionary).samples.reshape(-1)
        omega = dec.cover.omega.reshape(-1)
        num = float(np.sum(gf(points, bstar)))
        den = float(np.sum(gf(points[omega], fstar.samples.reshape(-1)[omega])))
        diag.aggregate = num / den if den > 0 else 0.0
