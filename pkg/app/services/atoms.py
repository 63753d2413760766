"""
Multi-level atomic decomposition, atom and log-atom certification, finite
decompositions of normalized inputs and the converse quasi-norm bound
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import ConvergenceError, NumericalError, PreconditionError
from app.schemas.reports import AtomCertificate, BallModel
from app.services.czd import CzDecomposition, CzdService, CzPart
from app.services.grid import (
    Ball,
    BallFamily,
    Grid,
    GridFunction,
    Patch,
    check_margin,
    moment,
    mollify,
    multi_indices,
)
from app.services.growth import GrowthFunction
from app.services.maximal import MaximalService, TestDictionary
from app.services.norms import AtomEntry, NormService

logger = logging.getLogger(__name__)

Sampled = Union[GridFunction, Patch]

_SLACK = 1.0 + 1e-12


@dataclass(eq=False)
class AtomPiece:
    """One emitted piece with the ball it must live in"""

    h: Patch
    ball: Ball
    kind: str
    level: Optional[int] = None
    index: int = 0
    moment_residuals: List[float] = field(default_factory=list)
    support_ok: bool = True

    def entry(self, q: float = math.inf) -> AtomEntry:
        return AtomEntry(self.h, self.ball, q)


@dataclass(eq=False)
class AtomicDecomposition:
    """f = base + sum over levels k and parts i of h_i^k"""

    f: GridFunction
    s: int
    pieces: List[AtomPiece] = field(default_factory=list)
    k_range: Optional[Tuple[int, int]] = None
    lambda_inf: float = 0.0
    source_norm: float = 0.0
    reconstruction_residual: float = 0.0
    constants: Dict[str, float] = field(default_factory=dict)

    def entries(self, q: float = math.inf) -> List[AtomEntry]:
        return [p.entry(q) for p in self.pieces]

    def total(self) -> GridFunction:
        out = np.zeros(self.f.grid.shape)
        for piece in self.pieces:
            out[piece.h.slices] += piece.h.values
        return GridFunction(self.f.grid, out)


@dataclass(eq=False)
class FiniteDecomposition:
    """Finite atomic decomposition of a normalized function"""

    g: Optional[AtomPiece]
    tail: List[AtomPiece]
    k_prime: int
    c_tilde: float
    g_constant: float
    certificate: Optional[AtomCertificate]
    truncation_k: int
    remainder_norm: float
    decay_curve: List[Tuple[int, float]]
    quasi_norm: float
    normalization: float
    mollify_scale: Optional[float] = None
    source: Optional[AtomicDecomposition] = None

    @property
    def pieces(self) -> List[AtomPiece]:
        return ([self.g] if self.g is not None else []) + self.tail


def _bounding_ball(grid: Grid, values: np.ndarray, lo: Sequence[int]) -> Ball:
    """Smallest centered-on-box ball containing every nonzero node"""
    hi = tuple(l + s for l, s in zip(lo, values.shape))
    points = grid.points[grid.window_slices(lo, hi)][values != 0]
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    radius = float(np.max(np.sqrt(np.sum((points - center) ** 2, axis=-1))))
    return Ball(tuple(center), max(radius, 0.5 * grid.min_spacing))


class AtomsService:
    """Service for atomic decompositions on one grid"""

    def __init__(
        self,
        grid: Grid,
        config: Settings = settings,
        maximal: Optional[MaximalService] = None,
        czd: Optional[CzdService] = None,
    ):
        self.grid = grid
        self.config = config
        self.maximal = maximal or MaximalService(grid, config)
        self.norms = self.maximal.norms
        self.czd = czd or CzdService(grid, config, self.maximal)

    def piece_moments(self, h: Sampled, ball: Ball, s: int) -> List[float]:
        return [
            moment(h, alpha, center=ball.center, scale=ball.radius, s_max=self.config.s_max)
            for alpha in multi_indices(self.grid.dim, s)
        ]

    def moment_tolerance(self, h: Sampled, ball: Ball) -> float:
        return self.config.moment_tolerance * h.sup_norm() * ball.volume

    def supported_in(self, h: Sampled, ball: Ball, slack: float = 0.0) -> bool:
        if isinstance(h, Patch):
            values, points = h.values, h.points
        else:
            values, points = h.samples, h.grid.points
        nonzero = values != 0
        if not nonzero.any():
            return True
        dist = ball.distance(points[nonzero])
        return bool(np.all(dist <= (ball.radius + slack) * _SLACK))

    def _level_range(self, fstar: GridFunction, max_levels: Optional[int]) -> Tuple[int, int]:
        values = fstar.samples
        k_max = math.ceil(math.log2(float(values.max())))
        k_low = math.ceil(math.log2(float(values[values > 0].min()))) - 1
        k_min = max(k_low, k_max - self.config.level_depth)
        if max_levels is not None:
            k_min = max(k_min, k_max - max_levels)
        return k_min, k_max

    def _cross_terms(
        self,
        f: GridFunction,
        part: CzPart,
        upper: Sequence[CzPart],
        s: int,
    ) -> Tuple[List[Patch], List[Patch]]:
        """Terms ((f - P_j) zeta_i - P_ij) zeta_j and P_ij zeta_j for overlapping j"""
        terms, projections = [], []
        reach = 2.0 * part.ball.radius + self.grid.cell_diameter
        for other in upper:
            gap = float(other.ball.distance(np.asarray(part.ball.center)))
            if gap > reach + 2.0 * other.ball.radius:
                continue
            lo, hi = other.zeta.lo, other.zeta.hi
            zeta_i = part.zeta.window_values(lo, hi)
            if not np.any(zeta_i * other.zeta.values):
                continue
            points = other.zeta.points
            local = (f.samples[other.zeta.slices] - other.poly(points)) * zeta_i
            projection = self.czd.project_values(
                local,
                other.zeta,
                other.ball.center,
                other.ball.radius,
                s,
                scale_ref=f.sup_norm(),
                ball=other.ball,
            )
            p_zeta = projection.poly(points) * other.zeta.values
            if not projection.exact:
                terms.append(Patch(self.grid, lo, local * other.zeta.values - p_zeta))
            projections.append(Patch(self.grid, lo, p_zeta))
        return terms, projections

    def multilevel_decompose(
        self,
        f: GridFunction,
        gf: GrowthFunction,
        s: int,
        dictionary: TestDictionary,
        m_hat: Optional[int] = None,
        fstar: Optional[GridFunction] = None,
        max_levels: Optional[int] = None,
    ) -> AtomicDecomposition:
        """
        Multi-level atomic decomposition over the heights 2^k

        Args:
            f: Compactly supported function
            gf: Growth function
            s: Moment degree, at least m_hat
            dictionary: Test dictionary defining f*
            m_hat: Estimated m(phi)
            fstar: Precomputed grand maximal function
            max_levels: Cap on the number of levels below k_max

        Returns:
            Pieces h_i^k, the base piece below the lowest level and measured constants
        """
        if m_hat is not None and s < m_hat:
            raise PreconditionError("degree below m(phi)", s=s, m_hat=m_hat)
        check_margin(f, self.config.support_margin)
        decomposition = AtomicDecomposition(f=f, s=s)
        if f.is_zero():
            return decomposition

        try:
            if fstar is None:
                fstar = self.maximal.grand_maximal(f, dictionary)
            decomposition.source_norm = self.norms.luxembourg_norm(fstar, gf).norm
            k_min, k_max = self._level_range(fstar, max_levels)
            decomposition.k_range = (k_min, k_max)

            masks = {k: fstar.samples > 2.0 ** k for k in range(k_min, k_max + 1)}
            distinct: Dict[bytes, int] = {}
            for k in range(k_min, k_max + 1):
                if masks[k].any():
                    distinct.setdefault(masks[k].tobytes(), k)

            runs = parallel_map(
                lambda k: self.czd.cz_decompose(
                    f, gf, 2.0 ** k, s, dictionary, fstar=fstar, diagnostics=False, omega=masks[k]
                ),
                list(distinct.values()),
                self.config.threads,
            )
            by_mask = dict(zip(distinct.keys(), runs))

            def level(k: int) -> Optional[CzDecomposition]:
                return by_mask.get(masks[k].tobytes()) if masks[k].any() else None

            size, d3 = 0.0, 0.0
            d4_total = np.zeros(self.grid.shape)
            for k in range(k_min, k_max):
                if np.array_equal(masks[k], masks[k + 1]):
                    continue
                lower, upper = level(k), level(k + 1)
                upper_parts = upper.parts if upper is not None else []
                for part in lower.parts:
                    piece, projections = self._assemble(f, part, upper_parts, s, k)
                    for p in projections:
                        d3 = max(d3, p.sup_norm() / 2.0 ** (k + 1))
                        d4_total[p.slices] += p.values
                    if piece is None:
                        continue
                    size = max(size, piece.h.sup_norm() / 2.0 ** k)
                    decomposition.pieces.append(piece)

            base = f.samples - (level(k_min).bad_sum().samples if level(k_min) else 0.0)
            if np.any(base):
                nonzero = np.argwhere(base != 0)
                lo = tuple(nonzero.min(axis=0))
                hi = tuple(nonzero.max(axis=0) + 1)
                values = base[self.grid.window_slices(lo, hi)]
                ball = _bounding_ball(self.grid, values, lo)
                patch = Patch(self.grid, lo, values)
                decomposition.pieces.append(
                    AtomPiece(
                        h=patch,
                        ball=ball,
                        kind="base",
                        level=k_min,
                        moment_residuals=self.piece_moments(patch, ball, s),
                    )
                )

            sup = f.sup_norm()
            total = decomposition.total()
            decomposition.reconstruction_residual = float(
                np.max(np.abs(f.samples - total.samples))
            ) / sup
            decomposition.lambda_inf = self.norms.lambda_q(decomposition.entries(), gf).norm
            level_pieces = [p for p in decomposition.pieces if p.kind == "level"]
            decomposition.constants = {
                "size": size,
                "cross_projection_size": d3,
                "cross_projection_sum": float(np.max(np.abs(d4_total))) / sup,
                "max_relative_moment": max(
                    (
                        max(abs(r) for r in p.moment_residuals) / (p.h.sup_norm() * p.ball.volume)
                        for p in level_pieces
                    ),
                    default=0.0,
                ),
                "lambda_ratio": decomposition.lambda_inf / decomposition.source_norm,
                "levels": float(len(distinct)),
            }
        except Exception as e:
            logger.error(f"Multi-level decomposition failed: {e}")
            raise

        logger.info(
            f"Multi-level decomposition: {len(decomposition.pieces)} pieces over levels "
            f"{decomposition.k_range}, residual {decomposition.reconstruction_residual:.3e}"
        )
        return decomposition

    def _assemble(
        self, f: GridFunction, part: CzPart, upper: Sequence[CzPart], s: int, k: int
    ) -> Tuple[Optional[AtomPiece], List[Patch]]:
        terms, projections = self._cross_terms(f, part, upper, s)
        lo = np.array(part.b.lo)
        hi = np.array(part.b.hi)
        for term in terms:
            lo = np.minimum(lo, term.lo)
            hi = np.maximum(hi, term.hi)
        lo_t, hi_t = tuple(int(v) for v in lo), tuple(int(v) for v in hi)
        values = part.b.window_values(lo_t, hi_t)
        for term in terms:
            values = values - term.window_values(lo_t, hi_t)
        if not np.any(values):
            return None, projections

        h = Patch(self.grid, lo_t, values)
        ball = part.ball.dilate(18.0)
        piece = AtomPiece(
            h=h,
            ball=ball,
            kind="level",
            level=k,
            index=part.index,
            moment_residuals=self.piece_moments(h, ball, s),
            support_ok=self.supported_in(h, ball),
        )
        return piece, projections

    def certify_atom(
        self,
        a: Sampled,
        ball: Ball,
        gf: GrowthFunction,
        q: float,
        s: int,
        q_floor: Optional[float] = None,
    ) -> AtomCertificate:
        """
        Measure the three atom clauses on a candidate

        Args:
            a: Candidate atom
            ball: Declared support ball
            gf: Growth function
            q: Order in (1, inf]
            s: Moment degree
            q_floor: Estimated q(phi); q must exceed it when given

        Returns:
            Certificate; failing clauses are reported, never raised
        """
        support = self.supported_in(a, ball, slack=self.grid.cell_diameter)
        try:
            measured = self.norms.lq_phi_ball_norm(a, gf, ball, q).norm
        except PreconditionError as e:
            if "not supported" not in str(e):
                raise
            measured = math.inf
        bound = 1.0 / self.norms.indicator_norm(gf, ball)
        residuals = self.piece_moments(a, ball, s)
        tolerance = self.moment_tolerance(a, ball)
        passes = {
            "support": support,
            "size": bool(measured <= bound * (1.0 + self.config.size_tolerance)),
            "moments": bool(all(abs(r) <= tolerance for r in residuals)),
        }
        if q_floor is not None:
            passes["order"] = bool(q > q_floor)
        return AtomCertificate(
            kind="atom",
            ball=BallModel.from_ball(ball),
            q=q,
            s=s,
            measured_norm=measured,
            bound=bound,
            moment_residuals=residuals,
            moment_tolerance=tolerance,
            passes=passes,
            passed=all(passes.values()),
        )

    @staticmethod
    def log_atom_bound(ball: Ball) -> float:
        """(log(e + 1/|B|) + sup_B log(e + |x|)) / |B|"""
        volume = ball.volume
        return (math.log(math.e + 1.0 / volume) + math.log(math.e + ball.sup_abs)) / volume

    def certify_log_atom(self, a: Sampled, ball: Ball) -> AtomCertificate:
        """Support, sup bound and zero mean of a log-atom candidate"""
        bound = self.log_atom_bound(ball)
        measured = a.sup_norm()
        residuals = self.piece_moments(a, ball, 0)
        tolerance = self.moment_tolerance(a, ball)
        passes = {
            "support": self.supported_in(a, ball, slack=self.grid.cell_diameter),
            "size": bool(measured <= bound * (1.0 + self.config.size_tolerance)),
            "moments": bool(abs(residuals[0]) <= tolerance),
        }
        return AtomCertificate(
            kind="log-atom",
            ball=BallModel.from_ball(ball),
            q=math.inf,
            s=0,
            measured_norm=measured,
            bound=bound,
            moment_residuals=residuals,
            moment_tolerance=tolerance,
            passes=passes,
            passed=all(passes.values()),
        )

    def log_atom_conversion_constant(self, gf: GrowthFunction, balls: BallFamily) -> float:
        """
        Smallest C converting sup-normalized atoms of gf into log-atoms and back

        Both directions compare the two sup bounds, so C is the largest ratio
        between them over the family.
        """
        balls.require_nonempty()
        worst = 1.0
        for ball in balls:
            ratio = (1.0 / self.norms.indicator_norm(gf, ball)) / self.log_atom_bound(ball)
            worst = max(worst, ratio, 1.0 / ratio)
        if worst > self.config.log_atom_c_max:
            raise NumericalError(
                "conversion constant above its cap", constant=worst, cap=self.config.log_atom_c_max
            )
        return worst

    def finite_decompose(
        self,
        f: GridFunction,
        gf: GrowthFunction,
        q: float,
        s: int,
        dictionary: TestDictionary,
        ball: Ball,
        m_hat: Optional[int] = None,
        q_floor: Optional[float] = None,
        epsilon: Optional[float] = None,
        mollify_scale: Optional[float] = None,
    ) -> FiniteDecomposition:
        """
        Finite decomposition of a function supported in a ball

        Args:
            f: Function supported in ``ball``
            gf: Growth function
            q: Atom order, finite and above q_floor
            s: Moment degree
            dictionary: Test dictionary
            ball: Support ball B(x0, r)
            m_hat: Estimated m(phi)
            q_floor: Estimated q(phi)
            epsilon: Target remainder norm
            mollify_scale: Smooth the input first and enlarge the ball accordingly

        Returns:
            g, the truncated tail and the remainder report
        """
        if not 1 < q < math.inf or (q_floor is not None and q <= q_floor):
            raise PreconditionError("atom order outside (q(phi), inf)", q=q, q_floor=q_floor)
        if mollify_scale is not None:
            f = mollify(f, mollify_scale)
            ball = Ball(ball.center, ball.radius + mollify_scale)
        if not self.supported_in(f, ball, slack=self.grid.cell_diameter):
            raise PreconditionError("not supported in ball", ball=ball)
        eps = self.config.truncation_epsilon if epsilon is None else epsilon
        if f.is_zero():
            return FiniteDecomposition(
                g=None, tail=[], k_prime=0, c_tilde=0.0, g_constant=0.0, certificate=None,
                truncation_k=0, remainder_norm=0.0, decay_curve=[], quasi_norm=0.0,
                normalization=0.0, mollify_scale=mollify_scale,
            )

        fstar = self.maximal.grand_maximal(f, dictionary)
        normalization = self.norms.luxembourg_norm(fstar, gf).norm
        f_hat = f / normalization
        star_hat = fstar / normalization
        source = self.multilevel_decompose(f_hat, gf, s, dictionary, m_hat=m_hat, fstar=star_hat)

        double = ball.dilate(2.0)
        outside = ~double.contains(self.grid.points)
        max_out = float(star_hat.samples[outside].max()) if outside.any() else 0.0
        c_tilde = max_out * self.norms.indicator_norm(gf, ball)
        k_min = source.k_range[0] if source.k_range else 0
        k_prime = math.ceil(math.log2(max_out)) - 1 if max_out > 0 else k_min - 1

        # the tail lives in Omega^{k'+1}, inside 2B, so f - tail vanishes outside 2B exactly
        tail = [p for p in source.pieces if p.kind == "level" and p.level > k_prime]
        tail.sort(key=lambda p: (abs(p.level) + p.index, p.level, p.index))
        g_values = np.array(f_hat.samples)
        for piece in tail:
            g_values[piece.h.slices] -= piece.h.values

        g_piece, certificate, g_constant = None, None, 0.0
        g_function = GridFunction(self.grid, g_values)
        if not g_function.is_zero():
            g_constant = g_function.sup_norm() * self.norms.indicator_norm(gf, double)
            g_patch = Patch(self.grid, (0,) * self.grid.dim, g_values)
            g_piece = AtomPiece(
                h=g_patch,
                ball=double,
                kind="g",
                moment_residuals=self.piece_moments(g_patch, double, s),
                support_ok=self.supported_in(g_patch, double, slack=self.grid.cell_diameter),
            )
            certificate = self.certify_atom(g_function / g_constant, double, gf, math.inf, s)

        curve: List[Tuple[int, float]] = []
        k_cap = 1
        while True:
            kept = [p for p in tail if abs(p.level) + p.index <= k_cap]
            remainder = np.zeros(self.grid.shape)
            for piece in tail:
                if abs(piece.level) + piece.index > k_cap:
                    remainder[piece.h.slices] += piece.h.values
            norm = self.norms.lq_phi_ball_norm(
                GridFunction(self.grid, remainder), gf, double, q
            ).norm if np.any(remainder) else 0.0
            curve.append((k_cap, norm))
            if norm <= eps:
                break
            if k_cap >= self.config.truncation_k_max:
                raise ConvergenceError("truncation did not converge", curve=curve)
            k_cap *= 2

        for piece in kept:
            piece.kind = "l"
        pieces = ([g_piece] if g_piece else []) + kept
        entries = [AtomEntry(p.h, p.ball, math.inf if p.kind == "g" else q) for p in pieces]
        quasi_norm = self.norms.lambda_q(entries, gf).norm
        logger.info(
            f"Finite decomposition: k'={k_prime}, {len(kept)} tail pieces, remainder {norm:.3e}"
        )
        return FiniteDecomposition(
            g=g_piece,
            tail=kept,
            k_prime=k_prime,
            c_tilde=c_tilde,
            g_constant=g_constant,
            certificate=certificate,
            truncation_k=k_cap,
            remainder_norm=norm,
            decay_curve=curve,
            quasi_norm=quasi_norm,
            normalization=normalization,
            mollify_scale=mollify_scale,
            source=source,
        )

    def reconstruct_and_bound(
        self,
        entries: Sequence[AtomEntry],
        gf: GrowthFunction,
        dictionary: TestDictionary,
        m_hat: Optional[int] = None,
    ) -> Tuple[GridFunction, float]:
        """
        Sum a list of atom multiples and compare its Hardy norm with Lambda_q

        Args:
            entries: Certified atom multiples
            gf: Growth function
            dictionary: Test dictionary
            m_hat: Estimated m(phi), checked against the dictionary

        Returns:
            The sum and hphi_norm(sum) / Lambda_q(entries); 0 for an empty list
        """
        self.maximal.require_smoothness(dictionary, m_hat)
        total = GridFunction.zeros(self.grid)
        for entry in entries:
            total = total + entry.to_function()
        lam = self.norms.lambda_q(entries, gf).norm
        if lam == 0:
            return total, 0.0
        return total, self.maximal.hphi_norm(total, gf, dictionary, m_hat=m_hat).norm / lam

    def level_set_sum_ratio(
        self,
        f: GridFunction,
        gf: GrowthFunction,
        dictionary: TestDictionary,
        lam: float,
        fstar: Optional[GridFunction] = None,
        m_hat: Optional[int] = None,
    ) -> float:
        """sum_k phi(Omega^k, 2^k / lam) divided by int phi(x, f*/lam)"""
        self.maximal.require_smoothness(dictionary, m_hat)
        if fstar is None:
            fstar = self.maximal.grand_maximal(f, dictionary)
        if fstar.is_zero():
            return 0.0
        values = fstar.samples
        points = self.grid.points
        k_max = math.ceil(math.log2(float(values.max())))
        total = 0.0
        for k in range(k_max - self.config.level_depth, k_max):
            omega = values > 2.0 ** k
            if omega.any():
                total += float(np.sum(gf(points[omega], np.full(omega.sum(), 2.0 ** k / lam))))
        support = values > 0
        reference = float(np.sum(gf(points[support], values[support] / lam)))
        return total / reference
