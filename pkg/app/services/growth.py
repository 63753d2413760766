"""
Growth functions phi(x, t): built-in families, index estimation and
structural checks
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import NumericalError, PreconditionError
from app.schemas.reports import (
    AqResult,
    BallModel,
    GrowthAxioms,
    IndexReport,
    TypeEstimate,
    TypeWitness,
)
from app.services.grid import Ball, BallFamily, Grid

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DeclaredIndices:
    """Indices a built-in is known to have; never read by the estimators"""

    lower: Fraction
    upper: Fraction
    muckenhoupt: Fraction

    def as_strings(self) -> Dict[str, str]:
        return {
            "i": str(self.lower),
            "I": str(self.upper),
            "q": str(self.muckenhoupt),
        }


@dataclass(frozen=True, eq=False)
class GrowthFunction:
    """
    Musielak-Orlicz growth function

    ``evaluator(points, t)`` takes points of shape (..., n) and t broadcastable
    against points.shape[:-1]. ``log_evaluator`` returns log phi without
    underflow at extreme arguments.
    """

    name: str
    evaluator: Evaluator
    params: Tuple[Tuple[str, float], ...] = ()
    declared: Optional[DeclaredIndices] = None
    log_evaluator: Optional[Evaluator] = field(default=None, repr=False)

    @property
    def key(self) -> str:
        args = ",".join(f"{k}={v:.17g}" for k, v in self.params)
        return f"{self.name}({args})"

    def params_dict(self) -> Dict[str, float]:
        return dict(self.params)

    def __call__(self, points: np.ndarray, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise PreconditionError("negative argument", growth=self.key)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.asarray(self.evaluator(np.asarray(points, dtype=float), t), dtype=float)

    def log(self, points: np.ndarray, t: np.ndarray) -> np.ndarray:
        """log phi(x, t) for t > 0"""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise PreconditionError("negative argument", growth=self.key)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if self.log_evaluator is not None:
                return np.asarray(self.log_evaluator(np.asarray(points, dtype=float), t))
            return np.log(self(points, t))


def _radius(points: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(points * points, axis=-1))


def power(a: float, p: float, dim: int = 1) -> GrowthFunction:
    """phi(x, t) = |x|^a t^p"""

    def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return _radius(points) ** a * t ** p

    def log_evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return a * np.log(_radius(points)) + p * np.log(t)

    q = Fraction(1) if a <= 0 else 1 + Fraction(a).limit_denominator(1 << 20) / dim
    lower = Fraction(p).limit_denominator(1 << 20)
    return GrowthFunction(
        name="power",
        evaluator=evaluate,
        params=(("a", float(a)), ("p", float(p))),
        declared=DeclaredIndices(lower, lower, q),
        log_evaluator=log_evaluate,
    )


def log_theta() -> GrowthFunction:
    """theta(x, t) = t / (log(e + |x|) + log(e + t))"""

    def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return t / (np.log(math.e + _radius(points)) + np.log(math.e + t))

    def log_evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return np.log(t) - np.log(np.log(math.e + _radius(points)) + np.log(math.e + t))

    one = Fraction(1)
    return GrowthFunction(
        name="log-theta",
        evaluator=evaluate,
        declared=DeclaredIndices(one, one, one),
        log_evaluator=log_evaluate,
    )


def p_log(p: float) -> GrowthFunction:
    """phi(x, t) = t^p / (log(e + |x|) + log(e + t^p))^p"""

    def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        tp = t ** p
        return tp / (np.log(math.e + _radius(points)) + np.log(math.e + tp)) ** p

    def log_evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        logt = np.log(t)
        # log(e + t^p) computed without overflow for huge t
        log_e_tp = np.logaddexp(1.0, p * logt)
        return p * logt - p * np.log(np.log(math.e + _radius(points)) + log_e_tp)

    lower = Fraction(p).limit_denominator(1 << 20)
    return GrowthFunction(
        name="p-log",
        evaluator=evaluate,
        params=(("p", float(p)),),
        declared=DeclaredIndices(lower, lower, Fraction(1)),
        log_evaluator=log_evaluate,
    )


def log_ratio(alpha: float, beta: float, gamma: float) -> GrowthFunction:
    """phi(x, t) = t^alpha / (log(e + |x|)^beta + log(e + t)^gamma)"""
    if not 0 < alpha <= 1:
        raise PreconditionError("log-ratio needs 0 < alpha <= 1", alpha=alpha)

    def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        return t ** alpha / (
            np.log(math.e + _radius(points)) ** beta + np.log(math.e + t) ** gamma
        )

    def log_evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
        logt = np.log(t)
        return alpha * logt - np.log(
            np.log(math.e + _radius(points)) ** beta + np.logaddexp(1.0, logt) ** gamma
        )

    lower = Fraction(alpha).limit_denominator(1 << 20)
    return GrowthFunction(
        name="log-ratio",
        evaluator=evaluate,
        params=(("alpha", float(alpha)), ("beta", float(beta)), ("gamma", float(gamma))),
        declared=DeclaredIndices(lower, lower, Fraction(1)),
        log_evaluator=log_evaluate,
    )


def identity() -> GrowthFunction:
    """phi(x, t) = t, the classical case"""
    return power(0.0, 1.0)


def from_spec(spec, dim: int = 1) -> GrowthFunction:
    """Build a built-in from a GrowthSpec"""
    name = getattr(spec.name, "value", spec.name)
    if name == "power":
        return power(spec.a, spec.p, dim)
    if name == "log-theta":
        return log_theta()
    if name == "p-log":
        return p_log(spec.p)
    if name == "log-ratio":
        return log_ratio(spec.alpha, spec.beta, spec.gamma)
    raise PreconditionError(f"unknown growth function: {name}")


def t_grid(config: Settings = settings) -> np.ndarray:
    """Shared log-spaced t-grid for every sup over t"""
    return np.logspace(
        math.log10(config.t_grid_min), math.log10(config.t_grid_max), config.t_grid_points
    )


def ball_masses(gf: GrowthFunction, grid: Grid, ball: Ball, ts: np.ndarray) -> np.ndarray:
    """phi(B, t) for every t, by midpoint quadrature over the ball's nodes"""
    slices, local = grid.local_mask(ball)
    points = grid.points[slices][local]
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if points.size == 0:
        return np.zeros(ts.shape)
    values = gf(points[:, None, :], ts[None, :])
    return values.sum(axis=0) * grid.cell_volume


def eval_phi(gf: GrowthFunction, x: Sequence[float], t: float) -> float:
    """phi(x, t) at a single point"""
    return float(gf(np.asarray(x, dtype=float), np.asarray(t, dtype=float)))


def _fraction_lattice(denominator: int, start: Fraction, stop: Fraction) -> List[Fraction]:
    first = math.ceil(start * denominator)
    last = math.floor(stop * denominator)
    return [Fraction(k, denominator) for k in range(first, last + 1)]


class GrowthService:
    """Service for index estimation and structural constants"""

    def __init__(self, grid: Grid, config: Settings = settings):
        self.grid = grid
        self.config = config
        self._reports: Dict[Tuple[str, str], IndexReport] = {}

    def t_grid(self) -> np.ndarray:
        return t_grid(self.config)

    def _sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        nodes = self.grid.points.reshape(-1, self.grid.dim)
        radius = np.sqrt(np.sum(nodes * nodes, axis=-1))
        picks = rng.choice(len(nodes), size=min(count, len(nodes)), replace=False)
        # The radial extremes are always examined
        chosen = np.unique(np.concatenate([picks, [radius.argmin(), radius.argmax()]]))
        return nodes[chosen]

    def estimate_types(
        self, gf: GrowthFunction, sample_budget: Optional[int] = None
    ) -> TypeEstimate:
        """
        Estimate the critical uniform lower and upper types

        Args:
            gf: Growth function
            sample_budget: Minimum number of (x, s, t) triples

        Returns:
            Lattice estimates with the binding sample of each
        """
        budget = sample_budget or self.config.type_sample_budget
        if budget < 1000:
            raise PreconditionError("type estimation needs at least 1000 samples", budget=budget)

        ts = self.t_grid()
        per_side = self.config.type_s_points
        decades = self.config.type_decades
        s_low = np.logspace(-decades, 0.0, per_side + 1)[:-1]
        s_high = np.logspace(0.0, decades, per_side)
        nx = max(2, math.ceil(budget / (len(ts) * 2 * per_side)))
        rng = np.random.default_rng(self.config.seed)
        xs = self._sample_points(rng, nx)

        base = gf.log(xs[:, None, :], ts[None, :])
        if not np.all(np.isfinite(base)):
            raise PreconditionError("degenerate growth function", growth=gf.key)

        log_c = math.log(self.config.type_constant)
        denom = self.config.lattice_denominator
        lattice = _fraction_lattice(denom, Fraction(1, denom), Fraction(self.config.p_lattice_max))

        def excess_table(s_values: np.ndarray) -> np.ndarray:
            shifted = gf.log(
                xs[:, None, None, :], ts[None, :, None] * s_values[None, None, :]
            )
            if np.any(np.isnan(shifted)) or np.any(shifted == -np.inf):
                raise PreconditionError("degenerate growth function", growth=gf.key)
            return shifted - base[:, :, None]

        low_table = excess_table(s_low)
        high_table = excess_table(s_high)
        low_max = low_table.max(axis=(0, 1))
        high_max = high_table.max(axis=(0, 1))
        log_low, log_high = np.log(s_low), np.log(s_high)

        def binding(table: np.ndarray, logs: np.ndarray, p: Fraction) -> TypeWitness:
            excess = table - float(p) * logs[None, None, :]
            i, j, k = np.unravel_index(np.argmax(excess), excess.shape)
            return TypeWitness(
                x=[float(v) for v in xs[i]],
                s=float(np.exp(logs[k])),
                t=float(ts[j]),
                excess=float(excess[i, j, k]),
            )

        lower = Fraction(0)
        for p in lattice:
            if np.max(low_max - float(p) * log_low) <= log_c:
                lower = p
            else:
                break

        upper: Optional[Fraction] = None
        for p in lattice:
            if np.max(high_max - float(p) * log_high) <= log_c:
                upper = p
                break
        if upper is None:
            raise NumericalError("upper type above the index lattice", growth=gf.key)

        samples = len(xs) * len(ts) * (len(s_low) + len(s_high))
        logger.debug(f"Types of {gf.key}: i={lower}, I={upper} from {samples} samples")
        return TypeEstimate(
            i_hat=float(lower),
            I_hat=float(upper),
            i_hat_fraction=str(lower),
            I_hat_fraction=str(upper),
            lower_witness=binding(low_table, log_low, lower) if lower > 0 else None,
            upper_witness=binding(high_table, log_high, upper),
            samples=samples,
        )

    def _normalized_weights(self, gf: GrowthFunction, ball: Ball, ts: np.ndarray) -> np.ndarray:
        slices, local = self.grid.local_mask(ball)
        points = self.grid.points[slices][local]
        if points.size == 0:
            raise PreconditionError("degenerate ball", ball=ball)
        weights = gf(points[:, None, :], ts[None, :])
        peak = weights.max(axis=0)
        if np.any(peak <= 0):
            raise PreconditionError("weight vanishes on ball", ball=ball)
        floor = weights.min(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return weights / floor[None, :]

    @staticmethod
    def _aq_ratios(normalized: np.ndarray, q: float) -> np.ndarray:
        """A_q ratio per t for one ball, from weights divided by their minimum"""
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            mean = normalized.mean(axis=0)
            if q == 1:
                ratio = mean
            else:
                dual = np.mean(normalized ** (-1.0 / (q - 1.0)), axis=0)
                ratio = mean * dual ** (q - 1.0)
        return np.where(np.isfinite(ratio), ratio, np.inf)

    def check_Aq(
        self,
        gf: GrowthFunction,
        q: float,
        balls: BallFamily,
        ts: Optional[np.ndarray] = None,
    ) -> AqResult:
        """
        Uniform Muckenhoupt check over a ball family and the t-grid

        Args:
            gf: Growth function
            q: Order, at least 1
            balls: Ball family standing in for all balls
            ts: t values; the shared t-grid by default

        Returns:
            Largest ratio with its witness and the verdict against aq_cap
        """
        if q < 1:
            raise PreconditionError("Muckenhoupt order below 1", q=q)
        balls.require_nonempty()
        ts = self.t_grid() if ts is None else np.asarray(ts, dtype=float)

        def worst(ball: Ball) -> Tuple[float, int]:
            ratios = self._aq_ratios(self._normalized_weights(gf, ball, ts), q)
            k = int(np.argmax(ratios))
            return float(ratios[k]), k

        results = parallel_map(worst, balls.balls, self.config.threads)
        index = max(range(len(results)), key=lambda i: results[i][0])
        constant, k = results[index]
        return AqResult(
            q=float(q),
            passed=bool(constant <= self.config.aq_cap),
            constant=constant,
            witness_ball=BallModel.from_ball(balls.balls[index]),
            witness_t=float(ts[k]),
        )

    def muckenhoupt_index(self, gf: GrowthFunction, balls: BallFamily) -> Tuple[Fraction, AqResult]:
        """Smallest lattice q passing check_Aq; the verdict is monotone in q"""
        denom = self.config.lattice_denominator
        lattice = _fraction_lattice(denom, Fraction(1), Fraction(self.config.q_lattice_max))
        ts = self.t_grid()
        verdicts: Dict[int, AqResult] = {}

        def probe(k: int) -> AqResult:
            if k not in verdicts:
                verdicts[k] = self.check_Aq(gf, float(lattice[k]), balls, ts)
            return verdicts[k]

        if not probe(len(lattice) - 1).passed:
            raise NumericalError(
                "no Muckenhoupt index on the lattice",
                growth=gf.key,
                constant=verdicts[len(lattice) - 1].constant,
            )
        lo, hi = -1, len(lattice) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if probe(mid).passed:
                hi = mid
            else:
                lo = mid
        return lattice[hi], verdicts[hi]

    def index_report(
        self,
        gf: GrowthFunction,
        balls: BallFamily,
        sample_budget: Optional[int] = None,
    ) -> IndexReport:
        """
        Estimate i, I, q and m for a growth function

        Args:
            gf: Growth function
            balls: Ball family for the Muckenhoupt scan
            sample_budget: Minimum type-estimation sample count

        Returns:
            Index report; cached per growth function and family
        """
        cache_key = (gf.key, balls.digest())
        if cache_key in self._reports:
            return self._reports[cache_key]

        try:
            types = self.estimate_types(gf, sample_budget)
            if types.i_hat <= 0:
                raise PreconditionError("not of positive lower type", growth=gf.key)
            q_hat, aq = self.muckenhoupt_index(gf, balls)
            i_hat = Fraction(types.i_hat_fraction)
            m_hat = math.floor(self.grid.dim * (q_hat / i_hat - 1))
        except Exception as e:
            logger.error(f"Index estimation failed for {gf.key}: {e}")
            raise

        report = IndexReport(
            growth=gf.name,
            params=gf.params_dict(),
            dim=self.grid.dim,
            i_hat=types.i_hat,
            I_hat=types.I_hat,
            q_hat=float(q_hat),
            m_hat=max(m_hat, 0),
            i_hat_fraction=types.i_hat_fraction,
            I_hat_fraction=types.I_hat_fraction,
            q_hat_fraction=str(q_hat),
            lower_witness=types.lower_witness,
            upper_witness=types.upper_witness,
            aq=aq,
            family_digest=balls.digest(),
            declared=gf.declared.as_strings() if gf.declared else None,
        )
        logger.info(
            f"Indices of {gf.key}: i={report.i_hat_fraction} I={report.I_hat_fraction} "
            f"q={report.q_hat_fraction} m={report.m_hat}"
        )
        self._reports[cache_key] = report
        return report

    def regularize(self, gf: GrowthFunction, i_hat: Optional[float] = None) -> GrowthFunction:
        """
        Regularized growth function int_0^t phi(x, s)/s ds

        Args:
            gf: Growth function of positive lower type
            i_hat: Lower type; estimated when omitted

        Returns:
            Growth function evaluated by adaptive quadrature
        """
        p = self.estimate_types(gf).i_hat if i_hat is None else float(i_hat)
        if p <= 0:
            raise PreconditionError("not of positive lower type", growth=gf.key)
        tol = self.config.regularize_tolerance
        # Beyond u_max the integrand is below tol by the lower-type bound
        u_max = math.log(self.config.type_constant / (p * tol)) / p

        def evaluate(points: np.ndarray, t: np.ndarray) -> np.ndarray:
            points, t = np.broadcast_arrays(points, t[..., None])
            t = t[..., 0]
            positive = t > 0
            t_eff = np.where(positive, t, 1.0)
            base = gf(points, t_eff)

            def integrand(u: float) -> np.ndarray:
                return gf(points, t_eff * math.exp(-u)) / base

            value, _ = integrate.quad_vec(integrand, 0.0, u_max, epsrel=tol, epsabs=0.0)
            return np.where(positive, value * base, 0.0)

        return GrowthFunction(
            name=f"{gf.name}~",
            evaluator=evaluate,
            params=gf.params + (("regularized", p),),
            declared=gf.declared,
        )

    def equivalence_constant(
        self, gf: GrowthFunction, regularized: GrowthFunction, points: np.ndarray
    ) -> float:
        """Smallest C with phi/C <= regularized <= C phi on the sample"""
        ts = self.t_grid()
        a = gf(points[:, None, :], ts[None, :])
        b = regularized(points[:, None, :], ts[None, :])
        return float(max(np.max(a / b), np.max(b / a)))

    def check_growth_axioms(self, gf: GrowthFunction, points: np.ndarray) -> GrowthAxioms:
        ts = np.concatenate([[0.0], self.t_grid()])
        values = gf(points[:, None, :], ts[None, :])
        return GrowthAxioms(
            vanishes_at_zero=bool(np.all(values[:, 0] == 0)),
            nondecreasing=bool(np.all(np.diff(values, axis=1) >= 0)),
            positive=bool(np.all(values[:, 1:] > 0)),
        )

    def quasi_subadditivity_constant(
        self, gf: GrowthFunction, points: np.ndarray, trials: int = 200, max_terms: int = 6
    ) -> float:
        """max phi(x, sum t_j) / sum phi(x, t_j) over random finite sequences"""
        rng = np.random.default_rng(self.config.seed)
        ts = self.t_grid()
        worst = 0.0
        for _ in range(trials):
            terms = rng.choice(ts, size=rng.integers(2, max_terms + 1))
            lhs = gf(points, np.full(len(points), terms.sum()))
            rhs = sum(gf(points, np.full(len(points), t)) for t in terms)
            worst = max(worst, float(np.max(lhs / rhs)))
        return worst

    def quasi_concavity_constant(
        self, gf: GrowthFunction, points: np.ndarray, trials: int = 200
    ) -> float:
        """max of (l phi(t) + (1-l) phi(s)) / phi(l t + (1-l) s)"""
        rng = np.random.default_rng(self.config.seed + 1)
        ts = self.t_grid()
        worst = 0.0
        for _ in range(trials):
            t, s = rng.choice(ts, size=2)
            lam = float(rng.uniform())
            n = len(points)
            lhs = lam * gf(points, np.full(n, t)) + (1 - lam) * gf(points, np.full(n, s))
            rhs = gf(points, np.full(n, lam * t + (1 - lam) * s))
            worst = max(worst, float(np.max(lhs / rhs)))
        return worst

    def doubling_constant(
        self, gf: GrowthFunction, balls: BallFamily, q: float, factor: float = 2.0
    ) -> float:
        """max over balls and t of phi(lambda B, t) / (lambda^{nq} phi(B, t))"""
        ts = self.t_grid()
        scale = factor ** (self.grid.dim * q)

        def ratio(ball: Ball) -> float:
            small = ball_masses(gf, self.grid, ball, ts)
            large = ball_masses(gf, self.grid, ball.dilate(factor), ts)
            return float(np.max(large / (scale * small)))

        return max(parallel_map(ratio, balls.balls, self.config.threads))

    def tail_constant(self, gf: GrowthFunction, balls: BallFamily, q: float) -> float:
        """max of r^{nq} int_{B^c} phi(x,t)/|x - x0|^{nq} dx / phi(B, t), truncated to the box"""
        ts = self.t_grid()
        power_nq = self.grid.dim * q
        nodes = self.grid.points.reshape(-1, self.grid.dim)

        def ratio(ball: Ball) -> float:
            outside = ~ball.contains(nodes)
            pts = nodes[outside]
            dist = ball.distance(pts)
            weights = gf(pts[:, None, :], ts[None, :]) / dist[:, None] ** power_nq
            tail = weights.sum(axis=0) * self.grid.cell_volume
            inner = ball_masses(gf, self.grid, ball, ts)
            return float(np.max(tail * ball.radius ** power_nq / inner))

        return max(parallel_map(ratio, balls.balls, self.config.threads))

    def structural_constants(
        self, gf: GrowthFunction, balls: BallFamily, q: float, i_hat: float
    ) -> Dict[str, float]:
        """Every sampled structural constant, keyed by name"""
        rng = np.random.default_rng(self.config.seed)
        points = self._sample_points(rng, 32)
        regularized = self.regularize(gf, i_hat)
        return {
            "quasi_subadditivity": self.quasi_subadditivity_constant(gf, points),
            "quasi_concavity": self.quasi_concavity_constant(gf, points),
            "regularization_equivalence": self.equivalence_constant(gf, regularized, points[:4]),
            "doubling": self.doubling_constant(gf, balls, q),
            "tail": self.tail_constant(gf, balls, q),
        }
