"""
Mean-oscillation norms, bounded truncation, the duality pairing and the
pointwise multiplier check
"""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import PreconditionError
from app.schemas.reports import BallModel, BmoReport, MultiplierMember, MultiplierReport, OscillationRow
from app.services.grid import Ball, BallFamily, Grid, GridFunction
from app.services.growth import GrowthFunction, identity
from app.services.norms import AtomEntry, NormService

logger = logging.getLogger(__name__)

Weight = Callable[[Ball], float]


def radius_weight(ball: Ball) -> float:
    """(|log r| + log(e + |a|)) / |B|"""
    center = float(np.linalg.norm(ball.center))
    return (abs(math.log(ball.radius)) + math.log(math.e + center)) / ball.volume


def volume_weight(ball: Ball) -> float:
    """(log(e + 1/|B|) + sup_B log(e + |x|)) / |B|"""
    volume = ball.volume
    return (math.log(math.e + 1.0 / volume) + math.log(math.e + ball.sup_abs)) / volume


LOG_WEIGHTS = {"radius": radius_weight, "volume": volume_weight}


class BmoService:
    """Service for BMO-type quantities over a ball family"""

    def __init__(self, grid: Grid, config: Settings = settings, norms: Optional[NormService] = None):
        self.grid = grid
        self.config = config
        self.norms = norms or NormService(grid, config)

    def _ball_values(self, f: GridFunction, ball: Ball) -> np.ndarray:
        slices, local = self.grid.local_mask(ball)
        values = f.samples[slices][local]
        if values.size == 0:
            raise PreconditionError("degenerate ball", ball=ball)
        return values

    def oscillation(self, f: GridFunction, ball: Ball) -> float:
        """Integral of |f - f_B| over B; exactly 0 when f is constant on B"""
        values = self._ball_values(f, ball)
        if np.ptp(values) == 0:
            return 0.0
        return float(np.sum(np.abs(values - values.mean()))) * self.grid.cell_volume

    def double_oscillation(self, f: GridFunction, ball: Ball) -> float:
        """(1/|B|) times the double integral of |f(x) - f(y)| over B x B"""
        values = np.sort(self._ball_values(f, ball))
        n = values.size
        ranks = 2.0 * np.arange(n) - n + 1.0
        return 2.0 * float(np.sum(values * ranks)) * self.grid.cell_volume / n

    def _sup_report(
        self,
        kind: str,
        f: GridFunction,
        balls: BallFamily,
        weight: Weight,
        measure: Callable[[GridFunction, Ball], float],
        growth: Optional[str] = None,
    ) -> BmoReport:
        balls.require_nonempty()

        def row(ball: Ball) -> OscillationRow:
            osc = measure(f, ball)
            w = weight(ball)
            return OscillationRow(
                center=list(ball.center), radius=ball.radius, oscillation=osc, weight=w, value=w * osc
            )

        try:
            table = parallel_map(row, list(balls), self.config.threads)
        except Exception as e:
            logger.error(f"Oscillation table failed: {e}")
            raise

        best = int(np.argmax([r.value for r in table]))
        norm = table[best].value
        witness = BallModel(center=table[best].center, radius=table[best].radius) if norm > 0 else None
        logger.debug(f"{kind} oscillation sup {norm} over {len(table)} balls")
        return BmoReport(
            kind=kind,
            growth=growth,
            norm=norm,
            witness_ball=witness,
            family_digest=balls.digest(),
            family_size=len(balls),
            table=table,
        )

    def bmo_phi_norm(self, f: GridFunction, gf: GrowthFunction, balls: BallFamily) -> BmoReport:
        """
        sup over the family of (1/||chi_B||_{L^phi}) * integral of |f - f_B| over B

        Args:
            f: Sampled function
            gf: Growth function
            balls: Ball family standing in for all balls

        Returns:
            Report with the witness ball and the per-ball table
        """
        return self._sup_report(
            "phi",
            f,
            balls,
            lambda ball: 1.0 / self.norms.indicator_norm(gf, ball),
            self.oscillation,
            growth=gf.key,
        )

    def bmo_log_norm(self, f: GridFunction, balls: BallFamily, weight: str = "radius") -> BmoReport:
        """sup over the family of the logarithmic weight times the oscillation integral"""
        if weight not in LOG_WEIGHTS:
            raise PreconditionError("unknown log weight", weight=weight)
        return self._sup_report("log", f, balls, LOG_WEIGHTS[weight], self.oscillation)

    def double_integral_norm(self, f: GridFunction, gf: GrowthFunction, balls: BallFamily) -> BmoReport:
        """Double-integral form of the BMO^phi norm; between the norm and twice the norm"""
        return self._sup_report(
            "double",
            f,
            balls,
            lambda ball: 1.0 / self.norms.indicator_norm(gf, ball),
            self.double_oscillation,
            growth=gf.key,
        )

    @staticmethod
    def log_weight_equivalence(balls: BallFamily) -> float:
        """Two-sided constant between the radius and volume log weights"""
        balls.require_nonempty()
        worst = 1.0
        for ball in balls:
            ratio = volume_weight(ball) / radius_weight(ball)
            worst = max(worst, ratio, 1.0 / ratio)
        return worst

    @staticmethod
    def truncate(b: GridFunction, n: float) -> GridFunction:
        """Clamp b to [-N, N]"""
        if not n > 0:
            raise PreconditionError("truncation level must be positive", N=n)
        return b.with_samples(np.clip(b.samples, -n, n))

    def pairing(self, b: GridFunction, entries: Sequence[AtomEntry]) -> float:
        """Integral of (sum_j b_j) * b"""
        total = 0.0
        for entry in entries:
            atom = entry.b
            if isinstance(atom, GridFunction):
                total += float(np.sum(atom.samples * b.samples))
            else:
                total += float(np.sum(atom.values * b.samples[atom.slices]))
        return total * self.grid.cell_volume

    def pairing_complex(
        self, b_real: GridFunction, b_imag: GridFunction, entries: Sequence[AtomEntry]
    ) -> complex:
        return complex(self.pairing(b_real, entries), self.pairing(b_imag, entries))

    def pairing_ratio(
        self,
        b: GridFunction,
        entries: Sequence[AtomEntry],
        gf: GrowthFunction,
        balls: BallFamily,
    ) -> float:
        """|pairing| divided by ||b||_{BMO^phi} * Lambda_q"""
        value = abs(self.pairing(b, entries))
        if value == 0:
            return 0.0
        scale = self.bmo_phi_norm(b, gf, balls).norm * self.norms.lambda_q(entries, gf).norm
        return value / scale if scale > 0 else math.inf

    def sign_test_atom(self, b: GridFunction, ball: Ball, gf: GrowthFunction) -> GridFunction:
        """
        Atom whose pairing with b is half the weighted oscillation of b on the ball

        a = (1/2) ||chi_B||^{-1} (sign(b - b_B) - mean_B sign(b - b_B)) chi_B
        """
        slices, local = self.grid.local_mask(ball)
        values = b.samples[slices][local]
        if values.size == 0:
            raise PreconditionError("degenerate ball", ball=ball)
        signs = np.sign(values - values.mean())
        pattern = signs - signs.mean()
        samples = np.zeros(self.grid.shape)
        window = np.zeros(local.shape)
        window[local] = 0.5 * pattern / self.norms.indicator_norm(gf, ball)
        samples[slices] = window
        return GridFunction(self.grid, samples)

    def multiplier_check(
        self,
        g: GridFunction,
        corpus: Sequence[Tuple[str, GridFunction]],
        balls: BallFamily,
    ) -> MultiplierReport:
        """
        Multiplier quantities of g and the empirical multiplier ratio on classical BMO

        Args:
            g: Candidate multiplier
            corpus: Named BMO functions
            balls: Ball family

        Returns:
            M(g) = ||g||_inf + ||g||_{BMO^log} and R(g) = max ||fg||_BMO / ||f||_BMO
        """
        if not corpus:
            raise PreconditionError("corpus degenerate", reason="empty")
        classical = identity()
        sup_norm = g.sup_norm()
        bmo_log = self.bmo_log_norm(g, balls).norm
        big_m = sup_norm + bmo_log

        members: List[MultiplierMember] = []
        for name, f in corpus:
            base = self.bmo_phi_norm(f, classical, balls).norm
            if base == 0:
                logger.warning(f"Skipping corpus member {name}: zero BMO norm")
                members.append(MultiplierMember(name=name, bmo=0.0, product_bmo=0.0, skipped=True))
                continue
            product = self.bmo_phi_norm(f * g, classical, balls).norm
            members.append(
                MultiplierMember(name=name, bmo=base, product_bmo=product, ratio=product / base)
            )
        ratios = [m.ratio for m in members if not m.skipped]
        if not ratios:
            raise PreconditionError("corpus degenerate", members=len(corpus))

        big_r = max(ratios)
        logger.info(f"Multiplier check: M={big_m:.6g}, R={big_r:.6g} over {len(ratios)} members")
        return MultiplierReport(
            sup_norm=sup_norm,
            bmo_log=bmo_log,
            M=big_m,
            R=big_r,
            ratio=big_r / big_m if big_m > 0 else 0.0,
            family_digest=balls.digest(),
            members=members,
        )
