"""
Grand maximal function over a finite normalized test dictionary and the
uncentered Hardy-Littlewood maximal function over a ball family
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy import ndimage, signal

from app.core.concurrency import parallel_map
from app.core.config import Settings, settings
from app.core.exceptions import PreconditionError
from app.schemas.reports import NormResult
from app.services.grid import BallFamily, Grid, GridFunction, Patch
from app.services.growth import GrowthFunction, ball_masses, t_grid
from app.services.norms import NormService

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def _bump_numerator(k: int) -> Polynomial:
    """P_k with psi^(k)(y) = psi(y) P_k(y) / (1 - y^2)^(2k)"""
    if k == 0:
        return Polynomial([1.0])
    prev = _bump_numerator(k - 1)
    e = Polynomial([1.0, 0.0, -1.0])
    x = Polynomial([0.0, 1.0])
    return (prev.deriv() * e + 4 * (k - 1) * x * prev) * e - 2 * x * prev


def bump_derivative(k: int, y: np.ndarray) -> np.ndarray:
    """k-th derivative of exp(-1/(1 - y^2)), zero outside (-1, 1)"""
    y = np.asarray(y, dtype=float)
    inside = np.abs(y) < 1.0
    e = np.where(inside, 1.0 - y * y, 1.0)
    scale = np.exp(-1.0 / e - 2 * k * np.log(e))
    return np.where(inside, scale * _bump_numerator(k)(y), 0.0)


@dataclass(frozen=True)
class BumpComponent:
    """One-dimensional factor Q((x - c)/rho) psi^(k)((x - c)/rho)"""

    poly: Tuple[float, ...]
    shift: float = 0.0
    dilation: float = 1.0
    order: int = 0

    def derivative(self, j: int, x: np.ndarray) -> np.ndarray:
        """j-th x-derivative by the Leibniz rule"""
        y = (np.asarray(x, dtype=float) - self.shift) / self.dilation
        q = Polynomial(self.poly)
        total = np.zeros_like(y)
        for i in range(j + 1):
            qd = q.deriv(j - i) if j - i else q
            total = total + math.comb(j, i) * qd(y) * bump_derivative(self.order + i, y)
        return total / self.dilation ** j

    @property
    def support(self) -> Tuple[float, float]:
        return self.shift - self.dilation, self.shift + self.dilation


@dataclass(frozen=True)
class DictionaryMember:
    """Tensor product of bump components, normalized by its seminorm"""

    components: Tuple[BumpComponent, ...]
    amplitude: float
    label: str

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        out = np.full(points.shape[:-1], self.amplitude)
        for axis, comp in enumerate(self.components):
            out = out * comp.derivative(0, points[..., axis])
        return out


@dataclass(frozen=True)
class TestDictionary:
    """Finite family standing in for S_m, with dyadic scales"""

    m: int
    dim: int
    members: Tuple[DictionaryMember, ...]
    scales: Tuple[float, ...]
    seminorms: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.members)


def _base_components(m: int, count: int) -> List[Tuple[BumpComponent, str]]:
    """Deterministic generation order; longer lists extend shorter ones"""
    out: List[Tuple[BumpComponent, str]] = [(BumpComponent((1.0,)), "bump")]
    for k in range(1, m + 2):
        out.append((BumpComponent((1.0,), order=k), f"bump^({k})"))
    r = 1
    while len(out) < count:
        rho = 2.0 ** -r
        out.append((BumpComponent(tuple([0.0] * r + [1.0])), f"x^{r}*bump"))
        out.append((BumpComponent((1.0,), shift=1.0 - rho, dilation=rho), f"bump@+{r}"))
        out.append((BumpComponent((1.0,), shift=rho - 1.0, dilation=rho), f"bump@-{r}"))
        r += 1
    return out[:count]


def _diagonal_pairs(count: int) -> List[Tuple[int, int]]:
    pairs: List[Tuple[int, int]] = []
    total = 0
    while len(pairs) < count:
        pairs.extend((i, total - i) for i in range(total + 1))
        total += 1
    return pairs[:count]


class MaximalService:
    """Service for maximal functions on one grid"""

    def __init__(self, grid: Grid, config: Settings = settings):
        self.grid = grid
        self.config = config
        self.norms = NormService(grid, config)

    def default_scales(self) -> Tuple[float, ...]:
        """Dyadic scales from two cells to a fixed fraction of the box"""
        h = self.grid.min_spacing
        top = self.config.scale_fraction * float(self.grid.widths.min())
        scales, t = [], 2.0 * h
        while t <= top * (1 + 1e-12):
            scales.append(t)
            t *= 2.0
        return tuple(scales) or (2.0 * h,)

    def dyadic_scales(self, t_min: float, t_max: float) -> Tuple[float, ...]:
        if t_min < self.grid.spacing.max() * (1 - 1e-12) or t_max > float(self.grid.widths.min()):
            raise PreconditionError(
                "scales must lie within [cell width, box width]", t_min=t_min, t_max=t_max
            )
        if t_min > t_max:
            raise PreconditionError("empty scale range", t_min=t_min, t_max=t_max)
        scales, t = [], t_min
        while t <= t_max * (1 + 1e-12):
            scales.append(t)
            t *= 2.0
        return tuple(scales)

    def seminorm(self, components: Sequence[BumpComponent], m: int, amplitude: float = 1.0) -> float:
        """
        Weighted sup seminorm over derivatives of order <= m + 1

        Evaluated from the closed-form derivatives on a dense sample of the
        member's support.
        """
        n = len(components)
        weight_power = (m + 2) * (n + 1)
        samples = self.config.seminorm_samples
        if n == 2:
            samples = max(65, 2 * int(math.sqrt(samples)) + 1)
        axes = [np.linspace(*comp.support, samples) for comp in components]
        best = 0.0
        if n == 1:
            x = axes[0]
            weight = (1.0 + np.abs(x)) ** weight_power
            for j in range(m + 2):
                best = max(best, float(np.max(weight * np.abs(components[0].derivative(j, x)))))
        else:
            gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
            weight = (1.0 + np.sqrt(gx * gx + gy * gy)) ** weight_power
            cache = [
                [comp.derivative(j, ax) for j in range(m + 2)]
                for comp, ax in zip(components, axes)
            ]
            for total in range(m + 2):
                for j in range(total + 1):
                    values = np.outer(cache[0][j], cache[1][total - j])
                    best = max(best, float(np.max(weight * np.abs(values))))
        return best * abs(amplitude)

    def build_dictionary(
        self,
        m: Optional[int] = None,
        count: Optional[int] = None,
        scales: Optional[Sequence[float]] = None,
    ) -> TestDictionary:
        """
        Built-in normalized test dictionary

        Args:
            m: Smoothness order
            count: Number of members
            scales: Convolution scales; dyadic defaults when omitted

        Returns:
            Dictionary whose members all have seminorm 1
        """
        m = self.config.dictionary_m if m is None else m
        count = self.config.dictionary_size if count is None else count
        if m < 0 or count < 1:
            raise PreconditionError("dictionary needs m >= 0 and count >= 1", m=m, count=count)

        if self.grid.dim == 1:
            specs = [((comp,), label) for comp, label in _base_components(m, count)]
        else:
            pairs = _diagonal_pairs(count)
            width = max(max(p) for p in pairs) + 1
            base = _base_components(m, width)
            specs = [
                ((base[i][0], base[j][0]), f"{base[i][1]}x{base[j][1]}") for i, j in pairs
            ]

        members, seminorms = [], []
        for components, label in specs:
            raw = self.seminorm(components, m)
            member = DictionaryMember(components, 1.0 / raw, label)
            members.append(member)
            seminorms.append(self.seminorm(components, m, member.amplitude))

        chosen = tuple(scales) if scales is not None else self.default_scales()
        logger.debug(f"Dictionary m={m}: {len(members)} members, {len(chosen)} scales")
        return TestDictionary(
            m=m,
            dim=self.grid.dim,
            members=tuple(members),
            scales=tuple(float(t) for t in chosen),
            seminorms=tuple(seminorms),
        )

    def _kernel(self, member: DictionaryMember, t: float) -> np.ndarray:
        """Samples of t^{-n} g(x/t) times the cell volume on the stencil |x_i| <= t"""
        reach = [int(math.floor(t / h * (1 + 1e-12))) for h in self.grid.spacing]
        offsets = np.meshgrid(
            *[np.arange(-k, k + 1) * h for k, h in zip(reach, self.grid.spacing)],
            indexing="ij",
        )
        points = np.stack(offsets, axis=-1) / t
        return member.evaluate(points) * self.grid.cell_volume / t ** self.grid.dim

    def _nontangential(self, values: np.ndarray, t: float) -> np.ndarray:
        """max over nodes y with |y - x| < t"""
        if self.grid.dim == 1:
            k = max(int(math.ceil(t / self.grid.spacing[0])) - 1, 0)
            return ndimage.maximum_filter1d(values, size=2 * k + 1, mode="constant", cval=0.0)
        reach = [max(int(math.ceil(t / h)) - 1, 0) for h in self.grid.spacing]
        offsets = np.meshgrid(
            *[np.arange(-k, k + 1) * h for k, h in zip(reach, self.grid.spacing)],
            indexing="ij",
        )
        footprint = sum(o * o for o in offsets) < t * t
        return ndimage.maximum_filter(values, footprint=footprint, mode="constant", cval=0.0)

    def _maximal_array(self, values: np.ndarray, dictionary: TestDictionary) -> np.ndarray:
        if not np.any(values):
            return np.zeros_like(values)
        support = (values != 0).astype(float)

        def at_scale(t: float) -> np.ndarray:
            best = np.zeros_like(values)
            for member in dictionary.members:
                kernel = self._kernel(member, t)
                conv = signal.fftconvolve(values, kernel, mode="same")
                reach = signal.fftconvolve(support, (kernel != 0).astype(float), mode="same")
                best = np.maximum(best, np.where(reach > 0.5, np.abs(conv), 0.0))
            return self._nontangential(best, t)

        out = np.zeros_like(values)
        for layer in parallel_map(at_scale, dictionary.scales, self.config.threads):
            out = np.maximum(out, layer)
        return out

    def grand_maximal(self, f: GridFunction, dictionary: TestDictionary) -> GridFunction:
        """
        Nontangential grand maximal function over the dictionary

        Args:
            f: Sampled function
            dictionary: Test dictionary with its scales

        Returns:
            Pointwise lower bound of f*_m on the grid
        """
        return f.with_samples(self._maximal_array(f.samples, dictionary))

    def grand_maximal_patch(self, patch: Patch, dictionary: TestDictionary) -> Patch:
        """Grand maximal function of a windowed function, on a padded window"""
        t_max = max(dictionary.scales)
        pad = [int(math.ceil(2 * t_max / h)) + 2 for h in self.grid.spacing]
        lo = tuple(max(l - p, 0) for l, p in zip(patch.lo, pad))
        hi = tuple(min(h + p, self.grid.resolution) for h, p in zip(patch.hi, pad))
        values = patch.window_values(lo, hi)
        return Patch(self.grid, lo, self._maximal_array(values, dictionary))

    def hl_maximal(self, f: GridFunction, family: BallFamily) -> GridFunction:
        """Uncentered maximal function: sup of |f| node-averages over family balls containing x"""
        family.require_nonempty()
        out = np.zeros(self.grid.shape)
        magnitude = np.abs(f.samples)
        for ball in family:
            slices, local = self.grid.local_mask(ball)
            if not local.any():
                continue
            average = float(magnitude[slices][local].mean())
            view = out[slices]
            view[local] = np.maximum(view[local], average)
        return f.with_samples(out)

    def require_smoothness(self, dictionary: TestDictionary, m_hat: Optional[int]) -> None:
        if m_hat is not None and dictionary.m < m_hat:
            raise PreconditionError(
                "dictionary smoothness below m(phi)", m=dictionary.m, m_hat=m_hat
            )

    def hphi_norm(
        self,
        f: GridFunction,
        gf: GrowthFunction,
        dictionary: TestDictionary,
        m_hat: Optional[int] = None,
    ) -> NormResult:
        """
        Hardy-space norm ||f*||_{L^phi}

        Args:
            f: Sampled function
            gf: Growth function
            dictionary: Test dictionary; its m must reach m_hat
            m_hat: Estimated m(phi)

        Returns:
            Luxembourg norm of the grand maximal function
        """
        self.require_smoothness(dictionary, m_hat)
        return self.norms.luxembourg_norm(self.grand_maximal(f, dictionary), gf)

    def domination_constant(
        self, f: GridFunction, dictionary: TestDictionary, family: BallFamily
    ) -> float:
        """max of f*/Mf over nodes where Mf > 0"""
        star = self.grand_maximal(f, dictionary).samples
        hl = self.hl_maximal(f, family).samples
        used = hl > 0
        return float(np.max(star[used] / hl[used])) if used.any() else 0.0

    def weighted_maximal_constant(
        self, f: GridFunction, gf: GrowthFunction, q: float, family: BallFamily
    ) -> float:
        """max over t of int (Mf)^q phi(x,t) / int |f|^q phi(x,t)"""
        hl = self.hl_maximal(f, family).samples.reshape(-1)
        mag = np.abs(f.samples).reshape(-1)
        points = self.grid.points.reshape(-1, self.grid.dim)
        used = (hl > 0) | (mag > 0)
        ts = t_grid(self.config)
        weights = gf(points[used][:, None, :], ts[None, :])
        num = np.sum(hl[used][:, None] ** q * weights, axis=0)
        den = np.sum(mag[used][:, None] ** q * weights, axis=0)
        return float(np.max(num / den)) if np.all(den > 0) else math.inf

    def average_power_constant(
        self, f: GridFunction, gf: GrowthFunction, q: float, family: BallFamily
    ) -> float:
        """max over balls and t of avg_B(|f|)^q / (phi(B,t)^{-1} int_B |f|^q phi(x,t))"""
        ts = t_grid(self.config)
        mag = np.abs(f.samples)
        worst = 0.0
        for ball in family:
            slices, local = self.grid.local_mask(ball)
            values = mag[slices][local]
            if not np.any(values):
                continue
            points = self.grid.points[slices][local]
            weights = gf(points[:, None, :], ts[None, :])
            mass = ball_masses(gf, self.grid, ball, ts)
            weighted = np.sum(values[:, None] ** q * weights, axis=0) / mass
            worst = max(worst, float(np.max(values.mean() ** q / weighted)))
        return worst
