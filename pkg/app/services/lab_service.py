"""
Laboratory service: turns a RunConfig into grids, growth functions, inputs and reports
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.config import Settings, settings
from app.core.exceptions import InputFormatError, InvariantError, PreconditionError
from app.schemas.lab import (
    BallSpec,
    DecomposeMode,
    FamilyKind,
    InputSpec,
    NormKind,
    RunConfig,
)
from app.schemas.reports import (
    AtomCertificate,
    BallModel,
    BmoReport,
    DecompositionManifest,
    FiniteSummary,
    IndexReport,
    MultiplierReport,
    NormReport,
    PartRecord,
    PieceRecord,
)
from app.services.atoms import AtomicDecomposition, AtomPiece, AtomsService
from app.services.bmo import BmoService
from app.services.czd import CzDecomposition, CzdService
from app.services.grid import Ball, BallFamily, Grid, GridFunction, check_margin, format_csv, load_csv
from app.services.growth import GrowthService, from_spec
from app.services.maximal import MaximalService, TestDictionary
from app.services.plotting import function_svg, whitney_overlay_svg
from app.services.presets import build_preset

logger = logging.getLogger(__name__)

Artifacts = Dict[str, str]


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Read a JSON run configuration

    Args:
        path: Config file; defaults when omitted

    Returns:
        Validated RunConfig

    Raises:
        InputFormatError: Missing file or malformed JSON
        PreconditionError: Schema violation
    """
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputFormatError("cannot read config", path=str(path), reason=str(e))
    except json.JSONDecodeError as e:
        raise InputFormatError("malformed JSON config", path=str(path), line=e.lineno, reason=e.msg)
    return validate_run_config(data)


def validate_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise PreconditionError("invalid run configuration", errors=e.errors(include_url=False))


class LabService:
    """Service wiring every module for one run configuration"""

    def __init__(self, run: RunConfig, config: Settings = settings):
        updates = dict(run.tolerances)
        unknown = sorted(k for k in updates if k not in Settings.model_fields)
        if unknown:
            raise PreconditionError("unknown tolerance keys", keys=unknown)
        if run.seed is not None:
            updates["seed"] = run.seed
        if run.threads is not None:
            updates["threads"] = run.threads

        self.run = run
        self.config = config.model_copy(update=updates)
        self.grid = Grid(run.grid.dim, tuple(tuple(b) for b in run.grid.box), run.grid.resolution)
        self.gf = from_spec(run.growth, run.grid.dim)
        self.growth = GrowthService(self.grid, self.config)
        self.maximal = MaximalService(self.grid, self.config)
        self.norms = self.maximal.norms
        self.czd = CzdService(self.grid, self.config, self.maximal)
        self.atoms = AtomsService(self.grid, self.config, self.maximal, self.czd)
        self.bmo = BmoService(self.grid, self.config, self.norms)
        self._family: Optional[BallFamily] = None
        self._dictionary: Optional[TestDictionary] = None

    # --- inputs -----------------------------------------------------------

    @property
    def family(self) -> BallFamily:
        if self._family is None:
            spec = self.run.family
            if spec.kind == FamilyKind.COARSE:
                self._family = BallFamily.coarse(self.grid)
            elif spec.kind == FamilyKind.FINE:
                self._family = BallFamily.fine(self.grid)
            elif spec.kind == FamilyKind.RANDOM:
                self._family = BallFamily.random(self.grid, spec.count, self.config.seed)
            else:
                self._family = BallFamily(tuple(self.ball(b) for b in spec.balls))
        return self._family

    @staticmethod
    def ball(spec: Optional[BallSpec]) -> Optional[Ball]:
        return Ball(tuple(spec.center), spec.radius) if spec is not None else None

    def require_ball(self, *specs: Optional[BallSpec]) -> Ball:
        for spec in specs:
            if spec is not None:
                return self.ball(spec)
        raise PreconditionError("missing ball spec")

    def load_input(self, spec: Optional[InputSpec] = None, ball: Optional[Ball] = None) -> GridFunction:
        """Sample a preset or read a CSV function, then apply the scale"""
        spec = spec or self.run.input
        if spec.csv is not None:
            f = load_csv(spec.csv, self.grid)
        else:
            f = build_preset(spec.preset, self.grid, self.ball(spec.ball) or ball, self.gf, self.norms)
        return f * spec.scale if spec.scale != 1.0 else f

    def indices(self) -> IndexReport:
        return self.growth.index_report(self.gf, self.family, self.config.type_sample_budget)

    def dictionary(self, m_hat: int) -> TestDictionary:
        """Test dictionary of the configured order; its m must reach m_hat"""
        if self._dictionary is None:
            spec = self.run.dictionary
            m = self.config.dictionary_m if spec.m is None else spec.m
            if m < m_hat:
                raise PreconditionError("dictionary smoothness below m(phi)", m=m, m_hat=m_hat)
            scales = self.maximal.dyadic_scales(*spec.scales) if spec.scales else None
            self._dictionary = self.maximal.build_dictionary(m, spec.size, scales)
        return self._dictionary

    # --- commands -----------------------------------------------------------

    def run_indices(self) -> IndexReport:
        """Index report enriched with the structural constants of the growth function"""
        report = self.indices()
        rng = np.random.default_rng(self.config.seed)
        points = self.grid.points.reshape(-1, self.grid.dim)
        sample = points[rng.choice(len(points), size=min(64, len(points)), replace=False)]
        constants = self.growth.structural_constants(self.gf, self.family, report.q_hat, report.i_hat)
        return report.model_copy(
            update={
                "constants": constants,
                "axioms": self.growth.check_growth_axioms(self.gf, sample),
            }
        )

    def run_norm(self) -> Tuple[NormReport, Artifacts]:
        """Compute the quantity selected by the norm options"""
        options = self.run.norm
        f = self.load_input(ball=self.ball(options.ball))
        base = dict(
            kind=options.kind.value,
            growth=self.gf.key,
            input=self.run.input.label(),
            grid=self.grid.to_dict(),
        )
        artifacts: Artifacts = {}

        if options.kind == NormKind.LUXEMBOURG:
            result = self.norms.luxembourg_norm(f, self.gf)
            report = NormReport(norm=result.norm, iterations=result.iterations, **base)
        elif options.kind == NormKind.HARDY:
            m_hat = self.indices().m_hat
            dictionary = self.dictionary(m_hat)
            fstar = self.maximal.grand_maximal(f, dictionary)
            result = self.norms.luxembourg_norm(fstar, self.gf)
            report = NormReport(norm=result.norm, iterations=result.iterations, m=dictionary.m, **base)
            if options.export_maximal:
                artifacts["maximal.csv"] = format_csv(fstar)
                artifacts["maximal.svg"] = function_svg(fstar, f"grand maximal function, m={dictionary.m}")
                report.maximal_csv, report.maximal_svg = "maximal.csv", "maximal.svg"
        elif options.kind == NormKind.INDICATOR:
            ball = self.require_ball(options.ball)
            norm = self.norms.indicator_norm(self.gf, ball)
            report = NormReport(norm=norm, witness_ball=BallModel.from_ball(ball), **base)
        elif options.kind == NormKind.LQ_BALL:
            ball = self.require_ball(options.ball)
            result = self.norms.lq_phi_ball_norm(f, self.gf, ball, options.q)
            report = NormReport(
                norm=result.norm, witness_t=result.witness_t, witness_ball=BallModel.from_ball(ball), **base
            )
        else:
            if options.kind == NormKind.BMO_PHI:
                bmo = self.bmo.bmo_phi_norm(f, self.gf, self.family)
            else:
                bmo = self.bmo.bmo_log_norm(f, self.family, self.run.bmo.weight)
            report = NormReport(
                norm=bmo.norm, witness_ball=bmo.witness_ball, family_digest=bmo.family_digest, **base
            )

        logger.info(f"{options.kind.value} norm of {report.input} under {self.gf.key}: {report.norm}")
        return report, artifacts

    def _degree(self, m_hat: int) -> int:
        s = self.run.decompose.degree
        return m_hat if s is None else s

    def run_decompose(self) -> Tuple[DecompositionManifest, Artifacts]:
        """
        Run the selected decomposition pipeline and re-check its invariants

        Returns:
            Manifest and the Whitney overlay SVG

        Raises:
            InvariantError: A post-hoc check failed; nothing should be written
        """
        options = self.run.decompose
        f = self.load_input(ball=self.ball(options.ball))
        check_margin(f, self.config.support_margin)
        m_hat = self.indices().m_hat
        s = self._degree(m_hat)
        dictionary = self.dictionary(m_hat)
        base = dict(mode=options.mode.value, growth=self.gf.key, input=self.run.input.label(), degree=s)

        if options.mode == DecomposeMode.CZ:
            if options.height is None:
                raise PreconditionError("missing height for cz mode")
            dec = self.czd.cz_decompose(f, self.gf, options.height, s, dictionary, m_hat=m_hat)
            manifest = self._cz_manifest(dec, base)
            balls = dec.cover.balls if dec.cover else ()
        elif options.mode == DecomposeMode.MULTILEVEL:
            levels = None if options.levels == "auto" else int(options.levels)
            dec = self.atoms.multilevel_decompose(f, self.gf, s, dictionary, m_hat=m_hat, max_levels=levels)
            manifest = self._multilevel_manifest(dec, base)
            balls = tuple(p.ball for p in dec.pieces if p.kind == "level")
        else:
            ball = self.require_ball(options.ball, self.run.input.ball)
            finite = self.atoms.finite_decompose(
                f,
                self.gf,
                options.q,
                s,
                dictionary,
                ball,
                m_hat=m_hat,
                q_floor=self.indices().q_hat,
                mollify_scale=options.mollify,
            )
            manifest = self._finite_manifest(finite, base)
            balls = tuple(p.ball for p in finite.pieces)

        failed = sorted(name for name, ok in manifest.checks.items() if not ok)
        if failed:
            raise InvariantError("decomposition checks failed", failed=failed)
        manifest.overlay_svg = "whitney.svg"
        overlay = whitney_overlay_svg(f, balls, f"{manifest.mode} decomposition of {manifest.input}")
        return manifest, {"whitney.svg": overlay}

    def _moments_ok(self, pieces: List[Tuple[List[float], float, Ball]]) -> bool:
        return all(
            max((abs(r) for r in residuals), default=0.0)
            <= self.config.moment_tolerance * sup * ball.volume
            for residuals, sup, ball in pieces
        )

    def _cz_manifest(self, dec: CzDecomposition, base: dict) -> DecompositionManifest:
        sup = dec.f.sup_norm()
        parts = [
            PartRecord(
                index=p.index,
                center=list(p.ball.center),
                radius=p.ball.radius,
                poly_coefficients=list(p.poly.coefficients),
                moment_residuals=p.moment_residuals,
                gram_condition=p.gram_condition,
            )
            for p in dec.parts
        ]
        residual = dec.diagnostics.reconstruction_residual / sup if sup > 0 else 0.0
        return DecompositionManifest(
            height=dec.lam,
            trivial=dec.trivial,
            parts=parts,
            diagnostics=dec.diagnostics,
            reconstruction_residual=residual,
            checks={
                "reconstruction": residual <= self.config.reconstruction_tolerance,
                "moments": self._moments_ok(
                    [(p.moment_residuals, p.b.sup_norm(), p.ball) for p in dec.parts]
                ),
            },
            **base,
        )

    @staticmethod
    def _piece_record(piece: AtomPiece) -> PieceRecord:
        return PieceRecord(
            kind=piece.kind,
            level=piece.level,
            center=list(piece.ball.center),
            radius=piece.ball.radius,
            sup_norm=piece.h.sup_norm(),
            moment_residuals=piece.moment_residuals,
            support_ok=piece.support_ok,
        )

    def _multilevel_manifest(self, dec: AtomicDecomposition, base: dict) -> DecompositionManifest:
        levels = [p for p in dec.pieces if p.kind == "level"]
        tol = self.config.reconstruction_tolerance
        return DecompositionManifest(
            trivial=not dec.pieces,
            k_range=list(dec.k_range) if dec.k_range else None,
            pieces=[self._piece_record(p) for p in dec.pieces],
            constants=dec.constants,
            lambda_inf=dec.lambda_inf,
            source_norm=dec.source_norm,
            reconstruction_residual=dec.reconstruction_residual,
            checks={
                "reconstruction": dec.reconstruction_residual <= tol,
                "moments": self._moments_ok(
                    [(p.moment_residuals, p.h.sup_norm(), p.ball) for p in levels]
                ),
                "support": all(p.support_ok for p in levels),
                "cross_projection_sum": dec.constants.get("cross_projection_sum", 0.0) <= tol,
            },
            **base,
        )

    def _finite_manifest(self, finite, base: dict) -> DecompositionManifest:
        pieces = finite.pieces
        summary = FiniteSummary(
            k_prime=finite.k_prime,
            c_tilde=finite.c_tilde,
            g_constant=finite.g_constant,
            g_certificate_passed=finite.certificate.passed if finite.certificate else True,
            truncation_k=finite.truncation_k,
            remainder_norm=finite.remainder_norm,
            decay_curve=[[float(k), v] for k, v in finite.decay_curve],
            quasi_norm=finite.quasi_norm,
            normalization=finite.normalization,
            mollify_scale=finite.mollify_scale,
        )
        source = finite.source
        return DecompositionManifest(
            trivial=not pieces,
            k_range=list(source.k_range) if source and source.k_range else None,
            pieces=[self._piece_record(p) for p in pieces],
            constants=source.constants if source else {},
            lambda_inf=source.lambda_inf if source else 0.0,
            source_norm=source.source_norm if source else 0.0,
            reconstruction_residual=source.reconstruction_residual if source else 0.0,
            finite=summary,
            checks={
                "g_certificate": summary.g_certificate_passed,
                "remainder": finite.remainder_norm <= self.config.truncation_epsilon,
                "moments": self._moments_ok(
                    [(p.moment_residuals, p.h.sup_norm(), p.ball) for p in pieces]
                ),
            },
            **base,
        )

    def run_certify(self) -> AtomCertificate:
        """Certify the input against the atom or log-atom clauses"""
        options = self.run.certify
        ball = self.require_ball(options.ball, self.run.input.ball)
        a = self.load_input(ball=ball)
        if options.kind == "log-atom":
            return self.atoms.certify_log_atom(a, ball)
        q_floor = None if math.isinf(options.q) else self.indices().q_hat
        return self.atoms.certify_atom(a, ball, self.gf, options.q, options.s, q_floor=q_floor)

    def run_bmo(self) -> BmoReport:
        """BMO^phi and/or BMO^log norms of the input, with the side constants"""
        options = self.run.bmo
        f = self.load_input()
        family = self.family
        phi = self.bmo.bmo_phi_norm(f, self.gf, family) if options.kind in ("phi", "both") else None
        log = self.bmo.bmo_log_norm(f, family, options.weight) if options.kind in ("log", "both") else None

        report = phi if phi is not None else log
        constants = {"log_weight_equivalence": self.bmo.log_weight_equivalence(family)}
        if phi is not None:
            constants["double_integral"] = self.bmo.double_integral_norm(f, self.gf, family).norm
        if log is not None:
            constants["bmo_log"] = log.norm
        if options.truncate is not None and phi is not None:
            truncated = self.bmo.truncate(f, options.truncate)
            constants["truncated"] = self.bmo.bmo_phi_norm(truncated, self.gf, family).norm
        report.constants = constants
        return report

    def run_multiplier(self) -> MultiplierReport:
        """Multiplier quantities of the input against the configured corpus"""
        g = self.load_input()
        corpus = [(spec.label(), self.load_input(spec)) for spec in self.run.multiplier.corpus]
        return self.bmo.multiplier_check(g, corpus, self.family)
