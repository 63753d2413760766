"""
Pydantic schemas for every JSON report the laboratory writes
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

SCHEMA_VERSION = "1.0"


class Report(BaseModel):
    """Base for top-level reports"""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    schema_version: str = Field(SCHEMA_VERSION, description="Report schema version")


class BallModel(BaseModel):
    """Ball as written to reports"""
    center: List[float] = Field(..., description="Ball center")
    radius: float = Field(..., gt=0, description="Ball radius")

    @classmethod
    def from_ball(cls, ball: Any) -> "BallModel":
        return cls(center=list(ball.center), radius=ball.radius)


class NormResult(BaseModel):
    """Value of a quasi-norm solve"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    norm: float = Field(..., ge=0, description="Computed norm")
    witness_t: Optional[float] = Field(None, description="t attaining the sup, when one exists")
    iterations: int = Field(0, ge=0, description="Root-finding iterations")


class TypeWitness(BaseModel):
    """Sample binding an estimated type"""
    x: List[float] = Field(..., description="Spatial point")
    s: float = Field(..., description="Dilation factor")
    t: float = Field(..., description="Base argument")
    excess: float = Field(..., description="log ratio minus p log s at the estimate")


class TypeEstimate(BaseModel):
    """Estimated critical lower and upper types"""
    i_hat: float = Field(..., ge=0)
    I_hat: float = Field(..., gt=0)
    i_hat_fraction: str
    I_hat_fraction: str
    lower_witness: Optional[TypeWitness] = None
    upper_witness: Optional[TypeWitness] = None
    samples: int = Field(..., ge=0, description="Number of (x, s, t) triples examined")


class AqResult(BaseModel):
    """Outcome of one uniform Muckenhoupt check"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    q: float = Field(..., ge=1)
    passed: bool
    constant: float = Field(..., description="Largest ratio over the family and t-grid")
    witness_ball: Optional[BallModel] = None
    witness_t: Optional[float] = None


class GrowthAxioms(BaseModel):
    """Sampled structural checks of a growth function"""
    vanishes_at_zero: bool
    nondecreasing: bool
    positive: bool


class IndexReport(Report):
    """Estimated indices of a growth function"""
    growth: str
    params: Dict[str, float] = Field(default_factory=dict)
    dim: int
    i_hat: float
    I_hat: float
    q_hat: float
    m_hat: int = Field(..., ge=0)
    i_hat_fraction: str
    I_hat_fraction: str
    q_hat_fraction: str
    lower_witness: Optional[TypeWitness] = None
    upper_witness: Optional[TypeWitness] = None
    aq: Optional[AqResult] = None
    family_digest: str = ""
    declared: Optional[Dict[str, str]] = None
    constants: Dict[str, float] = Field(default_factory=dict)
    axioms: Optional[GrowthAxioms] = None


class NormReport(Report):
    """Report of the norm command"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: str = "norm"
    kind: str
    growth: str
    input: str
    norm: float = Field(..., ge=0)
    witness_t: Optional[float] = None
    iterations: int = 0
    grid: Dict[str, Any] = Field(default_factory=dict)
    m: Optional[int] = None
    witness_ball: Optional[BallModel] = None
    family_digest: Optional[str] = None
    maximal_csv: Optional[str] = None
    maximal_svg: Optional[str] = None


class PartRecord(BaseModel):
    """One Calderon-Zygmund part b_j"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    index: int
    center: List[float]
    radius: float
    poly_coefficients: List[float]
    moment_residuals: List[float]
    gram_condition: float


class CzDiagnostics(BaseModel):
    """Measured constants of one Calderon-Zygmund decomposition"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    c2: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    pointwise_bound: float = 0.0
    aggregate: float = 0.0
    overlap: int = 0
    reconstruction_residual: float = 0.0
    max_moment_residual: float = 0.0
    gram_condition_max: float = 0.0
    parts_examined: int = 0


class PieceRecord(BaseModel):
    """One emitted piece of an atomic decomposition"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    kind: str = Field(..., description="level, base, g or l")
    level: Optional[int] = None
    center: List[float]
    radius: float
    sup_norm: float
    moment_residuals: List[float]
    support_ok: bool = True


class FiniteSummary(BaseModel):
    """Finite decomposition of a normalized input"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    k_prime: int
    c_tilde: float
    g_constant: float
    g_certificate_passed: bool
    truncation_k: int
    remainder_norm: float
    decay_curve: List[List[float]] = Field(default_factory=list)
    quasi_norm: float
    normalization: float
    mollify_scale: Optional[float] = None


class DecompositionManifest(Report):
    """Manifest written by the decompose command"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: str = "decompose"
    mode: str
    growth: str
    input: str
    degree: int
    height: Optional[float] = None
    trivial: bool = False
    k_range: Optional[List[int]] = None
    parts: List[PartRecord] = Field(default_factory=list)
    pieces: List[PieceRecord] = Field(default_factory=list)
    diagnostics: Optional[CzDiagnostics] = None
    constants: Dict[str, float] = Field(default_factory=dict)
    lambda_inf: Optional[float] = None
    source_norm: Optional[float] = None
    reconstruction_residual: float = 0.0
    checks: Dict[str, bool] = Field(default_factory=dict)
    finite: Optional[FiniteSummary] = None
    overlay_svg: Optional[str] = None


class AtomCertificate(Report):
    """Measured atom clauses; failure is data"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: str = "certify"
    kind: str = Field("atom", description="atom or log-atom")
    ball: BallModel
    q: float
    s: int
    measured_norm: float
    bound: float
    moment_residuals: List[float] = Field(default_factory=list)
    moment_tolerance: float = 0.0
    passes: Dict[str, bool] = Field(default_factory=dict)
    passed: bool = False


class OscillationRow(BaseModel):
    """Weighted mean oscillation on one family ball"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    center: List[float]
    radius: float
    oscillation: float
    weight: float
    value: float


class BmoReport(Report):
    """Supremum of weighted mean oscillations over a ball family"""
    command: str = "bmo"
    kind: str
    growth: Optional[str] = None
    norm: float = Field(..., ge=0)
    witness_ball: Optional[BallModel] = None
    family_digest: str
    family_size: int
    table: List[OscillationRow] = Field(default_factory=list)
    constants: Dict[str, float] = Field(default_factory=dict)


class MultiplierMember(BaseModel):
    """One corpus function in the multiplier check"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    name: str
    bmo: float
    product_bmo: float
    ratio: Optional[float] = None
    skipped: bool = False


class MultiplierReport(Report):
    """Pointwise multiplier quantities for classical BMO"""
    command: str = "multiplier"
    sup_norm: float
    bmo_log: float
    M: float
    R: float
    ratio: float
    family_digest: str
    members: List[MultiplierMember] = Field(default_factory=list)


class ErrorReport(Report):
    """Error written to stderr by the command line"""
    error: str
    message: str
    exit_code: int
    context: Dict[str, str] = Field(default_factory=dict)
