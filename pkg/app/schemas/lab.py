"""
Pydantic schemas for laboratory run configuration
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Preset(str, Enum):
    """Built-in input functions"""
    INDICATOR01 = "indicator01"
    INDICATOR02 = "indicator02"
    ZERO = "zero"
    BUMP = "bump"
    DIPOLE = "dipole"
    SIGN = "sign"
    LOG_ABS = "log-abs"
    BALANCED_ATOM = "balanced-atom"
    INDICATOR_BALL = "indicator-ball"


class GrowthName(str, Enum):
    """Built-in growth function families"""
    POWER = "power"
    LOG_THETA = "log-theta"
    P_LOG = "p-log"
    LOG_RATIO = "log-ratio"


class NormKind(str, Enum):
    """Quantities computed by the norm command"""
    LUXEMBOURG = "luxembourg"
    HARDY = "hardy"
    INDICATOR = "indicator"
    LQ_BALL = "lq-ball"
    BMO_PHI = "bmo-phi"
    BMO_LOG = "bmo-log"


class DecomposeMode(str, Enum):
    """Decomposition pipelines"""
    CZ = "cz"
    MULTILEVEL = "multilevel"
    FINITE = "finite"


class FamilyKind(str, Enum):
    """Ball family generators"""
    COARSE = "coarse"
    FINE = "fine"
    RANDOM = "random"
    EXPLICIT = "explicit"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class GridSpec(StrictModel):
    """Grid description: dimension, box and points per axis"""
    dim: int = Field(1, ge=1, le=2, description="Dimension n")
    box: List[Tuple[float, float]] = Field(
        default_factory=lambda: [(-4.0, 4.0)], description="Interval per axis"
    )
    resolution: int = Field(4096, ge=2, description="Points per axis, a power of two")

    @field_validator("resolution")
    def validate_resolution(cls, v):
        """Resolution must be a power of two"""
        if v & (v - 1):
            raise ValueError("resolution must be a power of two")
        return v

    @model_validator(mode="after")
    def validate_box(self):
        """One nondegenerate interval per axis"""
        if len(self.box) != self.dim:
            raise ValueError("box must list one interval per axis")
        if any(b <= a for a, b in self.box):
            raise ValueError("box intervals must be nondegenerate")
        return self


class GrowthSpec(StrictModel):
    """Growth function selected by name and parameters"""
    name: GrowthName = Field(GrowthName.POWER, description="Family name")
    a: float = Field(0.0, description="Spatial power exponent (power)")
    p: float = Field(1.0, gt=0, description="Type exponent (power, p-log)")
    alpha: float = Field(1.0, gt=0, le=1, description="Type exponent (log-ratio)")
    beta: float = Field(1.0, gt=0, description="Spatial log exponent (log-ratio)")
    gamma: float = Field(1.0, gt=0, description="Argument log exponent (log-ratio)")

    @field_validator("p")
    def validate_p(cls, v):
        """Upper type never exceeds the index lattice"""
        if v > 2:
            raise ValueError("p must lie in (0, 2]")
        return v

    def label(self) -> str:
        if self.name == GrowthName.POWER:
            return f"power(a={self.a:g},p={self.p:g})"
        if self.name == GrowthName.P_LOG:
            return f"p-log(p={self.p:g})"
        if self.name == GrowthName.LOG_RATIO:
            return f"log-ratio(alpha={self.alpha:g},beta={self.beta:g},gamma={self.gamma:g})"
        return self.name.value


class DictionarySpec(StrictModel):
    """Test-function dictionary for the grand maximal function"""
    m: Optional[int] = Field(None, ge=0, description="Smoothness order; default from settings")
    size: int = Field(12, ge=1, description="Number of members")
    scales: Optional[Tuple[float, float]] = Field(None, description="Scale range t_min, t_max")

    @field_validator("scales")
    def validate_scales(cls, v):
        """Scale range must be positive and ordered"""
        if v is not None and not (0 < v[0] <= v[1]):
            raise ValueError("scales must satisfy 0 < t_min <= t_max")
        return v


class BallSpec(StrictModel):
    """Ball given by center and radius"""
    center: List[float]
    radius: float = Field(..., gt=0)


class BallFamilySpec(StrictModel):
    """Ball family used for every sup over balls"""
    kind: FamilyKind = FamilyKind.COARSE
    count: int = Field(100, ge=1, description="Size of a random family")
    balls: Optional[List[BallSpec]] = None

    @model_validator(mode="after")
    def validate_explicit(self):
        """Explicit families must list their balls"""
        if self.kind == FamilyKind.EXPLICIT and not self.balls:
            raise ValueError("explicit family needs at least one ball")
        return self


class InputSpec(StrictModel):
    """Input function: a preset or a CSV file"""
    preset: Optional[Preset] = None
    csv: Optional[str] = None
    ball: Optional[BallSpec] = Field(None, description="Ball for ball-based presets")
    scale: float = Field(1.0, description="Multiplier applied to the samples")

    @model_validator(mode="after")
    def validate_source(self):
        """Exactly one of preset and csv"""
        if (self.preset is None) == (self.csv is None):
            raise ValueError("give exactly one of preset and csv")
        return self

    def label(self) -> str:
        name = self.preset.value if self.preset is not None else f"csv:{self.csv}"
        return name if self.scale == 1.0 else f"{self.scale:g}*{name}"


class NormOptions(StrictModel):
    """Options of the norm command"""
    kind: NormKind = NormKind.LUXEMBOURG
    q: float = Field(2.0, gt=1, description="Order for lq-ball")
    ball: Optional[BallSpec] = None
    export_maximal: bool = Field(False, description="Write the grand maximal function")


class DecomposeOptions(StrictModel):
    """Options of the decompose command"""
    mode: DecomposeMode = DecomposeMode.MULTILEVEL
    height: Optional[float] = Field(None, gt=0, alias="lambda", description="Height for cz mode")
    degree: Optional[int] = Field(None, ge=0, description="Moment degree s; default m_hat")
    levels: Union[str, int] = Field("auto", description="auto or a maximum number of levels")
    q: float = Field(2.0, gt=1, description="Atom order for finite mode")
    ball: Optional[BallSpec] = Field(None, description="Support ball for finite mode")
    mollify: Optional[float] = Field(None, gt=0, description="Mollification scale")

    @field_validator("levels")
    def validate_levels(cls, v):
        """auto or a positive level count"""
        if isinstance(v, str) and v != "auto":
            raise ValueError("levels must be 'auto' or a positive integer")
        if isinstance(v, int) and v < 1:
            raise ValueError("levels must be positive")
        return v


class CertifyOptions(StrictModel):
    """Options of the certify command"""
    kind: str = Field("atom", pattern="^(atom|log-atom)$")
    q: float = Field(float("inf"), gt=1)
    s: int = Field(0, ge=0)
    ball: Optional[BallSpec] = None


class BmoOptions(StrictModel):
    """Options of the bmo command"""
    kind: str = Field("both", pattern="^(phi|log|both)$")
    weight: str = Field("radius", pattern="^(radius|volume)$")
    truncate: Optional[float] = Field(None, gt=0)


class MultiplierOptions(StrictModel):
    """Options of the multiplier command"""
    corpus: List[InputSpec] = Field(
        default_factory=lambda: [
            InputSpec(preset=Preset.SIGN),
            InputSpec(preset=Preset.LOG_ABS),
            InputSpec(preset=Preset.BUMP),
            InputSpec(preset=Preset.DIPOLE),
        ]
    )

    @field_validator("corpus")
    def validate_corpus(cls, v):
        """Corpus must be nonempty"""
        if not v:
            raise ValueError("multiplier corpus must be nonempty")
        return v


class RunConfig(StrictModel):
    """Complete configuration of one laboratory run"""
    grid: GridSpec = Field(default_factory=GridSpec)
    growth: GrowthSpec = Field(default_factory=GrowthSpec)
    dictionary: DictionarySpec = Field(default_factory=DictionarySpec)
    family: BallFamilySpec = Field(default_factory=BallFamilySpec)
    input: InputSpec = Field(default_factory=lambda: InputSpec(preset=Preset.ZERO))
    tolerances: Dict[str, float] = Field(default_factory=dict, description="Settings overrides")
    norm: NormOptions = Field(default_factory=NormOptions)
    decompose: DecomposeOptions = Field(default_factory=DecomposeOptions)
    certify: CertifyOptions = Field(default_factory=CertifyOptions)
    bmo: BmoOptions = Field(default_factory=BmoOptions)
    multiplier: MultiplierOptions = Field(default_factory=MultiplierOptions)
    out: Optional[str] = Field(None, description="Output directory")
    seed: Optional[int] = None
    threads: Optional[int] = Field(None, ge=1)

    @field_validator("tolerances")
    def validate_tolerances(cls, v):
        """Tolerances must be positive"""
        for key, value in v.items():
            if not value > 0:
                raise ValueError(f"tolerance {key} must be positive")
        return v
