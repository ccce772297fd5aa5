"""
Pydantic models for configuration, manifests and reports.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


class FontStyle(str, Enum):
    """Style tags of font records."""
    SERIF = "Serif"
    SANS_SERIF = "Sans-serif"
    HANDWRITING = "Handwriting"
    DISPLAY = "Display"
    SYNTHETIC = "Synthetic"
    UNKNOWN = "Unknown"


class SynthMode(str, Enum):
    """Ground-truth rule of the synthetic corpus."""
    A = "A"
    B = "B"


class ModelKind(str, Enum):
    PAIRWISE = "pairwise"
    SETWISE = "setwise"


class FeatureKind(str, Enum):
    ENCODER = "encoder"
    PERIPHERAL = "peripheral"


class BaselineKind(str, Enum):
    MONOSPACE = "monospace"
    AVERAGE = "average"
    OPTICAL = "optical"


SUPPORTED_IMAGE_SIZES = (32, 64, 128, 256)
SHAPE_NAMES = ("bar", "rectangle", "left_wedge", "right_wedge", "ring", "t_shape", "l_shape")


class SynthConfig(BaseModel):
    """Synthetic corpus generation settings."""
    model_config = ConfigDict(extra="forbid")

    n_categories: int = Field(default=10, ge=2, description="Number of glyph categories")
    image_size: int = Field(default=64, description="Raster height and width H")
    train_fonts: int = Field(default=200, ge=0, description="Fonts in the training split")
    val_fonts: int = Field(default=25, ge=0, description="Fonts in the validation split")
    test_fonts: int = Field(default=25, ge=0, description="Fonts in the test split")
    mode: SynthMode = Field(default=SynthMode.A, description="Ground-truth rule")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="64-bit generator seed")
    fonts_per_family: int = Field(default=1, ge=1, description="Consecutive fonts sharing a family")
    shapes: List[str] = Field(default_factory=lambda: list(SHAPE_NAMES), min_length=1,
                              description="Parametric shapes assigned to categories cyclically")
    fixed_gap: Optional[float] = Field(default=None, ge=0, description="Constant gap overriding 0.5*w + 4")

    @field_validator("image_size")
    @classmethod
    def _check_size(cls, value: int) -> int:
        if value not in SUPPORTED_IMAGE_SIZES:
            raise ValueError(f"image_size must be one of {SUPPORTED_IMAGE_SIZES}")
        return value

    @field_validator("shapes")
    @classmethod
    def _check_shapes(cls, value: List[str]) -> List[str]:
        unknown = [s for s in value if s not in SHAPE_NAMES]
        if unknown:
            raise ValueError(f"unknown shapes {unknown}; expected names from {SHAPE_NAMES}")
        return value


class EncoderConfig(BaseModel):
    """Glyph encoder architecture and pretraining settings."""
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(default=512, ge=1, description="Output feature length D (128 suits desk runs)")
    channels: Tuple[int, int, int, int] = Field(default=(16, 32, 64, 128))
    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=64, ge=1)
    patience: int = Field(default=5, ge=1)
    max_epochs: int = Field(default=50, ge=1)
    holdout_fraction: float = Field(default=0.1, gt=0, lt=1,
                                    description="Share of images held out when no validation fonts exist")
    seed: int = Field(default=0, ge=0)


class PairwiseConfig(BaseModel):
    """Pairwise regressor architecture."""
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(..., ge=1)
    n_categories: int = Field(..., ge=1)
    hidden: Tuple[int, int] = Field(default=(512, 256))

    @property
    def input_dim(self) -> int:
        return 2 * self.feature_dim + 2 * self.n_categories


class SetwiseConfig(BaseModel):
    """Set-wise transformer architecture."""
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(..., ge=1)
    d_model: int = Field(default=32, ge=2)
    n_heads: int = Field(default=2, ge=1)
    ffn_dim: int = Field(default=64, ge=1)
    n_layers: int = Field(default=1, ge=1)
    max_tokens: int = Field(default=4096, ge=1, description="Soft limit on N*N tokens")

    @model_validator(mode="after")
    def _check_heads(self) -> "SetwiseConfig":
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        return self

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


class TrainConfig(BaseModel):
    """Kerning model training settings."""
    model_config = ConfigDict(extra="forbid")

    model: ModelKind = Field(default=ModelKind.SETWISE)
    features: FeatureKind = Field(default=FeatureKind.ENCODER)
    lr: Optional[float] = Field(default=None, gt=0, description="Defaults to 1e-4 pairwise, 1e-3 set-wise")
    batch_size: int = Field(default=64, ge=1)
    patience: int = Field(default=100, ge=1)
    max_epochs: int = Field(default=2000, ge=1)
    seed: int = Field(default=0, ge=0)
    d_model: int = Field(default=32, ge=2)
    n_heads: int = Field(default=2, ge=1)
    ffn_dim: int = Field(default=64, ge=1)
    n_layers: int = Field(default=1, ge=1)
    max_tokens: int = Field(default=4096, ge=1)
    pairwise_hidden: Tuple[int, int] = Field(default=(512, 256))

    @property
    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return 1e-4 if self.model == ModelKind.PAIRWISE else 1e-3


class SplitManifest(BaseModel):
    """Font ids per split; serialised as splits.json."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    train: List[str] = Field(default_factory=list)
    val: List[str] = Field(default_factory=list)
    test: List[str] = Field(default_factory=list)

    def split(self, name: str) -> List[str]:
        if name not in ("train", "val", "test"):
            raise KeyError(f"Unknown split '{name}'")
        return list(getattr(self, name))

    def all_ids(self) -> List[str]:
        return [*self.train, *self.val, *self.test]


class OpticalCalibration(BaseModel):
    """Target blank area and search bounds of the optical-spacing baseline."""
    model_config = ConfigDict(extra="forbid")

    target_area: float = Field(..., ge=0, description="Mean blank area at ground-truth spacing, px^2")
    s_min: float = Field(..., description="Lower search bound, px")
    s_max: float = Field(..., description="Upper search bound, px")

    @model_validator(mode="after")
    def _check_bounds(self) -> "OpticalCalibration":
        if not self.s_min < self.s_max:
            raise ValueError(f"s_min {self.s_min} must be below s_max {self.s_max}")
        return self


class MethodReport(BaseModel):
    """Metrics of one method over the test fonts."""
    mae: float = Field(..., description="Mean AE over all (font, pair)")
    style_mae: Dict[str, float] = Field(default_factory=dict)
    fonts_below: int = Field(..., description="Fonts with MAE strictly below the threshold")
    style_fonts_below: Dict[str, int] = Field(default_factory=dict)
    wins: int = Field(..., description="Fonts where this method attains the minimum MAE")
    style_wins: Dict[str, int] = Field(default_factory=dict)
    cumulative: List[Tuple[int, float]] = Field(default_factory=list,
                                                description="(threshold, fraction of AE < threshold)")
    pair_mae: List[List[float]] = Field(default_factory=list, description="N x N per-pair MAE")
    font_mae: Dict[str, float] = Field(default_factory=dict)


class EvalReport(BaseModel):
    """Full evaluation result; serialised as report.json."""
    labels: List[str]
    font_ids: List[str]
    styles: Dict[str, str] = Field(default_factory=dict, description="font_id -> style tag")
    below_threshold: float = Field(default=7.0)
    methods: Dict[str, MethodReport] = Field(default_factory=dict)
    gt_mean: List[List[float]] = Field(default_factory=list)
    gt_var: List[List[float]] = Field(default_factory=list)

    # (fonts, N, N) absolute errors per method; kept in memory only
    _abs_errors: Dict[str, object] = PrivateAttr(default_factory=dict)
