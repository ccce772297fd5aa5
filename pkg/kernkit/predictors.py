"""
Loading trained models and baseline artefacts as table predictors.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, Union

from kernkit.baselines import load_baseline
from kernkit.dataset.records import FontRecord, KerningTable
from kernkit.errors import CheckpointError, ShapeError, UsageError
from kernkit.features.extract import FeatureExtractor
from kernkit.models.pairwise import predict_table_pairwise
from kernkit.models.setwise import setwise_forward
from kernkit.numerics.params import ParameterStore
from kernkit.schemas import FeatureKind, ModelKind, SetwiseConfig
from kernkit.training.checkpoint import Checkpoint, is_checkpoint, load_checkpoint
from kernkit.training.manager import ENCODER_PREFIX

logger = logging.getLogger(__name__)

GROUND_TRUTH = "gt"

PathLike = Union[str, Path]
Predictor = Callable[[FontRecord], KerningTable]


class KerningModel:
    """A trained kerning checkpoint bound to its feature extractor."""

    def __init__(self, ckpt: Checkpoint, threads: int = 1):
        try:
            self.kind = ModelKind(ckpt.kind)
        except ValueError:
            raise CheckpointError(f"checkpoint kind '{ckpt.kind}' is not a kerning model") from None
        config = ckpt.config
        self.image_size = int(config.get("image_size", 0))
        self.n_categories = int(config.get("n_categories", 0))
        self.params = ParameterStore(
            {name: value for name, value in ckpt.params.items() if not name.startswith(ENCODER_PREFIX)}
        )
        feature_kind = FeatureKind(config.get("features", FeatureKind.ENCODER.value))
        encoder = None
        if feature_kind == FeatureKind.ENCODER:
            encoder = ckpt.params.subset(ENCODER_PREFIX).freeze()
            if not len(encoder):
                raise CheckpointError("checkpoint uses encoder features but embeds no encoder")
        self.extractor = FeatureExtractor(feature_kind, encoder=encoder, threads=threads)
        self.setwise_cfg = SetwiseConfig(**config["model"]) if self.kind == ModelKind.SETWISE else None

    def predict(self, record: FontRecord) -> KerningTable:
        if self.n_categories and record.n != self.n_categories:
            raise ShapeError(f"model expects {self.n_categories} glyphs, font {record.font_id} has {record.n}")
        if self.image_size and record.image_size != self.image_size:
            raise ShapeError(
                f"model expects {self.image_size}x{self.image_size} rasters, "
                f"font {record.font_id} has {record.image_size}x{record.image_size}"
            )
        features = self.extractor.font_features(record)
        if self.kind == ModelKind.PAIRWISE:
            return predict_table_pairwise(self.params, features, record.labels)
        return setwise_forward(self.params, features, self.setwise_cfg, record.labels)

    __call__ = predict


def ground_truth(record: FontRecord) -> KerningTable:
    return record.require_table()


def load_predictor(source: PathLike, threads: int = 1) -> Predictor:
    """
    Predictor from a checkpoint, a baseline JSON artefact, or ``gt``.

    Raises:
        UsageError: If the source is neither
    """
    if str(source) == GROUND_TRUTH:
        return ground_truth
    path = Path(source)
    if not path.exists():
        raise UsageError(f"method artefact not found: {path}")
    if is_checkpoint(path):
        return KerningModel(load_checkpoint(path), threads=threads).predict
    return load_baseline(path).predict


def parse_methods(text: str, threads: int = 1) -> Dict[str, Predictor]:
    """Parse ``name=artifact,name=artifact`` into predictors, keeping order."""
    methods: Dict[str, Predictor] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        name, sep, source = item.partition("=")
        if not sep or not name or not source:
            raise UsageError(f"bad method '{item}', expected name=artifact")
        if name in methods:
            raise UsageError(f"method '{name}' given twice")
        methods[name] = load_predictor(source, threads=threads)
    if not methods:
        raise UsageError("no methods given")
    return methods
