"""
Per-font feature matrices for the kerning models.
"""
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from kernkit.dataset.records import FontRecord
from kernkit.errors import ConfigError, ShapeError
from kernkit.features.encoder import encode_pixels, encoder_feature_dim
from kernkit.features.geometry import peripheral_feature
from kernkit.numerics.params import ParameterStore
from kernkit.schemas import FeatureKind

logger = logging.getLogger(__name__)


class FeatureExtractor:
    """
    Turns a font's glyphs into an (N, D) feature matrix.

    Encoder features come from a frozen encoder; peripheral features have
    D = 2H. Results are cached per font id.
    """

    def __init__(self, kind: FeatureKind, encoder: Optional[ParameterStore] = None, threads: int = 1):
        self.kind = FeatureKind(kind)
        if self.kind == FeatureKind.ENCODER:
            if encoder is None:
                raise ConfigError("encoder features need a pretrained encoder checkpoint")
            if not encoder.frozen:
                raise ConfigError("encoder parameters must be frozen before kerning training")
        self.encoder = encoder
        self.threads = max(1, threads)
        self._cache: Dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def feature_dim(self, image_size: int) -> int:
        if self.kind == FeatureKind.PERIPHERAL:
            return 2 * image_size
        return encoder_feature_dim(self.encoder)

    def compute(self, record: FontRecord) -> np.ndarray:
        """Uncached features of one font (float64)."""
        if self.kind == FeatureKind.PERIPHERAL:
            return np.stack([peripheral_feature(glyph) for glyph in record.glyphs])
        return encode_pixels(self.encoder, np.stack([glyph.pixels for glyph in record.glyphs]))

    def font_features(self, record: FontRecord) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(record.font_id)
        if cached is not None:
            return cached
        features = self.compute(record)
        if not np.all(np.isfinite(features)):
            raise ShapeError(f"font {record.font_id}: non-finite features")
        with self._lock:
            self._cache[record.font_id] = features
        return features

    def batch(self, records: Sequence[FontRecord]) -> List[np.ndarray]:
        """Features of several fonts, in input order."""
        if self.threads > 1 and len(records) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(self.font_features, records))
        return [self.font_features(record) for record in records]

    def warm(self, records: Sequence[FontRecord]) -> None:
        self.batch(records)
        logger.info(f"{self.kind.value} features ready for {len(records)} fonts")
