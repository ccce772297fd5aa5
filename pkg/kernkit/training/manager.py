"""
Kerning model training: batching, Adam updates, early stopping, training log.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from kernkit.dataset.records import FontRecord
from kernkit.dataset.splits import Corpus
from kernkit.errors import DataValidationError, NumericError, ShapeError, TrainingDivergedError
from kernkit.evaluation import table_mae
from kernkit.features.extract import FeatureExtractor
from kernkit.models.pairwise import init_pairwise, pairwise_graph, predict_table_pairwise
from kernkit.models.setwise import check_capacity, init_setwise, setwise_graph
from kernkit.numerics.optim import AdamState, EarlyStopping, adam_step
from kernkit.numerics.params import ParameterStore
from kernkit.numerics.rng import make_rng
from kernkit.numerics.tensor import Graph, Tensor, backward, get_float_mode, mean_abs, mul, sub
from kernkit.schemas import FeatureKind, ModelKind, PairwiseConfig, SetwiseConfig, TrainConfig
from kernkit.storage import write_bytes_atomic
from kernkit.training.checkpoint import Checkpoint

logger = logging.getLogger(__name__)

ENCODER_PREFIX = "encoder."
LOG_COLUMNS = ["epoch", "train_loss", "val_loss", "elapsed_s"]
# token rows per set-wise micro-batch; bounds the (B, heads, T, T) attention maps
MICRO_BATCH_TOKENS = 16384

PathLike = Union[str, Path]

# Training and evaluation share one definition of the table error.
mae_loss = table_mae


def mae_loss_graph(pred: Tensor, target: np.ndarray) -> Tensor:
    """Differentiable mean absolute error against a constant target."""
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mae_loss: incompatible shapes {pred.shape} and {target.shape}")
    return mean_abs(sub(pred, target))


def model_config_for(cfg: TrainConfig, feature_dim: int, n_categories: int) -> Union[PairwiseConfig, SetwiseConfig]:
    if cfg.model == ModelKind.PAIRWISE:
        return PairwiseConfig(feature_dim=feature_dim, n_categories=n_categories, hidden=cfg.pairwise_hidden)
    return SetwiseConfig(
        feature_dim=feature_dim,
        d_model=cfg.d_model,
        n_heads=cfg.n_heads,
        ffn_dim=cfg.ffn_dim,
        n_layers=cfg.n_layers,
        max_tokens=cfg.max_tokens,
    )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


class KerningTrainer:
    """Trains one pairwise or set-wise model on fixed glyph features."""

    def __init__(
        self,
        cfg: TrainConfig,
        train_fonts: Sequence[FontRecord],
        val_fonts: Sequence[FontRecord],
        extractor: FeatureExtractor,
        log_path: Optional[PathLike] = None,
        threads: int = 1,
    ):
        """
        Initialise trainer.

        Args:
            cfg: Training settings
            train_fonts: Fonts whose tables drive the updates
            val_fonts: Fonts used for early stopping
            extractor: Feature source (frozen encoder or peripheral)
            log_path: Optional CSV training log
            threads: Worker threads for per-batch forward passes
        """
        if not train_fonts:
            raise DataValidationError("training split is empty")
        if not val_fonts:
            raise DataValidationError("validation split is empty")
        self.n = train_fonts[0].n
        for font in (*train_fonts, *val_fonts):
            if font.n != self.n:
                raise ShapeError(f"font {font.font_id} has {font.n} glyphs, expected {self.n}")

        self.cfg = cfg
        self.extractor = extractor
        self.threads = max(1, threads)
        self.log_path = Path(log_path) if log_path else None
        self.labels = train_fonts[0].labels
        self.image_size = train_fonts[0].image_size

        self.train_features = np.stack(extractor.batch(train_fonts))
        self.train_targets = np.stack([font.require_table().values for font in train_fonts])
        self.val_features = np.stack(extractor.batch(val_fonts))
        self.val_targets = np.stack([font.require_table().values for font in val_fonts])
        self.feature_dim = self.train_features.shape[2]

        self.model_cfg = model_config_for(cfg, self.feature_dim, self.n)
        if isinstance(self.model_cfg, SetwiseConfig):
            check_capacity(self.n, self.model_cfg)
        self.rng = make_rng(cfg.seed, "train-shuffle")
        logger.info(
            f"KerningTrainer initialised: {cfg.model.value} model, {extractor.kind.value} features "
            f"(D={self.feature_dim}), {len(train_fonts)} train / {len(val_fonts)} val fonts, N={self.n}, "
            f"{self.steps_per_epoch()} steps per epoch"
        )

    def init_params(self) -> ParameterStore:
        if self.cfg.model == ModelKind.PAIRWISE:
            return init_pairwise(self.model_cfg, self.cfg.seed)
        return init_setwise(self.model_cfg, self.cfg.seed)

    # Prediction

    def _micro_batches(self, count: int) -> List[np.ndarray]:
        size = max(1, MICRO_BATCH_TOKENS // (self.n * self.n))
        return [np.arange(start, min(start + size, count)) for start in range(0, count, size)]

    def predict_tables(self, params: ParameterStore, features: np.ndarray) -> np.ndarray:
        """(F, N, N) float64 tables for a stack of feature matrices."""
        if self.cfg.model == ModelKind.PAIRWISE:
            return np.stack([predict_table_pairwise(params, f).values for f in features])
        chunks = [
            setwise_graph(Graph(params), features[idx], self.model_cfg).data.astype(np.float64)
            for idx in self._micro_batches(len(features))
        ]
        return np.concatenate(chunks, axis=0)

    def mean_table_mae(self, params: ParameterStore, features: np.ndarray, targets: np.ndarray) -> float:
        """Mean over fonts of the per-font table MAE."""
        tables = self.predict_tables(params, features)
        return float(np.mean([mae_loss(pred, gt) for pred, gt in zip(tables, targets)]))

    def validation_loss(self, params: ParameterStore) -> float:
        return self.mean_table_mae(params, self.val_features, self.val_targets)

    # Gradient steps

    def steps_per_epoch(self) -> int:
        """Adam updates per epoch for either model: one pass over the F * N^2 pair targets."""
        return -(-len(self.train_features) * self.n * self.n // self.cfg.batch_size)

    def _pairwise_batches(self) -> List[np.ndarray]:
        total = len(self.train_features) * self.n * self.n
        order = self.rng.permutation(total)
        return [order[start:start + self.cfg.batch_size] for start in range(0, total, self.cfg.batch_size)]

    def _setwise_batches(self) -> List[np.ndarray]:
        # font batches cut from back-to-back permutations; counts per font differ by at most one
        fonts = len(self.train_features)
        size = min(self.cfg.batch_size, fonts)
        steps = self.steps_per_epoch()
        passes = -(-steps * size // fonts)
        order = np.concatenate([self.rng.permutation(fonts) for _ in range(passes)])
        return [order[k * size:(k + 1) * size] for k in range(steps)]

    def pairwise_loss_and_grads(self, params: ParameterStore, samples: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        # sample index = font * N^2 + i * N + j
        fonts, pairs = np.divmod(samples, self.n * self.n)
        first, second = np.divmod(pairs, self.n)
        eye = np.eye(self.n)
        inputs = np.concatenate([
            self.train_features[fonts, first],
            self.train_features[fonts, second],
            eye[first],
            eye[second],
        ], axis=1)
        targets = self.train_targets[fonts, first, second]
        graph = Graph(params)
        loss = mae_loss_graph(pairwise_graph(graph, inputs), targets)
        return loss.item(), backward(graph, loss)

    def setwise_loss_and_grads(self, params: ParameterStore, fonts: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean per-font MAE over the batch, accumulated over micro-batches in a fixed order."""
        parts = [fonts[idx] for idx in self._micro_batches(len(fonts))]

        def run(part: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
            graph = Graph(params)
            pred = setwise_graph(graph, self.train_features[part], self.model_cfg)
            loss = mul(mae_loss_graph(pred, self.train_targets[part]), len(part) / len(fonts))
            return loss.item(), backward(graph, loss)

        if self.threads > 1 and len(parts) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(run, parts))
        else:
            results = [run(part) for part in parts]

        total_loss = 0.0
        grads = {name: np.zeros_like(value) for name, value in params.items()}
        for loss, part_grads in results:
            total_loss += loss
            for name, grad in part_grads.items():
                grads[name] += grad
        return total_loss, grads

    # Main loop

    def _write_log(self, history: List[Dict[str, float]]) -> None:
        if self.log_path is None:
            return
        text = pd.DataFrame(history, columns=LOG_COLUMNS).to_csv(index=False, lineterminator="\n")
        write_bytes_atomic(self.log_path, text.encode("utf-8"))

    def _checkpoint(self, params: ParameterStore, best_val: float, epoch: int) -> Checkpoint:
        arrays = dict(params.items())
        encoder = self.extractor.encoder
        if self.extractor.kind == FeatureKind.ENCODER and encoder is not None:
            arrays.update(encoder.with_prefix(ENCODER_PREFIX).items())
        config = {
            "train": self.cfg.model_dump(mode="json"),
            "model": self.model_cfg.model_dump(mode="json"),
            "features": self.extractor.kind.value,
            "image_size": self.image_size,
            "n_categories": self.n,
            "labels": list(self.labels),
            "float_mode": get_float_mode(),
        }
        return Checkpoint(ParameterStore(arrays), kind=self.cfg.model.value, config=config,
                          best_val_loss=best_val, epoch=epoch)

    def fit(self) -> TrainResult:
        """
        Run epochs until early stopping or the epoch cap.

        Returns:
            TrainResult holding the best-validation parameters

        Raises:
            TrainingDivergedError: If a batch loss or gradient is not finite
        """
        lr = self.cfg.learning_rate
        params = self.init_params()
        state = AdamState.for_params(params)
        stopper = EarlyStopping(self.cfg.patience, mode="min")
        started = time.monotonic()

        # row 0: the untrained model, no update
        history = [{
            "epoch": 0,
            "train_loss": self.mean_table_mae(params, self.train_features, self.train_targets),
            "val_loss": self.validation_loss(params),
            "elapsed_s": time.monotonic() - started,
        }]
        self._write_log(history)
        logger.info(f"Epoch 0: train {history[0]['train_loss']:.4f}, val {history[0]['val_loss']:.4f}")

        best = params.copy()
        stopped_early = False
        for epoch in range(1, self.cfg.max_epochs + 1):
            if self.cfg.model == ModelKind.PAIRWISE:
                batches, step_fn = self._pairwise_batches(), self.pairwise_loss_and_grads
            else:
                batches, step_fn = self._setwise_batches(), self.setwise_loss_and_grads
            losses = []
            for step, batch in enumerate(batches):
                loss, grads = step_fn(params, batch)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, step)
                try:
                    params, state = adam_step(params, grads, state, lr)
                except NumericError as e:
                    raise TrainingDivergedError(epoch, step, message=e.message) from e
                losses.append(loss)

            val_loss = self.validation_loss(params)
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(epoch, len(batches), message="validation loss is not finite")
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_loss": val_loss,
                "elapsed_s": time.monotonic() - started,
            }
            history.append(row)
            self._write_log(history)
            logger.info(
                f"Epoch {epoch}: train {row['train_loss']:.4f}, val {val_loss:.4f}, {row['elapsed_s']:.1f}s"
            )
            if stopper.update(epoch, val_loss):
                best = params.copy()
            if stopper.should_stop:
                stopped_early = True
                logger.info(
                    f"Early stop at epoch {epoch}: no improvement for {self.cfg.patience} epochs, "
                    f"best epoch {stopper.best_epoch} (val {stopper.best_value:.4f})"
                )
                break

        return TrainResult(
            checkpoint=self._checkpoint(best, stopper.best_value, stopper.best_epoch),
            history=history,
            best_epoch=stopper.best_epoch,
            stopped_early=stopped_early,
        )


def train(
    cfg: TrainConfig,
    corpus: Corpus,
    encoder: Optional[ParameterStore] = None,
    log_path: Optional[PathLike] = None,
    threads: int = 1,
) -> TrainResult:
    """
    Train a kerning model on a corpus's train split, early-stopping on its val split.

    Args:
        cfg: Training settings
        corpus: Validated corpus
        encoder: Frozen encoder parameters (required for encoder features)
        log_path: Optional CSV log (epoch, train_loss, val_loss, elapsed_s)
        threads: Worker threads

    Returns:
        TrainResult with the best-validation checkpoint
    """
    extractor = FeatureExtractor(cfg.features, encoder=encoder, threads=threads)
    trainer = KerningTrainer(
        cfg,
        corpus.fonts("train", threads=threads),
        corpus.fonts("val", threads=threads),
        extractor,
        log_path=log_path,
        threads=threads,
    )
    return trainer.fit()
