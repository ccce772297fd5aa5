"""
Kerning model training and the binary checkpoint format.
"""
from kernkit.training.checkpoint import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    is_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from kernkit.training.manager import KerningTrainer, TrainResult, mae_loss, train

__all__ = [
    "Checkpoint",
    "KerningTrainer",
    "TrainResult",
    "decode_checkpoint",
    "encode_checkpoint",
    "is_checkpoint",
    "load_checkpoint",
    "mae_loss",
    "save_checkpoint",
    "train",
]
