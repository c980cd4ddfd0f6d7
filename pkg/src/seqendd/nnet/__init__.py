"""Autodiff core, the encoder-decoder model, optimizer and checkpoints."""

from .autodiff import Tensor, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    BOS,
    EOS,
    PAD,
    UNK,
    ModelConfig,
    SeqModel,
    backward,
    forward_step,
    forward_teacher_forced,
    init_model,
)
from .optim import AdamState, optimizer_step

__all__ = [
    "AdamState",
    "BOS",
    "EOS",
    "ModelConfig",
    "PAD",
    "SeqModel",
    "Tensor",
    "UNK",
    "backward",
    "forward_step",
    "forward_teacher_forced",
    "init_model",
    "load_checkpoint",
    "no_grad",
    "optimizer_step",
    "save_checkpoint",
]
