"""Dual-domain U-net trainer for frequency-enhanced D-bar EIT images."""

from .losses import combined_loss, downsample
from .models import BaselineNet, CalibNet, FreqNet
from .train import Checkpoint, TrainConfig, evaluate, predict, train

__version__ = "0.1.0"

__all__ = ["BaselineNet", "CalibNet", "Checkpoint", "FreqNet", "TrainConfig",
           "combined_loss", "downsample", "evaluate", "predict", "train"]
