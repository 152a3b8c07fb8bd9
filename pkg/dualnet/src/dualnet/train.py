"""Training, checkpointing, prediction and evaluation for the dual U-nets.

Modes:
    multi_scale           frequency net predicts the full S-image pyramid and
                          the calibration net fuses it (combined loss).
    single_scale          S = 1: one high-contrast target (the largest
                          truncation radius), otherwise the same scheme.
    baseline_single_unet  one plain U-net from the low-pass image to the
                          ground truth (no enhancement term).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import metrics as metrics_mod
from .data import BACKGROUND, load_arrays
from .losses import calibration_term, combined_loss
from .models import BaselineNet, CalibNet, FreqNet

MODES = ("multi_scale", "single_scale", "baseline_single_unet")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    scales: int = 3
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    mode: str = "multi_scale"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "single_scale" and self.scales != 1:
            object.__setattr__(self, "scales", 1)
        if self.scales < 1:
            raise ValueError("scales must be >= 1")


@dataclass
class Checkpoint:
    config: TrainConfig
    freq_state: dict | None
    calib_state: dict | None
    baseline_state: dict | None
    history: list = field(default_factory=list)

    def build_models(self):
        if self.config.mode == "baseline_single_unet":
            net = BaselineNet()
            net.load_state_dict(self.baseline_state)
            net.eval()
            return None, None, net
        freq = FreqNet(self.config.scales)
        freq.load_state_dict(self.freq_state)
        freq.eval()
        calib = CalibNet(self.config.scales)
        calib.load_state_dict(self.calib_state)
        calib.eval()
        return freq, calib, None

    def save(self, path):
        torch.save({"freq": self.freq_state, "calib": self.calib_state,
                    "baseline": self.baseline_state, "history": self.history},
                   path)
        with open(path + ".json", "w") as fh:
            json.dump(asdict(self.config), fh, indent=1)

    @classmethod
    def load(cls, path):
        blob = torch.load(path, map_location="cpu", weights_only=False)
        with open(path + ".json") as fh:
            config = TrainConfig(**json.load(fh))
        return cls(config=config, freq_state=blob["freq"],
                   calib_state=blob["calib"], baseline_state=blob["baseline"],
                   history=blob["history"])


def _select_targets(arrays, config):
    """Enhanced targets for the configured mode (single scale: last radius)."""
    if config.mode == "single_scale":
        return [arrays.enhanced[-1]]
    return list(arrays.enhanced[:config.scales])


def _epoch_pass(nets, batches, config, optimizer=None):
    total, count = 0.0, 0
    for low, gt, targets in batches:
        if config.mode == "baseline_single_unet":
            loss = calibration_term(nets["baseline"](low), gt)
        else:
            freq_out = nets["freq"](low)
            calib_out = nets["calib"](freq_out)
            loss = combined_loss(freq_out, calib_out, targets, gt, config.alpha)
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        value = float(loss.detach())
        if not np.isfinite(value):
            raise RuntimeError(f"non-finite training loss {value}")
        total += value * low.shape[0]
        count += low.shape[0]
    return total / count


def _batches(arrays, targets, config, generator=None):
    n = len(arrays)
    order = (torch.randperm(n, generator=generator) if generator is not None
             else torch.arange(n))
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        yield (arrays.lowpass[idx], arrays.ground_truth[idx],
               [t[idx] for t in targets])


def train(train_dir, config, val_dir=None, log=print):
    """Optimize the configured networks; returns a Checkpoint with history."""
    torch.manual_seed(config.seed)
    arrays = load_arrays(train_dir)
    if config.mode != "single_scale" and config.scales > arrays.scales:
        raise ValueError(f"dataset provides {arrays.scales} enhanced images, "
                         f"config wants {config.scales}")
    targets = _select_targets(arrays, config)
    val_arrays = load_arrays(val_dir) if val_dir else None

    nets = {}
    if config.mode == "baseline_single_unet":
        nets["baseline"] = BaselineNet()
        params = list(nets["baseline"].parameters())
    else:
        nets["freq"] = FreqNet(config.scales)
        nets["calib"] = CalibNet(config.scales)
        params = list(nets["freq"].parameters()) + list(nets["calib"].parameters())
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    generator = torch.Generator().manual_seed(config.seed)
    history = []
    for epoch in range(config.epochs):
        for net in nets.values():
            net.train()
        train_loss = _epoch_pass(nets, _batches(arrays, targets, config,
                                                generator), config, optimizer)
        entry = {"epoch": epoch, "train_loss": train_loss}
        if val_arrays is not None:
            for net in nets.values():
                net.eval()
            with torch.no_grad():
                entry["val_loss"] = _epoch_pass(
                    nets, _batches(val_arrays,
                                   _select_targets(val_arrays, config), config),
                    config)
        history.append(entry)
        if log:
            log(f"epoch {epoch}: " + " ".join(f"{k}={v:.5g}"
                                              for k, v in entry.items()
                                              if k != "epoch"))
    for net in nets.values():
        net.eval()
    return Checkpoint(
        config=config,
        freq_state=nets["freq"].state_dict() if "freq" in nets else None,
        calib_state=nets["calib"].state_dict() if "calib" in nets else None,
        baseline_state=nets["baseline"].state_dict() if "baseline" in nets
        else None,
        history=history)


def predict(checkpoint, lowpass_image):
    """Enhanced pyramid and calibrated image for one low-pass D-bar image.

    Accepts a (H, W) array in conductivity units; returns (list of S arrays,
    final (H, W) array) in the same units.
    """
    lowpass_image = np.asarray(lowpass_image, dtype=np.float32)
    x = torch.from_numpy(lowpass_image - BACKGROUND)[None, None]
    freq, calib, baseline = checkpoint.build_models()
    with torch.no_grad():
        if baseline is not None:
            final = baseline(x)[0, 0].numpy() + BACKGROUND
            return [], final
        pyramid = freq(x)
        final = calib(pyramid)[0, 0].numpy() + BACKGROUND
    enhanced = [p[0, 0].numpy() + BACKGROUND for p in pyramid]
    return enhanced, final


def evaluate(checkpoint, dataset_dir, csv_path=None):
    """Per-sample PSNR/SSIM/RMSE of the calibrated prediction vs ground truth.

    Also reports the low-pass input's metrics as a baseline column.  Returns
    the rows; optionally writes them (plus a mean row) as CSV.
    """
    rows = []
    arrays = load_arrays(dataset_dir)
    for i in range(len(arrays)):
        low = arrays.lowpass[i, 0].numpy() + BACKGROUND
        gt = arrays.ground_truth[i, 0].numpy() + BACKGROUND
        _, final = predict(checkpoint, low)
        rep = metrics_mod.report(final, gt)
        base = metrics_mod.report(low, gt)
        rows.append({"index": i, "psnr": rep["psnr"], "ssim": rep["ssim"],
                     "rmse": rep["rmse"], "input_psnr": base["psnr"]})
    if not rows:
        raise ValueError(f"no samples in {dataset_dir}")
    if csv_path:
        fields = ["index", "psnr", "ssim", "rmse", "input_psnr"]
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
            writer.writerow({"index": "mean",
                             **{k: float(np.mean([r[k] for r in rows]))
                                for k in fields[1:]}})
    return rows
