"""Combined supervised loss for the dual-domain training scheme.

    L = alpha * sum_j || F_j(lowpass) - D^(j-1)(enhanced_j) ||^2
        + || P(F(lowpass)) - ground_truth ||^2

with D the 2x2 average-pooling downsampler; squared L2 is summed over
pixels and averaged over the batch.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


def downsample(x, levels):
    """Repeated 2x2 average pooling (levels = 0 is the identity)."""
    for _ in range(levels):
        x = F.avg_pool2d(x, 2)
    return x


def _sum_sq(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).flatten(1).sum(dim=1).mean()


def enhancement_term(freq_outputs, enhanced_targets):
    """sum_j ||F_j - D^(j-1) target_j||^2, targets given at full resolution."""
    if len(freq_outputs) != len(enhanced_targets):
        raise ValueError("output/target counts differ")
    total = 0.0
    for j, (out, target) in enumerate(zip(freq_outputs, enhanced_targets)):
        total = total + _sum_sq(out, downsample(target, j))
    return total


def calibration_term(calib_output, ground_truth):
    return _sum_sq(calib_output, ground_truth)


def combined_loss(freq_outputs, calib_output, enhanced_targets, ground_truth,
                  alpha=1.0):
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return (alpha * enhancement_term(freq_outputs, enhanced_targets)
            + calibration_term(calib_output, ground_truth))
