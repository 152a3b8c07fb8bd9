"""Dataset loading: binary sample files -> training tensors.

Images are shifted by the unit background before training so the networks
see zero-centered residuals; predictions are shifted back on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import binio

BACKGROUND = 1.0


@dataclass
class Arrays:
    """Stacked dataset tensors (already background-centered)."""

    lowpass: torch.Tensor        # (N, 1, H, W)
    enhanced: list               # S tensors of (N, 1, H, W), radii ascending
    ground_truth: torch.Tensor   # (N, 1, H, W)
    radii: tuple

    def __len__(self):
        return self.lowpass.shape[0]

    @property
    def scales(self):
        return len(self.enhanced)


def load_arrays(directory, limit=None):
    lows, gts, metas = [], [], []
    enhanced_stacks = None
    for gt, low, enhanced, meta in binio.load_samples(directory):
        if enhanced_stacks is None:
            enhanced_stacks = [[] for _ in enhanced]
        if len(enhanced) != len(enhanced_stacks):
            raise binio.FormatError("inconsistent enhanced sequence length")
        lows.append(low)
        gts.append(gt)
        for stack, img in zip(enhanced_stacks, enhanced):
            stack.append(img)
        metas.append(meta)
        if limit is not None and len(lows) >= limit:
            break
    if not lows:
        raise binio.FormatError(f"no samples found in {directory}")

    def to_tensor(stack):
        arr = np.stack(stack).astype(np.float32) - BACKGROUND
        return torch.from_numpy(arr).unsqueeze(1)

    return Arrays(lowpass=to_tensor(lows),
                  enhanced=[to_tensor(s) for s in enhanced_stacks],
                  ground_truth=to_tensor(gts),
                  radii=tuple(metas[0]["radii"]))
