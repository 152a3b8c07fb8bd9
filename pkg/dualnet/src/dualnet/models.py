"""U-net pair for dual-domain learning.

FreqNet maps the low-pass D-bar image to the frequency-enhanced sequence:
one sub-branch per level j produces an output at resolution W / 2^(j-1).
CalibNet consumes that pyramid, concatenating branch j at encoder level j,
and emits the calibrated full-resolution conductivity.  Both share a depth-4
U-net backbone with base width 32.
"""

from __future__ import annotations

import torch
from torch import nn

BASE_WIDTH = 32
DEPTH = 4


def _block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    """Depth-4 U-net with optional per-level side inputs and side outputs.

    side inputs:  pyramid of 1-channel images, entry j concatenated to the
                  encoder at level j (entry 0 is the main input).
    side outputs: 1x1 heads on the decoder, head j at resolution W / 2^j.
    """

    def __init__(self, n_side_inputs=1, n_side_outputs=1):
        super().__init__()
        if not 1 <= n_side_inputs <= DEPTH:
            raise ValueError(f"need 1..{DEPTH} side inputs")
        if not 1 <= n_side_outputs <= DEPTH:
            raise ValueError(f"need 1..{DEPTH} side outputs")
        self.n_side_inputs = n_side_inputs
        self.n_side_outputs = n_side_outputs
        widths = [BASE_WIDTH * 2 ** lvl for lvl in range(DEPTH)]   # 32..256

        enc = []
        for lvl in range(DEPTH):
            cin = 1 if lvl == 0 else widths[lvl - 1]
            if 0 < lvl < n_side_inputs:
                cin += 1
            enc.append(_block(cin, widths[lvl]))
        self.encoders = nn.ModuleList(enc)
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = _block(widths[-1], 2 * widths[-1])
        self.upsamplers = nn.ModuleList(
            [nn.ConvTranspose2d(2 * widths[lvl], widths[lvl], 2, stride=2)
             for lvl in range(DEPTH)])
        self.decoders = nn.ModuleList(
            [_block(2 * widths[lvl], widths[lvl]) for lvl in range(DEPTH)])
        self.heads = nn.ModuleList(
            [nn.Conv2d(widths[j], 1, 1) for j in range(n_side_outputs)])

    def forward(self, pyramid):
        if isinstance(pyramid, torch.Tensor):
            pyramid = [pyramid]
        if len(pyramid) != self.n_side_inputs:
            raise ValueError(f"expected {self.n_side_inputs} inputs, "
                             f"got {len(pyramid)}")
        x = pyramid[0]
        skips = []
        for lvl, encoder in enumerate(self.encoders):
            if lvl > 0:
                x = self.pool(x)
                if lvl < self.n_side_inputs:
                    side = pyramid[lvl]
                    if side.shape[-2:] != x.shape[-2:]:
                        raise ValueError(f"side input {lvl} has resolution "
                                         f"{tuple(side.shape[-2:])}, expected "
                                         f"{tuple(x.shape[-2:])}")
                    x = torch.cat([x, side], dim=1)
            x = encoder(x)
            skips.append(x)
        x = self.bottleneck(self.pool(x))
        decoded = [None] * DEPTH
        for lvl in range(DEPTH - 1, -1, -1):
            x = self.upsamplers[lvl](x)
            x = self.decoders[lvl](torch.cat([x, skips[lvl]], dim=1))
            decoded[lvl] = x
        return [self.heads[j](decoded[j]) for j in range(self.n_side_outputs)]


class FreqNet(UNet):
    """Frequency-enhancing net: low-pass image -> S-output pyramid."""

    def __init__(self, scales):
        super().__init__(n_side_inputs=1, n_side_outputs=scales)

    def forward(self, x):
        return super().forward([x])


class CalibNet(UNet):
    """Image-calibrating net: S-image pyramid -> full-resolution image."""

    def __init__(self, scales):
        super().__init__(n_side_inputs=scales, n_side_outputs=1)

    def forward(self, pyramid):
        return super().forward(list(pyramid))[0]


class BaselineNet(UNet):
    """Plain single U-net baseline: low-pass image -> conductivity."""

    def __init__(self):
        super().__init__(n_side_inputs=1, n_side_outputs=1)

    def forward(self, x):
        return super().forward([x])[0]
