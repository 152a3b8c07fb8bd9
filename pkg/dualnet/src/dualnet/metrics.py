"""Image quality metrics (PSNR, SSIM, relative L2) for evaluation reports.

Same definitions as the data-generation side: PSNR over the ground-truth
dynamic range capped at 99 dB, SSIM with an 11x11 Gaussian window (std 1.5,
K1 = 0.01, K2 = 0.03) averaged over interior windows, RMSE as relative L2.
Implemented here independently; a fixture test pins agreement with the
generator package to 1e-5.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import convolve

PSNR_CAP = 99.0


def _window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def psnr(pred, gt):
    rng = float(gt.max() - gt.min())
    if rng <= 0:
        raise ValueError("ground truth has zero dynamic range")
    mse = float(np.mean((np.asarray(pred, float) - np.asarray(gt, float)) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(rng * rng / mse))


def ssim(pred, gt):
    pred = np.asarray(pred, float)
    gt = np.asarray(gt, float)
    rng = float(gt.max() - gt.min())
    if rng <= 0:
        raise ValueError("ground truth has zero dynamic range")
    w = _window()
    half = w.shape[0] // 2

    def local_mean(img):
        return convolve(img, w, mode="constant")[half:-half, half:-half]

    mu_p, mu_g = local_mean(pred), local_mean(gt)
    var_p = local_mean(pred * pred) - mu_p ** 2
    var_g = local_mean(gt * gt) - mu_g ** 2
    cov = local_mean(pred * gt) - mu_p * mu_g
    c1, c2 = (0.01 * rng) ** 2, (0.03 * rng) ** 2
    score = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)
             / ((mu_p ** 2 + mu_g ** 2 + c1) * (var_p + var_g + c2)))
    return float(score.mean())


def rmse(pred, gt):
    pred = np.asarray(pred, float)
    gt = np.asarray(gt, float)
    return float(np.linalg.norm(pred - gt) / np.linalg.norm(gt))


def report(pred, gt):
    return {"psnr": psnr(pred, gt), "ssim": ssim(pred, gt),
            "rmse": rmse(pred, gt)}
