"""Sample generation, dataset serialization and image quality metrics.

A sample bundles the ground-truth conductivity, the noise-stable low-pass
D-bar image, and the frequency-enhanced D-bar sequence at increasing
truncation radii.  Generation runs the full chain: FEM forward solve,
relative Gaussian noise, DtN assembly, CGO scattering transform inside the
low-pass disk, asymptotic transform on the annulus, and one regularized
D-bar reconstruction per radius.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import convolve2d

from . import binfmt
from . import dbar
from . import forward
from . import phantom as phantom_mod
from . import scattering

# noise level -> stable low-pass truncation radius
DELTA_PAIRING = {0.0: 6.0, 0.001: 5.0, 0.0075: 4.0}
DEFAULT_RADII = (6.0, 7.0, 8.0)
TRAIN_COUNTS = {"kit4": 3280, "act4": 3200}
VALIDATION_COUNTS = {"kit4": 820, "act4": 800}


class PipelineError(RuntimeError):
    """A generation stage failed; the message carries the stage tag."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@contextmanager
def _stage(name):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


@dataclass(frozen=True)
class SampleMeta:
    seed: int
    style: str
    delta: float
    r_lowpass: float
    radii: tuple = DEFAULT_RADII
    l: int = 7
    s: float = 2.1
    width: int = 128
    height: int = 128
    mesh_level: int = 3
    h_lattice: float = 0.2
    cgo_mode: str = "full"
    n_iter: int = 5
    format_version: int = binfmt.FORMAT_VERSION

    def __post_init__(self):
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii must be strictly ascending")
        if radii and self.r_lowpass > radii[0]:
            raise ValueError("low-pass radius must not exceed the first radius")
        if self.width != self.height:
            raise ValueError("reconstruction grid must be square")


def standard_meta(seed, style, delta, **overrides):
    """Meta with the noise level paired to its stable truncation radius."""
    if delta not in DELTA_PAIRING:
        raise ValueError(f"no standard pairing for delta={delta}; "
                         f"pass r_lowpass explicitly via SampleMeta")
    return SampleMeta(seed=int(seed), style=style, delta=float(delta),
                      r_lowpass=DELTA_PAIRING[delta], **overrides)


@dataclass(frozen=True)
class Sample:
    ground_truth: np.ndarray          # (H, W) float32
    lowpass: np.ndarray               # (H, W) float32
    enhanced: tuple                   # S arrays of (H, W) float32
    meta: SampleMeta

    def all_images(self):
        return [self.ground_truth, self.lowpass, *self.enhanced]


def generate_phantom(meta):
    if meta.style == "kit4":
        return phantom_mod.generate_kit4(meta.seed)
    if meta.style == "act4":
        return phantom_mod.generate_act4(meta.seed)
    raise ValueError(f"unknown phantom style {meta.style!r}")


def make_sample(phantom, meta):
    """Run the full measurement-to-images chain for one phantom."""
    n_patterns = 16
    with _stage("forward"):
        mesh = forward.build_disk_mesh(meta.mesh_level)
        R = forward.compute_ntd(mesh, phantom, N=n_patterns)
    with _stage("noise"):
        R_noisy = forward.perturb_ntd(R, meta.delta, seed=meta.seed)
    with _stage("dtn"):
        L = forward.ntd_to_dtn(R_noisy)
        L1 = forward.homogeneous_dtn(n_patterns)
    with _stage("scattering_exp"):
        texp = scattering.scattering_texp(
            L, L1, scattering.kpoints(meta.r_lowpass, meta.h_lattice),
            mode=meta.cgo_mode)
    with _stage("reconstruct_lowpass"):
        grid = dbar.build_kgrid(meta.r_lowpass, meta.s, meta.l)
        low_field = scattering.assemble_t_field(texp, None, meta.r_lowpass,
                                                meta.r_lowpass, grid)
        lowpass, _ = dbar.reconstruct(low_field, z_size=meta.width,
                                      n_iter=meta.n_iter)
    enhanced = []
    if meta.radii:
        with _stage("scattering_asym"):
            q = phantom_mod.potential_q(phantom)
            tasym = scattering.scattering_tasym(
                q, scattering.kpoints(meta.radii[-1], meta.h_lattice,
                                      r_inner=meta.r_lowpass))
        for r_j in meta.radii:
            with _stage(f"reconstruct_r{r_j:g}"):
                grid_j = dbar.build_kgrid(r_j, meta.s, meta.l)
                field_j = scattering.assemble_t_field(texp, tasym,
                                                      meta.r_lowpass, r_j, grid_j)
                sigma_j, _ = dbar.reconstruct(field_j, z_size=meta.width,
                                              n_iter=meta.n_iter)
            enhanced.append(sigma_j.values.astype(np.float32))
    with _stage("rasterize"):
        gt = phantom_mod.rasterize(phantom, meta.width, meta.height, extent=1.0)
    return Sample(ground_truth=gt.values.astype(np.float32),
                  lowpass=lowpass.values.astype(np.float32),
                  enhanced=tuple(enhanced), meta=meta)


def downsample(img, levels):
    """Repeated 2x2 average pooling; levels = 0 is the identity."""
    img = np.asarray(img)
    if levels < 0:
        raise ValueError("levels must be >= 0")
    for _ in range(levels):
        h, w = img.shape
        if h % 2 or w % 2:
            raise ValueError(f"dimensions {img.shape} not divisible by 2")
        img = 0.25 * (img[0::2, 0::2] + img[1::2, 0::2]
                      + img[0::2, 1::2] + img[1::2, 1::2])
    return img


def sample_filename(index):
    return f"sample_{index:06d}.dbar"


def write_dataset(samples, directory):
    """One binary file per sample plus an atomically-committed manifest."""
    os.makedirs(directory, exist_ok=True)
    records = []
    for idx, sample in enumerate(samples):
        fname = sample_filename(idx)
        path = os.path.join(directory, fname)
        binfmt.write_arrays(path, sample.all_images())
        records.append({"file": fname,
                        "sha256": binfmt.sha256_file(path),
                        "meta": asdict(sample.meta)})
    binfmt.write_manifest(directory, records)
    return len(records)


def read_dataset(directory):
    """Yield samples in manifest order, validating hashes and checksums."""
    for rec in binfmt.read_manifest(directory):
        path = os.path.join(directory, rec["file"])
        if not os.path.exists(path):
            raise binfmt.TruncatedError(f"{rec['file']}: listed in manifest "
                                        "but missing on disk")
        if binfmt.sha256_file(path) != rec["sha256"]:
            raise binfmt.ChecksumError(f"{rec['file']}: content hash mismatch")
        arrays = binfmt.read_arrays(path)
        meta_dict = dict(rec["meta"])
        meta_dict["radii"] = tuple(meta_dict["radii"])
        meta = SampleMeta(**meta_dict)
        if meta.format_version != binfmt.FORMAT_VERSION:
            raise binfmt.VersionError(f"{rec['file']}: format version "
                                      f"{meta.format_version}")
        if len(arrays) != 2 + len(meta.radii):
            raise binfmt.FormatError(f"{rec['file']}: expected "
                                     f"{2 + len(meta.radii)} arrays, "
                                     f"got {len(arrays)}")
        yield Sample(ground_truth=arrays[0], lowpass=arrays[1],
                     enhanced=tuple(arrays[2:]), meta=meta)


@dataclass(frozen=True)
class MetricsReport:
    psnr: float
    ssim: float
    rmse: float


PSNR_CAP = 99.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _gaussian_window(size=_SSIM_WINDOW, sigma=_SSIM_SIGMA):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def metrics(pred, gt):
    """PSNR / SSIM / relative-L2 report of a prediction against ground truth.

    PSNR uses the ground-truth dynamic range (conductivities are not 8-bit
    images); SSIM uses the standard 11x11 Gaussian window with std 1.5 and
    K1 = 0.01, K2 = 0.03, averaged over fully interior windows.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    rng = float(gt.max() - gt.min())
    if rng <= 0.0:
        raise ValueError("ground truth has zero dynamic range")

    mse = float(np.mean((pred - gt) ** 2))
    psnr = PSNR_CAP if mse == 0.0 else min(PSNR_CAP,
                                           10.0 * np.log10(rng * rng / mse))

    w = _gaussian_window()
    mu_p = convolve2d(pred, w, mode="valid")
    mu_g = convolve2d(gt, w, mode="valid")
    var_p = convolve2d(pred * pred, w, mode="valid") - mu_p ** 2
    var_g = convolve2d(gt * gt, w, mode="valid") - mu_g ** 2
    cov = convolve2d(pred * gt, w, mode="valid") - mu_p * mu_g
    c1 = (_SSIM_K1 * rng) ** 2
    c2 = (_SSIM_K2 * rng) ** 2
    ssim_map = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)
                / ((mu_p ** 2 + mu_g ** 2 + c1) * (var_p + var_g + c2)))
    ssim = float(ssim_map.mean())

    rmse = float(np.linalg.norm(pred - gt) / np.linalg.norm(gt))
    return MetricsReport(psnr=float(psnr), ssim=ssim, rmse=rmse)
