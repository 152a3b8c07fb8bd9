"""Regularized D-bar reconstruction pipeline for 2-D EIT on the unit disk.

Modules:
    phantom     KIT4/ACT4-style conductivity phantoms and the Schrodinger
                potential q.
    forward     FEM forward solver: NtD/DtN matrices under trigonometric
                patterns and the relative Gaussian noise model.
    scattering  CGO boundary integral equation, exact and asymptotic
                scattering transforms, truncated field assembly.
    dbar        FFT-accelerated Richardson solver for the D-bar integral
                equation and conductivity reconstruction.
    dataset     Sample generation, binary dataset serialization, metrics.
    cli         Command-line entry point (`dbar-eit`).
"""

from .dataset import (DELTA_PAIRING, Sample, SampleMeta, downsample,
                      make_sample, metrics, read_dataset, standard_meta,
                      write_dataset)
from .dbar import build_kgrid, reconstruct, richardson_solve
from .forward import (build_disk_mesh, compute_ntd, homogeneous_dtn,
                      ntd_to_dtn, perturb_ntd, solve_neumann)
from .phantom import (generate_act4, generate_kit4, phantom_from_json,
                      phantom_to_json, potential_q, rasterize)
from .scattering import (assemble_t_field, faddeev_g1, kpoints,
                         solve_cgo_trace, t_asymptotic, t_exp)

__version__ = "0.1.0"

__all__ = [
    "DELTA_PAIRING", "Sample", "SampleMeta", "assemble_t_field",
    "build_disk_mesh", "build_kgrid", "compute_ntd", "downsample",
    "faddeev_g1", "generate_act4", "generate_kit4", "homogeneous_dtn",
    "kpoints", "make_sample", "metrics", "ntd_to_dtn", "perturb_ntd",
    "phantom_from_json", "phantom_to_json", "potential_q", "rasterize",
    "read_dataset", "reconstruct", "richardson_solve", "solve_cgo_trace",
    "solve_neumann", "standard_meta", "t_asymptotic", "t_exp",
    "write_dataset",
]
