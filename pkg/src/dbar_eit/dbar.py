"""Solver for the regularized D-bar integral equation.

For each image point z the equation  m = 1 + A(z, t_R) m  is solved on a
dyadic k-grid, where the real-linear operator A is a periodic convolution
with the fundamental solution 1/(pi k) against the truncated scattering
field times a conjugation:

    A v = h^2 * IFFT[ FFT[G] . FFT[ T_z . conj(v) ] ],
    T_z(k') = t_R(k') e^{-i(k' z + conj(k') conj(z))} / (4 pi conj(k')).

Richardson iteration with a fixed iteration count is the production path; a
dense real-linear direct solve is retained as a correctness oracle for
small grids.  The conductivity is read off as sigma_R(z) = Re(m(z,0)^2).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as _fft

FOUR_PI = 4.0 * np.pi
_FFT_WORKERS = max(1, min(4, os.cpu_count() or 1))


class GridMismatchError(ValueError):
    """Operands live on different k-grids."""


class ResourceGuardError(RuntimeError):
    """Dense direct solve requested on a grid too large to assemble."""


class DivergenceError(RuntimeError):
    """Richardson iteration produced non-finite values."""

    def __init__(self, iteration):
        super().__init__(f"non-finite iterate at Richardson step {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class KGrid:
    """Dyadic 2^l x 2^l grid on [-sR, sR)^2; contains the origin as a point."""

    l: int
    s: float
    R: float

    @property
    def size(self):
        return 2 ** self.l

    @property
    def spacing(self):
        return 2.0 * self.s * self.R / self.size

    def axis(self):
        return -self.s * self.R + self.spacing * np.arange(self.size)

    def points(self):
        ax = self.axis()
        xx, yy = np.meshgrid(ax, ax)
        return xx + 1j * yy

    @property
    def origin_index(self):
        return self.size // 2


def build_kgrid(R, s=2.1, l=9):
    """K-grid constructor; l=9, s=2.1 reproduce the production configuration."""
    if not 4 <= l <= 12:
        raise ValueError(f"dyadic exponent l={l} outside [4, 12]")
    if R <= 0 or s < 2:
        raise ValueError("need R > 0 and s >= 2")
    return KGrid(l=int(l), s=float(s), R=float(R))


@dataclass(frozen=True)
class SpectralKernel:
    """DFT of the grid-sampled fundamental solution G(k) = 1/(pi k), G(0) = 0."""

    fourier: np.ndarray
    grid: KGrid


def wrapped_kernel_samples(grid):
    """G sampled at periodic difference coordinates (index 0 <-> zero offset)."""
    n = grid.size
    d = np.fft.fftfreq(n) * n * grid.spacing   # 0, h, ..., -n/2 h, ..., -h
    dx, dy = np.meshgrid(d, d)
    dk = dx + 1j * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 1.0 / (np.pi * dk)
    g[0, 0] = 0.0
    return g


def spectral_kernel(grid):
    return SpectralKernel(fourier=np.fft.fft2(wrapped_kernel_samples(grid)),
                          grid=grid)


@dataclass(frozen=True)
class MGrid:
    """CGO-solution field m(z, .) over a k-grid for one fixed z."""

    values: np.ndarray
    grid: KGrid


def _check_grids(*grids):
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise GridMismatchError(f"k-grid mismatch: {g} vs {first}")


def _multiplier(z, field):
    """T_z on the grid: field * e_{-z}(k') / (4 pi conj(k')), zero at the origin."""
    grid = field.grid
    K = grid.points()
    phase = np.exp(-1j * (K * z + np.conj(K) * np.conj(z)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = field.values * phase / (FOUR_PI * np.conj(K))
    t[grid.origin_index, grid.origin_index] = 0.0
    return t


def apply_dbar_operator(z, field, kernel, v):
    """One application of the real-linear reduced operator A(z, t_R)."""
    _check_grids(field.grid, kernel.grid, v.grid)
    grid = field.grid
    u = _multiplier(z, field) * np.conj(v.values)
    conv = np.fft.ifft2(kernel.fourier * np.fft.fft2(u))
    return MGrid(values=grid.spacing ** 2 * conv, grid=grid)


def richardson_solve(z, field, kernel, n_iter=5):
    """m^(n+1) = 1 + A m^(n) starting from the all-ones field; fixed count."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    _check_grids(field.grid, kernel.grid)
    grid = field.grid
    t_z = _multiplier(z, field)
    h2 = grid.spacing ** 2
    m = np.ones((grid.size, grid.size), dtype=complex)
    for it in range(n_iter):
        m = 1.0 + h2 * np.fft.ifft2(kernel.fourier * np.fft.fft2(t_z * np.conj(m)))
        if not np.all(np.isfinite(m)):
            raise DivergenceError(it + 1)
    return MGrid(values=m, grid=grid)


def _richardson_batch(zs, field, kernel, n_iter):
    """Richardson iterations for a batch of z values (vectorized FFTs).

    The phase e^{-i(kz + conj(k)conj(z))} = e^{-2i Re(kz)} separates into 1-D
    factors along the two grid axes, so only two small exponential vectors
    are evaluated per z.
    """
    grid = field.grid
    ax = grid.axis()
    zs = np.asarray(zs, dtype=complex)
    K = grid.points()
    with np.errstate(divide="ignore", invalid="ignore"):
        base = field.values / (FOUR_PI * np.conj(K))
    base[grid.origin_index, grid.origin_index] = 0.0
    col = np.exp(-2j * np.outer(zs.real, ax))     # x-dependent factor
    row = np.exp(2j * np.outer(zs.imag, ax))      # y-dependent factor
    t_z = base[None, :, :] * (row[:, :, None] * col[:, None, :])
    h2 = grid.spacing ** 2
    m = np.ones_like(t_z)
    for it in range(n_iter):
        u = _fft.fft2(t_z * np.conj(m), axes=(-2, -1), workers=_FFT_WORKERS)
        u *= kernel.fourier[None]
        m = _fft.ifft2(u, axes=(-2, -1), workers=_FFT_WORKERS, overwrite_x=True)
        m *= h2
        m += 1.0
        if not np.all(np.isfinite(m)):
            raise DivergenceError(it + 1)
    return m[:, grid.origin_index, grid.origin_index]


def dense_operator_matrix(z, field):
    """Complex matrix C with  A v = C conj(v), by direct periodic summation."""
    grid = field.grid
    n = grid.size
    g = wrapped_kernel_samples(grid)
    iy, ix = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    flat_y, flat_x = iy.ravel(), ix.ravel()
    dy = (flat_y[:, None] - flat_y[None, :]) % n
    dx = (flat_x[:, None] - flat_x[None, :]) % n
    C = g[dy, dx] * _multiplier(z, field).ravel()[None, :]
    return grid.spacing ** 2 * C


def direct_solve_oracle(z, field):
    """Dense real-linear solve of [I - A] m = 1 (correctness oracle, l <= 6)."""
    grid = field.grid
    if grid.l > 6:
        raise ResourceGuardError(f"dense solve limited to l <= 6, got l={grid.l}")
    C = dense_operator_matrix(z, field)
    n2 = C.shape[0]
    # real-linear structure: with v = a + ib,  A v = C (a - ib)
    A = np.empty((2 * n2, 2 * n2))
    A[:n2, :n2] = C.real
    A[:n2, n2:] = C.imag
    A[n2:, :n2] = C.imag
    A[n2:, n2:] = -C.real
    rhs = np.concatenate([np.ones(n2), np.zeros(n2)])
    try:
        x = np.linalg.solve(np.eye(2 * n2) - A, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"singular dense D-bar system: {exc}") from exc
    m = (x[:n2] + 1j * x[n2:]).reshape(grid.size, grid.size)
    return MGrid(values=m, grid=grid)


def reconstruct(field, kernel=None, z_size=64, n_iter=5, z_extent=1.0,
                chunk=128, solver="richardson"):
    """Recover sigma_R(z) = Re(m(z,0)^2) on a z-grid over [-extent, extent)^2.

    Pixels outside the unit disk are set to 1.0.  The per-pixel solves are
    independent; they are evaluated in fixed-size batches of vectorized
    FFTs, so the output does not depend on the batch layout.  Returns the
    conductivity image and a |Im(m^2)| diagnostic image.
    """
    if kernel is None:
        kernel = spectral_kernel(field.grid)
    _check_grids(field.grid, kernel.grid)
    step = 2.0 * z_extent / z_size
    ax = -z_extent + (np.arange(z_size) + 0.5) * step
    xx, yy = np.meshgrid(ax, ax)
    inside = xx * xx + yy * yy < 1.0
    zs = (xx + 1j * yy)[inside]

    m0 = np.empty(len(zs), dtype=complex)
    if solver == "richardson":
        for start in range(0, len(zs), chunk):
            m0[start:start + chunk] = _richardson_batch(
                zs[start:start + chunk], field, kernel, n_iter)
    elif solver == "direct":
        for i, z in enumerate(zs):
            m = direct_solve_oracle(z, field)
            m0[i] = m.values[field.grid.origin_index, field.grid.origin_index]
    else:
        raise ValueError(f"unknown solver {solver!r}")

    m2 = m0 * m0
    sigma = np.ones((z_size, z_size))
    sigma[inside] = m2.real
    diag = np.zeros((z_size, z_size))
    diag[inside] = np.abs(m2.imag)
    from .phantom import ConductivityImage
    return (ConductivityImage(values=sigma, extent=z_extent),
            ConductivityImage(values=diag, extent=z_extent))
