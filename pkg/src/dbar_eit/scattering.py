"""CGO boundary traces, scattering transforms, and truncated scattering fields.

The complex geometrical optics trace solves the boundary integral equation

    psi|bd = e^{ikz}|bd - S_k (L_sigma - L_1) psi|bd

on M equispaced boundary points of the unit circle.  The difference of the
boundary maps acts through trigonometric-coefficient projection with the
(2N+1) x (2N+1) matrices; the single-layer operator S_k is split into the
circle log-kernel (diagonal multiplier 1/(2|n|) in the trig basis, zero on
constants) plus the smooth harmonic remainder of the Faddeev kernel,
integrated by the trapezoid rule.

The exact transform t_exp pairs e^{i conj(k) conj(z)} with the mapped trace
along the boundary; the asymptotic transform t_tilde is a plain Riemann sum
of q(z) e^{i(conj(k) conj(z) + k z)} over the potential grid.  Both are
stitched into a truncated field on the dyadic solver grid by bilinear
interpolation of the h-spaced computation lattices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .dbar import KGrid

_EULER = float(np.euler_gamma)


class IllConditionedBIEError(RuntimeError):
    """The discrete CGO system lost too much accuracy (|k| beyond stable radius)."""

    def __init__(self, k, residual):
        super().__init__(f"CGO boundary solve unstable at |k|={abs(k):.3f} "
                         f"(relative residual {residual:.2e})")
        self.k = k
        self.residual = residual


class CoverageError(ValueError):
    """Requested interpolation region is not covered by the computed lattices."""


def _ein_series(ws, n_max):
    acc = np.zeros_like(ws)
    term = np.full_like(ws, 1.0)
    for n in range(1, n_max + 1):
        term = term * (-ws) / n
        acc -= term / n
        if n > 8 and np.max(np.abs(term)) < 1e-18:
            break
    return acc


def _ein(w):
    """Entire exponential integral Ein(w) = gamma + log(w) + E1(w), vectorized.

    Power series on magnitude bins below |w| = 8 (term counts sized per bin),
    principal-branch E1 beyond.
    """
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    mag = np.abs(w)
    for lo, hi, n_max in ((0.0, 2.0, 26), (2.0, 5.0, 42), (5.0, 8.0, 60)):
        sel = (mag >= lo) & (mag < hi) if hi < 8.0 else (mag >= lo) & (mag <= hi)
        if np.any(sel):
            out[sel] = _ein_series(w[sel], n_max)
    large = mag > 8.0
    if np.any(large):
        wl = w[large]
        out[large] = _EULER + np.log(wl) + exp1(wl)
    return out


def faddeev_harmonic(w):
    """Harmonic remainder H(w) = G_1(w) + log|w|/(2 pi); finite at w = 0."""
    w = np.asarray(w, dtype=complex)
    return (-_EULER / (2.0 * np.pi)
            + (_ein(1j * np.conj(w)) + _ein(-1j * w)) / (4.0 * np.pi))


def faddeev_g1(w):
    """Faddeev fundamental solution g_1; g_k(z) = g_1(kz) by scaling.

    Evaluated through the harmonic splitting G_1 = -log|w|/(2 pi) + H(w)
    and g_1(w) = e^{-iw} G_1(w).
    """
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w) <= 1e-9):
        raise ValueError("g_1 is singular at w = 0")
    g = np.exp(-1j * w) * (-np.log(np.abs(w)) / (2.0 * np.pi) + faddeev_harmonic(w))
    return g if g.ndim else complex(g)


@dataclass(frozen=True)
class KPointSet:
    """Cartesian h-lattice points inside a disk or annulus, origin excluded."""

    points: np.ndarray        # complex (n,)
    h: float
    r_inner: float            # 0.0 for a disk
    r_outer: float

    def __len__(self):
        return len(self.points)


def kpoints(r_outer, h=0.2, r_inner=0.0):
    """All points of the lattice hZ^2 with r_inner < |k| <= r_outer, |k| > 0."""
    if h <= 0:
        raise ValueError("lattice spacing must be positive")
    if not r_outer > r_inner >= 0:
        raise ValueError("need r_outer > r_inner >= 0")
    n = int(np.floor(r_outer / h)) + 1
    i = np.arange(-n, n + 1)
    xx, yy = np.meshgrid(i * h, i * h)
    k = (xx + 1j * yy).ravel()
    mag = np.abs(k)
    keep = (mag > max(r_inner, 1e-9)) & (mag <= r_outer)
    if not np.any(keep):
        raise ValueError("region contains no lattice points at this spacing")
    return KPointSet(points=k[keep], h=float(h),
                     r_inner=float(r_inner), r_outer=float(r_outer))


@dataclass(frozen=True)
class ScatteringValues:
    """Complex transform values paired with the lattice they were computed on."""

    kset: KPointSet
    values: np.ndarray


@dataclass(frozen=True)
class ScatteringField:
    """Truncated scattering data t_R on a dyadic solver grid.

    Zero outside |k| <= r_truncation and at the origin; inside the low-pass
    disk the values interpolate measured t_exp, in the annulus they
    interpolate the asymptotic transform.
    """

    values: np.ndarray
    grid: KGrid
    r_truncation: float
    r_lowpass: float


class BoundaryOperator:
    """Dense M-point discretization of the CGO boundary integral equation.

    Holds the k-independent pieces (trig projection of L_sigma - L_1 and the
    log-layer multiplier); per-k assembly adds the smooth Faddeev remainder
    by trapezoid quadrature and factorizes the M x M system.
    """

    def __init__(self, L_sigma, L_1, M=64):
        L_sigma = np.asarray(L_sigma, dtype=float)
        L_1 = np.asarray(L_1, dtype=float)
        if L_sigma.shape != L_1.shape or L_sigma.shape[0] % 2 == 0:
            raise ValueError("DtN matrices must share an odd square shape")
        N = (L_sigma.shape[0] - 1) // 2
        if M & (M - 1) or M < 2 * N + 2:
            raise ValueError(f"M must be a power of two with M >= {2 * N + 2}")
        self.M = M
        self.N = N
        theta = 2.0 * np.pi * np.arange(M) / M
        self.z = np.exp(1j * theta)

        basis = np.empty((M, 2 * N + 1))
        for idx, n in enumerate(range(-N, N + 1)):
            if n < 0:
                basis[:, idx] = np.sin(-n * theta) / np.sqrt(np.pi)
            elif n == 0:
                basis[:, idx] = 1.0 / np.sqrt(2.0 * np.pi)
            else:
                basis[:, idx] = np.cos(n * theta) / np.sqrt(np.pi)
        self.basis = basis
        self.project = (2.0 * np.pi / M) * basis.T
        self.map_diff = basis @ (L_sigma - L_1) @ self.project
        log_mult = np.array([0.0 if n == 0 else 0.5 / abs(n)
                             for n in range(-N, N + 1)])
        self.log_layer = basis @ (log_mult[:, None] * self.project)
        self.diff = self.z[:, None] - self.z[None, :]

    def apply_map(self, L_a, L_b, traces):
        """(L_a - L_b) applied through trig projection to stacked traces."""
        op = self.basis @ (np.asarray(L_a) - np.asarray(L_b)) @ self.project
        return traces @ op.T

    def single_layer(self, k):
        h_vals = (-np.log(abs(k)) / (2.0 * np.pi)
                  + faddeev_harmonic(k * self.diff))
        return self.log_layer + (2.0 * np.pi / self.M) * h_vals

    def solve(self, k, tol=1e-8):
        rhs = np.exp(1j * k * self.z)
        system = np.eye(self.M) + self.single_layer(k) @ self.map_diff
        psi = np.linalg.solve(system, rhs)
        residual = np.linalg.norm(system @ psi - rhs) / np.linalg.norm(rhs)
        if residual > tol:
            raise IllConditionedBIEError(k, residual)
        return psi

    def solve_many(self, ks, tol=1e-8, chunk=64):
        """Solve for a batch of k values; H-kernel evaluation and the LAPACK
        factorizations are vectorized per chunk."""
        ks = np.asarray(ks, dtype=complex)
        out = np.empty((len(ks), self.M), dtype=complex)
        eye = np.eye(self.M)
        for start in range(0, len(ks), chunk):
            kc = ks[start:start + chunk]
            h_vals = (-np.log(np.abs(kc))[:, None, None] / (2.0 * np.pi)
                      + faddeev_harmonic(kc[:, None, None] * self.diff[None]))
            systems = (eye[None]
                       + (self.log_layer[None]
                          + (2.0 * np.pi / self.M) * h_vals) @ self.map_diff)
            rhs = np.exp(1j * kc[:, None] * self.z[None, :])
            psi = np.linalg.solve(systems, rhs[..., None])[..., 0]
            resid = (np.linalg.norm((systems @ psi[..., None])[..., 0] - rhs, axis=1)
                     / np.linalg.norm(rhs, axis=1))
            bad = np.nonzero(resid > tol)[0]
            if bad.size:
                raise IllConditionedBIEError(kc[bad[0]], resid[bad[0]])
            out[start:start + chunk] = psi
        return out


def solve_cgo_trace(L_sigma, L_1, k, M=64, mode="full"):
    """CGO trace psi(., k) at M equispaced boundary points.

    mode "born" skips the solve and returns e^{ikz} (the asymptotic guess);
    mode "full" solves the discretized boundary integral equation.
    """
    if abs(k) <= 0:
        raise ValueError("k must be nonzero")
    op = BoundaryOperator(L_sigma, L_1, M)
    if mode == "born":
        return np.exp(1j * k * op.z)
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    return op.solve(k)


def cgo_traces(L_sigma, L_1, ks, M=64, mode="full"):
    """Stacked CGO traces for many k (shared boundary operator)."""
    op = BoundaryOperator(L_sigma, L_1, M)
    ks = np.asarray(ks, dtype=complex)
    if mode == "born":
        return np.exp(1j * ks[:, None] * op.z[None, :])
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    return op.solve_many(ks)


def t_exp(L_sigma_noisy, L_1, k, trace, M=None):
    """Exact scattering transform from the (noisy) boundary map and a CGO trace.

    Trapezoid quadrature over the boundary of
    e^{i conj(k) conj(z)} [(L_sigma^delta - L_1) psi](z).
    """
    trace = np.asarray(trace, dtype=complex)
    op = BoundaryOperator(L_sigma_noisy, L_1, M or len(trace))
    mapped = op.apply_map(L_sigma_noisy, L_1, trace[None, :])[0]
    weight = 2.0 * np.pi / len(trace)
    return complex(weight * np.sum(np.exp(1j * np.conj(k) * np.conj(op.z)) * mapped))


def t_exp_many(L_sigma_noisy, L_1, ks, traces):
    """Vectorized t_exp over stacked traces (one row per k)."""
    traces = np.asarray(traces, dtype=complex)
    ks = np.asarray(ks, dtype=complex)
    op = BoundaryOperator(L_sigma_noisy, L_1, traces.shape[1])
    mapped = op.apply_map(L_sigma_noisy, L_1, traces)
    phases = np.exp(1j * np.conj(ks)[:, None] * np.conj(op.z)[None, :])
    return (2.0 * np.pi / traces.shape[1]) * np.sum(phases * mapped, axis=1)


def _potential_axes(q):
    n = q.values.shape[0]
    h = q.spacing
    x = -q.extent + (np.arange(n) + 0.5) * h
    return x, h


def t_asymptotic(q, k):
    """Asymptotic transform: Riemann sum of q(z) e^{i(conj(k)conj(z) + kz)}."""
    x, h = _potential_axes(q)
    xx, yy = np.meshgrid(x, x)
    k = complex(k)
    phase = 2.0 * (k.real * xx - k.imag * yy)
    return complex(np.sum(q.values * np.exp(1j * phase)) * h * h)


def t_asymptotic_many(q, ks):
    """t_asymptotic for many lattice points, using phase separability.

    e^{i(conj(k)conj(z)+kz)} factors into x and y parts, so the grid sum is
    shared between all k sharing a coordinate; exact same sum as the per-k
    version up to floating-point association order.
    """
    ks = np.asarray(ks, dtype=complex)
    x, h = _potential_axes(q)
    kx_u, ix = np.unique(ks.real, return_inverse=True)
    ky_u, iy = np.unique(ks.imag, return_inverse=True)
    row_sums = np.exp(-2j * np.outer(ky_u, x)) @ q.values      # (nky, nx)
    col_phase = np.exp(2j * np.outer(kx_u, x))                 # (nkx, nx)
    return np.einsum("bx,bx->b", row_sums[iy], col_phase[ix]) * h * h


def scattering_texp(L_sigma_noisy, L_1, kset, M=64, mode="full"):
    """t_exp on every lattice point of a KPointSet (full CGO chain)."""
    traces = cgo_traces(L_sigma_noisy, L_1, kset.points, M=M, mode=mode)
    return ScatteringValues(kset=kset,
                            values=t_exp_many(L_sigma_noisy, L_1, kset.points, traces))


def scattering_tasym(q, kset):
    """Asymptotic transform on every lattice point of a KPointSet."""
    return ScatteringValues(kset=kset, values=t_asymptotic_many(q, kset.points))


def _lattice_from_values(parts, r_needed):
    h = parts[0].kset.h
    for p in parts[1:]:
        if abs(p.kset.h - h) > 1e-12:
            raise CoverageError("lattice spacings differ between transforms")
    half = int(np.ceil(r_needed / h)) + 2
    lat = np.zeros((2 * half + 1, 2 * half + 1), dtype=complex)
    for p in parts:
        # points beyond the truncation radius belong to the zero branch
        keep = np.abs(p.kset.points) <= r_needed + 1e-9
        pts = p.kset.points[keep]
        vals = p.values[keep]
        ix = np.rint(pts.real / h).astype(int)
        iy = np.rint(pts.imag / h).astype(int)
        if pts.size and np.max(np.abs(pts - (ix + 1j * iy) * h)) > 1e-9:
            raise CoverageError("transform points do not lie on the h-lattice")
        lat[iy + half, ix + half] = vals
    return lat, half, h


def assemble_t_field(texp, tasym, r_lowpass, r_truncation, grid):
    """Truncated scattering field t_R on the solver grid (three-branch rule).

    Points with |k| <= r_lowpass interpolate the measured lattice, points in
    the annulus interpolate the asymptotic lattice (lattice neighbors may mix
    across the seam, both approximate the same transform), and |k| beyond
    r_truncation is zero.  Pass tasym=None with r_truncation == r_lowpass for
    the plain low-pass field.
    """
    if r_lowpass > r_truncation:
        raise ValueError("low-pass radius cannot exceed the truncation radius")
    if abs(grid.R - r_truncation) > 1e-12:
        raise ValueError("solver grid truncation radius must match r_truncation")
    if texp.kset.r_outer + 1e-9 < min(r_lowpass, r_truncation):
        raise CoverageError("measured lattice does not cover the low-pass disk")
    parts = [texp]
    if r_truncation > r_lowpass + 1e-12:
        if tasym is None or tasym.kset.r_outer + 1e-9 < r_truncation:
            raise CoverageError("asymptotic lattice does not cover the annulus")
        parts.append(tasym)
    lat, half, h = _lattice_from_values(parts, r_truncation)

    K = grid.points()
    out = np.zeros_like(K)
    mask = np.abs(K) <= r_truncation
    fx = (K.real[mask] + half * h) / h
    fy = (K.imag[mask] + half * h) / h
    ix0 = np.clip(np.floor(fx).astype(int), 0, 2 * half - 1)
    iy0 = np.clip(np.floor(fy).astype(int), 0, 2 * half - 1)
    tx = fx - ix0
    ty = fy - iy0
    vals = ((1 - ty) * ((1 - tx) * lat[iy0, ix0] + tx * lat[iy0, ix0 + 1])
            + ty * ((1 - tx) * lat[iy0 + 1, ix0] + tx * lat[iy0 + 1, ix0 + 1]))
    out[mask] = vals
    out[grid.origin_index, grid.origin_index] = 0.0
    return ScatteringField(values=out, grid=grid,
                           r_truncation=float(r_truncation),
                           r_lowpass=float(r_lowpass))
