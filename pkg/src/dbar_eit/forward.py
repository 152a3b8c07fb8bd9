"""Finite-element forward solver on the unit disk.

Produces the Neumann-to-Dirichlet matrix under trigonometric current
patterns, the relative Gaussian noise model for simulated measurements, and
the Dirichlet-to-Neumann matrix obtained by inversion and embedding.  The
discretization is piecewise-linear FEM on a structured polar mesh, with the
conductivity sampled at triangle centroids and the zero-mean constraint
imposed through a single boundary-integral Lagrange multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

_GAUSS3_T = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
_GAUSS3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


class SingularSystemError(RuntimeError):
    """The discrete system is numerically singular or too ill-conditioned."""


@dataclass(frozen=True)
class Mesh:
    """Triangulated unit disk; boundary vertices ordered by angle."""

    vertices: np.ndarray      # (n, 2)
    triangles: np.ndarray     # (m, 3) positively oriented
    boundary: np.ndarray      # indices into vertices, increasing angle

    @property
    def boundary_angles(self):
        b = self.vertices[self.boundary]
        return np.mod(np.arctan2(b[:, 1], b[:, 0]), 2.0 * np.pi)


def trig_pattern(n, theta):
    """Pattern phi_n: sin(|n| theta)/sqrt(pi) for n<0, cos(n theta)/sqrt(pi) for n>0."""
    if n == 0:
        raise ValueError("pattern index 0 is the excluded constant pattern")
    theta = np.asarray(theta, dtype=float)
    if n < 0:
        return np.sin(-n * theta) / np.sqrt(np.pi)
    return np.cos(n * theta) / np.sqrt(np.pi)


def pattern_indices(N):
    """Matrix ordering (-N, ..., -1, 1, ..., N) of the 2N trig patterns."""
    return [n for n in range(-N, N + 1) if n != 0]


def build_disk_mesh(level=3):
    """Structured polar mesh of the unit disk, graded toward the boundary.

    The boundary vertex count is a power of two (>= 64) that doubles with
    each refinement level, so total vertex count grows roughly 4x per level.
    """
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    n_b = max(64, 2 ** (5 + int(level)))
    n_r = max(8, int(round(0.3 * n_b)))
    radii = (np.arange(1, n_r + 1) / n_r) ** 0.75
    theta = 2.0 * np.pi * np.arange(n_b) / n_b

    verts = [np.zeros((1, 2))]
    for r in radii:
        verts.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    vertices = np.vstack(verts)

    j = np.arange(n_b, dtype=np.int64)
    jp = (j + 1) % n_b
    fan = np.column_stack([np.zeros(n_b, np.int64), 1 + j, 1 + jp])
    rings = np.arange(n_r - 1, dtype=np.int64)[:, None]
    a = 1 + rings * n_b
    b = a + n_b
    lower = np.stack([a + j, b + j, b + jp], axis=2).reshape(-1, 3)
    upper = np.stack([a + j, b + jp, a + jp], axis=2).reshape(-1, 3)
    triangles = np.vstack([fan, lower, upper])

    v = vertices[triangles]
    det = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
           - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
    assert np.all(det > 0.0), "mesh triangles must be positively oriented"

    boundary = np.arange(1 + (n_r - 1) * n_b, 1 + n_r * n_b, dtype=np.int64)
    return Mesh(vertices=vertices, triangles=triangles, boundary=boundary)


class _ForwardSystem:
    """Factorized FEM system for one (mesh, conductivity) pair, reused per pattern."""

    def __init__(self, mesh, phantom):
        self.mesh = mesh
        v = mesh.vertices[mesh.triangles]
        e_x = np.stack([v[:, 2, 0] - v[:, 1, 0], v[:, 0, 0] - v[:, 2, 0],
                        v[:, 1, 0] - v[:, 0, 0]], axis=1)
        e_y = np.stack([v[:, 2, 1] - v[:, 1, 1], v[:, 0, 1] - v[:, 2, 1],
                        v[:, 1, 1] - v[:, 0, 1]], axis=1)
        det = e_x[:, 2] * (-e_y[:, 1]) - e_y[:, 2] * (-e_x[:, 1])
        area = 0.5 * det
        # P1 gradients: grad(lambda_a) = (e_y[a], -e_x[a]) / det
        centroids = v.mean(axis=1)
        sigma = np.asarray(phantom.conductivity_at(centroids[:, 0], centroids[:, 1]))
        coef = sigma / (4.0 * area)
        rows, cols, vals = [], [], []
        for a in range(3):
            for b in range(3):
                rows.append(mesh.triangles[:, a])
                cols.append(mesh.triangles[:, b])
                vals.append(coef * (e_y[:, a] * e_y[:, b] + e_x[:, a] * e_x[:, b]))
        n = len(mesh.vertices)
        K = sp.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()

        # boundary edge geometry (uniform angles, chord-length elements)
        nb = len(mesh.boundary)
        self.n_boundary = nb
        self.d_theta = 2.0 * np.pi / nb
        self.chord = 2.0 * np.sin(np.pi / nb)
        self.theta = mesh.boundary_angles

        # zero-mean constraint vector: integral of each hat over the boundary
        mean_vec = np.zeros(n)
        mean_vec[mesh.boundary] = self.chord
        kkt = sp.bmat([[K, mean_vec[:, None]], [mean_vec[None, :], None]],
                      format="csc")
        try:
            self.lu = splu(kkt)
        except RuntimeError as exc:  # pragma: no cover - sigma > 0 keeps this regular
            raise SingularSystemError(str(exc)) from exc

    def neumann_load(self, n_pattern):
        """Load vector of pattern phi_n against boundary hats (3-pt Gauss per edge)."""
        nb, dt = self.n_boundary, self.d_theta
        load = np.zeros(len(self.mesh.vertices) + 1)
        th0 = self.theta
        for t, w in zip(_GAUSS3_T, _GAUSS3_W):
            phi = trig_pattern(n_pattern, th0 + t * dt)
            load[self.mesh.boundary] += w * self.chord * (1.0 - t) * phi
            contrib = w * self.chord * t * phi
            load[self.mesh.boundary[(np.arange(nb) + 1) % nb]] += contrib
        return load

    def solve(self, n_pattern):
        sol = self.lu.solve(self.neumann_load(n_pattern))
        if not np.all(np.isfinite(sol)):
            raise SingularSystemError("non-finite FEM solution")
        return sol[self.mesh.boundary]


def solve_neumann(mesh, phantom, n):
    """Boundary trace of the FEM solution with Neumann data phi_n, zero-mean gauge."""
    return _ForwardSystem(mesh, phantom).solve(n)


def compute_ntd(mesh, phantom, N=16):
    """NtD matrix (R)_{m,n} = <trace of pattern n, phi_m>, trapezoid quadrature."""
    if N < 1:
        raise ValueError("pattern count N must be >= 1")
    system = _ForwardSystem(mesh, phantom)
    idx = pattern_indices(N)
    theta = system.theta
    dt = system.d_theta
    test = np.stack([trig_pattern(m, theta) for m in idx])   # (2N, nb)
    R = np.empty((2 * N, 2 * N))
    for col, n in enumerate(idx):
        trace = system.solve(n)
        R[:, col] = dt * (test @ trace)
    return R


def perturb_ntd(R, delta, seed):
    """Relative Gaussian measurement noise, column by column.

    Column n (the trace coefficients of pattern n) is replaced by
    col + delta * noise * max|col| with one standard-normal vector drawn per
    pattern in matrix column order; deterministic for a fixed seed.
    """
    if delta < 0:
        raise ValueError("noise level must be >= 0")
    R = np.asarray(R, dtype=float)
    if delta == 0:
        return R.copy()
    rng = np.random.default_rng(seed)
    out = R.copy()
    for col in range(R.shape[1]):
        scale = np.max(np.abs(R[:, col]))
        out[:, col] += delta * rng.standard_normal(R.shape[0]) * scale
    return out


def ntd_to_dtn(R, cond_limit=1e12):
    """DtN matrix: invert the NtD and embed with a zero middle row/column.

    Output indices are ordered (-N, ..., -1, 0, 1, ..., N); the middle row
    and column (constant pattern) are exactly zero.
    """
    R = np.asarray(R, dtype=float)
    two_n = R.shape[0]
    if R.shape != (two_n, two_n) or two_n % 2:
        raise ValueError("NtD matrix must be square with even dimension")
    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularSystemError(f"NtD matrix is numerically singular (cond={cond:.3e})")
    inv = np.linalg.inv(R)
    N = two_n // 2
    L = np.zeros((two_n + 1, two_n + 1))
    L[:N, :N] = inv[:N, :N]
    L[:N, N + 1:] = inv[:N, N:]
    L[N + 1:, :N] = inv[N:, :N]
    L[N + 1:, N + 1:] = inv[N:, N:]
    return L


def homogeneous_dtn(N=16):
    """Analytic DtN of the unit conductivity: diag(|n|) with zero middle row/col."""
    if N < 1:
        raise ValueError("pattern count N must be >= 1")
    return np.diag([abs(n) for n in range(-N, N + 1)]).astype(float)
