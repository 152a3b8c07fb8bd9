"""Random conductivity phantoms on the unit disk and the Schrodinger potential.

Two phantom families are provided: KIT4-style collections of non-overlapping
circles/ellipses with conductive or resistive values, and ACT4-style thorax
phantoms (two lungs + heart) perturbed from a template shipped with the
package.  All conductivities are relative to a unit background and equal 1
outside the disk of radius 0.9, so they extend naturally to the plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.ndimage import gaussian_filter
from shapely import contains_xy
from shapely.geometry import Polygon, box

INCLUSION_MARGIN = 0.9


class GenerationError(RuntimeError):
    """Rejection sampling exhausted its attempt budget (infeasible config)."""


@dataclass(frozen=True)
class Inclusion:
    """One anomaly region: a circle, ellipse or polygon with a conductivity."""

    shape: str                                   # "circle" | "ellipse" | "polygon"
    value: float                                 # conductivity inside (background 1)
    center: tuple[float, float] = (0.0, 0.0)
    radii: tuple[float, float] = (0.0, 0.0)      # semi-axes; circle has equal entries
    angle: float = 0.0                           # rotation in radians (ellipse)
    vertices: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.value <= 0.0:
            raise ValueError("conductivity value must be positive")
        if self.shape not in ("circle", "ellipse", "polygon"):
            raise ValueError(f"unknown inclusion shape {self.shape!r}")
        if self.shape == "polygon" and self.vertices is None:
            raise ValueError("polygon inclusion needs vertices")

    def outer_radius(self):
        """Distance from the origin to the farthest point of the shape."""
        if self.shape == "polygon":
            v = np.asarray(self.vertices)
            return float(np.hypot(v[:, 0], v[:, 1]).max())
        return float(np.hypot(*self.center) + max(self.radii))

    def contains(self, x, y):
        """Boolean mask of points inside the shape (vectorized)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == "polygon":
            return contains_xy(Polygon(self.vertices), x, y)
        dx, dy = x - self.center[0], y - self.center[1]
        if self.shape == "circle":
            return dx * dx + dy * dy <= self.radii[0] ** 2
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = (c * dx + s * dy) / self.radii[0]
        v = (-s * dx + c * dy) / self.radii[1]
        return u * u + v * v <= 1.0


@dataclass(frozen=True)
class Phantom:
    """Piecewise-constant conductivity: unit background plus inclusions."""

    inclusions: tuple[Inclusion, ...]
    style: str                                   # "kit4" | "act4"
    seed: int
    background: float = 1.0

    def conductivity_at(self, x, y):
        """Conductivity sampled at points (x, y); arrays broadcast."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sigma = np.full(np.broadcast(x, y).shape, self.background)
        for inc in self.inclusions:
            sigma[inc.contains(x, y)] = inc.value
        return sigma

    def value_range(self):
        vals = [self.background] + [inc.value for inc in self.inclusions]
        return min(vals), max(vals)


@dataclass(frozen=True)
class RadialBumpPhantom:
    """Smooth radial conductivity 1 + amplitude * exp(-|z|^2 / width2).

    Not a member of either dataset family; used for analytic validation of
    the potential, the scattering transform and the reconstruction chain.
    """

    amplitude: float = 0.5
    width2: float = 0.1
    inclusions: tuple = ()
    style: str = "radial_bump"
    seed: int = 0

    def conductivity_at(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return 1.0 + self.amplitude * np.exp(-(x * x + y * y) / self.width2)


@dataclass(frozen=True)
class ConductivityImage:
    """Real W x H grid of conductivities over the square [-extent, extent)^2."""

    values: np.ndarray          # (H, W) row-major, row index along y
    extent: float

    @property
    def shape(self):
        return self.values.shape

    def pixel_centers(self):
        h, w = self.values.shape
        x = -self.extent + (np.arange(w) + 0.5) * (2.0 * self.extent / w)
        y = -self.extent + (np.arange(h) + 0.5) * (2.0 * self.extent / h)
        return np.meshgrid(x, y)


@dataclass(frozen=True)
class PotentialImage:
    """Grid of the Schrodinger potential q on [-extent, extent)^2, q=0 outside the disk."""

    values: np.ndarray
    extent: float

    @property
    def spacing(self):
        return 2.0 * self.extent / self.values.shape[0]


@dataclass(frozen=True)
class KIT4Config:
    count_range: tuple[int, int] = (1, 3)
    radius_range: tuple[float, float] = (0.12, 0.35)
    conductive_range: tuple[float, float] = (1.5, 2.5)
    resistive_range: tuple[float, float] = (0.3, 0.7)
    margin: float = INCLUSION_MARGIN
    gap: float = 0.02
    max_attempts: int = 1000


@dataclass(frozen=True)
class ACT4Config:
    perturb_std: float = 0.02
    split_prob: float = 0.5
    value_range: tuple[float, float] = (0.3, 2.5)
    margin: float = INCLUSION_MARGIN
    max_attempts: int = 1000


def generate_kit4(seed, config=KIT4Config()):
    """Draw a KIT4-style phantom: 1-3 non-overlapping circles/ellipses.

    Each inclusion is conductive (value ~ U[1.5, 2.5]) or resistive
    (value ~ U[0.3, 0.7]) with equal probability.  Placement uses rejection
    sampling against overlap (bounding circles plus a small gap) and the
    0.9-radius margin; deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    lo, hi = config.count_range
    count = int(rng.integers(lo, hi + 1))
    placed = []
    for _ in range(count):
        for attempt in range(config.max_attempts + 1):
            if attempt == config.max_attempts:
                raise GenerationError(
                    f"could not place inclusion after {config.max_attempts} attempts")
            if rng.random() < 0.5:
                r = rng.uniform(*config.radius_range)
                radii, angle, shape = (r, r), 0.0, "circle"
            else:
                radii = tuple(rng.uniform(*config.radius_range, size=2))
                angle, shape = rng.uniform(0.0, np.pi), "ellipse"
            outer = max(radii)
            reach = config.margin - outer
            if reach <= 0.0:
                continue
            rad = reach * np.sqrt(rng.random())
            phi = rng.uniform(0.0, 2.0 * np.pi)
            center = (rad * np.cos(phi), rad * np.sin(phi))
            ok = all(np.hypot(center[0] - p["center"][0], center[1] - p["center"][1])
                     >= outer + p["outer"] + config.gap for p in placed)
            if ok:
                placed.append({"shape": shape, "center": center, "radii": radii,
                               "angle": angle, "outer": outer})
                break
    inclusions = []
    for p in placed:
        rng_range = (config.conductive_range if rng.random() < 0.5
                     else config.resistive_range)
        value = rng.uniform(*rng_range)
        inclusions.append(Inclusion(shape=p["shape"], value=float(value),
                                    center=p["center"], radii=p["radii"],
                                    angle=p["angle"]))
    return Phantom(inclusions=tuple(inclusions), style="kit4", seed=int(seed))


def _load_template(path=None):
    if path is None:
        text = resources.files("dbar_eit.data").joinpath("act4_template.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    organs, name, verts = {}, None, []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("organ "):
            if name is not None:
                organs[name] = np.asarray(verts)
            name, verts = line.split()[1], []
        else:
            verts.append([float(t) for t in line.split()])
    if name is not None:
        organs[name] = np.asarray(verts)
    return organs


def _split_polygon(poly, y_cut):
    """Cut a polygon with the horizontal line y = y_cut into two single pieces."""
    minx, miny, maxx, maxy = poly.bounds
    pad = 1.0
    lower = poly.intersection(box(minx - pad, miny - pad, maxx + pad, y_cut))
    upper = poly.intersection(box(minx - pad, y_cut, maxx + pad, maxy + pad))
    if lower.geom_type != "Polygon" or upper.geom_type != "Polygon":
        return None
    if lower.area < 1e-4 or upper.area < 1e-4:
        return None
    return lower, upper


def generate_act4(seed, config=ACT4Config()):
    """Draw an ACT4-style thorax phantom from the shipped organ template.

    Every template vertex is displaced by iid Gaussian noise; each lung is
    independently split by a random horizontal line with the configured
    probability, and every resulting region receives a conductivity drawn
    from U[0.3, 2.5].  Invalid or out-of-margin geometry is resampled.
    """
    template = _load_template()
    rng = np.random.default_rng(seed)
    for attempt in range(config.max_attempts + 1):
        if attempt == config.max_attempts:
            raise GenerationError(
                f"could not perturb template after {config.max_attempts} attempts")
        polys = {}
        ok = True
        for name, verts in template.items():
            jitter = rng.normal(0.0, config.perturb_std, size=verts.shape) \
                if config.perturb_std > 0 else 0.0
            p = Polygon(verts + jitter)
            if not p.is_valid or np.hypot(*np.asarray(p.exterior.coords.xy)).max() \
                    > config.margin:
                ok = False
                break
            polys[name] = p
        if not ok:
            continue
        names = list(polys)
        if any(polys[a].intersects(polys[b])
               for i, a in enumerate(names) for b in names[i + 1:]):
            continue

        regions = []
        ok = True
        for name in names:
            poly = polys[name]
            split = name.startswith("lung") and rng.random() < config.split_prob
            if split:
                miny, maxy = poly.bounds[1], poly.bounds[3]
                y_cut = rng.uniform(miny + 0.25 * (maxy - miny),
                                    miny + 0.75 * (maxy - miny))
                pieces = _split_polygon(poly, y_cut)
                if pieces is None:
                    ok = False
                    break
                regions.extend(pieces)
            else:
                regions.append(poly)
        if not ok:
            continue

        inclusions = tuple(
            Inclusion(shape="polygon", value=float(rng.uniform(*config.value_range)),
                      vertices=tuple(map(tuple, np.asarray(r.exterior.coords)[:-1])))
            for r in regions)
        return Phantom(inclusions=inclusions, style="act4", seed=int(seed))


def rasterize(phantom, width, height, extent=1.0):
    """Sample the phantom at pixel centers of a width x height grid on [-a, a)^2."""
    if width < 8 or height < 8:
        raise ValueError("grid must be at least 8x8")
    x = -extent + (np.arange(width) + 0.5) * (2.0 * extent / width)
    y = -extent + (np.arange(height) + 0.5) * (2.0 * extent / height)
    xx, yy = np.meshgrid(x, y)
    return ConductivityImage(values=phantom.conductivity_at(xx, yy), extent=extent)


def potential_q(phantom, smoothing_width=0.05, grid_n=269, extent=2.1):
    """Schrodinger potential q = lap(sqrt(sigma)) / sqrt(sigma) on the z-grid.

    sqrt(sigma) is rasterized on the grid_n x grid_n grid over
    [-extent, extent)^2, mollified with a Gaussian of the given physical
    width (kernel truncated at 4 widths), and differenced with the centered
    5-point Laplacian.  q is forced to exactly zero outside the unit disk.
    """
    if smoothing_width <= 0:
        raise ValueError("smoothing_width must be positive")
    img = rasterize(phantom, grid_n, grid_n, extent)
    h = 2.0 * extent / grid_n
    w = np.sqrt(img.values)
    w = gaussian_filter(w, sigma=smoothing_width / h, truncate=4.0,
                        mode="constant", cval=1.0)
    if np.any(w <= 0.0):
        raise ValueError("smoothed conductivity is not positive")
    lap = np.zeros_like(w)
    lap[1:-1, 1:-1] = (w[1:-1, 2:] + w[1:-1, :-2] + w[2:, 1:-1] + w[:-2, 1:-1]
                       - 4.0 * w[1:-1, 1:-1]) / (h * h)
    q = lap / w
    xx, yy = img.pixel_centers()
    q[xx * xx + yy * yy >= 1.0] = 0.0
    return PotentialImage(values=q, extent=extent)


def phantom_to_json(phantom):
    """Serialize a phantom to a JSON string (inverse of phantom_from_json)."""
    recs = []
    for inc in phantom.inclusions:
        recs.append({"shape": inc.shape, "value": inc.value, "center": list(inc.center),
                     "radii": list(inc.radii), "angle": inc.angle,
                     "vertices": None if inc.vertices is None
                     else [list(v) for v in inc.vertices]})
    return json.dumps({"style": phantom.style, "seed": phantom.seed,
                       "background": phantom.background, "inclusions": recs}, indent=1)


def phantom_from_json(text):
    data = json.loads(text)
    incs = tuple(
        Inclusion(shape=r["shape"], value=r["value"], center=tuple(r["center"]),
                  radii=tuple(r["radii"]), angle=r["angle"],
                  vertices=None if r["vertices"] is None
                  else tuple(map(tuple, r["vertices"])))
        for r in data["inclusions"])
    return Phantom(inclusions=incs, style=data["style"], seed=data["seed"],
                   background=data["background"])
