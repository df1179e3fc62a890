"""Classical mass-density distributions and their gravitational functionals.

The central quantity is the pair coupling energy: the Newtonian self-energy of
the signed density difference of two distributions,

    E = (xi * G / 2) * int int drho(x) drho(y) / |x - y|,

normalised so that two far-separated copies of a uniform sphere of mass m and
diameter d couple with (12/5) G m^2 / d.  Analytic sphere potentials are used
wherever a closed interior/exterior branch exists; rods and sampled grids go
through midpoint cell sums with a cell-averaged singular kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .constants import CONSTANTS, PhysicalConstants
from .quadrature import (
    UNIT_CUBE_CENTER_MEAN,
    UNIT_CUBE_PAIR_MEAN,
    ConvergenceError,
    cross_sum_direct,
    gauss_legendre,
    grid_lattice_pair_sum,
    sphere_overlap_integral,
    sphere_potential_factor,
    sphere_self_integral,
)

__all__ = [
    "UniformSphere", "UniformRod", "NucleusLattice", "GridSampled", "Displaced",
    "MassDistribution", "QuadratureConfig", "MassMismatchWarning",
    "RasterizationExtentError", "ConvergenceError",
    "total_mass", "smallest_feature", "potential", "pair_eg", "sphere_pair_eg",
    "energy_fuzziness_pair", "time_dilation_factor", "mean_distribution",
    "mutual_potential_integral", "distribution_from_dict", "distribution_to_dict",
]


class MassMismatchWarning(UserWarning):
    """The two coupled states carry different total mass."""


class RasterizationExtentError(ValueError):
    """The common bounding box cannot be rasterised at the required resolution."""


def _vec3(v, name: str) -> tuple:
    arr = tuple(float(x) for x in v)
    if len(arr) != 3 or not all(math.isfinite(x) for x in arr):
        raise ValueError(f"{name} must be a finite 3-vector, got {v!r}")
    return arr


def _positive(value: float, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def _nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not (math.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True)
class UniformSphere:
    mass: float
    diameter: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "mass", _nonnegative(self.mass, "mass"))
        object.__setattr__(self, "diameter", _positive(self.diameter, "diameter"))
        object.__setattr__(self, "center", _vec3(self.center, "center"))


@dataclass(frozen=True)
class UniformRod:
    """Solid cylinder of the given length and diameter."""

    mass: float
    length: float
    diameter: float
    axis: tuple = (0.0, 0.0, 1.0)
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "mass", _nonnegative(self.mass, "mass"))
        object.__setattr__(self, "length", _positive(self.length, "length"))
        object.__setattr__(self, "diameter", _positive(self.diameter, "diameter"))
        axis = np.asarray(_vec3(self.axis, "axis"))
        norm = float(np.linalg.norm(axis))
        if norm == 0:
            raise ValueError("axis must be nonzero")
        object.__setattr__(self, "axis", tuple(axis / norm))
        object.__setattr__(self, "center", _vec3(self.center, "center"))


@dataclass(frozen=True)
class NucleusLattice:
    """A set of equal uniform spheres ('nuclei') at fixed positions.

    Nuclei inside one distribution must not overlap; superposed (displaced)
    copies of the lattice may overlap each other freely.
    """

    nucleus_mass: float
    nucleus_diameter: float
    positions: tuple

    def __post_init__(self):
        object.__setattr__(self, "nucleus_mass", _nonnegative(self.nucleus_mass, "nucleus_mass"))
        object.__setattr__(self, "nucleus_diameter", _positive(self.nucleus_diameter, "nucleus_diameter"))
        pos = tuple(_vec3(p, "position") for p in self.positions)
        if not pos:
            raise ValueError("positions must be non-empty")
        object.__setattr__(self, "positions", pos)
        pts = np.asarray(pos)
        if len(pts) > 1:
            d2min = None
            for i in range(len(pts) - 1):
                d2 = ((pts[i + 1:] - pts[i]) ** 2).sum(axis=1).min()
                d2min = d2 if d2min is None else min(d2min, d2)
            if math.sqrt(d2min) < self.nucleus_diameter * (1 - 1e-12):
                raise ValueError("nuclei overlap within one distribution")


@dataclass(frozen=True)
class GridSampled:
    """Density samples on a regular cubic lattice; cell centres at origin + (i+1/2)h."""

    origin: tuple
    cell_size: float
    densities: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        object.__setattr__(self, "cell_size", _positive(self.cell_size, "cell_size"))
        arr = np.asarray(self.densities, dtype=float)
        if arr.ndim != 3 or arr.size == 0:
            raise ValueError("densities must be a non-empty 3-D array")
        if not np.all(np.isfinite(arr)) or arr.min() < 0:
            raise ValueError("densities must be finite and >= 0")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "densities", arr)


@dataclass(frozen=True)
class Displaced:
    """The base distribution rigidly shifted by ``offset``."""

    base: "MassDistribution"
    offset: tuple

    def __post_init__(self):
        if not isinstance(self.base, (UniformSphere, UniformRod, NucleusLattice,
                                      GridSampled, Displaced)):
            raise TypeError(f"base is not a mass distribution: {self.base!r}")
        object.__setattr__(self, "offset", _vec3(self.offset, "offset"))


MassDistribution = Union[UniformSphere, UniformRod, NucleusLattice, GridSampled, Displaced]

_SCHEMES = ("cell_average", "offset_midpoint")


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the numerical evaluation of the pair integrals."""

    grid_resolution: int = 16          # cells per shortest feature
    singularity_scheme: str = "cell_average"
    rel_tolerance: float = 1e-3
    max_refinements: int = 3
    max_cells: int = 2_000_000

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if not (0 < self.rel_tolerance < 1):
            raise ValueError("rel_tolerance must lie in (0, 1)")
        if self.singularity_scheme not in _SCHEMES:
            raise ValueError(f"singularity_scheme must be one of {_SCHEMES}")

    def self_kernel(self) -> float:
        if self.singularity_scheme == "cell_average":
            return UNIT_CUBE_PAIR_MEAN
        return 2.0 / math.sqrt(3.0)  # kernel at half the cell diagonal


DEFAULT_CONFIG = QuadratureConfig()


# ---------------------------------------------------------------------------
# resolution of distributions into primitive atoms


@dataclass
class _Resolved:
    centers: np.ndarray      # (N, 3) sphere centres
    masses: np.ndarray       # (N,)
    radii: np.ndarray        # (N,)
    grids: list              # list of (origin (3,), cell, mass array)

    def n_cells(self) -> int:
        return sum(g[2].size for g in self.grids)

    def signature(self):
        parts = [self.centers.tobytes(), self.masses.tobytes(), self.radii.tobytes()]
        for origin, cell, masses in self.grids:
            parts.append(origin.tobytes())
            parts.append(np.float64(cell).tobytes())
            parts.append(masses.tobytes())
        return b"".join(parts)


def _resolve(dist: MassDistribution, cfg: QuadratureConfig, level: int,
             shift=(0.0, 0.0, 0.0)) -> _Resolved:
    shift = np.asarray(shift, dtype=float)
    if isinstance(dist, Displaced):
        return _resolve(dist.base, cfg, level, shift + np.asarray(dist.offset))
    if isinstance(dist, UniformSphere):
        return _Resolved(np.asarray([np.asarray(dist.center) + shift]),
                         np.asarray([dist.mass]), np.asarray([dist.diameter / 2.0]), [])
    if isinstance(dist, NucleusLattice):
        pts = np.asarray(dist.positions) + shift
        n = len(pts)
        return _Resolved(pts, np.full(n, dist.nucleus_mass),
                         np.full(n, dist.nucleus_diameter / 2.0), [])
    if isinstance(dist, GridSampled):
        masses = np.asarray(dist.densities) * dist.cell_size ** 3
        origin = np.asarray(dist.origin) + shift
        cell = dist.cell_size
        for _ in range(level):
            if masses.size * 8 > cfg.max_cells:
                break
            masses = _subdivide_masses(masses)
            cell *= 0.5
        return _Resolved(np.empty((0, 3)), np.empty(0), np.empty(0),
                         [(origin, cell, masses)])
    if isinstance(dist, UniformRod):
        origin, cell, masses = _rasterize_rod(dist, cfg, level)
        return _Resolved(np.empty((0, 3)), np.empty(0), np.empty(0),
                         [(origin + shift, cell, masses)])
    raise TypeError(f"not a mass distribution: {dist!r}")


def _subdivide_masses(masses: np.ndarray) -> np.ndarray:
    out = np.repeat(np.repeat(np.repeat(masses, 2, axis=0), 2, axis=1), 2, axis=2)
    return out / 8.0


def _rod_extent(rod: UniformRod) -> np.ndarray:
    a = np.asarray(rod.axis)
    rad = 0.5 * rod.diameter * np.sqrt(np.maximum(1.0 - a * a, 0.0))
    return 0.5 * rod.length * np.abs(a) + rad


def _rasterize_rod(rod: UniformRod, cfg: QuadratureConfig, level: int):
    cell = rod.diameter / (cfg.grid_resolution * 2 ** level)
    center = np.asarray(rod.center)
    ext = _rod_extent(rod) + cell
    shape = np.maximum(np.ceil(2.0 * ext / cell).astype(int), 1)
    if int(np.prod(shape)) > cfg.max_cells:
        raise RasterizationExtentError(
            f"rod rasterization needs {int(np.prod(shape))} cells "
            f"(limit {cfg.max_cells}); reduce grid_resolution")
    origin = center - shape * cell / 2.0
    axis = np.asarray(rod.axis)

    def inside(points):
        rel = points - center
        t = rel @ axis
        radial2 = (rel * rel).sum(axis=-1) - t * t
        return (np.abs(t) <= rod.length / 2.0) & (radial2 <= (rod.diameter / 2.0) ** 2)

    frac = _cell_fractions(origin, cell, shape, inside)
    masses = frac * cell ** 3
    total = masses.sum()
    if total <= 0:
        raise RasterizationExtentError("rod rasterization produced no interior cells")
    masses *= rod.mass / total
    return origin, cell, masses


def _cell_fractions(origin, cell, shape, inside, subsamples: int = 4):
    """Volume fraction of each lattice cell lying inside the body."""
    ax = [origin[i] + (np.arange(shape[i]) + 0.5) * cell for i in range(3)]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    centers = np.stack([X, Y, Z], axis=-1)
    frac = inside(centers).astype(float)
    # boundary band: cells whose centre sits within half a diagonal of the surface
    # are re-estimated with a subsample grid
    offs = (np.arange(subsamples) + 0.5) / subsamples - 0.5
    OX, OY, OZ = np.meshgrid(offs, offs, offs, indexing="ij")
    sub = np.stack([OX, OY, OZ], axis=-1).reshape(-1, 3) * cell
    core = frac.copy()
    # find band cells: any subcorner disagreement with the centre test
    corners = np.array([[sx, sy, sz] for sx in (-0.5, 0.5)
                        for sy in (-0.5, 0.5) for sz in (-0.5, 0.5)]) * cell
    agree = np.ones(shape, dtype=bool)
    for c in corners:
        agree &= inside(centers + c) == (core > 0.5)
    band = ~agree
    if band.any():
        pts = centers[band]
        acc = np.zeros(len(pts))
        for s in sub:
            acc += inside(pts + s)
        frac[band] = acc / len(sub)
    return frac


def total_mass(dist: MassDistribution) -> float:
    if isinstance(dist, Displaced):
        return total_mass(dist.base)
    if isinstance(dist, UniformSphere):
        return dist.mass
    if isinstance(dist, UniformRod):
        return dist.mass
    if isinstance(dist, NucleusLattice):
        return dist.nucleus_mass * len(dist.positions)
    if isinstance(dist, GridSampled):
        return float(np.asarray(dist.densities).sum() * dist.cell_size ** 3)
    raise TypeError(f"not a mass distribution: {dist!r}")


def smallest_feature(dist: MassDistribution) -> float:
    if isinstance(dist, Displaced):
        return smallest_feature(dist.base)
    if isinstance(dist, UniformSphere):
        return dist.diameter
    if isinstance(dist, UniformRod):
        return dist.diameter
    if isinstance(dist, NucleusLattice):
        return dist.nucleus_diameter
    if isinstance(dist, GridSampled):
        return dist.cell_size
    raise TypeError(f"not a mass distribution: {dist!r}")


def bounding_box(dist: MassDistribution):
    if isinstance(dist, Displaced):
        lo, hi = bounding_box(dist.base)
        off = np.asarray(dist.offset)
        return lo + off, hi + off
    if isinstance(dist, UniformSphere):
        c = np.asarray(dist.center)
        r = dist.diameter / 2.0
        return c - r, c + r
    if isinstance(dist, UniformRod):
        c = np.asarray(dist.center)
        ext = _rod_extent(dist)
        return c - ext, c + ext
    if isinstance(dist, NucleusLattice):
        pts = np.asarray(dist.positions)
        r = dist.nucleus_diameter / 2.0
        return pts.min(axis=0) - r, pts.max(axis=0) + r
    if isinstance(dist, GridSampled):
        lo = np.asarray(dist.origin)
        return lo, lo + np.asarray(dist.densities.shape) * dist.cell_size
    raise TypeError(f"not a mass distribution: {dist!r}")


# ---------------------------------------------------------------------------
# potential and time dilation


def potential(dist: MassDistribution, x: Sequence[float],
              consts: PhysicalConstants = CONSTANTS,
              cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Newtonian potential phi(x) in J/kg; phi <= 0 everywhere.

    Analytic interior/exterior branches for spheres and sphere lattices;
    midpoint cell sums for rods and sampled grids, with the singular cell
    handled by ``cfg.singularity_scheme``.
    """
    point = np.asarray(_vec3(x, "x"))
    res = _resolve(dist, cfg, level=0)
    return float(_potential_many(res, point[None, :], cfg, consts)[0])


def _potential_many(res: _Resolved, points: np.ndarray, cfg: QuadratureConfig,
                    consts: PhysicalConstants) -> np.ndarray:
    """Potential of a resolved distribution at an (P, 3) array of points."""
    acc = np.zeros(len(points))
    if len(res.centers):
        q = np.linalg.norm(points[:, None, :] - res.centers[None, :, :], axis=2)
        radii = np.broadcast_to(res.radii, q.shape)
        inside = q < radii
        k = np.empty_like(q)
        np.divide(1.0, q, out=k, where=~inside)
        k[inside] = (3.0 * radii[inside] ** 2 - q[inside] ** 2) / (2.0 * radii[inside] ** 3)
        acc += k @ res.masses
    for origin, cell, masses in res.grids:
        centers = _grid_centers(origin, cell, masses.shape)
        flat = masses.ravel()
        for start in range(0, len(points), 1024):
            p = points[start:start + 1024]
            q = np.linalg.norm(p[:, None, :] - centers[None, :, :], axis=2)
            k = np.empty_like(q)
            singular = q < 0.5 * cell
            np.divide(1.0, q, out=k, where=~singular)
            if cfg.singularity_scheme == "cell_average":
                k[singular] = UNIT_CUBE_CENTER_MEAN / cell
            else:
                k[singular] = 2.0 / (math.sqrt(3.0) * cell)   # half-diagonal offset
            acc[start:start + 1024] += k @ flat
    return -consts.G * acc


def _grid_centers(origin, cell, shape):
    ax = [origin[i] + (np.arange(shape[i]) + 0.5) * cell for i in range(3)]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)


def time_dilation_factor(dist: MassDistribution, x: Sequence[float],
                         consts: PhysicalConstants = CONSTANTS,
                         cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Newtonian-limit clock-rate factor 1 + phi(x)/c^2 (<= 1 for mass >= 0)."""
    return 1.0 + potential(dist, x, consts, cfg) / consts.c_light ** 2


# ---------------------------------------------------------------------------
# pair integrals


def _overlap_cache_key(r1: float, r2: float, sep: float):
    def q(v):
        return float(f"{v:.12e}")
    return (q(r1), q(r2), q(sep))


def _mutual_sum(a: _Resolved, b: _Resolved, cfg: QuadratureConfig, level: int,
                cache: dict) -> float:
    """Ordered double 1/r sum between two resolved distributions (unit G)."""
    order = 32 * 2 ** level
    total = 0.0
    # sphere-sphere
    if len(a.centers) and len(b.centers):
        diff = a.centers[:, None, :] - b.centers[None, :, :]
        sep = np.sqrt((diff * diff).sum(axis=2))
        rsum = a.radii[:, None] + b.radii[None, :]
        far = sep >= rsum
        mm = a.masses[:, None] * b.masses[None, :]
        with np.errstate(divide="ignore"):
            contrib = np.where(far, mm / np.where(far, sep, 1.0), 0.0)
        total += float(contrib.sum())
        near_idx = np.argwhere(~far)
        for i, j in near_idx:
            r1, r2, s = float(a.radii[i]), float(b.radii[j]), float(sep[i, j])
            key = _overlap_cache_key(r1, r2, s) + (order,)
            t = cache.get(key)
            if t is None:
                if s == 0.0 and r1 == r2:
                    t = sphere_self_integral(r1, order=max(order, 16))
                else:
                    t = sphere_overlap_integral(r1, r2, s, order=order)
                cache[key] = t
            total += float(a.masses[i] * b.masses[j]) * t
    # sphere-grid
    for origin, cell, masses in b.grids:
        total += _sphere_grid_sum(a, origin, cell, masses)
    for origin, cell, masses in a.grids:
        total += _sphere_grid_sum(b, origin, cell, masses)
    # grid-grid
    for gi, (o1, c1, m1) in enumerate(a.grids):
        for gj, (o2, c2, m2) in enumerate(b.grids):
            total += _grid_grid_sum(o1, c1, m1, o2, c2, m2, cfg)
    return total


def _sphere_grid_sum(spheres: _Resolved, origin, cell, masses) -> float:
    if not len(spheres.centers):
        return 0.0
    centers = _grid_centers(origin, cell, masses.shape)
    flat = masses.ravel()
    total = 0.0
    for c, m, r in zip(spheres.centers, spheres.masses, spheres.radii):
        q = np.linalg.norm(centers - c, axis=1)
        total += m * float((flat * sphere_potential_factor(q, r)).sum())
    return total


def _grid_grid_sum(o1, c1, m1, o2, c2, m2, cfg: QuadratureConfig) -> float:
    self_kernel = cfg.self_kernel()
    if m1 is m2 and c1 == c2 and np.array_equal(o1, o2):
        return grid_lattice_pair_sum(m1, m2, c1, self_kernel)
    if c1 == c2:
        # split the lattice offset into whole cells plus a sub-cell remainder,
        # embed both arrays on the union lattice, and shift the FFT kernel
        off = (o2 - o1) / c1
        i2 = np.round(off).astype(int)
        frac = (off - i2) * c1
        lo = np.minimum(0, i2)
        hi = np.maximum(np.asarray(m1.shape), i2 + np.asarray(m2.shape))
        shape = tuple(int(v) for v in hi - lo)
        if int(np.prod(shape)) <= cfg.max_cells:
            e1 = np.zeros(shape)
            e2 = np.zeros(shape)
            s1 = tuple(slice(-l, -l + n) for l, n in zip(lo, m1.shape))
            s2 = tuple(slice(i - l, i - l + n) for i, l, n in zip(i2, lo, m2.shape))
            e1[s1] = m1
            e2[s2] = m2
            return grid_lattice_pair_sum(e1, e2, c1, self_kernel, tuple(frac))
    p1 = _grid_centers(o1, c1, m1.shape)
    p2 = _grid_centers(o2, c2, m2.shape)
    return cross_sum_direct(p1, m1.ravel(), p2, m2.ravel(),
                            self_kernel, max(c1, c2))


def _eg_at_level(d1: MassDistribution, d2: MassDistribution, cfg: QuadratureConfig,
                 consts: PhysicalConstants, level: int, cache: dict):
    r1 = _resolve(d1, cfg, level)
    r2 = _resolve(d2, cfg, level)
    ra, rb = _canonical_order(r1, r2)
    t_aa = _mutual_sum(ra, ra, cfg, level, cache)
    t_bb = _mutual_sum(rb, rb, cfg, level, cache)
    t_ab = _mutual_sum(ra, rb, cfg, level, cache)
    pref = 0.5 * consts.xi * consts.G
    return pref * (t_aa + t_bb - 2.0 * t_ab), pref * (t_aa + t_bb)


def _canonical_order(r1: _Resolved, r2: _Resolved):
    """Fixed evaluation order so pair_eg(a, b) == pair_eg(b, a) bit-exactly."""
    if r1.signature() <= r2.signature():
        return r1, r2
    return r2, r1


def _structurally_equal(d1, d2, cfg) -> bool:
    r1 = _resolve(d1, cfg, 0)
    r2 = _resolve(d2, cfg, 0)
    return r1.signature() == r2.signature()


def pair_eg(d1: MassDistribution, d2: MassDistribution,
            cfg: QuadratureConfig = DEFAULT_CONFIG,
            consts: PhysicalConstants = CONSTANTS) -> float:
    """Coupling energy of the two states' mass densities, in joules.

    Symmetric, zero for identical densities, and >= 0 (the 1/r kernel is
    positive definite on the signed difference).  Raises
    :class:`ConvergenceError` when refinement stalls above ``rel_tolerance``.
    """
    if not math.isclose(total_mass(d1), total_mass(d2), rel_tol=1e-9, abs_tol=0.0):
        warnings.warn("coupled states carry different total mass", MassMismatchWarning,
                      stacklevel=2)
    if _structurally_equal(d1, d2, cfg):
        return 0.0
    cache: dict = {}
    prev = None
    value = scale = None
    for level in range(cfg.max_refinements + 1):
        try:
            value, scale = _eg_at_level(d1, d2, cfg, consts, level, cache)
        except RasterizationExtentError:
            if prev is not None:
                raise ConvergenceError(
                    "refinement exceeded the cell budget before reaching tolerance",
                    (prev, value))
            raise
        if prev is not None:
            if abs(value - prev) <= cfg.rel_tolerance * abs(value) or \
               abs(value - prev) <= 1e-13 * scale:
                return float(max(value, 0.0))
        prev = value
    raise ConvergenceError(
        f"pair energy did not converge to rel_tolerance={cfg.rel_tolerance}",
        (prev, value))


def sphere_pair_eg(mass: float, diameter: float, separation: float,
                   consts: PhysicalConstants = CONSTANTS,
                   cfg: QuadratureConfig = DEFAULT_CONFIG) -> float:
    """Coupling energy of two displaced copies of one uniform sphere.

    Closed form for non-overlapping copies (separation >= diameter):
    ``xi * G * m^2 * (12/(5 d) - 1/separation)``; the overlap region falls back
    to the pair quadrature.  Monotone non-decreasing in the separation, with
    limit (12/5) xi G m^2 / d.
    """
    mass = _nonnegative(mass, "mass")
    diameter = _positive(diameter, "diameter")
    separation = _nonnegative(separation, "separation")
    if mass == 0.0 or separation == 0.0:
        return 0.0
    if separation >= diameter:
        return consts.xi * consts.G * mass * mass * (12.0 / (5.0 * diameter) - 1.0 / separation)
    base = UniformSphere(mass, diameter)
    return pair_eg(base, Displaced(base, (separation, 0.0, 0.0)), cfg, consts)


def energy_fuzziness_pair(d1: MassDistribution, d2: MassDistribution,
                          cfg: QuadratureConfig = DEFAULT_CONFIG,
                          consts: PhysicalConstants = CONSTANTS):
    """Per-state halves of the coupling energy, from the potential difference.

    Returns ``(dE1, dE2)`` where ``dE1 = (xi/2) int rho1 (phi2 - phi1)`` and
    symmetrically for state 2; their sum equals :func:`pair_eg` within the
    combined quadrature tolerance.  Evaluated by sampling the two potentials
    over each state's support, a route independent of the pair-sum kernel.
    """
    if _structurally_equal(d1, d2, cfg):
        return 0.0, 0.0
    prev = None
    for level in range(cfg.max_refinements + 1):
        de1 = _potential_difference_integral(d1, d2, cfg, consts, level)
        de2 = _potential_difference_integral(d2, d1, cfg, consts, level)
        pair = (0.5 * consts.xi * de1, 0.5 * consts.xi * de2)
        if prev is not None:
            scale = abs(pair[0]) + abs(pair[1])
            if abs(pair[0] - prev[0]) + abs(pair[1] - prev[1]) <= cfg.rel_tolerance * scale:
                return pair
        prev = pair
    raise ConvergenceError(
        f"energy fuzziness did not converge to rel_tolerance={cfg.rel_tolerance}",
        (prev, pair))


def _potential_difference_integral(da, db, cfg, consts, level) -> float:
    """int rho_a (phi_b - phi_a) over the support of state a."""
    res_a = _resolve(da, cfg, level)
    res_b = _resolve(db, cfg, level)
    order = 24 * 2 ** level
    x, w = gauss_legendre(order)
    total = 0.0
    n_phi = max(8, order // 2)             # trapezoid rule is spectral in azimuth
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * np.pi / n_phi
    for c, m, r in zip(res_a.centers, res_a.masses, res_a.radii):
        s = 0.5 * r * (x + 1.0)           # radial nodes in [0, r]
        ws = 0.5 * r * w
        mu, wm = x, w                      # polar nodes in [-1, 1]
        sin_t = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
        S, MU, PHI = np.meshgrid(s, mu, phi, indexing="ij")
        SIN = np.sqrt(np.maximum(1.0 - MU * MU, 0.0))
        pts = np.stack([c[0] + S * SIN * np.cos(PHI),
                        c[1] + S * SIN * np.sin(PHI),
                        c[2] + S * MU], axis=-1).reshape(-1, 3)
        wts = (ws[:, None, None] * wm[None, :, None] * w_phi * S * S).reshape(-1)
        diff = _potential_many(res_b, pts, cfg, consts) - _potential_many(res_a, pts, cfg, consts)
        rho = m * 3.0 / (4.0 * np.pi * r ** 3)
        total += rho * float((wts * diff).sum())
    for origin, cell, masses in res_a.grids:
        centers = _grid_centers(origin, cell, masses.shape)
        diff = _potential_many(res_b, centers, cfg, consts) - \
            _potential_many(res_a, centers, cfg, consts)
        total += float((masses.ravel() * diff).sum())
    return total


def mutual_potential_integral(d1: MassDistribution, d2: MassDistribution,
                              cfg: QuadratureConfig = DEFAULT_CONFIG,
                              consts: PhysicalConstants = CONSTANTS) -> float:
    """``int rho_1(x) phi_2(x) d^3x`` in joules (negative for positive masses)."""
    cache: dict = {}
    r1 = _resolve(d1, cfg, 0)
    r2 = _resolve(d2, cfg, 0)
    return -consts.G * _mutual_sum(r1, r2, cfg, 0, cache)


# ---------------------------------------------------------------------------
# rasterization / mean distribution


def _rasterize_onto(dist: MassDistribution, origin, cell, shape,
                    cfg: QuadratureConfig, shift=(0.0, 0.0, 0.0)) -> np.ndarray:
    shift = np.asarray(shift, dtype=float)
    if isinstance(dist, Displaced):
        return _rasterize_onto(dist.base, origin, cell, shape, cfg,
                               shift + np.asarray(dist.offset))
    if isinstance(dist, UniformSphere):
        c = np.asarray(dist.center) + shift
        r = dist.diameter / 2.0

        def inside(points):
            return ((points - c) ** 2).sum(axis=-1) <= r * r

        frac = _cell_fractions(origin, cell, shape, inside)
        masses = frac * cell ** 3
        tot = masses.sum()
        if tot <= 0:
            raise RasterizationExtentError("sphere missed the rasterization grid")
        return masses * (dist.mass / tot) / cell ** 3
    if isinstance(dist, UniformRod):
        c = np.asarray(dist.center) + shift
        axis = np.asarray(dist.axis)

        def inside(points):
            rel = points - c
            t = rel @ axis
            radial2 = (rel * rel).sum(axis=-1) - t * t
            return (np.abs(t) <= dist.length / 2.0) & (radial2 <= (dist.diameter / 2.0) ** 2)

        frac = _cell_fractions(origin, cell, shape, inside)
        masses = frac * cell ** 3
        tot = masses.sum()
        if tot <= 0:
            raise RasterizationExtentError("rod missed the rasterization grid")
        return masses * (dist.mass / tot) / cell ** 3
    if isinstance(dist, NucleusLattice):
        out = np.zeros(shape)
        for p in dist.positions:
            sub = UniformSphere(dist.nucleus_mass, dist.nucleus_diameter,
                                tuple(np.asarray(p) + shift))
            out += _rasterize_onto(sub, origin, cell, shape, cfg)
        return out
    if isinstance(dist, GridSampled):
        # deposit each source cell's mass into the target cell holding its centre
        out = np.zeros(shape)
        src_centers = _grid_centers(np.asarray(dist.origin) + shift, dist.cell_size,
                                    dist.densities.shape)
        src_masses = np.asarray(dist.densities).ravel() * dist.cell_size ** 3
        idx = np.floor((src_centers - origin) / cell).astype(int)
        ok = np.all((idx >= 0) & (idx < np.asarray(shape)), axis=1)
        if not ok.all():
            raise RasterizationExtentError("sampled grid exceeds the rasterization extent")
        np.add.at(out, (idx[:, 0], idx[:, 1], idx[:, 2]), src_masses)
        return out / cell ** 3
    raise TypeError(f"not a mass distribution: {dist!r}")


def mean_distribution(dists: Iterable[MassDistribution], weights: Sequence[float],
                      cfg: QuadratureConfig = DEFAULT_CONFIG) -> GridSampled:
    """Amplitude-weighted mean density ``sum_i w_i rho_i`` on a common grid."""
    dists = list(dists)
    weights = [float(w) for w in weights]
    if len(dists) != len(weights) or not dists:
        raise ValueError("need one weight per distribution")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1 within 1e-12")
    feature = min(smallest_feature(d) for d in dists)
    cell = feature / max(8, cfg.grid_resolution)
    los, his = zip(*(bounding_box(d) for d in dists))
    lo = np.min(np.asarray(los), axis=0) - cell
    hi = np.max(np.asarray(his), axis=0) + cell
    shape = np.ceil((hi - lo) / cell).astype(int)
    n_cells = int(np.prod(shape))
    if n_cells > cfg.max_cells:
        raise RasterizationExtentError(
            f"common bounding box needs {n_cells} cells at {cell:.3e} m resolution "
            f"(limit {cfg.max_cells}); the inputs' extents are incompatible")
    acc = np.zeros(tuple(shape))
    for d, w in zip(dists, weights):
        if w == 0.0:
            continue
        acc += w * _rasterize_onto(d, lo, cell, tuple(shape), cfg)
    return GridSampled(tuple(lo), cell, acc)


# ---------------------------------------------------------------------------
# JSON description schema


_KINDS = {
    "uniform_sphere": UniformSphere,
    "uniform_rod": UniformRod,
    "nucleus_lattice": NucleusLattice,
    "grid": GridSampled,
    "displaced": Displaced,
}


def distribution_from_dict(obj: dict, where: str = "$") -> MassDistribution:
    """Build a distribution from its JSON description (SI units throughout)."""
    if not isinstance(obj, dict):
        raise ValueError(f"{where}: expected an object")
    kind = obj.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"{where}.kind: expected one of {sorted(_KINDS)}, got {kind!r}")
    try:
        if kind == "uniform_sphere":
            return UniformSphere(obj["mass"], obj["diameter"],
                                 tuple(obj.get("center", (0.0, 0.0, 0.0))))
        if kind == "uniform_rod":
            return UniformRod(obj["mass"], obj["length"], obj["diameter"],
                              tuple(obj.get("axis", (0.0, 0.0, 1.0))),
                              tuple(obj.get("center", (0.0, 0.0, 0.0))))
        if kind == "nucleus_lattice":
            return NucleusLattice(obj["nucleus_mass"], obj["nucleus_diameter"],
                                  tuple(tuple(p) for p in obj["positions"]))
        if kind == "grid":
            return GridSampled(tuple(obj["origin"]), obj["cell_size"],
                               np.asarray(obj["densities"], dtype=float))
        return Displaced(distribution_from_dict(obj["base"], where + ".base"),
                         tuple(obj["offset"]))
    except KeyError as exc:
        raise ValueError(f"{where}: missing field {exc.args[0]!r} for kind {kind!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{where}: {exc}") from None


def distribution_to_dict(dist: MassDistribution) -> dict:
    if isinstance(dist, UniformSphere):
        return {"kind": "uniform_sphere", "mass": dist.mass, "diameter": dist.diameter,
                "center": list(dist.center)}
    if isinstance(dist, UniformRod):
        return {"kind": "uniform_rod", "mass": dist.mass, "length": dist.length,
                "diameter": dist.diameter, "axis": list(dist.axis),
                "center": list(dist.center)}
    if isinstance(dist, NucleusLattice):
        return {"kind": "nucleus_lattice", "nucleus_mass": dist.nucleus_mass,
                "nucleus_diameter": dist.nucleus_diameter,
                "positions": [list(p) for p in dist.positions]}
    if isinstance(dist, GridSampled):
        return {"kind": "grid", "origin": list(dist.origin), "cell_size": dist.cell_size,
                "densities": np.asarray(dist.densities).tolist()}
    if isinstance(dist, Displaced):
        return {"kind": "displaced", "base": distribution_to_dict(dist.base),
                "offset": list(dist.offset)}
    raise TypeError(f"not a mass distribution: {dist!r}")
