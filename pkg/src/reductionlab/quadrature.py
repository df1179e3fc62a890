"""Low-level numerical kernels for the Newtonian 1/r pair integrals.

Everything here works on unit masses; callers scale by the mass product.
The two cube constants are pinned against an independent evaluation of the
closed-form cube potential (see tests).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

# Average of 1/|x-y| for two independent uniform points in the same unit cube.
UNIT_CUBE_PAIR_MEAN = 1.8823126444

# Integral of 1/|y - c| over a unit cube, c at the cube centre.
UNIT_CUBE_CENTER_MEAN = 2.3800773640


class ConvergenceError(RuntimeError):
    """Raised when refinement stalls; carries the last two estimates."""

    def __init__(self, message: str, estimates):
        super().__init__(message)
        self.estimates = tuple(estimates)


@lru_cache(maxsize=64)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def sphere_potential_factor(q, radius: float):
    """Integral of 1/|x-y| over a unit-mass uniform sphere, at distance q from its centre.

    Equals ``-phi/(G m)`` for the sphere's Newtonian potential: ``1/q`` outside,
    the parabolic interior branch inside.
    """
    q = np.asarray(q, dtype=float)
    inside = q < radius
    out = np.empty_like(q)
    np.divide(1.0, q, out=out, where=~inside)
    out[inside] = (3.0 * radius * radius - q[inside] ** 2) / (2.0 * radius ** 3)
    return out


def sphere_self_integral(radius: float, order: int = 16) -> float:
    """Ordered-pair self term of one unit-mass uniform sphere: converges to 12/(5d)."""
    x, w = gauss_legendre(order)
    s = 0.5 * radius * (x + 1.0)
    ws = 0.5 * radius * w
    psi = (3.0 * radius * radius - s * s) / (2.0 * radius ** 3)
    shell = (ws * s * s * psi).sum() * 4.0 * np.pi
    return float(shell * 3.0 / (4.0 * np.pi * radius ** 3))


def sphere_overlap_integral(r1: float, r2: float, sep: float, order: int = 32) -> float:
    """Mutual 1/r integral of two unit-mass uniform spheres with overlapping supports.

    Integrates the analytic potential of sphere 1 over sphere 2; the polar
    integral is split at the interior/exterior seam of sphere 1 so each
    Gauss-Legendre panel sees a smooth integrand.
    """
    if r2 > r1:
        r1, r2 = r2, r1
    x, w = gauss_legendre(order)
    s = 0.5 * r2 * (x + 1.0)
    ws = 0.5 * r2 * w
    total = 0.0
    for si, wi in zip(s, ws):
        if sep > 0.0 and si > 0.0:
            mustar = (sep * sep + si * si - r1 * r1) / (2.0 * sep * si)
        else:
            mustar = 2.0
        if -1.0 < mustar < 1.0:
            segments = ((-1.0, mustar), (mustar, 1.0))
        else:
            segments = ((-1.0, 1.0),)
        acc = 0.0
        for a, b in segments:
            mu = 0.5 * (b - a) * x + 0.5 * (a + b)
            wm = 0.5 * (b - a) * w
            q = np.sqrt(np.maximum(sep * sep + si * si - 2.0 * sep * si * mu, 0.0))
            acc += (wm * sphere_potential_factor(q, r1)).sum()
        total += wi * si * si * acc
    return float(total * 2.0 * np.pi * 3.0 / (4.0 * np.pi * r2 ** 3))


def grid_lattice_pair_sum(m1: np.ndarray, m2: np.ndarray, cell: float,
                          self_kernel: float, frac=(0.0, 0.0, 0.0)) -> float:
    """``sum_{c,c'} m1[c] m2[c'] k(x_c - x_c')`` for mass arrays on one lattice.

    ``frac`` is a sub-cell residual offset of the second array's positions
    (misaligned equal-spacing grids reduce to this after splitting their offset
    into whole cells plus a remainder).  Midpoint kernel ``1/r``; displacements
    shorter than a cell fall back to ``self_kernel/cell``.  Evaluated by FFT
    correlation on the zero-padded lattice.
    """
    if m1.shape != m2.shape:
        raise ValueError("mass arrays must share one lattice")
    nx, ny, nz = m1.shape
    px, py, pz = 2 * nx, 2 * ny, 2 * nz

    def axis_disp(n, p):
        idx = np.arange(p)
        return np.where(idx < n, idx, idx - p).astype(float)

    dx = axis_disp(nx, px)[:, None, None] * cell - frac[0]
    dy = axis_disp(ny, py)[None, :, None] * cell - frac[1]
    dz = axis_disp(nz, pz)[None, None, :] * cell - frac[2]
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    near = r < 1e-9 * cell
    kern = np.empty_like(r)
    np.divide(1.0, r, out=kern, where=~near)
    kern[near] = self_kernel / cell

    pad2 = np.zeros((px, py, pz))
    pad2[:nx, :ny, :nz] = m2
    axes = (0, 1, 2)
    conv = np.fft.irfftn(np.fft.rfftn(pad2, axes=axes) * np.fft.rfftn(kern, axes=axes),
                         s=(px, py, pz), axes=axes)
    return float((m1 * conv[:nx, :ny, :nz]).sum())


def cross_sum_direct(pos1: np.ndarray, m1: np.ndarray, pos2: np.ndarray, m2: np.ndarray,
                     coincident_kernel: float, coincident_scale: float,
                     chunk: int = 262144) -> float:
    """Pairwise ``sum m1 m2 / r`` between two point sets, chunked for memory.

    Near-coincident pairs (r below ``1e-9 * coincident_scale``) fall back to the
    cell-average constant at ``coincident_scale``.
    """
    total = 0.0
    floor = 1e-9 * coincident_scale
    step = max(1, chunk // max(len(pos2), 1))
    for start in range(0, len(pos1), step):
        p = pos1[start:start + step]
        d = np.sqrt(((p[:, None, :] - pos2[None, :, :]) ** 2).sum(axis=2))
        k = np.empty_like(d)
        near = d <= floor
        np.divide(1.0, d, out=k, where=~near)
        k[near] = coincident_kernel / coincident_scale
        total += float(m1[start:start + step] @ k @ m2)
    return total
