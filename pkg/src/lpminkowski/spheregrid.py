"""Quadrature grids on S^1 and S^2 with the operator ``Hess u + u g``.

On the circle the nodes are uniform angles and derivatives use central
differences whose denominators are fitted to ``cos`` and ``sin``. On the
2-sphere the nodes are a Gauss-Legendre colatitude by uniform longitude
product. Latitude derivatives use three-point stencils that reach across the
poles through ghost rows, so the pole rows need no special treatment.

In both cases the fitted stencils annihilate restrictions of linear
functions exactly, so ``Hess <x, v> + <x, v> g`` vanishes up to round-off.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import kernels

MIN_RESOLUTION = 4
SPHERE_AREA = {1: 2.0 * math.pi, 2: 4.0 * math.pi}


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Nodes, weights and stencil data on S^n, n in {1, 2}.

    The arrays are read-only; a grid can be shared freely.
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    antipode: np.ndarray
    # n = 1: spacing h; n = 2: longitude spacing
    spacing: float
    nlat: int = 0
    nlon: int = 0
    colat: np.ndarray = None
    lon: np.ndarray = None
    d1: np.ndarray = None
    d2: np.ndarray = None
    inv_c2: float = 0.0
    inv_2s: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.weights.shape[0]

    @property
    def omega(self):
        """Total area of the unit sphere S^n."""
        return SPHERE_AREA[self.dim]

    @property
    def angles(self):
        """Node angles on S^1 (n = 1 only)."""
        if self.dim != 1:
            raise AttributeError("angles are defined for the circle grid only")
        return self.extras["theta"]

    def colat_lon(self):
        """Per-node colatitude and longitude arrays (n = 2 only)."""
        if self.dim != 2:
            raise AttributeError("colat_lon is defined for the 2-sphere grid only")
        return self.extras["phi_node"], self.extras["lam_node"]

    def __repr__(self):
        if self.dim == 1:
            return f"SphereGrid(dim=1, N={self.size})"
        return f"SphereGrid(dim=2, nlat={self.nlat}, nlon={self.nlon})"


def _freeze(*arrays):
    for a in arrays:
        if a is not None:
            a.setflags(write=False)


def _latitude_stencils(colat):
    """Three-point stencils in colatitude, exact on {1, cos, sin}.

    Row ``i`` combines rows ``i-1, i, i+1``; the outer rows of the grid use
    ghost colatitudes ``-phi_0`` and ``2 pi - phi_last`` (mirror images
    through the poles).
    """
    nlat = colat.shape[0]
    ext = np.concatenate(([-colat[0]], colat, [2.0 * math.pi - colat[-1]]))
    d1 = np.empty((nlat, 3))
    d2 = np.empty((nlat, 3))
    for i in range(nlat):
        off = ext[i:i + 3] - ext[i + 1]
        mat = np.vstack([np.ones(3), np.cos(off), np.sin(off)])
        d1[i] = np.linalg.solve(mat, [0.0, 0.0, 1.0])
        d2[i] = np.linalg.solve(mat, [0.0, -1.0, 0.0])
    return d1, d2


def make_grid(dim, resolution):
    """Build a quadrature grid on S^dim.

    Parameters
    ----------
    dim : int
        1 for the circle, 2 for the 2-sphere.
    resolution : int
        Node count on S^1. On S^2, the number of longitudes; the number of
        Gauss-Legendre colatitude rows is ``resolution // 2``. Must be even
        and at least 4.

    Returns
    -------
    SphereGrid
    """
    if dim not in (1, 2):
        raise ValueError(f"unsupported dimension {dim}; expected 1 or 2")
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution {resolution} too small (minimum {MIN_RESOLUTION})")
    if resolution % 2:
        raise ValueError("resolution must be even so that the grid is antipodally closed")
    if dim == 1:
        return _circle_grid(resolution)
    return _sphere_grid(resolution)


def _circle_grid(n):
    h = 2.0 * math.pi / n
    theta = h * np.arange(n)
    nodes = np.column_stack([np.cos(theta), np.sin(theta)])
    weights = np.full(n, h)
    antipode = (np.arange(n) + n // 2) % n
    c2 = 2.0 - 2.0 * math.cos(h)
    _freeze(theta, nodes, weights, antipode)
    return SphereGrid(dim=1, nodes=nodes, weights=weights, antipode=antipode,
                      spacing=h, inv_c2=1.0 / c2, inv_2s=1.0 / (2.0 * math.sin(h)),
                      extras={"theta": theta})


def _sphere_grid(nlon):
    nlat = nlon // 2
    x, wgl = np.polynomial.legendre.leggauss(nlat)
    # leggauss returns ascending cos(colat); store colatitude ascending
    x = x[::-1]
    wgl = wgl[::-1]
    colat = np.arccos(x)
    dl = 2.0 * math.pi / nlon
    lon = dl * np.arange(nlon)
    phi = np.repeat(colat, nlon)
    lam = np.tile(lon, nlat)
    s = np.sin(phi)
    nodes = np.column_stack([s * np.cos(lam), s * np.sin(lam), np.cos(phi)])
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    weights = np.repeat(wgl, nlon) * dl
    rows = np.repeat(np.arange(nlat), nlon)
    cols = np.tile(np.arange(nlon), nlat)
    antipode = (nlat - 1 - rows) * nlon + (cols + nlon // 2) % nlon
    d1, d2 = _latitude_stencils(colat)
    sin_phi = np.sin(colat)
    cos_phi = np.cos(colat)
    _freeze(colat, lon, phi, lam, nodes, weights, antipode, d1, d2, sin_phi, cos_phi)
    return SphereGrid(dim=2, nodes=nodes, weights=weights, antipode=antipode,
                      spacing=dl, nlat=nlat, nlon=nlon, colat=colat, lon=lon,
                      d1=d1, d2=d2, inv_c2=1.0 / (2.0 - 2.0 * math.cos(dl)),
                      inv_2s=1.0 / (2.0 * math.sin(dl)),
                      extras={"phi_node": phi, "lam_node": lam,
                              "sin_phi": sin_phi, "cos_phi": cos_phi})


def _check_len(grid, field_):
    arr = np.asarray(field_, dtype=float)
    if arr.shape[:1] != (grid.size,):
        raise ValueError(f"field has {arr.shape[:1]} samples, grid has {grid.size} nodes")
    return arr


def integrate(grid, field_):
    """Quadrature sum of ``field`` against the area measure on S^n."""
    arr = _check_len(grid, field_)
    return float(np.dot(grid.weights, arr)) if arr.ndim == 1 else grid.weights @ arr


def mean(grid, field_):
    """Normalized average ``(1/omega_n) * integral of field``."""
    return integrate(grid, field_) / grid.omega


def hessian_components(grid, u):
    """Raw components of ``Hess u + u g``.

    Returns a 1-tuple ``(sigma,)`` on S^1 and ``(h11, h12, h22)`` on S^2,
    each an array over the nodes.
    """
    u = _check_len(grid, u)
    if grid.dim == 1:
        return (kernels.sigma_1d(u, grid.inv_c2),)
    ex = grid.extras
    return kernels.hess_2d(u, grid.nlat, grid.nlon, grid.d1, grid.d2,
                           grid.inv_c2, grid.inv_2s, ex["sin_phi"], ex["cos_phi"])


def hessian_plus_metric(grid, u):
    """Covariant ``Hess u + u g`` at every node.

    On S^1 the result is the scalar ``u'' + u`` per node, shape ``(N,)``.
    On S^2 it is the 2x2 matrix in the orthonormal ``(e_phi, e_lam)`` frame,
    shape ``(N, 2, 2)``.
    """
    comps = hessian_components(grid, u)
    if grid.dim == 1:
        return comps[0]
    h11, h12, h22 = comps
    out = np.empty((grid.size, 2, 2))
    out[:, 0, 0] = h11
    out[:, 0, 1] = h12
    out[:, 1, 0] = h12
    out[:, 1, 1] = h22
    return out


def det_and_min_eig(grid, u):
    """Determinant and smallest eigenvalue of ``Hess u + u g`` per node."""
    comps = hessian_components(grid, u)
    if grid.dim == 1:
        return comps[0], comps[0]
    h11, h12, h22 = comps
    det = h11 * h22 - h12 * h12
    half_tr = 0.5 * (h11 + h22)
    disc = np.sqrt(0.25 * (h11 - h22) ** 2 + h12 * h12)
    return det, half_tr - disc


def tangent_gradient(grid, u):
    """Spherical gradient of ``u`` as ambient vectors, shape ``(N, n+1)``."""
    u = _check_len(grid, u)
    if grid.dim == 1:
        du = kernels.grad_1d(u, grid.inv_2s)
        perp = np.column_stack([-grid.nodes[:, 1], grid.nodes[:, 0]])
        return du[:, None] * perp
    u_phi, u_lam = kernels.grad_2d(u, grid.nlat, grid.nlon, grid.d1, grid.inv_2s)
    phi, lam = grid.colat_lon()
    cp, sp = np.cos(phi), np.sin(phi)
    cl, sl = np.cos(lam), np.sin(lam)
    e_phi = np.column_stack([cp * cl, cp * sl, -sp])
    e_lam = np.column_stack([-sl, cl, np.zeros_like(sl)])
    return u_phi[:, None] * e_phi + (u_lam / sp)[:, None] * e_lam


def linear_function(grid, v):
    """Samples of ``<x, v>`` on the grid nodes."""
    return grid.nodes @ np.asarray(v, dtype=float)
