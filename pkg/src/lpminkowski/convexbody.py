"""Convex bodies stored as sampled support functions.

A :class:`SupportField` holds ``u(x) = max_{z in body} <x, z>`` on the nodes
of a :class:`~lpminkowski.spheregrid.SphereGrid`. Every geometric quantity
below is read off ``u`` and its discrete ``Hess u + u g``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linprog

from . import spheregrid
from .spheregrid import SphereGrid

CONVEXITY_RTOL = 1e-8


class NonConvexError(ValueError):
    """Raised when a sampled support function fails the discrete convexity test."""


def ball_volume(dim):
    """Volume of the unit ball in R^(dim+1): pi for the disk, 4 pi / 3 for the ball."""
    return spheregrid.SPHERE_AREA[dim] / (dim + 1)


@dataclass(frozen=True, eq=False)
class SupportField:
    """Sampled support function of a convex body with the origin inside."""

    grid: SphereGrid
    u: np.ndarray

    def __post_init__(self):
        arr = np.array(self.u, dtype=float)
        if arr.shape != (self.grid.size,):
            raise ValueError(f"support values have shape {arr.shape}, grid has {self.grid.size} nodes")
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)

    @property
    def dim(self):
        return self.grid.dim

    def with_values(self, u):
        return SupportField(self.grid, u)


@dataclass
class BodyStats:
    volume: float
    diameter: float
    centroid: np.ndarray
    min_curv_eig: float


def curvature_data(field):
    """Return ``(sigma, min_eig)`` of ``Hess u + u g`` without validation."""
    return spheregrid.det_and_min_eig(field.grid, field.u)


def convexity_margin(sigma, min_eig):
    """Smallest eigenvalue minus the tolerance ``1e-8 * max(sigma)``."""
    return float(np.min(min_eig)) - CONVEXITY_RTOL * float(np.max(sigma))


def is_convex(field):
    """True when ``u > 0`` and the discrete convexity test passes."""
    if np.min(field.u) <= 0.0:
        return False
    sigma, eig = curvature_data(field)
    return convexity_margin(sigma, eig) > 0.0


def _validated(field):
    if np.min(field.u) <= 0.0:
        raise NonConvexError(f"support function has min {np.min(field.u):.3g} <= 0; origin not interior")
    sigma, eig = curvature_data(field)
    if convexity_margin(sigma, eig) <= 0.0:
        raise NonConvexError(f"smallest curvature eigenvalue {np.min(eig):.3g} below tolerance")
    return sigma, eig


def det_hess(field):
    """``sigma_n = det(Hess u + u g)`` at each node; the density of the surface measure."""
    return _validated(field)[0]


def gauss_curvature(field):
    """Gauss curvature ``K = 1 / sigma_n`` at the boundary point with normal x."""
    return 1.0 / det_hess(field)


def volume(field):
    """Enclosed volume ``(1/(n+1)) * sum w u sigma``."""
    sigma = det_hess(field)
    return float(np.dot(field.grid.weights, field.u * sigma)) / (field.dim + 1)


def volume_unchecked(field, sigma=None):
    if sigma is None:
        sigma = curvature_data(field)[0]
    return float(np.dot(field.grid.weights, field.u * sigma)) / (field.dim + 1)


def diameter(field):
    """Largest width ``max(u(x) + u(-x))``, which equals the diameter."""
    u = field.u
    return float(np.max(u + u[field.grid.antipode]))


def widths(field):
    return field.u + field.u[field.grid.antipode]


def boundary_points(field):
    """Reconstructed boundary ``X(x) = u(x) x + grad u(x)``, shape ``(N, n+1)``."""
    g = field.grid
    return field.u[:, None] * g.nodes + spheregrid.tangent_gradient(g, field.u)


def _polygon_area_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def surface_mesh(field):
    """Closed triangle mesh of the reconstructed boundary on S^2 grids.

    Returns ``(vertices, faces)``. Vertices are the boundary points followed
    by one cap vertex per pole (the mean of the nearest ring). Faces are
    oriented with outward normals.
    """
    g = field.grid
    if g.dim != 2:
        raise ValueError("surface_mesh needs a 2-sphere grid")
    pts = boundary_points(field)
    nlat, nlon = g.nlat, g.nlon
    north = pts[:nlon].mean(axis=0)
    south = pts[-nlon:].mean(axis=0)
    verts = np.vstack([pts, north, south])
    ni, si = nlat * nlon, nlat * nlon + 1
    i = np.arange(nlat - 1)[:, None]
    j = np.arange(nlon)[None, :]
    a = i * nlon + j
    b = i * nlon + (j + 1) % nlon
    c = (i + 1) * nlon + j
    d = (i + 1) * nlon + (j + 1) % nlon
    quads = np.concatenate([np.stack([a, c, b], -1).reshape(-1, 3),
                            np.stack([b, c, d], -1).reshape(-1, 3)])
    jj = np.arange(nlon)
    top = np.column_stack([np.full(nlon, ni), jj, (jj + 1) % nlon])
    last = (nlat - 1) * nlon
    bottom = np.column_stack([np.full(nlon, si), last + (jj + 1) % nlon, last + jj])
    return verts, np.concatenate([top, quads, bottom])


def _mesh_volume_centroid(verts, faces):
    # signed tetrahedra against the origin
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    vol = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    total = vol.sum()
    return total, (vol[:, None] * (a + b + c)).sum(axis=0) / (4.0 * total)


def reconstructed_volume(field):
    """Volume of the reconstructed boundary polygon or mesh (an independent check)."""
    pts = boundary_points(field)
    if field.dim == 1:
        return float(_polygon_area_centroid(pts)[0])
    return float(_mesh_volume_centroid(*surface_mesh(field))[0])


def centroid(field):
    """Centroid of the body enclosed by the reconstructed boundary."""
    _validated(field)
    if field.dim == 1:
        return _polygon_area_centroid(boundary_points(field))[1]
    return _mesh_volume_centroid(*surface_mesh(field))[1]


def recenter(field, z):
    """Support function of the body translated by ``-z``: ``u(x) - <x, z>``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (field.dim + 1,):
        raise ValueError(f"translation must have {field.dim + 1} components")
    v = field.u - field.grid.nodes @ z
    if np.min(v) <= 0.0:
        raise ValueError("recentering point is not in the interior of the body")
    return field.with_values(v)


def rescale(field, c):
    """Support function of the dilated body ``c * body``."""
    if not c > 0.0:
        raise ValueError(f"scale factor must be positive, got {c}")
    return field.with_values(field.u * float(c))


def normalize_volume(field):
    """Dilate so that the volume equals the unit ball volume."""
    c = (ball_volume(field.dim) / volume(field)) ** (1.0 / (field.dim + 1))
    return rescale(field, c)


def body_stats(field):
    sigma, eig = _validated(field)
    vol = float(np.dot(field.grid.weights, field.u * sigma)) / (field.dim + 1)
    return BodyStats(volume=vol, diameter=diameter(field), centroid=centroid(field),
                     min_curv_eig=float(np.min(eig)))


def ball(grid, radius=1.0, center=None):
    """Support function of a ball: ``radius + <x, center>``."""
    u = np.full(grid.size, float(radius))
    if center is not None:
        u = u + grid.nodes @ np.asarray(center, dtype=float)
    return SupportField(grid, u)


def ellipsoid(grid, axes):
    """Axis-aligned ellipse or ellipsoid with semi-axes ``axes``."""
    axes = np.asarray(axes, dtype=float)
    if axes.shape != (grid.dim + 1,):
        raise ValueError(f"need {grid.dim + 1} semi-axes")
    return SupportField(grid, np.sqrt((grid.nodes ** 2 * axes ** 2).sum(axis=1)))


def hausdorff_distance(a, b, translate=True):
    """Hausdorff distance ``max |u_a - u_b|`` between two bodies on one grid.

    With ``translate`` the distance is minimized over translations of ``b``
    (a small linear program in the translation vector).
    """
    if a.grid is not b.grid and a.grid.size != b.grid.size:
        raise ValueError("fields live on different grids")
    diff = a.u - b.u
    if not translate:
        return float(np.max(np.abs(diff)))
    X = a.grid.nodes
    d = X.shape[1]
    # minimize s subject to |diff - X z| <= s
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    ones = np.ones((X.shape[0], 1))
    A = np.vstack([np.hstack([-X, -ones]), np.hstack([X, -ones])])
    rhs = np.concatenate([-diff, diff])
    res = linprog(cost, A_ub=A, b_ub=rhs, bounds=[(None, None)] * d + [(0, None)],
                  method="highs")
    if not res.success:
        return float(np.max(np.abs(diff)))
    return float(res.x[-1])


def write_polyline_csv(field, path):
    """Write the reconstructed boundary of a planar body as ``x,y`` rows."""
    pts = boundary_points(field)
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for p in pts:
            fh.write(f"{p[0]:.17g},{p[1]:.17g}\n")


def write_obj(field, path):
    """Write the reconstructed boundary of a 3D body as a Wavefront OBJ mesh."""
    verts, faces = surface_mesh(field)
    with open(path, "w") as fh:
        fh.write(f"# {len(verts)} vertices, {len(faces)} faces\n")
        for v in verts:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def write_geometry(field, path):
    """Write ``body.csv`` on S^1 grids or ``body.obj`` on S^2 grids."""
    if field.dim == 1:
        write_polyline_csv(field, path)
    else:
        write_obj(field, path)


def polygon_from_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data.reshape(-1, 2)


def random_body(grid, rng, amplitude=0.15, modes=4):
    """Random smooth convex body: the ball plus a small Fourier/harmonic bump.

    Linear modes are excluded so the perturbation is translation free. The
    amplitude is halved until the discrete convexity test passes.
    """
    x = grid.nodes
    if grid.dim == 1:
        th = grid.angles
        pert = np.zeros(grid.size)
        for k in range(2, modes + 2):
            a, b = rng.normal(size=2) / k ** 2
            pert += a * np.cos(k * th) + b * np.sin(k * th)
    else:
        pert = np.zeros(grid.size)
        # random quadratic and cubic polynomials restricted to the sphere
        Q = rng.normal(size=(3, 3))
        Q = 0.5 * (Q + Q.T)
        pert += np.einsum("ij,jk,ik->i", x, Q, x)
        C = rng.normal(size=(3, 3, 3)) / 3.0
        pert += np.einsum("ia,ib,ic,abc->i", x, x, x, C)
        pert -= pert.mean()
    pert /= max(np.max(np.abs(pert)), 1e-300)
    amp = amplitude
    while amp > 1e-6:
        field = SupportField(grid, 1.0 + amp * pert)
        if is_convex(field):
            return field
        amp *= 0.5
    return SupportField(grid, np.ones(grid.size))
