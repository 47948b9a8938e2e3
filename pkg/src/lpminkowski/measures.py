"""Densities and Borel measures on S^n, collar masses and mollification.

A :class:`DensityField` is a sampled density. For collar masses it is read as
piecewise constant on the quadrature cells of its grid (arcs on S^1,
colatitude-longitude boxes on S^2), so that thin collars are measured without
node-counting artifacts. A :class:`MeasureSpec` adds point masses.

The collar of a subspace L with width delta is the set of unit vectors whose
projection onto the orthogonal complement of L has norm at most delta.
"""

from dataclasses import dataclass, field
import itertools
import logging
import math
from pathlib import Path

import numpy as np

from . import spheregrid
from .spheregrid import SphereGrid, make_grid

log = logging.getLogger(__name__)

MASS_TOL = 1e-12
MEMBER_TOL = 1e-12
SUBSAMPLE_S2 = 3
DELTA_LADDER = tuple(0.25 * 0.5 ** j for j in range(31))


@dataclass(frozen=True, eq=False)
class DensityField:
    """Sampled nonnegative density; ``normalized`` means ``mean(f) = 1``."""

    grid: SphereGrid
    f: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.f, dtype=float)
        if arr.shape != (self.grid.size,):
            raise ValueError(f"density has shape {arr.shape}, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(arr)) or np.min(arr) < 0.0:
            raise ValueError("density must be finite and nonnegative")
        if self.normalized and abs(spheregrid.mean(self.grid, arr) - 1.0) > 1e-10:
            raise ValueError("density flagged normalized but its mean is not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "f", arr)

    @property
    def mass(self):
        """Normalized total mass ``(1/omega) * integral f``."""
        return spheregrid.mean(self.grid, self.f)

    def normalize(self):
        """Return ``(normalized field, scale)`` with ``f = scale * normalized``."""
        s = self.mass
        if not s > 0.0:
            raise ValueError("density has zero mass")
        return DensityField(self.grid, self.f / s, normalized=True), s

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values).normalize()[0]


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    """Finite Borel measure: point masses plus an optional density part.

    ``masses`` are measure values; the density part contributes
    ``(1/omega) * integral f``.
    """

    dim: int
    directions: np.ndarray
    masses: np.ndarray
    density: DensityField = None

    def __post_init__(self):
        d = np.array(self.directions, dtype=float).reshape(-1, self.dim + 1)
        m = np.array(self.masses, dtype=float).reshape(-1)
        if d.shape[0] != m.shape[0]:
            raise ValueError("one mass per atom direction is required")
        if np.any(m <= 0.0):
            raise ValueError("atom masses must be positive")
        if d.shape[0]:
            norms = np.linalg.norm(d, axis=1)
            if np.any(norms == 0.0):
                raise ValueError("atom direction is the zero vector")
            d = d / norms[:, None]
        if self.density is not None and self.density.grid.dim != self.dim:
            raise ValueError("density dimension does not match")
        d.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "masses", m)

    @property
    def has_atoms(self):
        return self.masses.shape[0] > 0

    @property
    def total_mass(self):
        ac = self.density.mass if self.density is not None else 0.0
        return float(self.masses.sum()) + ac

    def normalize(self):
        """Return ``(probability measure, scale)``."""
        s = self.total_mass
        if not s > 0.0:
            raise ValueError("measure has zero mass")
        dens = None
        if self.density is not None:
            dens = DensityField(self.density.grid, self.density.f / s)
        return MeasureSpec(self.dim, self.directions, self.masses / s, dens), s

    @classmethod
    def from_density(cls, density):
        return cls(density.grid.dim, np.zeros((0, density.grid.dim + 1)), np.zeros(0), density)

    @classmethod
    def atoms(cls, directions, masses, density=None):
        directions = np.atleast_2d(np.asarray(directions, dtype=float))
        return cls(directions.shape[1] - 1, directions, masses, density)


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of R^(n+1) with an orthonormal basis (rows)."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.atleast_2d(np.array(self.basis, dtype=float))
        if b.shape[0] < 1 or b.shape[0] >= b.shape[1]:
            raise ValueError("subspace dimension must satisfy 1 <= l <= n")
        if np.max(np.abs(b @ b.T - np.eye(b.shape[0]))) > 1e-12:
            raise ValueError("basis is not orthonormal")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def rank(self):
        return self.basis.shape[0]

    @property
    def ambient(self):
        return self.basis.shape[1]

    def complement(self):
        """Orthonormal basis (rows) of the orthogonal complement."""
        _, _, vt = np.linalg.svd(self.basis)
        return vt[self.rank:]

    def distance(self, x):
        """Norm of the projection of each row of ``x`` onto the complement."""
        x = np.atleast_2d(x)
        proj = x @ self.basis.T
        sq = np.einsum("ij,ij->i", x, x) - np.einsum("ij,ij->i", proj, proj)
        return np.sqrt(np.maximum(sq, 0.0))

    @classmethod
    def span(cls, *vectors):
        """Subspace spanned by ``vectors`` (orthonormalized by SVD)."""
        a = np.atleast_2d(np.asarray(vectors, dtype=float))
        _, s, vt = np.linalg.svd(a)
        r = int(np.sum(s > 1e-10 * s[0]))
        return cls(vt[:r])

    @classmethod
    def hyperplane(cls, normal):
        """The hyperplane orthogonal to ``normal``."""
        z = np.asarray(normal, dtype=float)
        z = z / np.linalg.norm(z)
        _, _, vt = np.linalg.svd(z[None, :])
        return cls(vt[1:])


# ---------------------------------------------------------------------------
# builtin densities and measure files

def builtin_density(name, grid):
    """Raw values of a named density: ``uniform``, ``cos2`` or ``bumps:<seed>``."""
    x = grid.nodes
    if name == "uniform":
        return np.ones(grid.size)
    if name == "cos2":
        if grid.dim == 1:
            return 1.0 + 0.5 * np.cos(2.0 * grid.angles)
        return 1.0 + 0.25 * (3.0 * x[:, 2] ** 2 - 1.0)
    if name.startswith("bumps"):
        _, _, seed = name.partition(":")
        rng = np.random.default_rng(int(seed) if seed else 0)
        vals = np.full(grid.size, 0.5)
        for _ in range(3):
            c = rng.normal(size=grid.dim + 1)
            c /= np.linalg.norm(c)
            amp = rng.uniform(0.5, 2.0)
            vals += amp * np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * 0.3 ** 2))
        return vals
    raise ValueError(f"unknown builtin density {name!r}")


def grid_for_count(dim, count):
    """Grid whose node count equals ``count`` (for node-indexed density files)."""
    if dim == 1:
        return make_grid(1, count)
    nlon = int(round(math.sqrt(2 * count)))
    if nlon * (nlon // 2) != count:
        raise ValueError(f"{count} values do not match any 2-sphere grid")
    return make_grid(2, nlon)


def read_grid_csv(path):
    """Node-indexed density values; commas, whitespace and one header line allowed."""
    text = Path(path).read_text().replace(",", " ").split()
    vals = []
    for tok in text:
        try:
            vals.append(float(tok))
        except ValueError:
            if vals:
                raise ValueError(f"bad value {tok!r} in {path}")
    return np.asarray(vals)


def parse_measure_file(path, resolution=None, dim=None):
    """Read a measure description.

    Lines (``#`` starts a comment)::

        dim 1|2
        atom x y [z] mass
        density grid-csv PATH [mass M]
        density uniform|cos2|bumps:SEED [mass M]
        resolution N

    A density without ``mass`` contributes its own mean. Builtin densities are
    sampled on a grid of ``resolution`` (default 256 on S^1, 64 on S^2).
    """
    path = Path(path)
    atoms = []
    dens_line = None
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0].lower()
        if key == "dim":
            dim = int(tok[1])
        elif key == "resolution":
            resolution = resolution or int(tok[1])
        elif key == "atom":
            vals = [float(t) for t in tok[1:]]
            if len(vals) not in (3, 4):
                raise ValueError(f"atom line needs 2 or 3 coordinates and a mass: {raw!r}")
            atoms.append(vals)
        elif key == "density":
            dens_line = tok[1:]
        else:
            raise ValueError(f"unrecognized line in measure file: {raw!r}")
    if atoms:
        adim = len(atoms[0]) - 2
        if any(len(a) - 2 != adim for a in atoms):
            raise ValueError("atoms have mixed dimensions")
        if dim is not None and dim != adim:
            raise ValueError("atom coordinates do not match the declared dimension")
        dim = adim
    density = None
    if dens_line:
        kind = dens_line[0]
        rest = dens_line[1:]
        mass = None
        if "mass" in rest:
            i = rest.index("mass")
            mass = float(rest[i + 1])
            rest = rest[:i] + rest[i + 2:]
        if kind == "grid-csv":
            src = Path(rest[0])
            if not src.is_absolute():
                src = path.parent / src
            vals = read_grid_csv(src)
            if dim is None:
                raise ValueError("grid-csv density needs a 'dim' line or atoms")
            grid = grid_for_count(dim, vals.size)
        else:
            if dim is None:
                dim = 1
            grid = make_grid(dim, resolution or (256 if dim == 1 else 64))
            vals = builtin_density(kind, grid)
        density = DensityField(grid, vals)
        if mass is not None:
            density = DensityField(grid, vals * (mass / density.mass))
    if dim is None:
        raise ValueError("measure file defines neither atoms nor a density")
    dirs = np.array([a[:-1] for a in atoms]).reshape(-1, dim + 1)
    masses = np.array([a[-1] for a in atoms])
    return MeasureSpec(dim, dirs, masses, density)


def write_measure_file(mu, path, density_csv=None):
    """Write ``mu`` in the text format read by :func:`parse_measure_file`."""
    path = Path(path)
    lines = [f"dim {mu.dim}"]
    for d, m in zip(mu.directions, mu.masses):
        lines.append("atom " + " ".join(f"{c:.17g}" for c in d) + f" {m:.17g}")
    if mu.density is not None:
        csv = Path(density_csv) if density_csv else path.with_suffix(".density.csv")
        np.savetxt(csv, mu.density.f, fmt="%.17g")
        lines.append(f"density grid-csv {csv.name if csv.parent == path.parent else csv}")
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# collar masses

def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _circle_collar_fractions(grid, normals, delta):
    """Overlap length of each node arc with the collar of each normal's line.

    Returns an ``(M, N)`` array of overlaps in radians for the set
    ``|<x, z>| <= delta`` (two arcs of half-width asin(delta) around the
    directions orthogonal to z).
    """
    theta = grid.angles
    h = grid.spacing
    beta = math.asin(min(delta, 1.0))
    zeta = np.arctan2(normals[:, 1], normals[:, 0])
    out = np.zeros((normals.shape[0], grid.size))
    for c in (zeta + 0.5 * math.pi, zeta - 0.5 * math.pi):
        o = _wrap(theta[None, :] - c[:, None])
        out += np.clip(np.minimum(o + 0.5 * h, beta) - np.maximum(o - 0.5 * h, -beta), 0.0, None)
    return np.minimum(out, h)


def _sphere_subsamples(grid, s=SUBSAMPLE_S2):
    """Equal-area sub-points of each S^2 cell: shape ``(N, s*s, 3)``."""
    key = ("subsamples", s)
    cache = grid.extras.setdefault("_cache", {})
    if key in cache:
        return cache[key]
    wgl = grid.weights.reshape(grid.nlat, grid.nlon)[:, 0] / grid.spacing
    top = 1.0 - np.concatenate(([0.0], np.cumsum(wgl)))
    t = (np.arange(s) + 0.5) / s
    cz = top[:-1, None] - t[None, :] * wgl[:, None]          # (nlat, s)
    dl = grid.spacing
    lam = grid.lon[:, None] + (t[None, :] - 0.5) * dl          # (nlon, s)
    cz = np.clip(cz, -1.0, 1.0)
    sz = np.sqrt(1.0 - cz ** 2)
    pts = np.empty((grid.nlat, grid.nlon, s, s, 3))
    pts[..., 0] = sz[:, None, :, None] * np.cos(lam)[None, :, None, :]
    pts[..., 1] = sz[:, None, :, None] * np.sin(lam)[None, :, None, :]
    pts[..., 2] = cz[:, None, :, None]
    pts = pts.reshape(grid.size, s * s, 3)
    cache[key] = pts
    return pts


def _density_collar_batch(dens, kind, dirs, delta, power):
    """Collar means of ``f**power`` for a batch of directions.

    ``kind`` is ``"plane"`` (collar of the hyperplane orthogonal to each
    direction) or ``"line"`` (collar of the line through each direction).
    """
    grid = dens.grid
    fp = np.power(dens.f, power)
    if grid.dim == 1:
        normals = dirs if kind == "plane" else np.column_stack([-dirs[:, 1], dirs[:, 0]])
        return _circle_collar_fractions(grid, normals, delta) @ fp / grid.omega
    pts = _sphere_subsamples(grid)
    s2 = pts.shape[1]
    wf = grid.weights * fp / s2
    out = np.empty(dirs.shape[0])
    for i in range(0, dirs.shape[0], 64):
        d = dirs[i:i + 64]
        dots = np.abs(np.einsum("nsk,mk->mns", pts, d))
        if kind == "plane":
            inside = dots <= delta + MEMBER_TOL
        else:
            inside = np.sqrt(np.maximum(1.0 - dots ** 2, 0.0)) <= delta + MEMBER_TOL
        out[i:i + 64] = inside.sum(axis=2) @ wf / grid.omega
    # analytic cap: the collar area fraction times sup f^power
    frac = delta if kind == "plane" else 1.0 - math.sqrt(max(1.0 - delta * delta, 0.0))
    return np.minimum(out, frac * float(fp.max()))


def _atom_collar_batch(mu, kind, dirs, delta):
    if not mu.has_atoms:
        return np.zeros(dirs.shape[0])
    dots = np.abs(mu.directions @ dirs.T)
    if kind == "plane":
        inside = dots <= delta + MEMBER_TOL
    else:
        inside = np.sqrt(np.maximum(1.0 - dots ** 2, 0.0)) <= delta + MEMBER_TOL
    return mu.masses @ inside


def _as_measure(obj):
    if isinstance(obj, DensityField):
        return MeasureSpec.from_density(obj)
    if isinstance(obj, MeasureSpec):
        return obj
    raise TypeError("expected a DensityField or MeasureSpec")


def _collar_batch(obj, kind, dirs, delta, power=1.0):
    mu = _as_measure(obj)
    if power != 1.0 and mu.has_atoms:
        raise ValueError("powers other than 1 are undefined for measures with atoms")
    total = _atom_collar_batch(mu, kind, dirs, delta)
    if mu.density is not None:
        total = total + _density_collar_batch(mu.density, kind, dirs, delta, power)
    return total


def collar_mass(f_or_mu, L, delta, power=1.0):
    """Mass of the collar of ``L`` with width ``delta``.

    For a density this is ``(1/omega) * integral over the collar of f**power``;
    for a measure it is the measure of the collar (``power`` must be 1 when
    atoms are present).
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    if power < 1.0:
        raise ValueError("power must be at least 1")
    mu = _as_measure(f_or_mu)
    if L.ambient != mu.dim + 1:
        raise ValueError("subspace and measure live in different dimensions")
    if mu.dim == 1 or L.rank == mu.dim:
        normal = L.complement()
        return float(_collar_batch(mu, "plane", normal, delta, power)[0])
    return float(_collar_batch(mu, "line", L.basis, delta, power)[0])


def _fibonacci_hemisphere(count):
    i = np.arange(count) + 0.5
    z = i / count
    r = np.sqrt(1.0 - z * z)
    ang = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(ang), r * np.sin(ang), z])


def _base_directions(dim, count=None):
    if dim == 1:
        count = count or 1440
        t = math.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    return _fibonacci_hemisphere(count or 1500)


def _atom_directions(mu, kind):
    """Directions at which atoms sit on or near collar boundaries."""
    if not mu.has_atoms:
        return np.zeros((0, mu.dim + 1))
    A = mu.directions
    out = [A]
    if mu.dim == 1:
        out.append(np.column_stack([-A[:, 1], A[:, 0]]))
    else:
        # normals of planes through pairs of atoms, and great circles orthogonal to atoms
        if A.shape[0] <= 60:
            for i, j in itertools.combinations(range(A.shape[0]), 2):
                c = np.cross(A[i], A[j])
                nc = np.linalg.norm(c)
                if nc > 1e-12:
                    out.append((c / nc)[None, :])
        t = np.linspace(0, 2 * math.pi, 72, endpoint=False)
        for a in A[:60]:
            e1 = np.cross(a, [1.0, 0, 0] if abs(a[0]) < 0.9 else [0, 1.0, 0])
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(a, e1)
            out.append(np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    return np.vstack(out)


def _refine(best, dim, scale, rng, count):
    if dim == 1:
        ang = math.atan2(best[1], best[0]) + np.linspace(-scale, scale, count)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    pert = best[None, :] + scale * rng.normal(size=(count, 3))
    return pert / np.linalg.norm(pert, axis=1)[:, None]


def collar_sweep(obj, delta, kind="plane", power=1.0, seed=0):
    """Largest collar mass over a sweep of directions.

    The sweep tests a uniform family, directions tied to atoms and a local
    refinement around the best candidates. Returns ``(value, direction)``;
    the value is a lower bound of the true supremum that is exact over the
    tested family.
    """
    mu = _as_measure(obj)
    rng = np.random.default_rng(seed)
    base = _base_directions(mu.dim)
    dirs = np.vstack([base, _atom_directions(mu, kind)])
    vals = _collar_batch(mu, kind, dirs, delta, power)
    order = np.argsort(vals)[::-1][:5]
    best_v, best_d = float(vals[order[0]]), dirs[order[0]]
    scale = math.pi / base.shape[0] if mu.dim == 1 else 2.0 / math.sqrt(base.shape[0])
    for cand in dirs[order]:
        s = scale
        cur = cand
        for _ in range(3):
            loc = _refine(cur, mu.dim, s, rng, 41)
            lv = _collar_batch(mu, kind, loc, delta, power)
            i = int(np.argmax(lv))
            if lv[i] > best_v:
                best_v, best_d = float(lv[i]), loc[i]
            cur = loc[i]
            s *= 0.25
    return best_v, best_d / np.linalg.norm(best_d)


def max_hyperplane_collar(obj, delta, power=1.0, seed=0):
    """Sup over unit z of the collar of the hyperplane orthogonal to z."""
    return collar_sweep(obj, delta, "plane", power, seed)[0]


def max_subspace_collar(obj, delta, seed=0):
    """Largest ratio ``collar(L, delta) / (l/(n+1))`` over lines and planes."""
    return _subspace_collar_witness(_as_measure(obj), delta, seed)[0]


def _subspace_collar_witness(mu, delta, seed=0):
    n = mu.dim
    vp, zp = collar_sweep(mu, delta, "plane", 1.0, seed)
    best = (vp * (n + 1) / n, Subspace.hyperplane(zp))
    if n == 2:
        vl, zl = collar_sweep(mu, delta, "line", 1.0, seed)
        if vl * 3.0 > best[0]:
            best = (vl * 3.0, Subspace.span(zl))
    return best


# ---------------------------------------------------------------------------
# hypothesis checks

@dataclass
class HypothesisReport:
    """Outcome of the solvability-condition check for a given alpha.

    Iterating yields ``(ok, delta, tau, case)``.
    """

    ok: bool
    delta: float
    tau: float
    case: str
    witness: object = None
    detail: str = ""
    equality: bool = False
    values: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.ok, self.delta, self.tau, self.case))

    def as_dict(self):
        w = self.witness
        if isinstance(w, Subspace):
            w = w.basis.tolist()
        elif isinstance(w, np.ndarray):
            w = w.tolist()
        return {"ok": self.ok, "case": self.case, "delta": self.delta, "tau": self.tau,
                "equality": self.equality, "detail": self.detail, "witness": w,
                "values": self.values}


def case_for_alpha(alpha, dim):
    if not alpha > 1.0 / (dim + 2):
        raise ValueError(f"alpha = {alpha} must exceed 1/(n+2)")
    if abs(alpha - 1.0) < 1e-12:
        return "ii"
    return "i" if alpha > 1.0 else "iii"


def collar_tau(alpha, dim):
    """``tau = 2^(-|p|(n+1)/(|p|+n)) / 2`` with ``p = 1 - 1/alpha``."""
    p = abs(1.0 - 1.0 / alpha)
    return 0.5 * 2.0 ** (-p * (dim + 1) / (p + dim))


def _atom_subspaces(mu):
    """Distinct subspaces spanned by subsets of atom directions (rank 1..n)."""
    A = mu.directions
    n = mu.dim
    found = []
    for r in range(1, n + 1):
        for idx in itertools.combinations(range(A.shape[0]), r):
            sub = A[list(idx)]
            if np.linalg.matrix_rank(sub, tol=1e-9) != r:
                continue
            L = Subspace.span(*sub)
            if not any(_same_subspace(M, L) for M in found):
                found.append(L)
            if len(found) > 5000:
                return found
    return found


def _same_subspace(a, b):
    if a.rank != b.rank:
        return False
    return np.max(np.abs(a.basis @ b.complement().T)) < 1e-9


def _mass_on(mu, L):
    if not mu.has_atoms:
        return 0.0
    return float(mu.masses[L.distance(mu.directions) <= 1e-9].sum())


def _equality_complement_ok(mu, L):
    """Subspace concentration equality: the rest of the mass on a complement of L."""
    if mu.density is not None and mu.density.mass > MASS_TOL:
        return False
    off = L.distance(mu.directions) > 1e-9
    rest = mu.directions[off]
    need = mu.dim + 1 - L.rank
    if rest.shape[0] == 0:
        return False
    if np.linalg.matrix_rank(rest, tol=1e-9) != need:
        return False
    both = np.vstack([L.basis, rest])
    return np.linalg.matrix_rank(both, tol=1e-9) == mu.dim + 1


def check_hypothesis(mu, alpha, seed=0):
    """Check the mass-concentration condition that makes the problem solvable.

    * alpha > 1: finds delta with ``sup_z mu(collar(z^perp, 2 delta)) <= 1 - 2 delta``
      and returns ``tau = delta``.
    * alpha = 1: subspace concentration over atom-spanned subspaces, then a
      delta with ``mu(collar(L, 2 delta)) < (1 - 2 delta) l/(n+1)`` over the
      swept lines and planes. The equality case with a complementary
      subspace carrying the remaining mass is accepted with ``delta = 0``.
    * 1/(n+2) < alpha < 1: requires a density, and finds delta with
      ``sup_z mean over collar(z^perp, 2 delta) of f^r <= (tau/2)^r``,
      ``r = (n+1)/(n+1+p)``, ``tau = 2^(-|p|(n+1)/(|p|+n)) / 2``.
    """
    n = mu.dim
    case = case_for_alpha(alpha, n)
    if abs(mu.total_mass - 1.0) > 1e-9:
        mu = mu.normalize()[0]
    if case == "i":
        witness = None
        for d in DELTA_LADDER:
            v, z = collar_sweep(mu, min(2 * d, 0.999), "plane", 1.0, seed)
            if v <= 1.0 - 2 * d:
                return HypothesisReport(True, d, d, case, z, "collar mass below 1 - 2 delta",
                                        values={"sup_collar": v})
            witness = z
        return HypothesisReport(False, 0.0, 0.0, case, witness,
                                "measure concentrates on a great subsphere",
                                values={"sup_collar": v})
    if case == "ii":
        equality = False
        for L in _atom_subspaces(mu) if mu.has_atoms else []:
            m = _mass_on(mu, L)
            bound = L.rank / (n + 1)
            if m > bound + MASS_TOL:
                return HypothesisReport(False, 0.0, 0.0, case, L,
                                        f"subspace of dimension {L.rank} carries mass {m:.6g} > {bound:.6g}",
                                        values={"mass": m, "bound": bound})
            if m >= bound - MASS_TOL:
                if not _equality_complement_ok(mu, L):
                    return HypothesisReport(False, 0.0, 0.0, case, L,
                                            "equality in subspace concentration without a complementary subspace",
                                            values={"mass": m, "bound": bound})
                equality = True
        if equality:
            return HypothesisReport(True, 0.0, 0.0, case, None,
                                    "equality case with complementary subspaces", equality=True)
        worst = math.inf
        wit = None
        for d in DELTA_LADDER:
            worst, wit = _subspace_collar_witness(mu, min(2 * d, 0.999), seed)
            if worst < 1.0 - 2 * d:
                return HypothesisReport(True, d, d, case, wit, "strict subspace concentration",
                                        values={"max_collar_ratio": worst})
        return HypothesisReport(False, 0.0, 0.0, case, wit,
                                "no collar width gives a strict margin",
                                values={"max_collar_ratio": worst})
    tau = collar_tau(alpha, n)
    if mu.has_atoms or mu.density is None:
        return HypothesisReport(False, 0.0, tau, case, None,
                                "alpha < 1 requires an absolutely continuous measure")
    p = 1.0 - 1.0 / alpha
    r = (n + 1) / (n + 1 + p)
    thresh = (0.5 * tau) ** r
    v, z = math.inf, None
    for d in DELTA_LADDER:
        v, z = collar_sweep(mu.density, min(2 * d, 0.999), "plane", r, seed)
        if v <= thresh:
            return HypothesisReport(True, d, tau, case, z, "L^r collar integral below threshold",
                                    values={"collar": v, "threshold": thresh, "r": r})
    return HypothesisReport(False, 0.0, tau, case, z, "L^r collar integral never below threshold",
                            values={"collar": v, "threshold": thresh, "r": r})


# ---------------------------------------------------------------------------
# mollification

@dataclass
class Mollification:
    """Mollified density with the cell-level bookkeeping used to build it."""

    density: DensityField
    k: int
    cell_of_node: np.ndarray
    cell_mass: np.ndarray
    cell_area: np.ndarray
    cell_peak: np.ndarray
    submax_fraction: np.ndarray
    bumps: np.ndarray
    floor: float


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _circle_cells(grid, k):
    m = int(math.ceil(2.0 * math.pi * k))
    width = 2.0 * math.pi / m
    theta = grid.angles
    cell = np.minimum((theta / width).astype(int), m - 1)
    lo = cell * width
    dist = np.minimum(theta - lo, lo + width - theta)
    return m, cell, dist, np.full(m, 0.5 * width)


def _circle_atom_cells(dirs, m):
    width = 2.0 * math.pi / m
    ang = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * math.pi)
    return np.minimum((ang / width).astype(int), m - 1)


def _sphere_layout(k):
    step = 1.0 / (k * math.sqrt(2.0))
    nb = int(math.ceil(math.pi / step))
    edges = np.linspace(0.0, math.pi, nb + 1)
    sectors = []
    for b in range(nb):
        a, c = edges[b], edges[b + 1]
        smax = 1.0 if a <= 0.5 * math.pi <= c else max(math.sin(a), math.sin(c))
        sectors.append(max(1, int(math.ceil(2.0 * math.pi * smax / step))))
    offsets = np.concatenate(([0], np.cumsum(sectors)))
    return edges, np.array(sectors), offsets


def _sphere_cell_index(phi, lam, edges, sectors, offsets):
    nb = len(sectors)
    band = np.clip(np.searchsorted(edges, phi, side="right") - 1, 0, nb - 1)
    ms = sectors[band]
    sec = np.minimum((np.mod(lam, 2 * math.pi) / (2 * math.pi / ms)).astype(int), ms - 1)
    return band, sec, offsets[band] + sec


def _sphere_cells(grid, k):
    edges, sectors, offsets = _sphere_layout(k)
    phi, lam = grid.colat_lon()
    band, sec, cell = _sphere_cell_index(phi, lam, edges, sectors, offsets)
    nb = len(sectors)
    ms = sectors[band]
    wl = 2 * math.pi / ms
    lo_l = sec * wl
    d_top = np.where((band == 0) & (ms == 1), np.inf, phi - edges[band])
    d_bot = np.where((band == nb - 1) & (ms == 1), np.inf, edges[band + 1] - phi)
    sp = np.sin(phi)
    d_lon = np.where(ms == 1, np.inf, sp * np.minimum(lam - lo_l, lo_l + wl - lam))
    dist = np.minimum(np.minimum(d_top, d_bot), d_lon)
    height = edges[1] - edges[0]
    cell_half = np.empty(offsets[-1])
    for b in range(nb):
        smid = math.sin(0.5 * (edges[b] + edges[b + 1]))
        wid = smid * 2 * math.pi / sectors[b] if sectors[b] > 1 else math.inf
        cell_half[offsets[b]:offsets[b + 1]] = 0.5 * min(height, wid)
    return int(offsets[-1]), cell, dist, cell_half


def _sphere_atom_cells(dirs, k):
    edges, sectors, offsets = _sphere_layout(k)
    phi = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    lam = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2 * math.pi)
    return _sphere_cell_index(phi, lam, edges, sectors, offsets)[2]


def default_mollify_grid(dim, k):
    """A grid fine enough for cells of diameter 1/k (about 8 nodes per cell width)."""
    if dim == 1:
        need = 8 * int(math.ceil(2 * math.pi * k))
        return make_grid(1, max(256, 1 << int(math.ceil(math.log2(need)))))
    need = 4 * int(math.ceil(2 * math.pi * k * math.sqrt(2.0)))
    return make_grid(2, max(64, 2 * int(math.ceil(need / 2))))


def mollification(mu, k, grid=None, profile="smoothstep", min_nodes=4):
    """Build the mollified density of ``mu`` at level ``k``.

    The sphere is split into cells of diameter at most 1/k. In each cell the
    measure's mass is spread as a bump that vanishes on the cell boundary,
    has a plateau covering all but a fraction < 1/k of the cell, peaks at
    no more than (1 + 1/k) times the cell average and integrates to the
    cell mass. The result is ``(1/k + sum of bumps)`` normalized to mean 1.

    ``profile="flat"`` replaces the bumps by cell averages (a step function).
    """
    k = int(k)
    if k < 2:
        raise ValueError("mollification level k must be at least 2")
    if profile not in ("smoothstep", "flat"):
        raise ValueError(f"unknown bump profile {profile!r}")
    if abs(mu.total_mass - 1.0) > 1e-9:
        mu = mu.normalize()[0]
    if grid is None:
        grid = mu.density.grid if mu.density is not None else default_mollify_grid(mu.dim, k)
    if grid.dim != mu.dim:
        raise ValueError("grid dimension does not match the measure")
    if mu.density is not None and mu.density.grid is not grid and mu.density.grid.size != grid.size:
        raise ValueError("density is sampled on a different grid")
    if grid.dim == 1:
        ncell, cell, dist, half = _circle_cells(grid, k)
        atom_cell = _circle_atom_cells(mu.directions, ncell) if mu.has_atoms else np.zeros(0, int)
    else:
        ncell, cell, dist, half = _sphere_cells(grid, k)
        atom_cell = _sphere_atom_cells(mu.directions, k) if mu.has_atoms else np.zeros(0, int)
    counts = np.bincount(cell, minlength=ncell)
    if counts.min() < min_nodes:
        raise ValueError(f"grid too coarse for k = {k}: some cell holds {counts.min()} nodes "
                         f"(need {min_nodes}); increase the resolution")
    w = grid.weights / grid.omega
    area = np.bincount(cell, weights=w, minlength=ncell)
    mass = np.zeros(ncell)
    if mu.density is not None:
        mass += np.bincount(cell, weights=w * mu.density.f, minlength=ncell)
    if mu.has_atoms:
        mass += np.bincount(atom_cell, weights=mu.masses, minlength=ncell)
    inv_k = 1.0 / k
    if profile == "flat":
        prof = np.ones(grid.size)
    else:
        ramp = 0.9 * half / k
        prof = np.empty(grid.size)
        # shrink each cell's ramp until the two discrete bump bounds hold
        for _ in range(60):
            prof = np.where(np.isfinite(ramp[cell]) & (ramp[cell] > 0),
                            _smoothstep(dist / np.where(ramp[cell] > 0, ramp[cell], 1.0)), 1.0)
            sub = np.bincount(cell, weights=w * (prof < 1.0), minlength=ncell) / area
            integ = np.bincount(cell, weights=w * prof, minlength=ncell)
            bad = (sub >= inv_k) | (integ * (1.0 + inv_k) < area) | (integ <= 0)
            if not bad.any():
                break
            ramp = np.where(bad, 0.5 * ramp, ramp)
            ramp = np.where(ramp < 1e-14, 0.0, ramp)
    integ = np.bincount(cell, weights=w * prof, minlength=ncell)
    sub = np.bincount(cell, weights=w * (prof < 1.0), minlength=ncell) / area
    peak = mass / integ
    bumps = peak[cell] * prof
    raw = inv_k + bumps
    total = float(np.dot(w, raw))
    dens = DensityField(grid, raw / total)
    dens = DensityField(grid, dens.f / dens.mass, normalized=True)
    return Mollification(dens, k, cell, mass, area, peak, sub, bumps, inv_k)


def mollify(mu, k, grid=None, profile="smoothstep"):
    """Smooth positive normalized density approximating ``mu`` (see :func:`mollification`)."""
    return mollification(_as_measure(mu), k, grid, profile).density
