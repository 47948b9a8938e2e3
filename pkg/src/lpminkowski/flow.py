"""Volume-normalized anisotropic Gauss curvature flow on support functions.

The evolution is

    du/dt = -f^a K^a / mean(f^a K^(a-1)) + u,        K = 1 / det(Hess u + u g),

integrated by exponential splitting: the ``+u`` term exactly, the curvature
term by explicit Euler. After each step the body is translated to the
maximizer of the translated entropy (which removes the unstable translation
mode and leaves the entropy unchanged) and dilated back to the unit-ball
volume.
"""

from dataclasses import dataclass, field, astuple, fields
import csv
import logging
import math
import time

import numpy as np

from . import convexbody, entropy, kernels
from .convexbody import SupportField

log = logging.getLogger(__name__)


class FlowError(RuntimeError):
    """Step failure after the allowed number of halvings; carries the last good state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class FlowConfig:
    """Time stepping parameters.

    ``recenter`` is ``"entropy"`` (translate to the entropy maximizer every
    step), ``"centroid"`` (translate to the centroid when min u drops below
    ``u_floor``) or ``"none"``.
    """

    dt_max: float = 1e-2
    dt_init: float = None
    cfl: float = 0.9
    t_max: float = 100.0
    tol: float = 1e-5
    sustain: int = 10
    max_steps: int = 5_000_000
    max_retries: int = 20
    grow_after: int = 5
    grow_factor: float = 1.2
    u_floor: float = 1e-4
    recenter: str = "entropy"
    wall_time: float = None


@dataclass
class StepDiagnostics:
    t: float
    dt: float
    entropy: float
    volume_pre_renorm: float
    diameter: float
    eta: float
    ratio: float
    residual: float
    min_u: float
    min_curv_eig: float
    recenter_flag: int
    volume: float
    entropy_origin_drop: float
    ratio_start: float
    shift: float
    dsigma_mass: float


HISTORY_COLUMNS = tuple(f.name for f in fields(StepDiagnostics))


@dataclass
class FlowState:
    """Current body with the per-node data reused by the next step."""

    t: float
    u: SupportField
    dt: float
    sigma: np.ndarray
    min_eig: np.ndarray
    diag: StepDiagnostics = None
    accepts: int = 0
    halvings: int = 0

    @property
    def grid(self):
        return self.u.grid

    @property
    def curvature(self):
        return 1.0 / self.sigma

    @property
    def dsigma_weights(self):
        """Quadrature weights of ``d sigma = (u / K) d theta``."""
        return self.grid.weights * self.u.u * self.sigma


@dataclass
class FlowRun:
    state: FlowState
    history: list
    status: str
    steps: int
    rejected: int
    recenter_events: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def converged(self):
        return self.status == "converged"

    def column(self, name):
        return np.array([getattr(r, name) for r in self.history])


def _density(f, grid):
    vals = np.asarray(getattr(f, "f", f), dtype=float)
    if vals.shape != (grid.size,):
        raise ValueError("density and support function are sampled on different grids")
    return vals


def _validate_field(u):
    sigma, eig = convexbody.curvature_data(u)
    if np.min(u.u) <= 0.0:
        raise convexbody.NonConvexError("support function is not positive")
    if convexbody.convexity_margin(sigma, eig) <= 0.0:
        raise convexbody.NonConvexError("support function is not strictly convex")
    return sigma, eig


def velocity(u, f, alpha):
    """Right-hand side ``-f^a K^a / mean(f^a K^(a-1)) + u`` at each node."""
    grid = u.grid
    entropy.check_alpha(alpha, grid.dim)
    sigma, _ = _validate_field(u)
    fa = np.power(_density(f, grid), alpha)
    F, m, _ = kernels.flow_terms(sigma, fa, grid.weights, alpha, grid.omega)
    if not m > 0.0:
        raise ValueError("normalizing mean of the flow speed is not positive")
    return u.u - F


def stable_dt(grid, sigma, F, alpha, comps=None, cfl=0.9):
    """Explicit stability limit for the curvature term (Gershgorin bound)."""
    ratio = F / sigma
    if grid.dim == 1:
        return cfl * 2.0 / (alpha * float(np.max(ratio)) * 4.0 * grid.inv_c2)
    h11, h12, h22 = comps
    sp = grid.extras["sin_phi"]
    lat = np.repeat(np.abs(grid.d2).sum(axis=1), grid.nlon)
    lon = np.repeat(4.0 * grid.inv_c2 / sp ** 2, grid.nlon)
    rate = alpha * ratio * (np.abs(h22) * lat + np.abs(h11) * lon)
    return cfl * 2.0 / float(np.max(rate))


def _curvature(grid, u):
    comps = convexbody.spheregrid.hessian_components(grid, u)
    if grid.dim == 1:
        return comps[0], comps[0], comps
    h11, h12, h22 = comps
    det = h11 * h22 - h12 * h12
    disc = np.sqrt(0.25 * (h11 - h22) ** 2 + h12 * h12)
    return det, 0.5 * (h11 + h22) - disc, comps


def _diagnostics(grid, u, sigma, eig, fv, alpha):
    eta, ratio, res, mass = kernels.dsigma_stats(u, sigma, fv, grid.weights, alpha, grid.omega)
    return eta, ratio, res, mass


def eta(state, f, alpha):
    """Mean of ``h = f u^(-1/a) K`` against ``d sigma``, which is ``mean(f u^(1 - 1/a))``."""
    if np.min(state.u.u) <= 0.0:
        raise ValueError("min u must be positive")
    fv = _density(f, state.grid)
    return _diagnostics(state.grid, state.u.u, state.sigma, state.min_eig, fv, alpha)[0]


def dissipation_ratio(state, f, alpha):
    """``M(h^(a+1)) / (M(h) M(h^a))`` with ``M`` the normalized ``d sigma`` average."""
    if np.min(state.u.u) <= 0.0:
        raise ValueError("min u must be positive")
    fv = _density(f, state.grid)
    return _diagnostics(state.grid, state.u.u, state.sigma, state.min_eig, fv, alpha)[1]


def residual(state, f, alpha):
    """``mean |u^(1/a) sigma - f / eta|``; zero exactly at solutions of the rescaled equation."""
    if np.min(state.u.u) <= 0.0:
        raise ValueError("min u must be positive")
    fv = _density(f, state.grid)
    return _diagnostics(state.grid, state.u.u, state.sigma, state.min_eig, fv, alpha)[2]


def initial_state(u, f, alpha, config=None):
    """Volume-normalize ``u`` (after centring it for the entropy) and build a state."""
    config = config or FlowConfig()
    grid = u.grid
    entropy.check_alpha(alpha, grid.dim)
    fv = _density(f, grid)
    _validate_field(u)
    flag = 0
    shift = 0.0
    if config.recenter == "entropy":
        res = entropy.entropy(u, fv, alpha)
        shift = float(np.linalg.norm(res.z_star))
        if shift > 0.0:
            u = convexbody.recenter(u, res.z_star)
            flag = 1
    u = convexbody.normalize_volume(u)
    sigma, eig, comps = _curvature(grid, u.u)
    fa = np.power(fv, alpha)
    F, m, _ = kernels.flow_terms(sigma, fa, grid.weights, alpha, grid.omega)
    if config.dt_init is not None:
        dt = config.dt_init
    else:
        dt = 1e-3 * float(np.min(sigma)) / float(np.max(fa * sigma ** -alpha))
    dt = min(dt, config.dt_max)
    E = entropy.entropy_at(u, fv, alpha)
    eta_, ratio, res, mass = _diagnostics(grid, u.u, sigma, eig, fv, alpha)
    vol = convexbody.volume_unchecked(u, sigma)
    diag = StepDiagnostics(0.0, 0.0, E, vol, convexbody.diameter(u), eta_, ratio, res,
                           float(np.min(u.u)), float(np.min(eig)), flag, vol, 0.0, ratio,
                           shift, mass)
    return FlowState(0.0, u, dt, sigma, eig, diag)


def _trial(grid, u, F, dt):
    """Explicit split update; returns ``(u_new, sigma, eig, sum w u sigma)`` or None."""
    if grid.dim == 1:
        un, sigma, umin, smin, smax, vs = kernels.split_step_1d(u, F, dt, grid.inv_c2,
                                                                grid.weights)
        if umin <= 0.0 or smin - convexbody.CONVEXITY_RTOL * smax <= 0.0:
            return None
        return un, sigma, sigma, vs
    un = math.exp(dt) * u - dt * F
    if np.min(un) <= 0.0:
        return None
    sigma, eig, _ = _curvature(grid, un)
    if convexbody.convexity_margin(sigma, eig) <= 0.0:
        return None
    return un, sigma, eig, float(np.dot(grid.weights, un * sigma))


def step(state, f, alpha, config=None, dt=None, fa=None):
    """Advance one accepted step.

    With ``dt`` given the step size is fixed (no halving, no growth and no
    stability cap); otherwise the adaptive rules apply. ``fa`` may carry a
    precomputed ``f**alpha``. Returns the new state; raises
    :class:`FlowError` when no admissible step is found.
    """
    config = config or FlowConfig()
    grid = state.grid
    fv = _density(f, grid)
    if fa is None:
        fa = np.power(fv, alpha)
    n = grid.dim
    u = state.u.u
    F, m, _ = kernels.flow_terms(state.sigma, fa, grid.weights, alpha, grid.omega)
    fixed = dt is not None
    halvings = 0
    if fixed:
        h = dt
        trial = _trial(grid, u, F, h)
        if trial is None:
            raise FlowError(f"fixed step dt = {h:g} is not admissible", state)
    else:
        if grid.dim == 1:
            cap = stable_dt(grid, state.sigma, F, alpha, cfl=config.cfl)
        else:
            comps0 = convexbody.spheregrid.hessian_components(grid, u)
            cap = stable_dt(grid, state.sigma, F, alpha, comps0, cfl=config.cfl)
        h = min(state.dt, cap, config.dt_max)
        trial = None
        halvings = 0
        for _ in range(config.max_retries + 1):
            trial = _trial(grid, u, F, h)
            if trial is not None:
                break
            h *= 0.5
            halvings += 1
        if trial is None:
            raise FlowError(f"no admissible step after {config.max_retries} halvings "
                            f"at t = {state.t:.6g}", state)
    un, sigma, eig, vsum = trial
    vol_pre = vsum / (n + 1)
    q, logb = entropy.exponent(alpha)
    flag = 0
    shift = 0.0
    z0 = np.zeros(n + 1)
    if config.recenter == "entropy":
        z, e_sup, e_origin, _, conv = kernels.entropy_newton(
            un, fv, grid.nodes, grid.weights, grid.omega, q, logb, z0,
            entropy.MAX_ITER, entropy.GRAD_TOL)
        if not conv:
            res = entropy.entropy(SupportField(grid, un), fv, alpha, start=z0)
            z, e_sup = res.z_star, res.value
        shift = float(np.sqrt(np.dot(z, z)))
        if shift > 0.0:
            un = un - grid.nodes @ z
            sigma, eig, _ = _curvature(grid, un)
            flag = 1
    else:
        e_origin = entropy.entropy_at(SupportField(grid, un), fv, alpha)
        e_sup = e_origin
        if config.recenter == "centroid" and np.min(un) < config.u_floor:
            zc = convexbody.centroid(SupportField(grid, un))
            un = un - grid.nodes @ zc
            sigma, eig, _ = _curvature(grid, un)
            shift = float(np.linalg.norm(zc))
            e_sup = entropy.entropy_at(SupportField(grid, un), fv, alpha)
            flag = 1
            log.info("recentered at centroid at t = %.6g (shift %.3g)", state.t + h, shift)
    vol = float(np.dot(grid.weights, un * sigma)) / (n + 1)
    c = (convexbody.ball_volume(n) / vol) ** (1.0 / (n + 1))
    un = c * un
    sigma = sigma * c ** n
    eig = eig * c
    logc = math.log(c)
    new_u = SupportField(grid, un)
    eta_, ratio, res, mass = _diagnostics(grid, un, sigma, eig, fv, alpha)
    vol_post = float(np.dot(grid.weights, un * sigma)) / (n + 1)
    prev = state.diag
    diag = StepDiagnostics(
        t=state.t + h, dt=h, entropy=e_sup + logc, volume_pre_renorm=vol_pre,
        diameter=float(np.max(un + un[grid.antipode])), eta=eta_, ratio=ratio, residual=res,
        min_u=float(np.min(un)), min_curv_eig=float(np.min(eig)), recenter_flag=flag,
        volume=vol_post, entropy_origin_drop=(prev.entropy - (e_origin + logc)) if prev else math.nan,
        ratio_start=prev.ratio if prev else math.nan, shift=shift, dsigma_mass=mass)
    accepts = state.accepts + 1
    next_dt = h
    if not fixed:
        if halvings:
            accepts = 0
        if accepts >= config.grow_after:
            next_dt = min(h * config.grow_factor, config.dt_max)
            accepts = 0
    return FlowState(state.t + h, new_u, next_dt, sigma, eig, diag, accepts, halvings)


def run(u0, f, alpha, config=None, callback=None):
    """Integrate from ``u0`` until the residual stays below ``tol``.

    ``u0`` is a :class:`SupportField` (a fresh start) or a :class:`FlowState`
    to resume from; a resumed run's history starts with that state.

    Stops on ``sustain`` consecutive accepted steps with residual at most
    ``tol`` (status ``"converged"``), on reaching ``t_max`` or ``max_steps``
    (status ``"t_max"``/``"max_steps"``), on running out of wall time
    (``"wall_time"``) or on a step failure (``"failed"``).
    """
    config = config or FlowConfig()
    start = time.perf_counter()
    if isinstance(u0, FlowState):
        state = u0
    else:
        state = initial_state(u0, f, alpha, config)
    fv = _density(f, state.grid)
    fa = np.power(fv, alpha)
    history = [state.diag]
    events = []
    if state.diag.recenter_flag:
        events.append((0.0, state.diag.shift))
    below = 1 if state.diag.residual <= config.tol else 0
    status = "t_max"
    steps = 0
    rejected = 0
    while True:
        if below >= config.sustain:
            status = "converged"
            break
        if state.t >= config.t_max:
            status = "t_max"
            break
        if steps >= config.max_steps:
            status = "max_steps"
            break
        if config.wall_time is not None and time.perf_counter() - start > config.wall_time:
            status = "wall_time"
            break
        try:
            nxt = step(state, fv, alpha, config, fa=fa)
        except FlowError as exc:
            log.warning("flow failed: %s", exc)
            status = "failed"
            break
        rejected += nxt.halvings
        state = nxt
        steps += 1
        history.append(state.diag)
        if state.diag.recenter_flag and config.recenter != "entropy":
            events.append((state.t, state.diag.shift))
        below = below + 1 if state.diag.residual <= config.tol else 0
        if callback is not None:
            callback(state)
    wall = time.perf_counter() - start
    log.info("flow %s after %d steps, t = %.6g, residual %.3g (%.2fs)",
             status, steps, state.t, state.diag.residual, wall)
    return FlowRun(state, history, status, steps, rejected, events, wall)


def write_history_csv(history, path):
    """Write one row per accepted step with the columns of :data:`HISTORY_COLUMNS`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow([_fmt(v) for v in astuple(row)])


def read_history_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return {c: data[:, i] for i, c in enumerate(cols)}


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))
