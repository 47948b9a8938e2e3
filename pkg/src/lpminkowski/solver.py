"""End-to-end solves: hypothesis check, mollification, flow, rescaling, verification.

The input measure is normalized to a probability measure first. The flow
then produces a volume-normalized body whose support function ``u`` solves
``u^(1/a) sigma = f / eta``; dilating by ``c = eta^(a/(n a + 1))`` turns it
into a solution of ``u^(1/a) det(Hess u + u g) = f``.
"""

from dataclasses import dataclass, field, asdict, replace
import json
import logging
import math
from pathlib import Path

import numpy as np

from . import convexbody, entropy, flow, measures, spheregrid
from .convexbody import SupportField
from .measures import DensityField, MeasureSpec

log = logging.getLogger(__name__)

MASS_RTOL = 1e-6
LAMBDA_SLACK = 0.05
MASS_REFINEMENTS = 3


class SolveError(RuntimeError):
    """Base class for solve failures; ``report`` holds whatever was computed."""

    exit_code = 1

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class HypothesisViolation(SolveError):
    exit_code = 2


class FlowFailure(SolveError):
    exit_code = 3


class VerificationFailure(SolveError):
    exit_code = 4


@dataclass
class SolveConfig:
    """Parameters of a solve.

    Exactly one source is used, in this order of precedence:
    ``density_values`` (array on the grid, or a callable taking the grid),
    ``measure`` (a :class:`MeasureSpec` or a measure-file path) and
    ``density`` (a builtin name or ``"csv:PATH"``).
    """

    dim: int = 1
    alpha: float = 1.0
    density: str = "uniform"
    measure: object = None
    density_values: object = None
    resolution: int = 256
    mollify: int = 0
    dt_max: float = 1e-2
    t_max: float = 100.0
    tol: float = 1e-5
    out_dir: str = None
    seed: int = 0
    initial: str = "ball"
    cfl: float = 0.9
    retry: bool = True
    check: bool = True
    wall_time: float = None
    min_resolution: int = 64

    def validate(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        entropy.check_alpha(self.alpha, self.dim)
        if self.resolution < self.min_resolution:
            raise ValueError(f"resolution must be at least {self.min_resolution} for solves")
        if self.mollify < 0 or self.mollify == 1:
            raise ValueError("mollify must be 0 (off) or at least 2")
        if not (self.tol > 0 and self.t_max > 0 and self.dt_max > 0):
            raise ValueError("tol, t_max and dt_max must be positive")


@dataclass
class VerificationReport:
    passed: bool
    residual: float
    tol: float
    lp_mass: float
    lp_mass_target: float
    lp_mass_rel_error: float
    weak_residuals: list

    def as_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    final: SupportField
    lambda_: float
    eta_final: float
    residual_final: float
    entropy_certificate: dict
    histories: dict
    hypothesis: dict
    recenter_events: list
    verification: VerificationReport = None
    status: str = ""
    flow_status: str = ""
    mass_scale: float = 1.0
    unnormalized_scale: float = 1.0
    lambda_bound: dict = None
    resolution: int = 0
    steps: int = 0
    t_final: float = 0.0
    wall_time: float = 0.0
    density: DensityField = None
    flow_body: SupportField = None
    run: object = field(default=None, repr=False)

    @property
    def unnormalized_solution(self):
        """Solution for the measure before normalization (``c_s^(n + 1/a) = mass``)."""
        return convexbody.rescale(self.final, self.unnormalized_scale)

    def as_dict(self):
        u = self.final
        return {
            "status": self.status,
            "flow_status": self.flow_status,
            "dim": u.dim,
            "resolution": self.resolution,
            "lambda": self.lambda_,
            "eta_final": self.eta_final,
            "residual_final": self.residual_final,
            "entropy_certificate": self.entropy_certificate,
            "hypothesis": self.hypothesis,
            "recenter_events": self.recenter_events,
            "verification": self.verification.as_dict() if self.verification else None,
            "mass_scale": self.mass_scale,
            "unnormalized_scale": self.unnormalized_scale,
            "lambda_bound": self.lambda_bound,
            "steps": self.steps,
            "t_final": self.t_final,
            "wall_time": self.wall_time,
            "histories": self.histories,
            "final_min_u": float(np.min(u.u)),
            "final_max_u": float(np.max(u.u)),
            "final_volume": convexbody.volume_unchecked(u),
            "final_diameter": convexbody.diameter(u),
        }


def rescale_to_solution(u, eta, alpha):
    """Dilate a flow limit into a solution of the unscaled equation.

    Returns ``(c u, lambda)`` with ``c = eta^(a/(n a + 1))`` (so that
    ``c^(n + 1/a) = eta``) and ``lambda = 1/c``, the factor that brings the
    solution back to the unit-ball volume.
    """
    if not eta > 0.0:
        raise ValueError(f"eta must be positive, got {eta}")
    n = u.dim
    c = eta ** (alpha / (n * alpha + 1.0))
    return convexbody.rescale(u, c), 1.0 / c


def _harmonics(grid):
    x = grid.nodes
    return [np.ones(grid.size)] + [x[:, i] for i in range(grid.dim + 1)]


def verify_solution(u, f, alpha, tol):
    """Check ``u^(1/a) det(Hess u + u g) = f`` for a sampled solution.

    Computes the L1 residual, the L_p mass identity
    ``sum w u^(1/a) sigma = omega * mean(f)`` and weak residuals against the
    constants and linear functions. Passes when the residual is at most
    ``tol`` and the mass identity holds to 1e-6 relative.
    """
    grid = u.grid
    fv = np.asarray(getattr(f, "f", f), dtype=float)
    sigma, _ = convexbody.curvature_data(u)
    lhs = np.power(u.u, 1.0 / alpha) * sigma
    diff = lhs - fv
    res = spheregrid.mean(grid, np.abs(diff))
    target = grid.omega * spheregrid.mean(grid, fv)
    mass = spheregrid.integrate(grid, lhs)
    rel = abs(mass - target) / target
    weak = [float(spheregrid.mean(grid, phi * diff)) for phi in _harmonics(grid)]
    passed = bool(res <= tol and rel <= MASS_RTOL and np.min(u.u) > 0)
    return VerificationReport(passed, float(res), float(tol), float(mass), float(target),
                              float(rel), weak)


def lambda_upper_bound(alpha, dim):
    """Explicit bound ``2^(|p|/(|p| + n))`` on lambda for 1/(n+2) < alpha < 1."""
    p = abs(1.0 - 1.0 / alpha)
    return 2.0 ** (p / (p + dim))


# ---------------------------------------------------------------------------

def _source_measure(config, grid):
    """Resolve the configured source into a (raw) measure sampled on ``grid``."""
    if config.density_values is not None:
        src = config.density_values
        vals = src(grid) if callable(src) else np.asarray(src, dtype=float)
        return MeasureSpec.from_density(DensityField(grid, vals)), True
    if config.measure is not None:
        if isinstance(config.measure, MeasureSpec):
            mu = config.measure
            if mu.density is not None and mu.density.grid.size != grid.size:
                raise ValueError("measure density is sampled on a different grid than the solve")
            return mu, mu.density is None
        mu = measures.parse_measure_file(config.measure, resolution=config.resolution,
                                         dim=config.dim)
        if mu.dim != config.dim:
            raise ValueError(f"measure file is {mu.dim}-dimensional, solve is {config.dim}")
        if mu.density is not None and mu.density.grid.size != grid.size:
            raise ValueError("measure density grid does not match the solve resolution")
        resample = mu.density is None or not _density_is_file(config.measure)
        if mu.density is not None:
            mu = MeasureSpec(mu.dim, mu.directions, mu.masses, DensityField(grid, mu.density.f))
        return mu, resample
    name = config.density or "uniform"
    if name.startswith("csv:"):
        vals = measures.read_grid_csv(name[4:])
        if vals.size != grid.size:
            raise ValueError(f"density file has {vals.size} values, grid has {grid.size} nodes")
        return MeasureSpec.from_density(DensityField(grid, vals)), False
    return MeasureSpec.from_density(DensityField(grid, measures.builtin_density(name, grid))), True


def _density_is_file(path):
    try:
        text = Path(path).read_text()
    except (OSError, TypeError):
        return False
    return "grid-csv" in text


def _initial_body(config, grid):
    spec = config.initial or "ball"
    if spec == "ball":
        return convexbody.ball(grid)
    if spec.startswith("ellipse"):
        _, _, ratio = spec.partition(":")
        ratio = float(ratio or 2.0)
        axes = [ratio] + [1.0] * grid.dim
        return convexbody.ellipsoid(grid, axes)
    raise ValueError(f"unknown initial body {spec!r}")


def _entropy_trace(run):
    return [(r.t, r.entropy, r.shift) for r in run.history]


def _write_outputs(report, run, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hist = out / "history.csv"
    flow.write_history_csv(run.history, hist)
    trace = out / "entropy_trace.csv"
    with open(trace, "w") as fh:
        fh.write("t,entropy,shift\n")
        for t, e, s in _entropy_trace(run):
            fh.write(f"{t!r},{e!r},{s!r}\n")
    geom = out / ("body.csv" if report.final.dim == 1 else "body.obj")
    convexbody.write_geometry(report.final, geom)
    report.histories = {"history": str(hist), "entropy_trace": str(trace), "geometry": str(geom)}
    with open(out / "report.json", "w") as fh:
        json.dump(_jsonable(report.as_dict()), fh, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _rescale_and_verify(run, dens, config):
    sol, lam = rescale_to_solution(run.state.u, run.state.diag.eta, config.alpha)
    return sol, lam, verify_solution(sol, dens, config.alpha, 10.0 * config.tol)


def _solve_once(config, grid):
    mu_raw, resample = _source_measure(config, grid)
    mu, mass_scale = mu_raw.normalize()
    hyp = None
    if config.check:
        hyp = measures.check_hypothesis(mu, config.alpha, seed=config.seed)
        log.info("hypothesis case %s: ok=%s delta=%.4g tau=%.4g (%s)",
                 hyp.case, hyp.ok, hyp.delta, hyp.tau, hyp.detail)
        if not hyp.ok:
            raise HypothesisViolation(f"solvability condition fails: {hyp.detail}",
                                      {"hypothesis": hyp.as_dict()})
    if mu.has_atoms or config.mollify > 0:
        k = config.mollify
        if k < 2:
            raise ValueError("measures with atoms need a mollification level k >= 2")
        dens = measures.mollify(mu, k, grid=grid)
    else:
        dens = mu.density.normalize()[0]
    u0 = _initial_body(config, grid)
    fcfg = flow.FlowConfig(dt_max=config.dt_max, t_max=config.t_max, tol=config.tol,
                           cfl=config.cfl, wall_time=config.wall_time)
    initial_entropy = entropy.entropy(u0, dens, config.alpha).value
    run = flow.run(u0, dens, config.alpha, fcfg)
    if run.status == "failed":
        raise FlowFailure(f"flow failed at t = {run.state.t:.6g}",
                          {"hypothesis": hyp.as_dict() if hyp else None,
                           "t": run.state.t, "steps": run.steps})
    sol, lam, ver = _rescale_and_verify(run, dens, config)
    # the mass identity is exact only in the limit; tighten the stopping
    # tolerance when it is the only thing left failing
    tol = config.tol
    for _ in range(MASS_REFINEMENTS):
        if ver.passed or ver.residual > ver.tol or run.status != "converged":
            break
        tol /= 10.0
        log.info("mass identity off by %.3g; continuing the flow to tol %.1e",
                 ver.lp_mass_rel_error, tol)
        more = flow.run(run.state, dens, config.alpha, replace(fcfg, tol=tol))
        run = flow.FlowRun(more.state, run.history + more.history[1:], more.status,
                           run.steps + more.steps, run.rejected + more.rejected,
                           run.recenter_events + more.recenter_events,
                           run.wall_time + more.wall_time)
        if run.status == "failed":
            raise FlowFailure(f"flow failed at t = {run.state.t:.6g}",
                              {"hypothesis": hyp.as_dict() if hyp else None,
                               "t": run.state.t, "steps": run.steps})
        sol, lam, ver = _rescale_and_verify(run, dens, config)
    state = run.state
    body = state.u
    eta_final = state.diag.eta
    e_body = entropy.entropy(body, dens, config.alpha).value
    e_ball = entropy.entropy(convexbody.ball(grid), dens, config.alpha).value
    cert = {"entropy_body": e_body, "entropy_ball": e_ball, "entropy_initial": initial_entropy,
            "holds": bool(e_body <= e_ball + 1e-6)}
    n = grid.dim
    lam_bound = None
    if config.alpha < 1.0:
        b = lambda_upper_bound(config.alpha, n)
        lam_bound = {"lambda": lam, "bound": b, "holds": bool(lam <= b * (1 + LAMBDA_SLACK))}
        log.info("lambda = %.6g, explicit bound %.6g", lam, b)
    unnorm = mass_scale ** (config.alpha / (n * config.alpha + 1.0))
    report = SolveReport(
        final=sol, lambda_=lam, eta_final=eta_final, residual_final=ver.residual,
        entropy_certificate=cert, histories={},
        hypothesis=hyp.as_dict() if hyp else {"checked": False},
        recenter_events=[list(e) for e in run.recenter_events], verification=ver,
        status="ok" if ver.passed else "verification_failed", flow_status=run.status,
        mass_scale=mass_scale, unnormalized_scale=unnorm, lambda_bound=lam_bound,
        resolution=config.resolution, steps=run.steps, t_final=state.t,
        wall_time=run.wall_time, density=dens, flow_body=body, run=run)
    return report, resample


def solve(config):
    """Run the full pipeline for ``config`` and return a :class:`SolveReport`.

    Raises :class:`HypothesisViolation`, :class:`FlowFailure` or
    :class:`VerificationFailure`; the latter carries the report.
    """
    config.validate()
    grid = spheregrid.make_grid(config.dim, config.resolution)
    report, resample = _solve_once(config, grid)
    if not report.verification.passed and config.retry and resample:
        log.warning("verification failed (residual %.3g, mass error %.3g); retrying at "
                    "resolution %d", report.verification.residual,
                    report.verification.lp_mass_rel_error, 2 * config.resolution)
        cfg2 = replace(config, resolution=2 * config.resolution)
        grid2 = spheregrid.make_grid(config.dim, cfg2.resolution)
        report, _ = _solve_once(cfg2, grid2)
    if config.out_dir:
        _write_outputs(report, report.run, config.out_dir)
    if not report.verification.passed:
        raise VerificationFailure(
            f"verification failed: residual {report.verification.residual:.3g} "
            f"(tol {report.verification.tol:.3g}), mass error "
            f"{report.verification.lp_mass_rel_error:.3g}", report)
    return report
