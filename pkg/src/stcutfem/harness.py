"""Benchmark driver: example setup, time stepping, diagnostics and error norms."""
from __future__ import annotations

import json
import logging
import math
import time as _time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import exact
from .cutgeom import CUT, OUTSIDE, CutGeometry, build_slab_sets, cut_geometry
from .forms import CouplingModel, SlabSystem, TransportParameters, mass_functional
from .levelset import (
    LevelSetAdvector,
    LevelSetField,
    VelocityField,
    analytic_levelset,
    ex2_field,
    ex3_field,
    ex4_field,
    init_circle,
    rotation_field,
)
from .mesh import Mesh, barycentric, build_uniform_mesh, locate_point, refine_uniform
from .quadrature import time_quadrature
from .slabspace import SlabFunction, Trace, build_slab_space
from .solver import NewtonConfig, SolverError, estimate_condition, newton_solve

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "SimulationError",
    "SimulationConfig",
    "Problem",
    "Snapshot",
    "RunResult",
    "ErrorReport",
    "setup_problem",
    "centered_drop_problem",
    "run_simulation",
    "compute_errors",
    "convergence_table",
    "temporal_convergence",
    "track_mass",
    "track_area",
    "condition_trace",
]


class ConfigError(ValueError):
    pass


class SimulationError(RuntimeError):
    def __init__(self, slab: int, cause: Exception):
        super().__init__(f"slab {slab}: {type(cause).__name__}: {cause}")
        self.slab = slab
        self.cause = cause


@dataclass
class SimulationConfig:
    """Run configuration; ``None`` fields take the example's default."""

    example: int = 1
    nx: int | None = None
    ny: int | None = None
    k_ratio: float | None = None
    t_end: float | None = None
    time_quadrature: str = "simpson"
    coupling: str | None = None
    frumkin_a: float = 1.0
    conserve_mass: bool = True
    levelset: str = "advected"
    tau_b: float = 1e-2
    tau_s: float = 1e-2
    t_eval: float = 0.5
    out: str | None = None
    condition: bool = False
    export_every: int = 0
    newton_tol: float = 1e-10
    newton_max_iters: int = 25

    def __post_init__(self):
        if self.time_quadrature not in ("trapezoid", "simpson"):
            raise ConfigError(f"unknown time quadrature {self.time_quadrature!r}")
        if self.levelset not in ("advected", "analytic"):
            raise ConfigError(f"unknown level set source {self.levelset!r}")
        if self.coupling not in (None, "langmuir", "henry", "frumkin"):
            raise ConfigError(f"unknown coupling {self.coupling!r}")
        for name in ("k_ratio", "t_end"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")
        if min(self.tau_b, self.tau_s) < 0:
            raise ConfigError("stabilization parameters must be nonnegative")

    @classmethod
    def from_file(cls, path, **overrides) -> SimulationConfig:
        """Load a JSON object whose keys mirror the command line flags."""
        data = json.loads(Path(path).read_text())
        data = {k.replace("-", "_"): v for k, v in data.items()}
        if isinstance(data.get("conserve_mass"), str):
            data["conserve_mass"] = data["conserve_mass"] == "on"
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class Problem:
    """Everything example-specific that the time stepper needs."""

    name: str
    box: tuple
    nx: int
    ny: int
    k_ratio: float
    t_end: float
    params: TransportParameters
    levelset0: Callable[[Mesh], LevelSetField]
    uB0: Callable | None
    uS0: Callable
    analytic: Callable[[Mesh, float], LevelSetField] | None = None
    mass_target: Callable[[float], float] | None = None
    exact_bulk: Callable | None = None
    exact_surface: Callable | None = None


def _coupling_for(cfg: SimulationConfig, alpha: float, biot: float) -> CouplingModel:
    kind = cfg.coupling or "langmuir"
    if kind == "langmuir":
        return CouplingModel.nondimensional(alpha, biot)
    if kind == "henry":
        return CouplingModel("henry", alpha, biot, 0.0)
    return CouplingModel("frumkin", alpha, biot, alpha, cfg.frumkin_a)


def setup_problem(cfg: SimulationConfig) -> Problem:
    quad = cfg.time_quadrature
    stab = dict(tau_B=cfg.tau_b, tau_S=cfg.tau_s, quadrature=quad)
    ex = cfg.example
    if ex == 1:
        if cfg.coupling not in (None, "langmuir"):
            raise ConfigError("the manufactured solution of example 1 requires Langmuir coupling")
        params = TransportParameters(
            rotation_field(),
            exact.K_B,
            exact.K_S,
            CouplingModel("langmuir", 1.0, 1.0, 1.0),
            f_B=exact.f_bulk,
            f_S=exact.f_surface,
            **stab,
        )
        return Problem(
            "rotating drop, manufactured solution",
            (0.0, 1.0, 0.0, 1.0),
            40,
            40,
            0.5,
            0.5,
            params,
            lambda m: init_circle(m, exact.center(0.0), exact.RADIUS),
            lambda x, y: exact.u_bulk(0.0, x, y),
            lambda x, y: exact.u_surface(0.0, x, y),
            analytic=lambda m, t: analytic_levelset(1, m, t),
            mass_target=exact.exact_mass,
            exact_bulk=exact.u_bulk,
            exact_surface=exact.u_surface,
        )
    if ex == 2:
        params = TransportParameters(ex2_field(), 0.0, 1.0, CouplingModel("henry", 0.0, 0.0, 0.0), bulk=False, **stab)
        return Problem(
            "insoluble surfactant in shear flow",
            (-2.0, 6.4, -2.0, 2.0),
            147,
            70,
            1.0 / 8.0,
            2.0,
            params,
            lambda m: init_circle(m, (0.0, 0.0), 1.0),
            None,
            lambda x, y: y / 1.0 + 2.0,
            analytic=lambda m, t: analytic_levelset(2, m, t),
        )
    if ex == 3:
        params = TransportParameters(
            ex3_field(), 1.0, 1.0 / 10.0, _coupling_for(cfg, 1.0, 1.0), damkohler=0.2, **stab
        )
        return Problem(
            "soluble surfactant in linear shear",
            (-1.0, 1.0, 0.0, 2.0),
            50,
            50,
            0.625,
            0.5,
            params,
            lambda m: init_circle(m, (0.0, 1.0), 0.5),
            lambda x, y: np.full(np.shape(x), 2.0 / 3.0),
            lambda x, y: np.full(np.shape(x), 0.4),
            analytic=lambda m, t: analytic_levelset(3, m, t),
        )
    if ex == 4:
        r0, x0, y0 = 0.3, 0.1, 0.0

        def uB0(x, y):
            r = np.hypot(x - x0, y - y0)
            base = 0.5 * (1.0 - x**2) ** 2
            w = 0.5 * (1.0 - np.cos((r - r0) * np.pi / (0.5 * r0)))
            return np.where(r > 1.5 * r0, base, np.where(r >= r0, base * w, 0.0))

        params = TransportParameters(
            ex4_field(), 1.0 / 100.0, 1.0 / 100.0, _coupling_for(cfg, 1.0, 1.0), damkohler=1.0, **stab
        )
        return Problem(
            "soluble surfactant in a vortex",
            (-1.0, 1.0, -1.0, 1.0),
            64,
            64,
            1.0 / 8.0,
            2.0,
            params,
            lambda m: init_circle(m, (x0, y0), r0),
            uB0,
            lambda x, y: np.zeros(np.shape(x)),
        )
    raise ConfigError(f"unknown example {ex}")


def centered_drop_problem(cfg: SimulationConfig) -> Problem:
    """Example 1 with the drop on the rotation axis.

    The interface is stationary as a set while the fields rotate, so the
    active patches do not change with the step size. Used to study the time
    discretization in isolation.
    """
    uB, uS, fB, fS = exact.centered_solution()
    params = TransportParameters(
        rotation_field(),
        exact.K_B,
        exact.K_S,
        CouplingModel("langmuir", 1.0, 1.0, 1.0),
        f_B=fB,
        f_S=fS,
        tau_B=cfg.tau_b,
        tau_S=cfg.tau_s,
        quadrature=cfg.time_quadrature,
    )
    center = (0.5, 0.5)
    return Problem(
        "drop on the rotation axis, manufactured solution",
        (0.0, 1.0, 0.0, 1.0),
        40,
        40,
        0.5,
        0.5,
        params,
        lambda m: init_circle(m, center, exact.RADIUS),
        lambda x, y: uB(0.0, x, y),
        lambda x, y: uS(0.0, x, y),
        analytic=lambda m, t: init_circle(m, center, exact.RADIUS, time=t),
        exact_bulk=uB,
        exact_surface=uS,
    )


# -- run -----------------------------------------------------------------------


@dataclass(eq=False)
class Snapshot:
    """Solution trace ``u(t_n^-)`` with the geometry at ``t_n``."""

    time: float
    geom: CutGeometry
    bulk: np.ndarray | None
    surface: np.ndarray


@dataclass
class SlabRecord:
    slab: int
    t: float
    newton_iterations: int
    update_norms: list
    linear_residuals: list
    kappa: float | None
    mass: float
    rel_mass_error: float
    area: float
    rel_area_change: float
    n_bulk: int
    n_surface: int
    seconds: float


@dataclass(eq=False)
class RunResult:
    config: SimulationConfig
    problem: Problem
    mesh: Mesh
    h: float
    k: float
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    initial_mass: float = 0.0
    initial_area: float = 0.0
    final: Snapshot | None = None

    def snapshot_at(self, t: float) -> Snapshot:
        for ts, snap in self.snapshots.items():
            if abs(ts - t) <= 1e-9 * max(1.0, abs(t)):
                return snap
        raise ConfigError(f"no solution stored at t={t}; stored times: {sorted(self.snapshots)}")


def _initial_trace(problem: Problem, geom: CutGeometry, mesh: Mesh) -> Trace:
    nv = mesh.n_vertices
    tri = mesh.triangles
    v = mesh.vertices
    bulk = np.full(nv, np.nan)
    surf = np.full(nv, np.nan)
    if problem.params.bulk:
        nodes = np.unique(tri[geom.classification != OUTSIDE])
        bulk[nodes] = problem.uB0(v[nodes, 0], v[nodes, 1])
    nodes = np.unique(tri[geom.classification == CUT])
    surf[nodes] = problem.uS0(v[nodes, 0], v[nodes, 1])
    return Trace(bulk, surf, geom.time)


class _GeometrySource:
    """Level sets and cut geometries at the times the slabs need."""

    def __init__(self, problem: Problem, mesh: Mesh, fine: Mesh, mode: str):
        self.problem = problem
        self.mesh = mesh
        self.fine = fine
        self.mode = mode
        if mode == "analytic" and problem.analytic is None:
            raise ConfigError(f"no analytic interface motion for {problem.name}")
        self.rho = problem.levelset0(fine) if mode == "advected" else problem.analytic(fine, 0.0)
        self.advector = LevelSetAdvector(fine, problem.params.beta) if mode == "advected" else None
        self.cache: dict = {}

    def levelset(self) -> LevelSetField:
        return self.rho

    def geometry(self, t: float) -> CutGeometry:
        key = round(t, 12)
        g = self.cache.get(key)
        if g is None:
            if self.mode == "analytic":
                rho = self.problem.analytic(self.fine, t)
            else:
                if abs(self.rho.time - t) > 1e-12 * max(1.0, abs(t)):
                    self.rho = self.advector.step(self.rho, t - self.rho.time)
                rho = self.rho
            g = cut_geometry(rho, self.mesh)
            self.cache[key] = g
        return g

    def forget_before(self, t: float) -> None:
        for key in [k for k in self.cache if k < round(t, 12)]:
            del self.cache[key]


def _slab_count(t_end: float, k_nominal: float) -> int:
    return max(1, int(math.ceil(t_end / k_nominal - 1e-9)))


def run_simulation(
    cfg: SimulationConfig, problem: Problem | None = None, on_slab: Callable[[Snapshot], None] | None = None
) -> RunResult:
    """Advance the coupled problem over all slabs and collect diagnostics.

    The step is ``t_end / ceil(t_end / (C h))`` so that ``t_end`` (and
    ``t_eval`` when it is a multiple of the step) is a slab endpoint.
    ``on_slab`` receives the end-of-slab snapshot after every slab.
    """
    problem = problem or setup_problem(cfg)
    nx = cfg.nx or problem.nx
    ny = cfg.ny or problem.ny
    t_end = cfg.t_end or problem.t_end
    C = cfg.k_ratio or problem.k_ratio
    mesh = build_uniform_mesh(problem.box, nx, ny)
    fine = refine_uniform(mesh)
    h = mesh.h
    n_slabs = _slab_count(t_end, C * h)
    k = t_end / n_slabs
    params = problem.params
    s_q, _ = time_quadrature(params.quadrature, k)
    newton_cfg = NewtonConfig(tol=cfg.newton_tol, max_iters=cfg.newton_max_iters)
    affine = params.coupling.is_affine

    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    logf = open(out / "slabs.jsonl", "w") if out else None

    src = _GeometrySource(problem, mesh, fine, cfg.levelset)
    g0 = src.geometry(0.0)
    trace = _initial_trace(problem, g0, mesh)
    D = params.damkohler
    mass0 = mass_functional(g0, trace.bulk if params.bulk else None, trace.surface, D)
    area0 = g0.enclosed_area() if g0.is_closed() else float("nan")
    result = RunResult(cfg, problem, mesh, h, k, initial_mass=mass0, initial_area=area0)
    result.snapshots[0.0] = Snapshot(0.0, g0, trace.bulk if params.bulk else None, trace.surface)
    if out and cfg.export_every:
        _export_frame(out, 0, g0, trace)
    eval_times = {round(cfg.t_eval, 12)} if cfg.t_eval is not None else set()

    try:
        for n in range(n_slabs):
            tic = _time.perf_counter()
            t0, t1 = n * k, (n + 1) * k if n + 1 < n_slabs else t_end
            geoms = [src.geometry(t0 + s * (t1 - t0)) for s in s_q]
            sets = build_slab_sets(geoms, mesh)
            space = build_slab_space(sets, mesh, t0, t1, with_multiplier=cfg.conserve_mass, bulk=params.bulk)
            if cfg.conserve_mass:
                target = problem.mass_target(t1) if problem.mass_target else mass0
            else:
                target = None
            system = SlabSystem(space, geoms, params, trace, target)
            res = newton_solve(system.residual, system.jacobian, system.initial_guess(), newton_cfg, affine=affine)
            kappa = estimate_condition(res.jacobian, res.lu) if cfg.condition else None
            trace = SlabFunction(space, res.x).trace_end()
            g1 = geoms[-1]
            mass = mass_functional(g1, trace.bulk if params.bulk else None, trace.surface, D)
            ref = target if (cfg.conserve_mass and problem.mass_target) else mass0
            area = g1.enclosed_area() if g1.is_closed() else float("nan")
            rec = SlabRecord(
                slab=n,
                t=t1,
                newton_iterations=res.iterations,
                update_norms=res.update_norms,
                linear_residuals=res.linear_residuals,
                kappa=kappa,
                mass=mass,
                rel_mass_error=(mass - ref) / ref,
                area=area,
                rel_area_change=(area - area0) / area0,
                n_bulk=space.NB,
                n_surface=space.NS,
                seconds=_time.perf_counter() - tic,
            )
            result.records.append(rec)
            if logf:
                logf.write(json.dumps(asdict(rec)) + "\n")
            snap = Snapshot(t1, g1, trace.bulk if params.bulk else None, trace.surface)
            if on_slab is not None:
                on_slab(snap)
            if round(t1, 12) in eval_times:
                result.snapshots[t1] = snap
            if out and cfg.export_every and (n + 1) % cfg.export_every == 0:
                _export_frame(out, n + 1, g1, trace)
            src.forget_before(t1)
            log.info("slab %d t=%.4f newton=%d mass_err=%.2e", n, t1, res.iterations, rec.rel_mass_error)
    except (SolverError, ValueError, RuntimeError) as exc:
        if isinstance(exc, SimulationError):
            raise
        raise SimulationError(n, exc) from exc
    finally:
        if logf:
            logf.close()
    result.final = snap
    result.snapshots[t_end] = snap
    if out:
        track_mass(result, out / "mass.csv")
        track_area(result, out / "area.csv")
        if cfg.condition:
            condition_trace(result, out / "condition.csv")
    return result


def _export_frame(out: Path, idx: int, geom: CutGeometry, trace: Trace) -> None:
    geom.to_csv(out / f"interface_{idx:04d}.csv")
    v = geom.coarse.vertices
    data = np.column_stack([np.arange(len(v)), v, trace.bulk, trace.surface])
    np.savetxt(
        out / f"fields_{idx:04d}.csv",
        data,
        delimiter=",",
        header="vertex,x,y,u_B,u_S",
        comments="",
        fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"],
    )


# -- diagnostics -------------------------------------------------------------------


def _write_series(path, header, rows):
    np.savetxt(path, np.asarray(rows, dtype=float).reshape(-1, len(header)), delimiter=",",
               header=",".join(header), comments="", fmt="%.17g")


def track_mass(run: RunResult, path=None) -> np.ndarray:
    """``(t, relative mass error)`` at every slab endpoint."""
    rows = [(0.0, 0.0)] + [(r.t, r.rel_mass_error) for r in run.records]
    if path:
        _write_series(path, ("t", "rel_mass_error"), rows)
    return np.asarray(rows)


def track_area(run: RunResult, path=None) -> np.ndarray:
    """``(t, relative change of the enclosed area)`` at every slab endpoint."""
    rows = [(0.0, 0.0)] + [(r.t, r.rel_area_change) for r in run.records]
    if path:
        _write_series(path, ("t", "rel_area_change"), rows)
    return np.asarray(rows)


def condition_trace(run: RunResult, path=None) -> np.ndarray:
    rows = [(r.t, r.kappa) for r in run.records if r.kappa is not None]
    if path:
        _write_series(path, ("t", "kappa"), rows)
    return np.asarray(rows).reshape(-1, 2)


# -- error norms -------------------------------------------------------------------


def _p1_eval(mesh: Mesh, values: np.ndarray, elems: np.ndarray, pts: np.ndarray) -> np.ndarray:
    lam = barycentric(mesh.vertices[mesh.triangles[elems]], pts)
    return np.einsum("na,na->n", lam, values[mesh.triangles[elems]])


def _norms(diff, w):
    return float(np.sqrt(np.sum(w * diff**2))), float(np.sum(w * np.abs(diff)))


def _eval_bulk_on(coarse: Snapshot, pts: np.ndarray) -> np.ndarray:
    """Coarse bulk solution at ``pts``; closest interface point where undefined."""
    mesh = coarse.geom.coarse
    tri, _ = locate_point(mesh, pts, tol=1e-9)
    vals = _p1_eval(mesh, coarse.bulk, tri, pts)
    bad = ~np.isfinite(vals)
    if bad.any():
        proj, seg, _ = coarse.geom.closest_points(pts[bad])
        vals[bad] = _p1_eval(mesh, coarse.bulk, coarse.geom.seg_coarse[seg], proj)
    return vals


def compute_errors(fine: Snapshot, reference: Snapshot | None = None, exact_bulk=None, exact_surface=None) -> dict:
    """L2 and L1 errors of ``fine`` on its own geometry.

    Against exact solutions when given; otherwise against ``reference`` (the
    next coarser run), evaluated at the same bulk points and at the closest
    points of its interface for surface points.
    """
    if reference is not None and abs(reference.time - fine.time) > 1e-9:
        raise ConfigError(f"evaluation times differ: {fine.time} vs {reference.time}")
    g = fine.geom
    mesh = g.coarse
    out = {}
    gp, gw, gel, _ = g.surface_quadrature(4)
    uS = _p1_eval(mesh, fine.surface, gel, gp)
    if exact_surface is not None:
        ref = exact_surface(fine.time, gp[:, 0], gp[:, 1])
    elif reference is not None:
        proj, seg, _ = reference.geom.closest_points(gp)
        ref = _p1_eval(reference.geom.coarse, reference.surface, reference.geom.seg_coarse[seg], proj)
    else:
        raise ConfigError("need an exact solution or a reference run")
    out["l2_surf"], out["l1_surf"] = _norms(uS - ref, gw)
    if fine.bulk is not None:
        bp, bw, bel = g.bulk_quadrature(5)
        uB = _p1_eval(mesh, fine.bulk, bel, bp)
        if exact_bulk is not None:
            ref = exact_bulk(fine.time, bp[:, 0], bp[:, 1])
        else:
            ref = _eval_bulk_on(reference, bp)
        out["l2_bulk"], out["l1_bulk"] = _norms(uB - ref, bw)
    else:
        out["l2_bulk"] = out["l1_bulk"] = float("nan")
    return out


@dataclass
class ErrorReport:
    rows: list  # dicts with h, k and the error norms

    COLUMNS = ("h", "k", "l2_bulk", "l1_bulk", "l2_surf", "l1_surf", "order_l2_bulk", "order_l2_surf")

    def orders(self, key: str) -> list:
        vals = [r[key] for r in self.rows]
        return [math.log2(a / b) if a > 0 and b > 0 else float("nan") for a, b in zip(vals, vals[1:])]

    def to_csv(self, path) -> None:
        ob = [float("nan")] + self.orders("l2_bulk")
        os_ = [float("nan")] + self.orders("l2_surf")
        data = [[r[c] for c in self.COLUMNS[:6]] + [b, s] for r, b, s in zip(self.rows, ob, os_)]
        _write_series(path, self.COLUMNS, data)

    def format(self) -> str:
        ob = [float("nan")] + self.orders("l2_bulk")
        os_ = [float("nan")] + self.orders("l2_surf")
        lines = [" ".join(f"{c:>13s}" for c in self.COLUMNS)]
        for r, b, s in zip(self.rows, ob, os_):
            vals = [r[c] for c in self.COLUMNS[:6]] + [b, s]
            lines.append(" ".join(f"{v:13.4e}" if i < 6 else f"{v:13.3f}" for i, v in enumerate(vals)))
        return "\n".join(lines)


def convergence_table(cfg: SimulationConfig, levels: list, mode: str | None = None) -> tuple[ErrorReport, list]:
    """Run ``cfg`` on each ``nx`` in ``levels`` and tabulate errors at ``t_eval``.

    ``mode`` is ``"exact"`` (example 1 default) or ``"consecutive"``; in the
    latter each row compares a run with the previous, coarser one, so the
    table has one row fewer than ``levels``.
    """
    problem = setup_problem(cfg)
    if mode is None:
        mode = "exact" if problem.exact_bulk is not None else "consecutive"
    aspect = problem.ny / problem.nx
    runs, rows = [], []
    for nx in levels:
        ny = max(1, int(round(nx * aspect)))
        c = SimulationConfig(**{**asdict(cfg), "nx": nx, "ny": ny, "t_end": cfg.t_eval, "out": None})
        run = run_simulation(c)
        runs.append(run)
        snap = run.snapshot_at(cfg.t_eval)
        if mode == "exact":
            err = compute_errors(snap, exact_bulk=problem.exact_bulk, exact_surface=problem.exact_surface)
        elif len(runs) > 1:
            err = compute_errors(snap, reference=runs[-2].snapshot_at(cfg.t_eval))
        else:
            continue
        rows.append({"h": run.h, "k": run.k, **err})
    report = ErrorReport(rows)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        report.to_csv(Path(cfg.out) / "errors.csv")
    return report, runs


def temporal_convergence(
    cfg: SimulationConfig,
    steps: list,
    reference_step: float,
    problem: Problem | None = None,
    reference: Snapshot | None = None,
) -> tuple[ErrorReport, list]:
    """Time-refinement table at ``t_eval`` on the fixed mesh of ``cfg``.

    Each run with step ``k`` in ``steps`` is compared with a run using the much
    smaller ``reference_step`` on the same mesh, so the spatial error cancels
    and the table shows the error of the time discretization alone. Errors are
    measured on the reference geometry at ``t_eval``. A ``reference``
    snapshot from an earlier call may be passed to skip the reference run;
    ``runs`` then ends with the reference run only when it was computed here.
    """
    base = problem or setup_problem(cfg)
    nx = cfg.nx or base.nx
    ny = cfg.ny or base.ny
    h = build_uniform_mesh(base.box, nx, ny).h

    def run(k, quadrature):
        c = SimulationConfig(
            **{**asdict(cfg), "nx": nx, "ny": ny, "k_ratio": k / h, "t_end": cfg.t_eval, "out": None,
               "time_quadrature": quadrature}
        )
        pb = None if problem is None else replace(problem, params=replace(problem.params, quadrature=quadrature))
        return run_simulation(c, pb)

    ref_run = None
    if reference is None:
        ref_run = run(reference_step, "simpson")
        reference = ref_run.snapshot_at(cfg.t_eval)
    ref = reference
    g = ref.geom
    mesh = g.coarse
    gp, gw, gel, _ = g.surface_quadrature(4)
    bp, bw, bel = g.bulk_quadrature(5)
    rows, runs = [], []
    for k in steps:
        r = run(k, cfg.time_quadrature)
        runs.append(r)
        s = r.snapshot_at(cfg.t_eval)
        row = {"h": r.h, "k": r.k}
        d = _p1_eval(mesh, s.surface, gel, gp) - _p1_eval(mesh, ref.surface, gel, gp)
        row["l2_surf"], row["l1_surf"] = _norms(d, gw)
        if ref.bulk is not None:
            d = _p1_eval(mesh, s.bulk, bel, bp) - _p1_eval(mesh, ref.bulk, bel, bp)
            row["l2_bulk"], row["l1_bulk"] = _norms(d, bw)
        else:
            row["l2_bulk"] = row["l1_bulk"] = float("nan")
        rows.append(row)
    if ref_run is not None:
        runs.append(ref_run)
    report = ErrorReport(rows)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        report.to_csv(Path(cfg.out) / "errors.csv")
    return report, runs
