"""Regularization-limit sweeps: run a schedule of levels and compare neighbours.

Each schedule point is integrated independently (optionally in worker
processes).  Consecutive points are compared at the comparison times by the
L2 distance of their coefficient vectors zero-padded to the larger k, which
by Parseval is the L2 distance of the fields.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .galerkin import (SolverConfig, Termination, TrajectoryRecord, fmt, integrate,
                       write_trajectory, write_trajectory_csv)
from .initial import InitialData
from .model import ModelParams, RegularizationLevel, build_coefficients
from .spectral import Domain, get_basis, pad_coeffs

__all__ = [
    "SweepPlan",
    "PointResult",
    "ConvergenceDiagnostics",
    "RateEstimate",
    "run_sweep",
    "estimate_rates",
    "fit_rate",
    "point_hash",
    "sweep_axis",
]

AXES = ("k", "delta", "epsilon", "alpha")


@dataclass(frozen=True)
class SweepPlan:
    params: ModelParams
    solver: SolverConfig
    domain: Domain
    schedule: tuple
    comparison_times: tuple
    initial: InitialData = field(default_factory=InitialData)

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(self.schedule))
        object.__setattr__(self, "comparison_times", tuple(float(t) for t in self.comparison_times))
        if not self.schedule:
            raise ValueError("sweep schedule is empty")
        for lev in self.schedule:
            if not isinstance(lev, RegularizationLevel):
                raise TypeError("schedule entries must be RegularizationLevel")
            lev.require_simulation()
        if not self.comparison_times:
            raise ValueError("sweep needs at least one comparison time")
        if any(not 0 < t <= self.solver.t_end for t in self.comparison_times):
            raise ValueError("comparison times must lie in (0, t_end]")

    def point_solver(self) -> SolverConfig:
        times = tuple(sorted(set(self.solver.output_times) | set(self.comparison_times)))
        return replace(self.solver, output_times=times)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "solver": self.solver.to_dict(),
            "domain": self.domain.to_dict(),
            "schedule": [lev.to_dict() for lev in self.schedule],
            "comparison_times": list(self.comparison_times),
            "initial": self.initial.to_dict(),
        }


def point_hash(params: ModelParams, level: RegularizationLevel, solver: SolverConfig,
               domain: Domain, initial: InitialData) -> str:
    """Content address of one sweep point (stable across runs and machines)."""
    doc = {"params": params.to_dict(), "level": level.to_dict(), "solver": solver.to_dict(),
           "domain": domain.to_dict(), "initial": initial.to_dict()}
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PointResult:
    level: RegularizationLevel
    digest: str
    termination: Termination
    termination_time: float
    mass_u0: float
    max_neg_mass_u: float
    max_neg_mass_v: float
    states: dict  # comparison time -> (w, z)
    trajectory: Optional[TrajectoryRecord] = None

    def summary(self) -> dict:
        return {
            "level": self.level.to_dict(), "hash": self.digest,
            "termination": self.termination.value, "termination_time": self.termination_time,
            "mass_u0": self.mass_u0, "max_neg_mass_u": self.max_neg_mass_u,
            "max_neg_mass_v": self.max_neg_mass_v,
        }


def _run_point(plan: SweepPlan, level: RegularizationLevel, keep: bool) -> PointResult:
    solver = plan.point_solver()
    coeffs = build_coefficients(plan.params, level)
    w0, z0 = plan.initial.prepare(plan.domain, level.k)
    traj = integrate((w0, z0), coeffs, level, plan.domain, solver)
    b = get_basis(plan.domain, level.k)
    neg_u = neg_v = 0.0
    for s in traj.snapshots:
        neg_u = max(neg_u, b.integrate(np.maximum(-b.to_grid(s.w), 0.0)))
        neg_v = max(neg_v, b.integrate(np.maximum(-b.to_grid(s.z), 0.0)))
    states = {}
    for t in plan.comparison_times:
        try:
            s = traj.at(t)
            states[t] = (s.w, s.z)
        except KeyError:
            pass
    return PointResult(level, point_hash(plan.params, level, solver, plan.domain, plan.initial),
                       traj.termination, traj.termination_time,
                       float(w0.flat[0]) * math.sqrt(plan.domain.volume), neg_u, neg_v, states,
                       traj if keep else None)


def _padded_distance(a, b):
    k = max(a.shape[0], b.shape[0])
    return float(np.linalg.norm(pad_coeffs(a, k) - pad_coeffs(b, k)))


def sweep_axis(schedule: Sequence[RegularizationLevel]) -> str:
    """The single level field that varies along the schedule ("mixed" otherwise)."""
    varying = [ax for ax in AXES if len({getattr(lev, ax) for lev in schedule}) > 1]
    if len(varying) == 1:
        return varying[0]
    return "none" if not varying else "mixed"


@dataclass
class ConvergenceDiagnostics:
    axis: str
    points: list
    # rows of (time, index_a, index_b, dist_u, dist_v, dist)
    distances: list
    comparison_times: tuple

    def distance_series(self, t: float) -> np.ndarray:
        return np.array([row[5] for row in self.distances if row[0] == t])

    def parameter_values(self) -> np.ndarray:
        ax = self.axis if self.axis in AXES else "k"
        return np.array([float(getattr(p.level, ax)) for p in self.points])

    @property
    def abnormal(self) -> list:
        return [p for p in self.points if p.termination is not Termination.REACHED_T_END]

    def write_csv(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "distances.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "point_a", "point_b", "distance_u", "distance_v", "distance"])
            for t, a, b, du, dv, d in self.distances:
                wr.writerow([fmt(t), self.points[a].digest, self.points[b].digest, fmt(du), fmt(dv), fmt(d)])
        with open(directory / "points.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["hash", "alpha", "delta", "epsilon", "k", "termination", "termination_time",
                         "mass_u0", "max_neg_mass_u", "max_neg_mass_v"])
            for p in self.points:
                lv = p.level
                wr.writerow([p.digest, fmt(lv.alpha), fmt(lv.delta), fmt(lv.epsilon), lv.k,
                             p.termination.value, fmt(p.termination_time), fmt(p.mass_u0),
                             fmt(p.max_neg_mass_u), fmt(p.max_neg_mass_v)])

    def summary(self) -> dict:
        rates = {}
        if len(self.points) >= 3:
            rates = {fmt(t): r.to_dict() for t, r in estimate_rates(self).items()}
        return {
            "axis": self.axis,
            "points": [p.summary() for p in self.points],
            "distances": [{"t": t, "point_a": a, "point_b": b, "distance_u": du, "distance_v": dv,
                           "distance": d} for t, a, b, du, dv, d in self.distances],
            "rates": rates,
            "abnormal_points": [p.digest for p in self.abnormal],
        }


def run_sweep(plan: SweepPlan, *, jobs: int = 1, out_dir: Optional[os.PathLike] = None,
              keep_trajectories: bool = False) -> ConvergenceDiagnostics:
    """Integrate every schedule point and compare consecutive points.

    Points run in up to ``jobs`` worker processes; the aggregation below is
    sequential in schedule order, so results do not depend on ``jobs``.
    With ``out_dir`` every trajectory is written under
    ``out_dir/points/<content hash>/``.
    """
    keep = keep_trajectories or out_dir is not None
    if jobs > 1 and len(plan.schedule) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_point, plan, lev, keep) for lev in plan.schedule]
            results = [f.result() for f in futures]
    else:
        results = [_run_point(plan, lev, keep) for lev in plan.schedule]

    rows = []
    for t in plan.comparison_times:
        for i in range(len(results) - 1):
            a, b = results[i], results[i + 1]
            if t in a.states and t in b.states:
                du = _padded_distance(a.states[t][0], b.states[t][0])
                dv = _padded_distance(a.states[t][1], b.states[t][1])
                d = math.hypot(du, dv)
            else:
                du = dv = d = math.nan
            rows.append((t, i, i + 1, du, dv, d))
    diag = ConvergenceDiagnostics(sweep_axis(plan.schedule), results, rows, plan.comparison_times)

    if out_dir is not None:
        out = Path(out_dir)
        solver = plan.point_solver()
        for p in results:
            pdir = out / "points" / p.digest
            pdir.mkdir(parents=True, exist_ok=True)
            with open(pdir / "trajectory.xdif", "wb") as fh:
                write_trajectory(fh, p.trajectory)
            with open(pdir / "trajectory.csv", "w", newline="") as fh:
                write_trajectory_csv(fh, p.trajectory)
            with open(pdir / "point.json", "w") as fh:
                json.dump({"params": plan.params.to_dict(), "level": p.level.to_dict(),
                           "solver": solver.to_dict(), "domain": plan.domain.to_dict(),
                           "initial": plan.initial.to_dict(), **p.summary()}, fh, indent=2, sort_keys=True)
        diag.write_csv(out)
        with open(out / "summary.json", "w") as fh:
            json.dump(json_clean(diag.summary()), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    if not keep_trajectories:
        for p in results:
            p.trajectory = None
    return diag


def json_clean(x):
    """Replace non-finite floats by None so the document is strict JSON."""
    if isinstance(x, dict):
        return {k: json_clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class RateEstimate:
    axis: str
    slope: Optional[float]
    residual: Optional[float]
    status: str  # "ok", "converged-exactly" or "insufficient"

    def to_dict(self) -> dict:
        return {"axis": self.axis, "slope": self.slope, "residual": self.residual, "status": self.status}


def fit_rate(parameters, distances, *, axis: str = "delta") -> RateEstimate:
    """Least-squares slope of log(distance) against log(parameter) (against k itself on the k axis)."""
    p = np.asarray(parameters, dtype=float)
    d = np.asarray(distances, dtype=float)
    if p.shape != d.shape:
        raise ValueError("parameters and distances must have equal length")
    keep = np.isfinite(d)
    p, d = p[keep], d[keep]
    if np.any(d == 0):
        return RateEstimate(axis, None, None, "converged-exactly")
    if d.size < 2:
        return RateEstimate(axis, None, None, "insufficient")
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    x = p if axis == "k" else np.log(p)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, np.log(d), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(d)) ** 2)))
    return RateEstimate(axis, float(coef[0]), resid, "ok")


def estimate_rates(diag: ConvergenceDiagnostics) -> dict:
    """Rate per comparison time; each distance is paired with the parameter of its finer point."""
    if len(diag.points) < 3:
        raise ValueError("rate estimation needs at least three schedule points")
    params = diag.parameter_values()[1:]
    return {t: fit_rate(params, diag.distance_series(t), axis=diag.axis) for t in diag.comparison_times}
