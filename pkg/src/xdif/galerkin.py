"""Galerkin ODE system for the fourth-order regularized problem and its time integration.

With u = sum_j w_j phi_j and v = sum_j z_j phi_j the scheme reads

    dw_i = int V_u . grad phi_i + int f_1(u, v) phi_i,
    dz_i = int V_v . grad phi_i + int f_2(u, v) phi_i,

    V_u = eps S_1(u) grad Lap u - D_1(|u|) grad u + S_1(u) grad v,
    V_v = eps S_2(v) grad Lap v - D_2(|v|) grad v - S_2(v) grad u,

where all integrals are midpoint quadratures on the oversampled grid.  Time
stepping uses the Dormand-Prince 5(4) pair with a PI step-size controller and
an explicit cap for the fourth-order stiffness.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import CoefficientSet, RegularizationLevel
from .spectral import Domain, SpectralBasis, SpectralField, get_basis, read_field, write_field

__all__ = [
    "GalerkinState",
    "SolverConfig",
    "Snapshot",
    "Termination",
    "TrajectoryRecord",
    "NonFiniteError",
    "RingingError",
    "GalerkinSystem",
    "assemble_rhs",
    "integrate",
    "prepare_initial_data",
    "write_trajectory",
    "read_trajectory",
    "write_trajectory_csv",
    "trajectory_scalars",
    "DP5_STABILITY_RADIUS",
]

# Real-axis stability interval of the Dormand-Prince 5th order solution.
DP5_STABILITY_RADIUS = 3.3066


class NonFiniteError(FloatingPointError):
    """A grid quantity inside the right-hand side was NaN or infinite."""

    def __init__(self, term: str):
        super().__init__(f"non-finite values in {term}")
        self.term = term


class RingingError(ValueError):
    """Projected initial data dips too far below zero for the requested k."""


class Termination(str, enum.Enum):
    REACHED_T_END = "reached_t_end"
    BLOWUP_SUSPECTED = "blowup_suspected"
    STEP_UNDERFLOW = "step_underflow"
    STATE_CAP_EXCEEDED = "state_cap_exceeded"


@dataclass
class GalerkinState:
    t: float
    w: np.ndarray
    z: np.ndarray
    accepted: int = 0
    rejected: int = 0
    dt: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.w.shape != self.z.shape:
            raise ValueError("w and z must have the same number of modes")


@dataclass(frozen=True)
class SolverConfig:
    t_end: float = 1.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    dt_init: Optional[float] = None
    dt_min: Optional[float] = None
    dt_max: Optional[float] = None
    blowup_threshold: float = 1e6
    snapshot_stride: int = 1
    state_cap: float = 1e4
    c_stab: float = 0.8 * DP5_STABILITY_RADIUS
    output_times: tuple = ()
    snapshot_interval: Optional[float] = None
    safety: float = 0.9
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (self.rel_tol > 0 and self.abs_tol >= 0):
            raise ValueError("tolerances must be positive")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be a nonnegative integer (0 disables step-count snapshots)")
        if self.snapshot_interval is not None and not self.snapshot_interval > 0:
            raise ValueError("snapshot_interval must be positive")
        if not self.state_cap > 0:
            raise ValueError("state_cap must be positive")
        if not 0 < self.c_stab:
            raise ValueError("c_stab must be positive")
        if any(not 0 <= t <= self.t_end for t in self.output_times):
            raise ValueError("output_times must lie in [0, t_end]")
        if not self.dt_min_value <= self.dt_init_value <= self.dt_max_value:
            raise ValueError("need dt_min <= dt_init <= dt_max")

    def stop_times(self) -> list:
        """Times the integrator must land on exactly, ending with t_end."""
        stops = {t for t in self.output_times if t > 0}
        if self.snapshot_interval is not None:
            n = int(math.floor(self.t_end / self.snapshot_interval * (1 + 1e-12)))
            stops.update(i * self.snapshot_interval for i in range(1, n + 1))
        gap = 1e-12 * self.t_end
        out = []
        for t in sorted(stops):
            if t < self.t_end - gap and (not out or t - out[-1] > gap):
                out.append(t)
        return out + [self.t_end]

    @property
    def dt_min_value(self) -> float:
        return self.dt_min if self.dt_min is not None else 1e-12 * self.t_end

    @property
    def dt_max_value(self) -> float:
        return self.dt_max if self.dt_max is not None else self.t_end

    @property
    def dt_init_value(self) -> float:
        if self.dt_init is not None:
            return self.dt_init
        return max(min(1e-3 * self.t_end, self.dt_max_value), self.dt_min_value)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output_times"] = list(self.output_times)
        return {k: v for k, v in d.items() if v is not None}


@dataclass
class Snapshot:
    t: float
    w: np.ndarray
    z: np.ndarray
    dt: float = 0.0


@dataclass
class TrajectoryRecord:
    domain: Domain
    snapshots: list = field(default_factory=list)
    termination: Termination = Termination.REACHED_T_END
    termination_time: float = 0.0
    accepted: int = 0
    rejected: int = 0
    metadata: dict = field(default_factory=dict)
    functionals: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def k(self) -> int:
        return self.snapshots[0].w.shape[0]

    def at(self, t: float) -> Snapshot:
        for s in self.snapshots:
            if s.t == t:
                return s
        raise KeyError(f"no snapshot at t={t!r}")

    @property
    def ok(self) -> bool:
        return self.termination is Termination.REACHED_T_END


# ---------------------------------------------------------------------------
# right-hand side


def _finite(term: str, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(term)
    return arr


class GalerkinSystem:
    """Precomputed transforms and coefficients for one (params, level, domain, k)."""

    def __init__(self, coeffs: CoefficientSet, domain: Domain, k: int, *,
                 method: str = "matrix", allow_zero_epsilon: bool = False,
                 c_stab: float = 0.8 * DP5_STABILITY_RADIUS):
        coeffs.level.require_simulation(allow_zero_epsilon=allow_zero_epsilon)
        self.coeffs = coeffs
        self.level = coeffs.level
        self.domain = domain
        self.k = int(k)
        self.basis: SpectralBasis = get_basis(domain, self.k, method)
        self.shape = self.basis.coeff_shape
        self.size = int(np.prod(self.shape))
        self.c_stab = c_stab
        self.last_s_max = 0.0

    def split(self, y):
        return y[: self.size].reshape(self.shape), y[self.size:].reshape(self.shape)

    def join(self, w, z):
        return np.concatenate([np.ravel(w), np.ravel(z)])

    def grid_values(self, w, z):
        return self.basis.to_grid(w), self.basis.to_grid(z)

    def rhs(self, w, z):
        b, c, eps = self.basis, self.coeffs, self.level.epsilon
        u = _finite("u", b.to_grid(w))
        v = _finite("v", b.to_grid(z))
        gu = _finite("grad u", b.gradient(w))
        gv = _finite("grad v", b.gradient(z))
        S1 = _finite("S1(u)", c.S(1, u))
        S2 = _finite("S2(v)", c.S(2, v))
        D1 = _finite("D1(|u|)", c.D(1, u))
        D2 = _finite("D2(|v|)", c.D(2, v))
        Vu = S1 * gv - D1 * gu
        Vv = -S2 * gu - D2 * gv
        if eps > 0:
            Vu = Vu + eps * S1 * _finite("grad Lap u", b.grad_laplacian(w))
            Vv = Vv + eps * S2 * _finite("grad Lap v", b.grad_laplacian(z))
        self.last_s_max = float(max(np.max(S1), np.max(S2)))
        dw = b.inner_grad(_finite("flux of u", Vu))
        dz = b.inner_grad(_finite("flux of v", Vv))
        f1 = _finite("f1(u, v)", c.f(1, u, v))
        f2 = _finite("f2(u, v)", c.f(2, u, v))
        if np.any(f1):
            dw = dw + b.from_grid(f1)
        if np.any(f2):
            dz = dz + b.from_grid(f2)
        return dw, dz

    def rhs_flat(self, t, y):
        dw, dz = self.rhs(*self.split(y))
        return self.join(dw, dz)

    def stability_cap(self, s_max: Optional[float] = None) -> float:
        eps = self.level.epsilon
        s_max = self.last_s_max if s_max is None else s_max
        if eps == 0 or s_max <= 0 or self.basis.lambda_max == 0:
            return math.inf
        return self.c_stab / (eps * s_max * self.basis.lambda_max**2)


def assemble_rhs(state: GalerkinState, coeffs: CoefficientSet, level: RegularizationLevel,
                 domain: Domain, *, allow_zero_epsilon: bool = False):
    """Return ``(dw, dz)`` for the Galerkin system at ``state``."""
    if level != coeffs.level:
        raise ValueError("level does not match the coefficient set")
    system = GalerkinSystem(coeffs, domain, state.w.shape[0], allow_zero_epsilon=allow_zero_epsilon)
    if state.w.shape != system.shape:
        raise ValueError(f"state has shape {state.w.shape}, expected {system.shape}")
    return system.rhs(state.w, state.z)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

_PI_ALPHA = 0.7 / 5
_PI_BETA = 0.4 / 5
_MIN_FACTOR, _MAX_FACTOR = 0.2, 5.0


def _dp5_step(fun, y, f0, dt):
    K = [f0]
    for s in range(1, 7):
        dy = np.zeros_like(y)
        for j, a in enumerate(_A[s]):
            if a:
                dy += a * K[j]
        K.append(fun(y + dt * dy))
    y_new = y + dt * sum(b * k for b, k in zip(_B, K) if b)
    err = dt * sum(e * k for e, k in zip(_E, K))
    return y_new, err, K[6]


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(initial, coeffs: CoefficientSet, level: RegularizationLevel, domain: Domain,
              config: SolverConfig, *, allow_zero_epsilon: bool = False,
              method: str = "matrix",
              progress: Optional[Callable[[GalerkinState], None]] = None) -> TrajectoryRecord:
    """Advance ``initial = (w0, z0)`` to ``config.t_end``.

    Snapshots are taken at t = 0, every ``snapshot_stride`` accepted steps,
    at each of ``config.output_times`` and multiples of
    ``config.snapshot_interval`` (steps are shortened to land on them) and at
    the final time.  Abnormal ends are reported in
    ``TrajectoryRecord.termination`` rather than raised.
    """
    if level != coeffs.level:
        raise ValueError("level does not match the coefficient set")
    w0, z0 = (np.asarray(a, dtype=float) for a in initial)
    if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(z0))):
        raise ValueError("initial coefficients must be finite")
    system = GalerkinSystem(coeffs, domain, w0.shape[0], method=method,
                            allow_zero_epsilon=allow_zero_epsilon, c_stab=config.c_stab)
    if w0.shape != system.shape or z0.shape != system.shape:
        raise ValueError(f"initial data must have shape {system.shape}")
    capped = level.alpha == 0

    record = TrajectoryRecord(domain=domain, metadata={
        "params": coeffs.params.to_dict(), "level": level.to_dict(),
        "solver": config.to_dict(), "domain": domain.to_dict(),
        "diffusion": coeffs.diffusion, "method": method,
    })

    def snap(t, y, dt):
        w, z = system.split(y)
        record.snapshots.append(Snapshot(float(t), w.copy(), z.copy(), float(dt)))

    def finish(kind, t):
        record.termination = kind
        record.termination_time = float(t)
        return record

    def over_cap(y):
        if not capped:
            return False
        u, v = system.grid_values(*system.split(y))
        return max(np.max(np.abs(u)), np.max(np.abs(v))) > config.state_cap

    t, y = 0.0, system.join(w0, z0)
    snap(t, y, 0.0)
    if over_cap(y):
        return finish(Termination.STATE_CAP_EXCEEDED, t)
    f0 = system.rhs_flat(t, y)
    stops = config.stop_times()
    next_stop = 0
    dt = min(config.dt_init_value, system.stability_cap())
    dt_min, dt_max = config.dt_min_value, config.dt_max_value
    err_prev = 1.0
    since_snap = 0
    rtol, atol = config.rel_tol, config.abs_tol

    while True:
        if record.accepted >= config.max_steps:
            return finish(Termination.STEP_UNDERFLOW, t)
        target = stops[next_stop]
        dt = min(dt, dt_max, system.stability_cap())
        if dt < dt_min:
            if y.size and np.linalg.norm(y) > config.blowup_threshold:
                return finish(Termination.BLOWUP_SUSPECTED, t)
            return finish(Termination.STEP_UNDERFLOW, t)
        landing = t + dt >= target * (1 - 1e-14)
        h = target - t if landing else dt
        try:
            y_new, err, f_new = _dp5_step(lambda yy: system.rhs_flat(None, yy), y, f0, h)
            en = _error_norm(err, y, y_new, rtol, atol)
            if not np.isfinite(en):
                raise NonFiniteError("error estimate")
        except NonFiniteError:
            record.rejected += 1
            dt = h * _MIN_FACTOR
            continue
        if en > 1.0:
            record.rejected += 1
            dt = h * max(_MIN_FACTOR, config.safety * en ** (-1 / 5))
            continue

        # accepted
        t = target if landing else t + h
        y, f0 = y_new, f_new
        record.accepted += 1
        since_snap += 1
        if en == 0:
            factor = _MAX_FACTOR
        else:
            factor = config.safety * en ** (-_PI_ALPHA) * err_prev ** _PI_BETA
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        err_prev = max(en, 1e-4)
        if landing:
            next_stop += 1
        at_end = landing and next_stop == len(stops)
        if landing or (config.snapshot_stride and since_snap >= config.snapshot_stride):
            snap(t, y, h)
            since_snap = 0
        if progress is not None:
            w, z = system.split(y)
            progress(GalerkinState(t, w, z, record.accepted, record.rejected, h))

        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > config.blowup_threshold:
            if record.snapshots[-1].t != t:
                snap(t, y, h)
            return finish(Termination.BLOWUP_SUSPECTED, t)
        if over_cap(y):
            if record.snapshots[-1].t != t:
                snap(t, y, h)
            return finish(Termination.STATE_CAP_EXCEEDED, t)
        if at_end:
            return finish(Termination.REACHED_T_END, t)
        # a shortened landing step does not shrink the next proposal
        dt *= factor


# ---------------------------------------------------------------------------
# initial data


def _project(raw, basis: SpectralBasis):
    if callable(raw):
        vals = basis.sample(raw)
    else:
        vals = np.asarray(raw, dtype=float)
        if vals.shape != basis.grid_shape:
            raise ValueError(f"raw grid data has shape {vals.shape}, expected {basis.grid_shape}")
    if np.any(vals < 0):
        raise ValueError("raw initial data must be nonnegative")
    return vals, basis.from_grid(vals)


def prepare_initial_data(raw_u0, raw_v0, domain: Domain, k: int, target_masses=None, *,
                         lift: float = 0.1):
    """Project raw data onto X_k, lift it by ``lift`` and rescale to the target masses.

    ``raw_*`` are either callables of the grid coordinates or arrays sampled
    on the quadrature grid.  Target masses default to the masses of the raw
    data.  Raises :class:`RingingError` if a projection dips below
    ``-lift / 2`` on the grid.
    """
    if not lift > 0:
        raise ValueError("lift must be positive")
    basis = get_basis(domain, int(k))
    sqrt_vol = math.sqrt(domain.volume)
    out = []
    for name, raw, idx in (("u0", raw_u0, 0), ("v0", raw_v0, 1)):
        vals, w = _project(raw, basis)
        target = basis.integrate(vals) if target_masses is None else float(target_masses[idx])
        if target < 0:
            raise ValueError("target masses must be nonnegative")
        low = float(np.min(basis.to_grid(w)))
        if low < -lift / 2:
            raise RingingError(f"projection of {name} reaches {low:.3e} < -lift/2; increase k or smooth the data")
        w = w.copy()
        w.flat[0] += lift * sqrt_vol
        mass = float(w.flat[0]) * sqrt_vol
        out.append(w * (target / mass))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# trajectory files

_TRAJ_MAGIC = b"XDIFTRJ1"


def write_trajectory(stream, record: TrajectoryRecord) -> None:
    """Length-prefixed JSON header, then per snapshot: t, dt (f64) and the u and v fields."""
    header = dict(record.metadata)
    header.update({
        "termination": record.termination.value,
        "termination_time": record.termination_time,
        "accepted": record.accepted,
        "rejected": record.rejected,
        "snapshots": len(record.snapshots),
    })
    blob = json.dumps(header, sort_keys=True).encode()
    stream.write(_TRAJ_MAGIC + struct.pack("<Q", len(blob)) + blob)
    for s in record.snapshots:
        stream.write(struct.pack("<dd", s.t, s.dt))
        write_field(stream, SpectralField(record.domain, s.w))
        write_field(stream, SpectralField(record.domain, s.z))


def read_trajectory(stream) -> TrajectoryRecord:
    if stream.read(len(_TRAJ_MAGIC)) != _TRAJ_MAGIC:
        raise ValueError("not a trajectory file")
    (n,) = struct.unpack("<Q", stream.read(8))
    header = json.loads(stream.read(n).decode())
    d = header["domain"]
    domain = Domain(d["shape"], tuple(d["lengths"]), d["oversample"])
    rec = TrajectoryRecord(domain=domain, termination=Termination(header["termination"]),
                           termination_time=header["termination_time"],
                           accepted=header["accepted"], rejected=header["rejected"],
                           metadata={k: header[k] for k in ("params", "level", "solver", "domain", "diffusion", "method") if k in header})
    for _ in range(header["snapshots"]):
        t, dt = struct.unpack("<dd", stream.read(16))
        w = read_field(stream, domain.oversample).coeffs
        z = read_field(stream, domain.oversample).coeffs
        rec.snapshots.append(Snapshot(t, w, z, dt))
    return rec


CSV_COLUMNS = ("t", "mass_u", "mass_v", "min_u", "min_v", "l2_u", "l2_v", "dt")


def trajectory_scalars(record: TrajectoryRecord) -> list:
    basis = get_basis(record.domain, record.k)
    sqrt_vol = math.sqrt(record.domain.volume)
    rows = []
    for s in record.snapshots:
        u, v = basis.to_grid(s.w), basis.to_grid(s.z)
        rows.append((s.t, float(s.w.flat[0]) * sqrt_vol, float(s.z.flat[0]) * sqrt_vol,
                     float(u.min()), float(v.min()),
                     float(np.linalg.norm(s.w)), float(np.linalg.norm(s.z)), s.dt))
    return rows


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def write_trajectory_csv(stream, record: TrajectoryRecord) -> None:
    stream.write(",".join(CSV_COLUMNS) + "\n")
    for row in trajectory_scalars(record):
        stream.write(",".join(fmt(x) for x in row) + "\n")
