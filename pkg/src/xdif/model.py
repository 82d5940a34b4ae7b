"""Model parameters, nonlinearities and parameter-regime classification.

The pursuit-evasion system is

    u_t = div(D1(u) grad u - S1(u) grad v) + f1(u, v)
    v_t = div(D2(v) grad v + S2(v) grad u) + f2(u, v)

with prototype coefficients

    D_i(s) = d_i (s + 1)^(m_i - 1),   S_i(s) = chi_i s (s + 1)^(q_i - 1),
    f_i(s1, s2) = lambda_i s_i - mu_i s_i^2 + (-1)^(i+1) a_i s1 s2.

Approximate problems replace these by truncated (alpha) and shifted (delta)
versions; :func:`build_coefficients` composes that ladder.  The entropy
integrands G_i(s) = int_1^s int_1^rho 1/S_i are evaluated by
:class:`EntropyIntegrand`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import numpy as np

__all__ = [
    "Kinetics",
    "ModelParams",
    "RegularizationLevel",
    "CoefficientSet",
    "EntropyIntegrand",
    "RegimeReport",
    "F1Verdict",
    "eval_prototype",
    "build_coefficients",
    "eval_G",
    "eval_Gprime",
    "compute_exponents",
    "check_conditions",
    "check_F1",
    "eval_B_alpha",
    "eval_L_q",
    "smooth_cutoff",
]


class Kinetics(str, enum.Enum):
    H1 = "H1"
    H2 = "H2"


_KINETIC_FIELDS = ("lambda1", "lambda2", "mu1", "mu2", "a1", "a2")


@dataclass(frozen=True)
class ModelParams:
    d1: float = 1.0
    d2: float = 1.0
    chi1: float = 1.0
    chi2: float = 1.0
    m1: float = 1.0
    m2: float = 1.0
    q1: float = 1.0
    q2: float = 1.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    kinetics: Kinetics = Kinetics.H1
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kinetics", Kinetics(self.kinetics))
        for name in ("d1", "d2", "chi1", "chi2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("q1", "q2"):
            if not getattr(self, name) <= 1:
                raise ValueError(f"{name} must be <= 1, got {getattr(self, name)!r}")
        for name in ("m1", "m2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        kin = [getattr(self, name) for name in _KINETIC_FIELDS]
        if self.kinetics is Kinetics.H1 and any(c != 0 for c in kin):
            raise ValueError("H1 kinetics require lambda_i = mu_i = a_i = 0")
        if self.kinetics is Kinetics.H2 and not all(c > 0 for c in kin):
            raise ValueError("H2 kinetics require lambda_i, mu_i, a_i > 0")
        if self.n not in (1, 2):
            raise ValueError(f"spatial dimension n must be 1 or 2, got {self.n!r}")

    def species(self, i: int) -> dict:
        """Per-species parameters ``d, chi, m, q, lam, mu, a`` for ``i`` in {1, 2}."""
        if i not in (1, 2):
            raise ValueError(f"species index must be 1 or 2, got {i!r}")
        return dict(
            d=getattr(self, f"d{i}"),
            chi=getattr(self, f"chi{i}"),
            m=getattr(self, f"m{i}"),
            q=getattr(self, f"q{i}"),
            lam=getattr(self, f"lambda{i}"),
            mu=getattr(self, f"mu{i}"),
            a=getattr(self, f"a{i}"),
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kinetics"] = self.kinetics.value
        return out


@dataclass(frozen=True)
class RegularizationLevel:
    alpha: float = 0.0
    delta: float = 0.0
    epsilon: float = 0.0
    k: int = 16

    def __post_init__(self):
        for name in ("alpha", "delta", "epsilon"):
            val = getattr(self, name)
            if not 0 <= val < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {val!r}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"Galerkin dimension k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    def require_simulation(self, allow_zero_epsilon: bool = False):
        """Raise unless the level defines a Galerkin system."""
        if self.delta <= 0:
            raise ValueError("simulation requires delta > 0")
        if self.epsilon <= 0 and not allow_zero_epsilon:
            raise ValueError("simulation requires epsilon > 0 (epsilon = 0 is diagnostic only)")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# prototype nonlinearities


def _check_nonneg(*args):
    for a in args:
        if np.any(np.asarray(a) < 0):
            raise ValueError("prototype nonlinearities are defined for nonnegative arguments only")


def eval_prototype(which: str, params: ModelParams, *args):
    """Evaluate ``D1, D2, S1, S2, f1`` or ``f2`` exactly as defined for s >= 0."""
    _check_nonneg(*args)
    name, i = which[0], int(which[1])
    p = params.species(i)
    if name == "D":
        (s,) = args
        return p["d"] * np.power(np.asarray(s, dtype=float) + 1.0, p["m"] - 1.0)
    if name == "S":
        (s,) = args
        s = np.asarray(s, dtype=float)
        return p["chi"] * s * np.power(s + 1.0, p["q"] - 1.0)
    if name == "f":
        s1, s2 = (np.asarray(a, dtype=float) for a in args)
        own = s1 if i == 1 else s2
        sign = 1.0 if i == 1 else -1.0
        return p["lam"] * own - p["mu"] * own**2 + sign * p["a"] * s1 * s2
    raise ValueError(f"unknown nonlinearity {which!r}")


def _phi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_cutoff(s):
    """C-infinity step: 1 for s <= 0, 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = _phi(1.0 - s)
    b = _phi(s)
    return a / (a + b)


def eval_B_alpha(s, alpha: float):
    """B_alpha(s) = (s + 1) / (1 + alpha (s + 1))."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("B_alpha is defined for s >= 0")
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    return (s + 1.0) / (1.0 + alpha * (s + 1.0))


def eval_L_q(s, q: float):
    """L_q(s) = 1 for q < 1 and ln s for q = 1."""
    s = np.asarray(s, dtype=float)
    if q > 1:
        raise ValueError("L_q requires q <= 1")
    if q < 1:
        if np.any(s < 0):
            raise ValueError("L_q is defined for s >= 0")
        return np.ones_like(s)
    if np.any(s <= 0):
        raise ValueError("L_1(s) = ln s requires s > 0")
    return np.log(s)


# ---------------------------------------------------------------------------
# entropy integrands

# 16-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class EntropyIntegrand:
    """Evaluates G'(s) = int_1^s dsigma/S(sigma) and G(s) = int_1^s G'.

    G' and G are tabulated at nodes uniformly spaced in ln|s| (both signs
    of s when ``delta > 0``).  A query is answered from the nearest node
    below it plus a Gauss-Legendre quadrature over the remaining gap in the
    logarithmic variable, so the result carries quadrature error only (no
    interpolation error).  G uses G(s) = int_1^s (s - sigma)/S(sigma).
    """

    def __init__(self, S, delta: float, *, s_lo: float = 1e-14, s_hi: float = 1e8,
                 cell: float = 0.2, closed_form: Optional[tuple] = None):
        self._S = S
        self.delta = float(delta)
        self.s_hi = float(s_hi)
        self._closed = closed_form
        self._h = float(cell)
        j_lo = math.floor(math.log(s_lo) / cell)
        j_hi = math.ceil(math.log(s_hi) / cell)
        self._j_lo, self._j_hi = j_lo, j_hi
        self._t = np.arange(j_lo, j_hi + 1) * cell
        self._i1 = -j_lo  # index of t = 0, i.e. s = 1
        self._pos = self._tabulate(sign=1.0)
        self._neg = self._tabulate(sign=-1.0) if self.delta > 0 else None
        self._zero = self._zero_values() if self.delta > 0 else None

    def _g(self, sigma):
        return 1.0 / self._S(sigma)

    def _cell_integrals(self, t0, t1, s_end, sign):
        """int over sigma = sign*e^t, t in [t0, t1], of g and (s_end - sigma) g."""
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        dt = (t1 - t0)[..., None]
        tt = t0[..., None] + dt * _GL_X
        sig = sign * np.exp(tt)
        jac = sig * dt  # dsigma = sigma dt
        g = self._g(sig)
        i0 = np.sum(_GL_W * g * jac, axis=-1)
        i1 = np.sum(_GL_W * (np.asarray(s_end)[..., None] - sig) * g * jac, axis=-1)
        return i0, i1

    def _sweep(self, x, gp, G, idx, step, sign):
        """Accumulate (G', G) cell by cell from node idx[0] in direction step."""
        t = self._t
        c0, c1 = self._cell_integrals(t[idx], t[idx + step], x[idx + step], sign)
        for j, a0, a1 in zip(idx, c0, c1):
            gp[j + step] = gp[j] + a0
            G[j + step] = G[j] + gp[j] * (x[j + step] - x[j]) + a1

    def _tabulate(self, sign):
        t = self._t
        x = sign * np.exp(t)
        gp = np.zeros_like(t)
        G = np.zeros_like(t)
        if sign > 0:
            i1 = self._i1
            self._sweep(x, gp, G, np.arange(i1, len(t) - 1), 1, sign)
            self._sweep(x, gp, G, np.arange(i1, 0, -1), -1, sign)
        else:
            pos_x, pos_gp, pos_G = self._pos
            gp[0], G[0] = self._through_zero(pos_x[0], pos_gp[0], pos_G[0], -pos_x[0])
            self._sweep(x, gp, G, np.arange(0, len(t) - 1), 1, sign)
        return x, gp, G

    def _linear_piece(self, a, b, s_end):
        """int_a^b g and int_a^b (s_end - sigma) g on a short linear interval."""
        sig = a + (b - a) * _GL_X
        g = self._g(sig)
        return (np.sum(_GL_W * g) * (b - a),
                np.sum(_GL_W * (s_end - sig) * g) * (b - a))

    def _through_zero(self, x0, gp0, G0, x1):
        """Carry (G', G) from x0 > 0 across 0 to x1 < 0 in two linear pieces."""
        a0, a1 = self._linear_piece(x0, 0.0, 0.0)
        gpz = gp0 + a0
        Gz = G0 + gp0 * (0.0 - x0) + a1
        b0, b1 = self._linear_piece(0.0, x1, x1)
        return gpz + b0, Gz + gpz * (x1 - 0.0) + b1

    def _zero_values(self):
        x0 = self._pos[0][0]
        a0, a1 = self._linear_piece(x0, 0.0, 0.0)
        gp0, G0 = self._pos[1][0], self._pos[2][0]
        return gp0 + a0, G0 + gp0 * (0.0 - x0) + a1

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        gp = np.empty_like(flat)
        G = np.empty_like(flat)
        if np.any(~np.isfinite(flat)):
            raise ValueError("entropy integrand evaluated at a non-finite state")
        if np.any(np.abs(flat) > self.s_hi):
            raise ValueError(f"state magnitude exceeds tabulated range {self.s_hi:g}")
        x_min = self._pos[0][0]
        if self.delta <= 0 and np.any(flat <= 0):
            raise ZeroDivisionError("G' is singular at s <= 0 when S(0) = 0 and delta = 0")
        pos = flat >= x_min
        neg = flat <= -x_min
        mid = ~(pos | neg)
        for mask, table, sign in ((pos, self._pos, 1.0), (neg, self._neg, -1.0)):
            if not np.any(mask):
                continue
            xs, gps, Gs = table
            sv = flat[mask]
            t = np.log(np.abs(sv))
            j = np.clip(np.floor(t / self._h).astype(int) - self._j_lo, 0, len(xs) - 1)
            c0, c1 = self._cell_integrals(self._t[j], t, sv, sign)
            gp[mask] = gps[j] + c0
            G[mask] = Gs[j] + gps[j] * (sv - xs[j]) + c1
        if np.any(mid):
            gpz, Gz = self._zero
            for idx in np.flatnonzero(mid):
                sv = flat[idx]
                if sv == 0.0:
                    gp[idx], G[idx] = gpz, Gz
                    continue
                if sv > 0:  # only reachable with delta = 0 below s_lo
                    xs, gps, Gs = self._pos
                    c0, c1 = self._cell_integrals(self._t[:1], np.array([math.log(sv)]),
                                                  np.array([sv]), 1.0)
                    gp[idx] = gps[0] + c0[0]
                    G[idx] = Gs[0] + gps[0] * (sv - xs[0]) + c1[0]
                else:
                    a0, a1 = self._linear_piece(0.0, sv, sv)
                    gp[idx] = gpz + a0
                    G[idx] = Gz + gpz * sv + a1
        return gp.reshape(s.shape), G.reshape(s.shape)

    def values(self, s):
        """(G'(s), G(s)) in one pass."""
        if self._closed is not None:
            s = np.asarray(s, dtype=float)
            return self._closed[0](s), self._closed[1](s)
        return self._eval(s)

    def gprime(self, s):
        if self._closed is not None:
            return self._closed[0](np.asarray(s, dtype=float))
        return self._eval(s)[0]

    def g(self, s):
        if self._closed is not None:
            return self._closed[1](np.asarray(s, dtype=float))
        return self._eval(s)[1]


def _closed_forms(chi: float, q: float):
    """Closed-form (G', G) for the bare prototype with q in {0, 1}."""

    def _guard(s):
        if np.any(s <= 0):
            raise ZeroDivisionError("G' is singular at s <= 0 when S(0) = 0 and delta = 0")

    if q == 1:
        def gp(s):
            _guard(s)
            return np.log(s) / chi

        def G(s):
            if np.any(s < 0):
                raise ValueError("G requires s >= 0 at delta = 0")
            with np.errstate(divide="ignore", invalid="ignore"):
                slns = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)
            return (slns - s + 1.0) / chi
        return gp, G
    if q == 0:
        def gp(s):
            _guard(s)
            return (s - 1.0 + np.log(s)) / chi

        def G(s):
            if np.any(s < 0):
                raise ValueError("G requires s >= 0 at delta = 0")
            slns = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)
            return (0.5 * (s - 1.0) ** 2 + slns - s + 1.0) / chi
        return gp, G
    return None


# ---------------------------------------------------------------------------
# coefficient ladder


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of the approximate problem at one rung of the ladder.

    ``D``, ``S`` and ``f`` accept arbitrary real (array) arguments: they apply
    ``|s|`` inside D and S, the shift ``+ delta`` in S and positive parts in f.
    ``diffusion=False`` switches D off entirely (diagnostic runs only).
    """

    params: ModelParams
    level: RegularizationLevel
    diffusion: bool = True
    _tables: dict = field(default_factory=dict, compare=False, repr=False)

    # rung below the delta shift, for s >= 0
    def D_base(self, i: int, s):
        p = self.params.species(i)
        s = np.asarray(s, dtype=float)
        a = self.level.alpha
        if a > 0:
            return p["d"] * np.power(eval_B_alpha(s, a), p["m"] - 1.0) + a
        return p["d"] * np.power(s + 1.0, p["m"] - 1.0)

    def S_base(self, i: int, s):
        p = self.params.species(i)
        s = np.asarray(s, dtype=float)
        a = self.level.alpha
        out = p["chi"] * s * np.power(s + 1.0, p["q"] - 1.0)
        if a > 0:
            out = out / np.power(1.0 + a * (s + 1.0), p["q"])
        return out

    @cached_property
    def cutoff_scale(self) -> float:
        """alpha^(1/(4 - min q)); the cutoff is inactive below its inverse."""
        qmin = min(self.params.q1, self.params.q2)
        return self.level.alpha ** (1.0 / (4.0 - qmin))

    def xi_alpha(self, s):
        return smooth_cutoff(self.cutoff_scale * np.asarray(s, dtype=float) - 1.0)

    def f_base(self, i: int, s1, s2):
        if self.params.kinetics is Kinetics.H1:
            return np.zeros(np.broadcast(np.asarray(s1), np.asarray(s2)).shape)
        out = eval_prototype(f"f{i}", self.params, s1, s2)
        if self.level.alpha > 0:
            out = out * self.xi_alpha(s1) * self.xi_alpha(s2)
        return out

    # the delta-level functions used by the Galerkin system
    def D(self, i: int, s):
        s = np.abs(np.asarray(s, dtype=float))
        if not self.diffusion:
            return np.zeros_like(s)
        return self.D_base(i, s)

    def S(self, i: int, s):
        return self.S_base(i, np.abs(np.asarray(s, dtype=float))) + self.level.delta

    def f(self, i: int, s1, s2):
        return self.f_base(i, np.maximum(s1, 0.0), np.maximum(s2, 0.0))

    def integrand(self, i: int) -> EntropyIntegrand:
        try:
            return self._tables[i]
        except KeyError:
            pass
        p = self.params.species(i)
        closed = None
        if self.level.alpha == 0 and self.level.delta == 0:
            closed = _closed_forms(p["chi"], p["q"])
        table = EntropyIntegrand(lambda s: self.S(i, s), self.level.delta, closed_form=closed)
        self._tables[i] = table
        return table

    def Gprime(self, i: int, s):
        return self.integrand(i).gprime(s)

    def G(self, i: int, s):
        return self.integrand(i).g(s)


def build_coefficients(params: ModelParams, level: RegularizationLevel, *,
                       diffusion: bool = True) -> CoefficientSet:
    """Compose prototype -> alpha-truncation -> delta-shift."""
    return CoefficientSet(params, level, diffusion)


def eval_Gprime(i: int, s, coeffs: CoefficientSet):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("eval_Gprime requires s >= 0")
    out = coeffs.Gprime(i, s_arr)
    return float(out) if np.ndim(out) == 0 else out


def eval_G(i: int, s, coeffs: CoefficientSet):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("eval_G requires s >= 0")
    out = coeffs.G(i, s_arr)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# exponents and regime conditions


def _rat(x) -> Fraction:
    # shortest decimal repr, so 0.9 means 9/10
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(repr(float(x)))


def _exponents_exact(params: ModelParams):
    n = params.n
    out = {}
    for i in (1, 2):
        p = params.species(i)
        m, q = _rat(p["m"]), _rat(p["q"])
        floor = (3 - q) if params.kinetics is Kinetics.H2 else (2 - q)
        pi = max(m + 1 - q + Fraction(2) * (2 - q) / n, floor)
        beta = m - q - 1
        ri = min(2 * pi / (pi - beta), Fraction(2))
        out[i] = (pi, ri, beta)
    return out


def compute_exponents(params: ModelParams):
    """Return ``(p1, p2, r1, r2, beta1, beta2)`` as floats."""
    ex = _exponents_exact(params)
    return (float(ex[1][0]), float(ex[2][0]), float(ex[1][1]), float(ex[2][1]),
            float(ex[1][2]), float(ex[2][2]))


def _main_cond_exact(params: ModelParams, ex) -> dict:
    flags = {}
    for i in (1, 2):
        q = _rat(params.species(i)["q"])
        p_i = ex[i][0]
        inv_r = 1 / ex[3 - i][1]
        if q <= 0:
            flags[i] = inv_r < 1
        elif q < 1:
            flags[i] = q / p_i + inv_r < 1
        else:
            flags[i] = 1 / p_i + inv_r <= 1
    return flags


def _cond_m_h1(params: ModelParams) -> Optional[bool]:
    """Closed form of the main condition for the symmetric H1 family, else None."""
    if params.kinetics is not Kinetics.H1:
        return None
    m1, m2, q1, q2 = (_rat(params.m1), _rat(params.m2), _rat(params.q1), _rat(params.q2))
    if m1 != m2 or q1 != q2 or not 0 < q1 < 1:
        return None
    n = params.n
    return m1 > min(((2 * n + 1) * q1 - 2) / n, 4 * q1 - 1)


def _cond_f2(params: ModelParams) -> bool:
    n = params.n
    m1, m2, q1, q2 = (_rat(params.m1), _rat(params.m2), _rat(params.q1), _rat(params.q2))
    base = Fraction(2 * n - 2, n)
    first = m1 > base + ((3 - q2) * (2 - q1) - (3 - q1) * (2 - q2)) / (2 - q2)
    second = m2 > base + (q2 - q1)
    return bool(first or second)


@dataclass
class F1Verdict:
    status: str  # "falsified" | "not_falsified"
    c1: Optional[float] = None
    c2: Optional[float] = None
    witness: Optional[tuple] = None
    s_max: float = 1e6
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "c1": self.c1,
            "c2": self.c2,
            "witness": None if self.witness is None else [float(w) for w in self.witness],
            "s_max": self.s_max,
            "note": self.note,
        }


@dataclass
class RegimeReport:
    p1: float
    p2: float
    r1: float
    r2: float
    beta1: float
    beta2: float
    cond_mi_qi: bool
    cond_f2: bool
    cond_main_1: bool
    cond_main_2: bool
    cond_m_h1: Optional[bool]
    f1_verdict: F1Verdict

    @property
    def cond_f1(self) -> bool:
        return self.f1_verdict.status == "not_falsified"

    def failing_conditions(self) -> list:
        failing = []
        if not self.cond_mi_qi:
            failing.append("cond_mi_qi")
        if not (self.cond_f1 or self.cond_f2):
            failing.append("cond_f1_or_f2")
        if not self.cond_main_1:
            failing.append("cond_main_1")
        if not self.cond_main_2:
            failing.append("cond_main_2")
        return failing

    def to_dict(self) -> dict:
        return {
            "p1": self.p1, "p2": self.p2, "r1": self.r1, "r2": self.r2,
            "beta1": self.beta1, "beta2": self.beta2,
            "cond_mi_qi": self.cond_mi_qi,
            "cond_f2": self.cond_f2,
            "cond_main_1": self.cond_main_1,
            "cond_main_2": self.cond_main_2,
            "cond_m_h1": self.cond_m_h1,
            "f1_verdict": self.f1_verdict.to_dict(),
        }


def check_F1(params: ModelParams, s_max: float = 1e6, grid_points: int = 161) -> F1Verdict:
    """Sampled semi-decision for the kinetic growth condition (F1).

    On a log grid over [1, s_max]^2, h = G1'(s1) f1 + G2'(s2) f2 must stay
    below -C1 (s1^2 ln s1 + s2^2 ln s2) + C2.  A finite sample can always be
    covered by a large C2, so a pair (C1, C2) is accepted only if the bound
    needed on the whole sample is already attained on the inner block
    [1, sqrt(s_max)]^2, i.e. h + C1 psi does not keep growing outwards.
    C1 is maximised over a logarithmic search followed by bisection.
    """
    if s_max < 1 or grid_points < 2:
        raise ValueError("check_F1 requires s_max >= 1 and grid_points >= 2")
    if params.kinetics is Kinetics.H1:
        return F1Verdict("not_falsified", 0.0, 0.0, None, s_max,
                         "kinetics vanish identically; the reaction term needs no control")
    coeffs = build_coefficients(params, RegularizationLevel(0.0, 0.0, 0.0, 1))
    s = np.geomspace(1.0, s_max, grid_points)
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    h = (coeffs.Gprime(1, s)[:, None] * eval_prototype("f1", params, s1, s2)
         + coeffs.Gprime(2, s)[None, :] * eval_prototype("f2", params, s1, s2))
    psi = s1**2 * np.log(s1) + s2**2 * np.log(s2)
    inner = (s1 <= math.sqrt(s_max)) & (s2 <= math.sqrt(s_max))
    h_in, psi_in = h[inner], psi[inner]
    scale = 1.0 + np.max(np.abs(h))

    def feasible(c1):
        full = np.max(h + c1 * psi)
        return full <= np.max(h_in + c1 * psi_in) + 1e-12 * scale

    candidates = np.geomspace(1e-12, 1e6, 181)
    ok = [feasible(c) for c in candidates]
    if not any(ok):
        diag = np.diagonal(h)
        tail = diag[-max(2, grid_points // 6):]
        if diag[-1] > 0 and np.all(np.diff(tail) > 0):
            w = (float(s[-1]), float(s[-1]), float(diag[-1]))
            note = "h grows along the diagonal s1 = s2"
        else:
            outer = ~inner
            ratio = np.where(outer, h / np.where(psi > 0, psi, 1.0), -np.inf)
            idx = np.unravel_index(np.argmax(ratio), h.shape)
            w = (float(s1[idx]), float(s2[idx]), float(h[idx]))
            note = "h outgrows s^2 ln s off the diagonal"
        return F1Verdict("falsified", None, None, w, s_max, note)
    best = int(np.flatnonzero(ok)[-1])
    lo = candidates[best]
    if best + 1 < len(candidates) and not ok[best + 1]:
        hi = candidates[best + 1]
        for _ in range(40):
            mid = math.sqrt(lo * hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
    c1 = float(lo)
    c2 = float(max(np.max(h + c1 * psi), 0.0))
    return F1Verdict("not_falsified", c1, c2, None, s_max, "")


def check_conditions(params: ModelParams, s_max: float = 1e6,
                     grid_points: int = 161) -> RegimeReport:
    ex = _exponents_exact(params)
    main = _main_cond_exact(params, ex)
    mi_qi = all(_rat(params.species(i)["m"]) - _rat(params.species(i)["q"]) > -1
                for i in (1, 2))
    return RegimeReport(
        p1=float(ex[1][0]), p2=float(ex[2][0]),
        r1=float(ex[1][1]), r2=float(ex[2][1]),
        beta1=float(ex[1][2]), beta2=float(ex[2][2]),
        cond_mi_qi=bool(mi_qi),
        cond_f2=_cond_f2(params),
        cond_main_1=bool(main[1]),
        cond_main_2=bool(main[2]),
        cond_m_h1=_cond_m_h1(params),
        f1_verdict=check_F1(params, s_max, grid_points),
    )
