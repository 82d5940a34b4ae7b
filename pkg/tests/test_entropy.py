import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xdif.entropy import (REPORT_COLUMNS, SingularityError, _trapezoid_cumulative,
                          _trapezoid_error_estimate, chain_rule_rate, entropy_inequality_residual,
                          functionals_at, identity_residual, monitors)
from xdif.galerkin import SolverConfig, integrate
from xdif.initial import Bump, InitialData
from xdif.model import ModelParams, RegularizationLevel, build_coefficients
from xdif.spectral import Domain, get_basis

PI = math.pi
DOM = Domain.interval(PI)
H2 = dict(kinetics="H2", lambda1=1.0, lambda2=0.8, mu1=1.0, mu2=0.5, a1=0.3, a2=0.4)


def const(k, u, v, dom=DOM):
    w, z = np.zeros(k), np.zeros(k)
    w[0], z[0] = u * math.sqrt(dom.volume), v * math.sqrt(dom.volume)
    return w, z


@pytest.mark.parametrize("kin", [{}, H2])
def test_functionals_vanish_at_unit_state(kin):
    lev = RegularizationLevel(delta=0.1, epsilon=0.1, k=8)
    c = build_coefficients(ModelParams(q1=0.5, **kin), lev)
    E, D, R = functionals_at(const(8, 1.0, 1.0), c, lev, DOM)
    assert E == pytest.approx(0, abs=1e-15) and D == 0 and R == pytest.approx(0, abs=1e-15)


def test_entropy_of_constant_state_hand_value():
    # chi = 1, q = 1: G(s) = s ln s - s + 1
    lev = RegularizationLevel(k=4)
    c = build_coefficients(ModelParams(q1=1.0, q2=1.0), lev)
    cu = 3.0
    E, D, R = functionals_at(const(4, cu, 1.0), c, lev, DOM)
    assert E == pytest.approx(PI * (cu * math.log(cu) - cu + 1), rel=1e-13)
    assert D == 0 and R == 0


def test_fourth_order_dissipation_lower_bound():
    lev = RegularizationLevel(delta=0.1, epsilon=0.02, k=8)
    c = build_coefficients(ModelParams(), lev)
    w, z = const(8, 2.0, 2.0)
    w[1] = 1.0
    _, D, _ = functionals_at((w, z), c, lev, DOM)
    _, D_lim, _ = functionals_at((w, z), c, lev, DOM, form="limit")
    assert D >= 0.02 * 1.0**2
    assert D - D_lim == pytest.approx(0.02 * 1.0, rel=1e-12)


def test_unknown_form_rejected():
    lev = RegularizationLevel(delta=0.1, epsilon=0.1, k=4)
    with pytest.raises(ValueError):
        functionals_at(const(4, 1, 1), build_coefficients(ModelParams(), lev), lev, DOM, form="weak")


def test_singularity_guard_without_shift():
    lev = RegularizationLevel(k=4)
    c = build_coefficients(ModelParams(), lev)
    with pytest.raises(SingularityError):
        functionals_at(const(4, 0.0, 1.0), c, lev, DOM)
    lev_d = RegularizationLevel(delta=1e-3, epsilon=0.1, k=4)
    functionals_at(const(4, 0.0, 1.0), build_coefficients(ModelParams(), lev_d), lev_d, DOM)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), q=st.floats(-1, 1), delta=st.floats(0, 0.5))
def test_entropy_nonnegative(seed, q, delta):
    rng = np.random.default_rng(seed)
    lev = RegularizationLevel(delta=delta, k=6)
    c = build_coefficients(ModelParams(q1=q, q2=q), lev)
    w, z = const(6, 2.0, 2.0)
    w[1:] = 0.2 * rng.normal(size=5)
    z[1:] = 0.2 * rng.normal(size=5)
    E, D, _ = functionals_at((w, z), c, lev, DOM)
    assert E >= 0 and D >= 0


@settings(max_examples=40, deadline=None)
@given(d1=st.floats(1e-4, 0.3), d2=st.floats(1e-4, 0.3))
def test_entropy_decreases_with_shift(d1, d2):
    lo, hi = sorted((d1, d2))
    w, z = const(6, 0.3, 4.0)
    w[2] = 0.1
    Es = []
    for d in (lo, hi):
        lev = RegularizationLevel(delta=d, k=6)
        Es.append(functionals_at((w, z), build_coefficients(ModelParams(q1=0.5), lev), lev, DOM)[0])
    assert Es[1] <= Es[0] * (1 + 1e-12)


def test_trapezoid_helpers():
    t = np.linspace(0, 1, 11)
    assert np.allclose(_trapezoid_cumulative(t, 2 * t), t**2, atol=1e-15)
    assert np.all(_trapezoid_error_estimate(t, 3 * t + 1) < 1e-14)
    g = np.exp(3 * t)
    err = np.abs(_trapezoid_cumulative(t, g) - (g - 1) / 3)
    assert np.all(err <= _trapezoid_error_estimate(t, g) + 1e-15)


def _bump_run(k=16, t_end=0.02, kin=None, params=None, **solver):
    lev = RegularizationLevel(delta=0.01, epsilon=0.01, k=k)
    p = params or ModelParams(q1=0.5, m1=1.5, **(kin or {}))
    c = build_coefficients(p, lev)
    init = InitialData(bump_u=Bump((1.0,), 0.4, 1.0, 0.5), bump_v=Bump((2.2,), 0.4, 0.8, 0.5))
    w, z = init.prepare(DOM, k)
    cfg = SolverConfig(t_end=t_end, snapshot_interval=t_end / 40, snapshot_stride=0, **solver)
    return integrate((w, z), c, lev, DOM, cfg), c, lev


def test_chain_rule_defect_is_a_projection_error():
    # the defect is the X_k projection error of G', which decays spectrally for smooth data
    init = InitialData(bump_u=Bump((1.0,), 0.4, 1.0, 0.5), bump_v=Bump((2.2,), 0.4, 0.8, 0.5))
    defects = []
    for k in (8, 16, 32):
        lev = RegularizationLevel(delta=0.01, epsilon=0.01, k=k)
        c = build_coefficients(ModelParams(q1=0.5, m1=1.5), lev)
        w, z = init.prepare(DOM, k)
        _, D, R = functionals_at((w, z), c, lev, DOM)
        defects.append(abs(chain_rule_rate((w, z), c, DOM) - (R - D)) / (1 + abs(D) + abs(R)))
    assert defects[1] < 1e-3 * defects[0]
    assert defects[2] < 1e-13


def test_homogeneous_identity_residual_zero():
    lev = RegularizationLevel(delta=0.01, epsilon=0.01, k=8)
    c = build_coefficients(ModelParams(), lev)
    traj = integrate(const(8, 2.0, 0.5), c, lev, DOM, SolverConfig(t_end=0.1, snapshot_interval=0.01))
    assert identity_residual(traj, c, lev, DOM).max_normalized < 1e-13


def test_entropy_inequality_holds_on_bump_run():
    traj, c, lev = _bump_run(kin=H2, rel_tol=1e-10, abs_tol=1e-13)
    res = entropy_inequality_residual(traj, c, lev, DOM)
    assert res.holds
    assert np.all(res.chain_rule_defect < 1e-8)
    # the identity holds too, so the residual is small, not just one-signed
    assert np.abs(res.residual).max() < 1e-4


def test_weighted_inequality_validates_weights():
    traj, c, lev = _bump_run(t_end=0.005)
    n = len(traj.snapshots)
    with pytest.raises(ValueError):
        entropy_inequality_residual(traj, c, lev, DOM, zeta=-np.ones(n))
    zeta = 1 - traj.times / traj.times[-1] * 0.5
    res = entropy_inequality_residual(traj, c, lev, DOM, zeta=zeta, zeta_prime=-0.5 / traj.times[-1] * np.ones(n))
    assert res.holds


def test_monitors_report():
    traj, c, lev = _bump_run(kin=H2)
    rep = monitors(traj, c, lev, DOM)
    cols = rep.columns
    assert np.all(cols["mass_combination"] <= cols["mass_combination_bound"] * (1 + 1e-12))
    assert np.all(cols["neg_mass_u"] == 0) and np.all(cols["neg_mass_v"] == 0)
    assert np.all(np.isnan(cols["lq_weighted_u"]))
    summ = rep.summary()
    assert set(summ) == {"max_inequality_residual", "max_identity_residual_normalized", "mass_drift",
                         "min_state", "inequality_holds", "dissipation_form", "notes"}
    assert summ["inequality_holds"] and summ["min_state"] > 0
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].split(",") == list(REPORT_COLUMNS)
    assert len(lines) == 1 + len(traj.snapshots)
    buf = io.StringIO()
    rep.write_summary(buf)
    assert json.loads(buf.getvalue())["dissipation_form"] == "eps_delta"


def test_mass_drift_without_kinetics():
    traj, c, lev = _bump_run()
    assert monitors(traj, c, lev, DOM).summary()["mass_drift"] < 1e-13


def test_truncated_level_reports_weighted_integrals():
    lev = RegularizationLevel(alpha=0.1, delta=0.01, epsilon=0.01, k=8)
    c = build_coefficients(ModelParams(q1=0.5), lev)
    traj = integrate(const(8, 2.0, 0.5), c, lev, DOM, SolverConfig(t_end=0.01))
    cols = monitors(traj, c, lev, DOM).columns
    b = get_basis(DOM, 8)
    assert np.all(np.isfinite(cols["lq_weighted_u"]))
    assert cols["lq_weighted_u"][0] > 0 and b.k == 8
