import io

import numpy as np
import pytest

from curveflow import curve_core as cc
from curveflow import geodesic_engine as ge
from curveflow import metric_almost_local as mal
from curveflow import metric_sobolev_diff as msd
from curveflow import metric_sobolev_imm as msi
from curveflow import oracles_examples as oe
from curveflow.errors import MonitorBlowup

from conftest import relerr


def test_integrate_matches_circle_oracle_imm():
    spec = msi.SobolevImmSpec(n=1, A=0.4)
    N, r0, a0, T, dt = 64, 1.0, 0.25, 0.5, 1e-3
    c0 = cc.make_circle(r=r0, N=N)
    h0 = a0 * c0.n
    traj = ge.integrate(ge.GeodesicState(c0, h0, "imm_eq6"), spec, dt, T, save_every=100)
    oracle = oe.CircleOracle(spec, sigma=np.sqrt(traj.trace.records[0]["energy"]), r0=r0, N=N)
    r_of = oe.solve_circle(oracle, T)
    r_num = np.linalg.norm(traj.final_curve.points, axis=1).mean()
    assert abs(r_num - r_of(T)) < 1e-8


def test_monitor_blowup_carries_partial_trajectory():
    # an unfiltered curvature-weighted run on a large grid excites the
    # high-wavenumber instability and must abort with the trajectory attached
    spec = mal.phi_ga(0.5)
    c0 = cc.make_circle(r=1.0, N=128)
    a0 = np.full(128, 0.2)
    with pytest.raises(MonitorBlowup) as exc:
        ge.integrate(ge.GeodesicState(c0, a0, "phi_horizontal"), spec, 1e-3, 1.0)
    traj = exc.value.trajectory
    assert traj is not None
    assert len(traj.points) >= 1
    assert traj.trace.times[-1] < 1.0


def test_filtering_keeps_supported_solutions_exact():
    spec = mal.phi_ga(0.5)
    c0 = cc.make_circle(r=1.0, N=128)
    a0 = np.full(128, 0.2)
    traj = ge.integrate(ge.GeodesicState(c0, a0, "phi_horizontal"), spec, 1e-3, 0.5, filter_modes=8)
    e = traj.trace.column("energy")
    assert np.abs(e - e[0]).max() < 1e-9 * abs(e[0])


def test_velocity_energy_consistency_across_forms(rng):
    N = 64
    c = cc.random_smooth_curve(rng, N, amp=0.1)
    a = cc.random_smooth_field(rng, N, modes=4, amp=0.2)
    h = cc.random_smooth_curve_field(rng, N, amp=0.2)
    cases = [
        (mal.phi_ga(0.5), "phi_horizontal", a),
        (msi.SobolevImmSpec(n=2, A=0.8), "imm_eq6", h),
        (msi.SobolevImmSpec(n=2, A=0.8), "imm_eq7", msi.apply_Ln(msi.SobolevImmSpec(n=2, A=0.8), c, h)),
        (msd.SobolevDiffSpec(n=2, A=1.0), "diff_momentum", msd.apply_Lc(msd.SobolevDiffSpec(n=2, A=1.0), c, h) * c.ds[:, None] / (2 * np.pi / N)),
    ]
    for spec, form, fld in cases:
        ct = ge.velocity_of(spec, form, c, fld)
        e = ge.energy_of(spec, form, c, fld)
        assert relerr(e, ge.metric_value(spec, c, ct, ct)) < 1e-8, form


def test_spectral_project_zeroes_high_modes():
    th = cc.theta_grid(64)
    f = np.cos(3 * th) + 0.5 * np.sin(20 * th)
    out = ge.spectral_project(f, 8)
    assert np.abs(out - np.cos(3 * th)).max() < 1e-12


def test_rk4_convergence_order_on_scalar_flow():
    # rk4_step drives a known scalar ODE pair at fourth order
    rhs = lambda p, f: (f, -p)  # noqa: E731  (harmonic oscillator)
    def run(dt):
        p, f = np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]])
        steps = int(round(1.0 / dt))
        for _ in range(steps):
            p, f = ge.rk4_step(rhs, (p, f), dt)
        return p[0, 0]
    study = ge.refinement_study(run, [0.2, 0.1, 0.05], reference=np.cos(1.0))
    assert study["order"] > 3.8


def test_fit_order_recovers_slope():
    hs = np.array([0.1, 0.05, 0.025])
    errs = 3.0 * hs**4
    assert abs(ge.fit_order(hs, errs) - 4.0) < 1e-10


def test_path_energy_and_length_on_uniform_translation():
    # translating at constant speed: length^2 = 2 * E * T (Cauchy-Schwarz equality)
    spec = msi.SobolevImmSpec(n=1, A=0.5)
    c0 = cc.make_circle(r=1.0, N=32)
    dt = 0.1
    path = [cc.DiscreteCurve(c0.points + np.array([0.3 * i * dt, 0.0])) for i in range(11)]
    E = ge.path_energy(spec, path, dt)
    L = ge.path_length(spec, path, dt)
    assert relerr(L**2, 2 * E * 1.0) < 1e-10


def test_bvp_descent_monotone_and_below_straight_line():
    spec = mal.phi_ga(0.4)
    c0 = cc.make_circle(r=1.0, N=32)
    c1 = cc.make_circle(r=1.3, N=32)
    path, energies, stalled = ge.bvp_descent(spec, c0, c1, path_steps=6, iters=60)
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]
    assert np.array_equal(path[0].points, c0.points)
    assert np.array_equal(path[-1].points, c1.points)


def test_trajectory_json_lines_roundtrip():
    import json

    spec = msi.SobolevImmSpec(n=1, A=0.5)
    c0 = cc.make_circle(r=1.0, N=32)
    traj = ge.integrate(ge.GeodesicState(c0, 0.1 * c0.n, "imm_eq6"), spec, 1e-2, 0.05)
    buf = io.StringIO()
    traj.write_json_lines(buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == len(traj.times)
    rec = json.loads(lines[-1])
    assert rec["t"] == traj.times[-1]
    assert np.abs(np.array(rec["points"]) - traj.points[-1]).max() == 0.0
    assert "energy" in rec["monitors"]


def test_monitor_trace_csv_and_monotone_timestamps():
    trace = ge.MonitorTrace()
    trace.append(0.0, {"energy": 1.0})
    trace.append(0.1, {"energy": 1.0})
    with pytest.raises(ValueError):
        trace.append(0.1, {"energy": 1.0})
    buf = io.StringIO()
    trace.to_csv(buf)
    rows = buf.getvalue().strip().split("\n")
    assert rows[0].strip() == "t,energy"
    assert len(rows) == 3


def test_integrate_rejects_bad_steps():
    spec = msi.SobolevImmSpec(n=1, A=0.5)
    c0 = cc.make_circle(N=32)
    st = ge.GeodesicState(c0, 0.1 * c0.n, "imm_eq6")
    with pytest.raises(ValueError):
        ge.integrate(st, spec, -1e-2, 0.1)
    with pytest.raises(ValueError):
        ge.integrate(st, spec, 1e-2, 0.0)
