"""End-to-end acceptance gate: ten numbered criteria, one report line each.

Each test prints its verdict directly to the real stdout so the line shows up
in captured logs regardless of pytest's capture mode.
"""

import sys
import time

import numpy as np
import pytest

from curveflow import curve_core as cc
from curveflow import geodesic_engine as ge
from curveflow import metric_almost_local as mal
from curveflow import metric_sobolev_diff as msd
from curveflow import metric_sobolev_imm as msi
from curveflow import oracles_examples as oe


def report(name, ok, detail):
    line = "%s criterion %s: %s\n" % ("PASS" if ok else "FAIL", name, detail)
    sys.__stdout__.write(line)
    sys.__stdout__.flush()
    assert ok, line


def fd4(G, eps):
    return (8 * (G(eps) - G(-eps)) - (G(2 * eps) - G(-2 * eps))) / (12 * eps)


def drift_per_unit_time(trace, exclude=("length", "reparam_sup")):
    e0 = abs(trace.records[0]["energy"])
    span = trace.times[-1] - trace.times[0]
    worst = 0.0
    for name in trace.records[0]:
        if name in exclude:
            continue
        col = trace.column(name)
        scale = max(abs(col[0]), 1e-3 * max(1.0, e0))
        worst = max(worst, float(np.abs(col - col[0]).max()) / scale / span)
    return worst


# ---------------------------------------------------------------------------
# 1. metric-gradient contract, both routes, 20 random instances


def test_criterion_1_gradient_contract():
    t0 = time.monotonic()
    rng = np.random.default_rng(2024)
    N = 128
    phis = [mal.phi_ga(0.7), mal.phi_scale_invariant(0.4), mal.phi_wasserstein(), mal.phi_power_length(1.5)]
    imms = [msi.SobolevImmSpec(n=1, A=0.8), msi.SobolevImmSpec(n=2, A=0.5), msi.SobolevImmSpec(n=3, A=0.01)]
    diffs = [msd.SobolevDiffSpec(n=n, A=1.1) for n in (1, 2, 3, 4)]
    worst = 0.0
    for i in range(20):
        c, h = cc.random_smooth_curve(rng, N, amp=0.1), cc.random_smooth_curve_field(rng, N, amp=0.3)
        k = cc.random_smooth_curve_field(rng, N, amp=0.3)
        m = cc.random_smooth_curve_field(rng, N, amp=0.3)
        cases = [
            (phis[i % 4], mal.g_phi, mal.grad_K_phi, mal.grad_H_phi, 1e-4),
            (imms[i % 3], msi.g_imm, msi.grad_K_imm, msi.grad_H_imm, 1e-4),
            (diffs[i % 4], msd.g_diff, msd.grad_K_diff, msd.grad_H_diff, 8e-4 if i % 4 == 3 else 1e-4),
        ]
        for spec, g, gradK, gradH, eps in cases:
            fd = fd4(lambda t: g(spec, cc.DiscreteCurve(c.points + t * m), h, k), eps)
            viaK = g(spec, c, gradK(spec, c, m, h), k)
            viaH = g(spec, c, m, gradH(spec, c, h, k))
            worst = max(worst, abs(viaK - fd) / abs(fd), abs(viaH - fd) / abs(fd))
    elapsed = time.monotonic() - t0
    report(
        "1 (gradient contract)",
        worst < 1e-6 and elapsed < 60.0,
        "worst relative error %.2e (< 1e-6), %.1f s (< 60 s)" % (worst, elapsed),
    )


# ---------------------------------------------------------------------------
# 2. circle geodesics against the 1D radius ODE and the power/exponential laws


def _circle_run(spec, form, field, dt=1e-3, T=1.0, N=128, filter_modes=None, hard_tol=1e-3):
    c0 = cc.make_circle(r=1.0, N=N)
    state = ge.GeodesicState(c0, field(c0), form)
    traj = ge.integrate(state, spec, dt, T, save_every=100, filter_modes=filter_modes, hard_tol=hard_tol)
    sigma = np.sqrt(traj.trace.records[0]["energy"])
    r_num = float(np.linalg.norm(traj.final_curve.points, axis=1).mean())
    return traj, sigma, r_num


def test_criterion_2_circle_oracles():
    a0 = 0.25
    results = []

    traj, sigma, r_num = _circle_run(
        mal.phi_ga(0.5), "phi_horizontal", lambda c: np.full(c.N, a0), filter_modes=8
    )
    oracle = oe.CircleOracle(mal.phi_ga(0.5), sigma=sigma, r0=1.0)
    results.append(("GA", abs(r_num - oe.solve_circle(oracle, 1.0)(1.0)), 1e-5))

    for n in (1, 2):
        spec = msi.SobolevImmSpec(n=n, A=0.4)
        traj, sigma, r_num = _circle_run(spec, "imm_eq6", lambda c: a0 * c.n)
        oracle = oe.CircleOracle(spec, sigma=sigma, r0=1.0)
        results.append(("imm%d" % n, abs(r_num - oe.solve_circle(oracle, 1.0)(1.0)), 1e-5))

    for n, tol, hard in ((1, 2e-2, 5e-2), (2, 1e-3, 1e-3)):
        spec = msd.SobolevDiffSpec(n=n, A=0.4)

        def pt0(c, spec=spec):
            return msd.apply_Lc(spec, c, a0 * c.n) * (c.ds / (2 * np.pi / c.N))[:, None]

        traj, sigma, r_num = _circle_run(spec, "diff_momentum", pt0, hard_tol=hard)
        oracle = oe.CircleOracle(spec, sigma=sigma, r0=1.0)
        results.append(("diff%d" % n, abs(r_num - oe.solve_circle(oracle, 1.0)(1.0)), tol))

    # power-law radius exponents for Phi = l^k
    for k in (0.0, 1.0, 2.0, -1.0):
        got = oe.power_law_exponent(k)
        results.append(("power k=%g" % k, abs(got - 2.0 / (k + 3.0)) * (k + 3.0) / 2.0, 1e-2))

    # exponential growth rate for the scale-invariant weight
    A_star = 0.5 - 1.0 / (4 * np.pi**2)
    spec = mal.phi_scale_invariant(A_star)
    c0 = cc.make_circle(r=1.0, N=128)
    state = ge.GeodesicState(c0, np.full(128, -0.2), "phi_horizontal")
    traj = ge.integrate(state, spec, 1e-3, 1.0, save_every=100, filter_modes=8)
    sigma = np.sqrt(traj.trace.records[0]["energy"])
    rs = [float(np.linalg.norm(p, axis=1).mean()) for p in traj.points]
    rate = np.polyfit(traj.times, np.log(rs), 1)[0]
    results.append(("SI rate", abs(rate / (np.sqrt(2) * sigma) - 1.0), 1e-2))

    worst = max(err / tol for _, err, tol in results)
    detail = "; ".join("%s %.1e (tol %.0e)" % (n, e, t) for n, e, t in results)
    report("2 (circle oracles)", worst < 1.0, detail)


# ---------------------------------------------------------------------------
# 3. conserved momenta along the geodesic test matrix


def test_criterion_3_conserved_momenta():
    rng = np.random.default_rng(11)
    curve64 = cc.random_smooth_curve(rng, N=64, modes=4, amp=0.1)
    a64 = 0.2 + 0.1 * np.sin(2 * cc.theta_grid(64))
    rng128 = np.random.default_rng(11)
    curve128 = cc.random_smooth_curve(rng128, N=128, modes=4, amp=0.1)
    h128 = cc.random_smooth_field(rng128, 128, modes=3, amp=0.2)[:, None] * curve128.n

    runs = []
    runs.append(("GA random", ge.GeodesicState(curve64, a64, "phi_horizontal"), mal.phi_ga(0.5), 5e-4, 0.05, None))
    runs.append(("SI random", ge.GeodesicState(curve64, a64, "phi_horizontal"), mal.phi_scale_invariant(0.4), 2e-4, 0.02, None))
    runs.append(("W random", ge.GeodesicState(curve64, a64, "phi_horizontal"), mal.phi_wasserstein(), 2e-4, 0.02, None))
    circ = cc.make_circle(r=1.0, N=128)
    runs.append(("GA circle", ge.GeodesicState(circ, np.full(128, 0.2), "phi_horizontal"), mal.phi_ga(0.5), 1e-3, 0.5, 8))
    runs.append(("SI circle", ge.GeodesicState(circ, np.full(128, 0.2), "phi_horizontal"), mal.phi_scale_invariant(0.4), 1e-3, 0.5, 8))
    runs.append(("imm2 eq6", ge.GeodesicState(curve128, h128, "imm_eq6"), msi.SobolevImmSpec(n=2, A=1.2), 1e-3, 0.5, None))
    spec7 = msi.SobolevImmSpec(n=1, A=1.0)
    runs.append(("imm1 eq7", ge.GeodesicState(curve128, msi.apply_Ln(spec7, curve128, h128), "imm_eq7"), spec7, 1e-3, 0.5, None))
    for n in (2, 3):
        spec = msd.SobolevDiffSpec(n=n, A=1.0)
        pt = msd.apply_Lc(spec, curve128, h128) * (curve128.ds / (2 * np.pi / 128))[:, None]
        runs.append(("diff%d" % n, ge.GeodesicState(curve128, pt, "diff_momentum"), spec, 1e-3, 0.25, None))

    worst = 0.0
    rep_sup = 0.0
    details = []
    for name, state, spec, dt, T, fm in runs:
        traj = ge.integrate(state, spec, dt, T, save_every=10, filter_modes=fm)
        d = drift_per_unit_time(traj.trace)
        worst = max(worst, d)
        details.append("%s %.1e" % (name, d))
        if state.form == "phi_horizontal":
            rep_sup = max(rep_sup, float(traj.trace.column("reparam_sup").max()))
    ok = worst < 1e-8 and rep_sup < 1e-10
    report(
        "3 (conserved momenta)",
        ok,
        "worst drift/unit time %.2e (< 1e-8), horizontal reparam sup %.2e (< 1e-10); %s"
        % (worst, rep_sup, ", ".join(details)),
    )


# ---------------------------------------------------------------------------
# 4. sectional curvature against the two printed specializations


def test_criterion_4_curvature_specializations():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        c = cc.arclength_resample(cc.random_smooth_curve(rng, N=96, amp=0.1))
        m = cc.random_smooth_field(rng, 96, modes=5)
        h = cc.random_smooth_field(rng, 96, modes=5)

        R = mal.sectional_curvature_phi(mal.phi_ga(0.6), c, m, h)
        ref = mal.curvature_ga_reference(0.6, c, m, h)
        worst = max(worst, abs(R - ref) / max(abs(ref), 1e-12))

        spec = mal.phi_power_length(1.3)
        w = c.length / c.N
        P = float(np.asarray(spec.phi(c.length, c.kappa))[0])
        g = lambda x, y: w * np.sum(P * x * y)  # noqa: E731
        mm = m / np.sqrt(g(m, m))
        hh = h - g(h, mm) * mm
        hh = hh / np.sqrt(g(hh, hh))
        _, k0 = mal.sectional_curvature_phi(spec, c, mm, hh, return_sectional=True)
        ref = mal.shah_k0_reference(spec, c, mm, hh)
        worst = max(worst, abs(k0 - ref) / max(abs(ref), 1e-12))
    elapsed = time.monotonic() - t0
    report(
        "4 (curvature specializations)",
        worst < 1e-8 and elapsed < 300.0,
        "worst relative error %.2e (< 1e-8), %.1f s (< 300 s)" % (worst, elapsed),
    )


# ---------------------------------------------------------------------------
# 5. operator algebra: adjointness, positivity, first-order closed forms


def test_criterion_5_operator_algebra():
    rng = np.random.default_rng(77)
    N = 128
    c = cc.random_smooth_curve(rng, N, amp=0.1)
    f = cc.random_smooth_field(rng, N, modes=5)
    g = cc.random_smooth_field(rng, N, modes=5)
    h = cc.random_smooth_curve_field(rng, N, amp=0.2)
    k = cc.random_smooth_curve_field(rng, N, amp=0.2)
    worst_adj = 0.0
    worst_red = 0.0

    # the n=3 projected blocks carry matrix entries of size A (N/2)^6, so
    # their adjointness cancellation is checked on the coarser grid where the
    # conditioning leaves headroom below the tolerance
    rng64 = np.random.default_rng(77)
    c64 = cc.random_smooth_curve(rng64, 64, amp=0.1)
    f64 = cc.random_smooth_field(rng64, 64, modes=5)
    g64 = cc.random_smooth_field(rng64, 64, modes=5)
    for n in (1, 2, 3):
        spec = msi.SobolevImmSpec(n=n, A=0.8)
        Lh, Lk = msi.apply_Ln(spec, c, h), msi.apply_Ln(spec, c, k)
        lhs = float(np.einsum("ij,ij,i->", Lh, k, c.ds))
        rhs = float(np.einsum("ij,ij,i->", h, Lk, c.ds))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1e-12))
        pos = float(np.einsum("ij,ij,i->", Lh, h, c.ds))
        assert pos > 0
        cb, fb, gb = (c, f, g) if n < 3 else (c64, f64, g64)
        top, bot = msi.build_Ltop_Lbot(spec, cb)
        lhs = cb.integrate(top.apply(fb) * gb) - cb.integrate(fb * top.apply(gb))
        worst_adj = max(worst_adj, abs(lhs) / max(abs(cb.integrate(top.apply(fb) * gb)), 1e-12))
        skew = cb.integrate(bot.apply(fb) * gb) + cb.integrate(fb * bot.apply(gb))
        worst_adj = max(worst_adj, abs(skew) / max(abs(cb.integrate(bot.apply(fb) * gb)), 1e-12))

    for spec in (msd.SobolevDiffSpec(n=n, A=1.0) for n in (1, 2)):
        km = msd.build_Fc(spec, c)
        ph, pk = msd.apply_Lc(spec, c, h, km), msd.apply_Lc(spec, c, k, km)
        lhs = float(np.einsum("ij,ij,i->", ph, k, c.ds))
        rhs = float(np.einsum("ij,ij,i->", h, pk, c.ds))
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1e-12))
        assert float(np.einsum("ij,ij,i->", ph, h, c.ds)) > 0

    # reduced-metric identities: quadratic form of the lift equals the
    # reduced matrix pairing
    a = cc.random_smooth_field(rng, N, modes=4)
    spec = msi.SobolevImmSpec(n=2, A=0.8)
    lift = msi.horizontal_lift_imm(spec, c, a)
    viaG = msi.g_imm(spec, c, lift, lift)
    red = msi.reduced_metric_matrix(spec, c)
    worst_red = max(worst_red, abs(float(np.dot(red.apply(a) * a, c.ds)) - viaG) / abs(viaG))
    spec = msd.SobolevDiffSpec(n=2, A=1.0)
    lift = msd.horizontal_lift_diff(spec, c, a)
    viaG = msd.g_diff(spec, c, lift, lift)
    red = msd.reduced_metric_matrix_diff(spec, c)
    worst_red = max(worst_red, abs(float(np.dot(red.apply(a) * a, c.ds)) - viaG) / abs(viaG))

    # n=1 closed forms, tested as actions on smooth fields
    A = 0.9
    spec = msi.SobolevImmSpec(n=1, A=A)
    top, bot = msi.build_Ltop_Lbot(spec, c)
    f_s = cc.d_s(c, f)
    want_top = -A * cc.d_s(c, f_s) + (1 + A * c.kappa**2) * f
    want_bot = -2 * A * c.kappa * f_s - A * cc.d_s(c, c.kappa) * f
    worst_cf = max(
        float(np.abs(top.apply(f) - want_top).max()) / float(np.abs(want_top).max()),
        float(np.abs(bot.apply(f) - want_bot).max()) / max(float(np.abs(want_bot).max()), 1e-3),
    )

    ok = worst_adj < 1e-9 and worst_red < 1e-8 and worst_cf < 1e-8
    report(
        "5 (operator algebra)",
        ok,
        "adjointness %.2e (< 1e-9), reduced-metric %.2e (< 1e-8), n=1 closed forms %.2e (< 1e-8)"
        % (worst_adj, worst_red, worst_cf),
    )


# ---------------------------------------------------------------------------
# 6. kernel identities: convolution vs solve, 2D Fourier transform, Wronskian


def _conv_vs_solve(n, N, Mfac):
    spec = msi.SobolevImmSpec(n=n, A=0.7)
    c = cc.make_circle(r=1.2, N=N)
    th = c.theta
    w = 0.3 + 0.2 * np.sin(3 * th) + 0.1 * np.cos(5 * th)
    wf = np.stack([w, np.zeros_like(w)], axis=1)
    got = msi.solve_Ln(spec, c, wf)[:, 0]
    ell = c.length
    M = Mfac * N
    sf = np.linspace(0, ell, M, endpoint=False)
    thf = cc.theta_grid(M)
    wfine = 0.3 + 0.2 * np.sin(3 * thf) + 0.1 * np.cos(5 * thf)
    s = cc.arclength_parameter(c)
    d = np.abs(s[:, None] - sf[None, :])
    d = np.minimum(d, ell - d)
    K = msi.green_Fn(spec, ell, d)
    want = K @ wfine * (ell / M)
    return float(np.abs(got - want).max() / np.abs(want).max())


def _fft_kernel_error(n):
    spec = msd.SobolevDiffSpec(n=n, A=1.0)
    if n == 1:
        box, M, q = 40.0, 512, 4
        hcell = box / M
        g = (np.arange(M) - M // 2) * hcell
        F = np.zeros((M, M))
        offs = (np.arange(q) + 0.5) / q - 0.5
        for ox in offs:
            for oy in offs:
                X, Y = np.meshgrid(g + ox * hcell, g + oy * hcell, indexing="ij")
                F += msd.kernel_F_radial(spec, np.hypot(X, Y))
        F /= q * q
        # the center cell needs a dense average of the log pole
        fine = 256
        ox = (np.arange(fine) + 0.5) / fine - 0.5
        XX, YY = np.meshgrid(ox * hcell, ox * hcell, indexing="ij")
        F[M // 2, M // 2] = msd.kernel_F_radial(spec, np.hypot(XX, YY)).mean()
        Fh = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(F))).real * hcell**2
        xi = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(M, d=hcell))
        KX, KY = np.meshgrid(xi, xi, indexing="ij")
        Fh /= np.sinc(KX * hcell / 2 / np.pi) * np.sinc(KY * hcell / 2 / np.pi)
        sel = np.hypot(KX, KY) < 6.0
    else:
        box, M = 60.0, 512
        hcell = box / M
        g = (np.arange(M) - M // 2) * hcell
        X, Y = np.meshgrid(g, g, indexing="ij")
        F = msd.kernel_F_radial(spec, np.hypot(X, Y))
        Fh = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(F))).real * hcell**2
        xi = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(M, d=hcell))
        KX, KY = np.meshgrid(xi, xi, indexing="ij")
        sel = np.hypot(KX, KY) < 6.0
    want = 1.0 / (1.0 + KX**2 + KY**2) ** n
    return float(np.abs(Fh - want)[sel].max())


def test_criterion_6_kernel_identities():
    conv = max(_conv_vs_solve(1, 128, 64), _conv_vs_solve(2, 128, 16), _conv_vs_solve(3, 64, 16))
    fft = max(_fft_kernel_error(n) for n in (1, 2, 3, 4))
    x = np.linspace(0.2, 20.0, 64)
    I0, I1 = msd.bessel_I(0, x), msd.bessel_I(1, x)
    K0, K1 = msd.bessel_K(0, x), msd.bessel_K(1, x)
    wr = float(np.abs(((I0 - I1 / x) * K1 - I1 * (-K0 - K1 / x)) * x - 1.0).max())
    ok = conv < 1e-6 and fft < 1e-4 and wr < 1e-10
    report(
        "6 (kernel identities)",
        ok,
        "conv-vs-solve %.2e (< 1e-6), 2D FFT %.2e (< 1e-4), Wronskian %.2e (< 1e-10)"
        % (conv, fft, wr),
    )


# ---------------------------------------------------------------------------
# 7. length-based Lipschitz bounds along integrated paths


def test_criterion_7_lipschitz_bounds():
    rng = np.random.default_rng(5)
    c0 = cc.random_smooth_curve(rng, N=64, amp=0.1)
    h0 = cc.random_smooth_curve_field(rng, 64, amp=0.3)
    margins = []

    spec = msi.SobolevImmSpec(n=1, A=1.0)
    traj = ge.integrate(ge.GeodesicState(c0, h0, "imm_eq6"), spec, 1e-3, 0.5, save_every=10)
    path = [cc.DiscreteCurve(p) for p in traj.points]
    lhs, rhs = msi.lipschitz_check_imm(spec, path, 1e-2)
    margins.append(("imm sqrt-length", lhs, rhs))

    spec = msi.SobolevImmSpec(n=2, A=1.5)
    traj = ge.integrate(ge.GeodesicState(c0, h0, "imm_eq6"), spec, 1e-3, 0.5, save_every=10)
    path = [cc.DiscreteCurve(p) for p in traj.points]
    lhs, rhs = msi.lipschitz_check_imm(spec, path, 1e-2)
    margins.append(("imm2 sqrt-length", lhs, rhs))

    spec = mal.phi_scale_invariant(0.5)
    circ = cc.make_circle(r=1.0, N=64)
    traj = ge.integrate(ge.GeodesicState(circ, np.full(64, 0.3), "phi_horizontal"), spec, 1e-3, 0.5, save_every=10, filter_modes=8)
    path = [cc.DiscreteCurve(p) for p in traj.points]
    lhs, rhs = mal.lipschitz_check_logl(spec, path, 1e-2)
    margins.append(("SI log-length", lhs, rhs))

    ok = all(lhs <= rhs * (1 + 1e-8) + 1e-8 for _, lhs, rhs in margins)
    detail = "; ".join("%s %.4f <= %.4f" % (n, l, r) for n, l, r in margins)
    report("7 (Lipschitz bounds)", ok, detail)


# ---------------------------------------------------------------------------
# 8. Wasserstein sandwich and the sawtooth kernel bound


def test_criterion_8_wasserstein_sandwich():
    rng = np.random.default_rng(33)
    violations = 0
    for _ in range(100):
        c = cc.random_smooth_curve(rng, N=64, amp=float(rng.uniform(0, 0.2)))
        b = cc.random_smooth_field(rng, 64, modes=int(rng.integers(1, 6)))
        lower, mid, upper = mal.wasserstein_sandwich(c, b)
        if lower > mid + 1e-10 * max(1.0, upper) or mid > upper + 1e-10 * max(1.0, upper):
            violations += 1
    # kernel operator bound: sup |conv| <= sqrt(l/12) ||f||_{L^2}
    worst = 0.0
    for _ in range(20):
        c = cc.random_smooth_curve(rng, N=64, amp=0.1)
        f = cc.random_smooth_field(rng, 64) * c.kappa
        a = mal.sawtooth_kernel_conv(c, f)
        bound = np.sqrt(c.length / 12.0) * np.sqrt(float(np.dot(f * f, c.ds)))
        worst = max(worst, float(np.abs(a).max()) / bound)
    ok = violations == 0 and worst <= 1.0 + 1e-9
    report(
        "8 (Wasserstein sandwich)",
        ok,
        "%d violations in 100 draws, kernel bound ratio %.3f (<= 1)" % (violations, worst),
    )


# ---------------------------------------------------------------------------
# 9. the thin-cigar norm table


def test_criterion_9_cigar_table():
    t0 = time.monotonic()
    shape = oe.CigarShape()
    table = oe.cigar_table(shape, A=1.0, N=512)
    worst_exp = 0.0
    worst_val = 0.0
    w2, w4 = table["w_pair"]
    for key, want in oe.CIGAR_W_EXPONENT.items():
        got = table["w_exponent"][key]
        if key == ("diff1", "phi_x"):
            # the continuum norm carries a log(A/w^2) factor on top of 1/w;
            # remove it before fitting the power
            corr = np.log2(np.log(1.0 / w4**2) / np.log(1.0 / w2**2))
            got = got - corr
        worst_exp = max(worst_exp, abs(got - want))
    for key, want in oe.CIGAR_F_EXPONENT.items():
        worst_exp = max(worst_exp, abs(table["f_exponent"][key] - want))
    for key, want in table["expected"].items():
        ratio = table["norms"][key] / want
        worst_val = max(worst_val, max(ratio, 1.0 / ratio))
    elapsed = time.monotonic() - t0
    ok = worst_exp <= 0.3 and worst_val < 3.0 and elapsed < 600.0
    report(
        "9 (cigar table)",
        ok,
        "worst exponent error %.2f (<= 0.3), worst value ratio %.2f (< 3), %.0f s (< 600 s)"
        % (worst_exp, worst_val, elapsed),
    )


# ---------------------------------------------------------------------------
# 10. convergence orders of the integrator


def test_criterion_10_convergence_orders():
    spec = msi.SobolevImmSpec(n=1, A=1.0)
    ell = cc.make_ellipse(a=1.3, b=0.9, N=64)

    def run_dt(dt):
        traj = ge.integrate(
            ge.GeodesicState(ell, 0.5 * ell.n, "imm_eq6"), spec, dt, 0.8, save_every=10**9
        )
        return traj.final_curve.length

    study = ge.refinement_study(run_dt, [8e-2, 4e-2, 2e-2, 1e-2], reference=run_dt(1e-3))
    order = study["order"]

    def run_N(N):
        e = cc.make_ellipse(a=1.3, b=0.9, N=N)
        traj = ge.integrate(
            ge.GeodesicState(e, 0.3 * e.n, "imm_eq6"), spec, 5e-3, 0.4, save_every=10**9
        )
        return traj.final_curve.length

    ref = run_N(256)
    errs = [abs(run_N(N) - ref) for N in (16, 32, 64)]
    ratios = [errs[i] / max(errs[i + 1], 1e-300) for i in range(len(errs) - 1)]
    ok = order >= 3.8 and min(ratios) >= 8.0
    report(
        "10 (convergence orders)",
        ok,
        "RK4 temporal order %.2f (>= 3.8), spatial error drop per N-doubling >= %.1fx (>= 8x)"
        % (order, min(ratios)),
    )
