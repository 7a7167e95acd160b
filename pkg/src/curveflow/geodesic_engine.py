"""Fixed-step RK4 geodesic integration with conservation monitors.

One engine serves all six right-hand-side forms: the state is always a pair
(curve points, companion field), where the field is a velocity, an operator
momentum, or a scalar momentum depending on the form tag.  Monitors record
the momentum maps, energy, length and the Lipschitz ledgers every step and
abort loudly when a conserved quantity drifts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import curve_core as cc
from . import metric_almost_local as mal
from . import metric_sobolev_diff as msd
from . import metric_sobolev_imm as msi
from .curve_core import DiscreteCurve
from .errors import CurveflowError, LipschitzViolation, MonitorBlowup, StalledDescent

FORMS = (
    "phi_horizontal",
    "imm_eq6",
    "imm_eq7",
    "imm_atilde",
    "diff_momentum",
    "diff_be",
)


@dataclass(frozen=True)
class GeodesicState:
    """A point of the geodesic flow: curve plus companion field.

    The field meaning depends on the form tag: velocity c_t (imm_eq6), the
    operator momentum L_n c_t (imm_eq7), the scalar momenta a / atilde
    (phi_horizontal, imm_atilde, diff_be), or the dtheta-density ptilde
    (diff_momentum).
    """

    curve: DiscreteCurve
    field: np.ndarray
    form: str

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError("unknown form %r" % (self.form,))
        f = np.asarray(self.field, float)
        scalar = self.form in ("phi_horizontal", "imm_atilde", "diff_be")
        want = (self.curve.N,) if scalar else (self.curve.N, 2)
        if f.shape != want:
            raise ValueError("field shape %s, expected %s" % (f.shape, want))


def rhs_for(spec, form):
    """(points, field) -> (d points/dt, d field/dt) for one form tag."""

    def rhs(points, fld):
        c = DiscreteCurve(points)
        if form == "phi_horizontal":
            return np.asarray(fld)[:, None] * c.n, mal.horizontal_rhs_phi(spec, c, fld)
        if form == "imm_eq6":
            return msi.geodesic_rhs_imm(spec, c, fld)
        if form == "imm_eq7":
            return msi.geodesic_rhs_imm_momentum(spec, c, fld)
        if form == "imm_atilde":
            return msi.horizontal_rhs_atilde(spec, c, fld)
        if form == "diff_momentum":
            return msd.geodesic_rhs_diff(spec, c, fld)
        if form == "diff_be":
            Ct, a_t = msd.be_geodesic_rhs(spec, c, fld)
            return Ct[:, None] * c.n, a_t
        raise ValueError(form)

    return rhs


def velocity_of(spec, form, c, fld):
    """Recover c_t from the state field."""
    if form == "phi_horizontal":
        return np.asarray(fld)[:, None] * c.n
    if form == "imm_eq6":
        return np.asarray(fld, float)
    if form == "imm_eq7":
        return msi.solve_Ln(spec, c, fld)
    if form == "imm_atilde":
        return msi.solve_Ln(spec, c, np.asarray(fld)[:, None] * c.n)
    if form == "diff_momentum":
        km = msd.build_Fc(spec, c)
        return km.F0 @ np.asarray(fld, float) * (2.0 * np.pi / c.N)
    if form == "diff_be":
        Fnn, _, _ = msd.be_kernels(spec, c)
        return (Fnn @ np.asarray(fld, float))[:, None] * c.n
    raise ValueError(form)


def metric_value(spec, c, h, k):
    """G_c(h,k) dispatched on the spec type."""
    if isinstance(spec, mal.PhiSpec):
        return mal.g_phi(spec, c, h, k)
    if isinstance(spec, msi.SobolevImmSpec):
        if spec.scale_invariant:
            return msi.g_imm_direct(spec, c, h, k)
        return msi.g_imm(spec, c, h, k)
    if isinstance(spec, msd.SobolevDiffSpec):
        return msd.g_diff(spec, c, h, k)
    raise TypeError("unknown metric spec %r" % (spec,))


def momenta_of(spec, form, c, fld):
    if form in ("phi_horizontal",):
        return mal.momenta_phi(spec, c, velocity_of(spec, form, c, fld))
    if form in ("imm_eq6", "imm_eq7", "imm_atilde"):
        return msi.momenta_imm(spec, c, velocity_of(spec, form, c, fld))
    if form == "diff_momentum":
        return msd.momenta_diff(spec, c, fld)
    # diff_be: momentum is the measure a*(dx^dy); its group pairings are
    # int a n ds (translations) and int a <Jc,n> ds (rotations)
    a = np.asarray(fld, float)
    linear = np.array([float(np.dot(a * c.n[:, 0], c.ds)), float(np.dot(a * c.n[:, 1], c.ds))])
    angular = float(np.dot(a * np.einsum("ij,ij->i", cc.rot90(c.points), c.n), c.ds))
    return cc.MomentaReport(reparam=np.zeros(c.N), linear=linear, angular=angular)


def energy_of(spec, form, c, fld):
    """G_c(c_t, c_t) of the state (squared geodesic speed)."""
    if form == "diff_momentum":
        ct = velocity_of(spec, form, c, fld)
        return float(np.einsum("ij,ij->", np.asarray(fld, float), ct)) * (2.0 * np.pi / c.N)
    if form == "diff_be":
        a = np.asarray(fld, float)
        Fnn, _, _ = msd.be_kernels(spec, c)
        return float(np.dot(a * (Fnn @ a), c.ds))
    ct = velocity_of(spec, form, c, fld)
    return metric_value(spec, c, ct, ct)


@dataclass
class MonitorTrace:
    times: list = field(default_factory=list)
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def append(self, t, record):
        if self.times and t <= self.times[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.times.append(t)
        self.records.append(record)

    def column(self, name):
        return np.array([r[name] for r in self.records])

    def to_csv(self, fh):
        names = sorted(self.records[0]) if self.records else []
        w = csv.writer(fh)
        w.writerow(["t"] + names)
        for t, r in zip(self.times, self.records):
            w.writerow([repr(t)] + [repr(r[k]) for k in names])


@dataclass
class Trajectory:
    form: str
    times: list
    points: list
    fields: list
    trace: MonitorTrace

    @property
    def final_curve(self):
        return DiscreteCurve(self.points[-1])

    def write_json_lines(self, fh, monitors=True):
        for i, t in enumerate(self.times):
            rec = {"t": t, "points": np.asarray(self.points[i]).tolist()}
            if monitors:
                rec["monitors"] = {
                    k: v for k, v in self.trace.records[i].items() if np.ndim(v) == 0
                }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def spectral_project(f, max_mode):
    """Zero all Fourier modes above max_mode (axis 0)."""
    f = np.asarray(f, float)
    fh = np.fft.rfft(f, axis=0)
    k = np.fft.rfftfreq(f.shape[0], d=1.0 / f.shape[0])
    fh[k > max_mode] = 0.0
    return np.fft.irfft(fh, n=f.shape[0], axis=0)


def rk4_step(rhs, y, dt):
    """One classical RK4 step for a pair state y = (points, field)."""
    p, f = y
    k1 = rhs(p, f)
    k2 = rhs(p + 0.5 * dt * k1[0], f + 0.5 * dt * k1[1])
    k3 = rhs(p + 0.5 * dt * k2[0], f + 0.5 * dt * k2[1])
    k4 = rhs(p + dt * k3[0], f + dt * k3[1])
    return (
        p + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        f + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
    )


def _drift_scale(x):
    return max(abs(x), 1e-12)


def integrate(
    state,
    spec,
    dt,
    T,
    save_every=1,
    hard_tol=1e-3,
    warn_tol=1e-6,
    check_lipschitz=True,
    filter_modes=None,
):
    """Fixed-step RK4 flow of a geodesic state with conservation monitors.

    Conserved monitors (momenta and energy) are compared against their
    initial values every step; exceeding hard_tol relative drift raises
    MonitorBlowup (the trajectory up to the last good step is attached to
    the exception), warn_tol only records a warning.  The sqrt-length
    Lipschitz ledger is enforced for standard imm specs with A >= 1.

    filter_modes, if set, projects the state onto Fourier modes <= that
    cutoff after every step.  The almost-local family needs this near
    symmetric states: its linearization has real spectrum growing like k^2
    (measured on the circle), so round-off at high wavenumbers is amplified
    ahead of any physical signal.  Solutions supported below the cutoff are
    untouched by the projection.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    form = state.form
    rhs = rhs_for(spec, form)
    n_steps = int(round(T / dt))
    trace = MonitorTrace()
    traj = Trajectory(form=form, times=[], points=[], fields=[], trace=trace)

    pts = state.curve.points.copy()
    fld = np.asarray(state.field, float).copy()
    ref = None
    sqrt_l0 = None
    glen = 0.0  # accumulated metric path length

    lipschitz_active = (
        check_lipschitz
        and isinstance(spec, msi.SobolevImmSpec)
        and not spec.scale_invariant
        and spec.A >= 1.0
    )
    logl_active = (
        check_lipschitz and isinstance(spec, mal.PhiSpec) and spec.name == "ScaleInvariant"
    )
    log_l0 = None

    for step in range(n_steps + 1):
        t = step * dt
        c = DiscreteCurve(pts)  # validates the immersion property
        rec = {"length": c.length}
        rec["energy"] = energy_of(spec, form, c, fld)
        mom = momenta_of(spec, form, c, fld)
        rec.update(mom.flat())
        rec["reparam_sup"] = float(np.abs(mom.reparam).max())
        if ref is None:
            ref = dict(rec)
            del ref["length"]
            sqrt_l0 = np.sqrt(c.length)
            log_l0 = np.log(c.length)
            # near-zero conserved values are monitored on an absolute scale
            # tied to the energy, not a meaningless relative one
            floor = 1e-3 * max(1.0, abs(rec["energy"]))
        else:
            for name, v0 in ref.items():
                drift = abs(rec[name] - v0) / max(abs(v0), floor)
                if drift > hard_tol:
                    trace.append(t, rec)
                    raise MonitorBlowup(
                        "monitor %r drifted %.3e (> %.0e) at t=%.6g; "
                        "trajectory attached" % (name, drift, hard_tol, t),
                        traj,
                    )
                if drift > warn_tol:
                    trace.warnings.append((t, name, drift))
        if lipschitz_active and abs(np.sqrt(c.length) - sqrt_l0) > 0.5 * glen + 1e-8:
            raise LipschitzViolation(
                "|sqrt(l) - sqrt(l0)| = %.3e exceeds half the path length %.3e at t=%.6g"
                % (abs(np.sqrt(c.length) - sqrt_l0), glen, t)
            )
        if logl_active and abs(np.log(c.length) - log_l0) > glen / np.sqrt(
            spec.params[0]
        ) + 1e-8:
            raise LipschitzViolation(
                "|log l - log l0| = %.3e exceeds the scaled path length %.3e at t=%.6g"
                % (abs(np.log(c.length) - log_l0), glen / np.sqrt(spec.params[0]), t)
            )
        trace.append(t, rec)
        if step % save_every == 0 or step == n_steps:
            traj.times.append(t)
            traj.points.append(pts.copy())
            traj.fields.append(fld.copy())
        if step == n_steps:
            break
        glen += dt * np.sqrt(max(rec["energy"], 0.0))
        pts, fld = rk4_step(rhs, (pts, fld), dt)
        if filter_modes is not None:
            pts = spectral_project(pts, filter_modes)
            fld = spectral_project(fld, filter_modes)
    return traj


def path_energy(spec, path, dt):
    """Midpoint-rule path energy 1/2 int G_c(c_t, c_t) dt.

    Velocities are interval differences evaluated on the interval-midpoint
    curve (second-order accurate and defined for any path).
    """
    total = 0.0
    for c0, c1 in zip(path[:-1], path[1:]):
        mid = DiscreteCurve(0.5 * (c0.points + c1.points))
        ct = (c1.points - c0.points) / dt
        total += 0.5 * metric_value(spec, mid, ct, ct) * dt
    return total


def path_length(spec, path, dt):
    total = 0.0
    for c0, c1 in zip(path[:-1], path[1:]):
        mid = DiscreteCurve(0.5 * (c0.points + c1.points))
        ct = (c1.points - c0.points) / dt
        total += np.sqrt(max(metric_value(spec, mid, ct, ct), 0.0)) * dt
    return total


def fit_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, float)
    errors = np.maximum(np.asarray(errors, float), 1e-300)
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def refinement_study(run, levels, reference=None):
    """Errors and fitted order over a refinement ladder.

    run(level) -> scalar observable; levels are the step sizes (or 1/N).
    Without an explicit reference the finest level is used (and excluded
    from the fit).
    """
    values = [run(lv) for lv in levels]
    if reference is None:
        reference = values[-1]
        hs, vals = levels[:-1], values[:-1]
    else:
        hs, vals = levels, values
    errors = [abs(v - reference) for v in vals]
    return {
        "levels": list(hs),
        "values": vals,
        "errors": errors,
        "order": fit_order(hs, errors),
    }


def _metric_apply(spec, c, h):
    """w with G_c(h,k) = sum_i <w_i, k_i> (quadrature weights folded in)."""
    if isinstance(spec, mal.PhiSpec):
        return (mal.phi_values(spec, c) * c.ds)[:, None] * np.asarray(h, float)
    if isinstance(spec, msi.SobolevImmSpec):
        return msi.apply_Ln(spec, c, h) * c.ds[:, None]
    if isinstance(spec, msd.SobolevDiffSpec):
        km = msd.build_Fc(spec, c)
        return km.solve(np.asarray(h, float))
    raise TypeError("unknown metric spec %r" % (spec,))


def _grad_H(spec, c, h):
    if isinstance(spec, mal.PhiSpec):
        return mal.grad_H_phi(spec, c, h, h)
    if isinstance(spec, msi.SobolevImmSpec):
        return msi.grad_H_imm(spec, c, h, h)
    return msd.grad_H_diff(spec, c, h, h)


def path_energy_gradient(spec, path, dt):
    """Euclidean gradient of the midpoint path energy at the interior curves.

    Uses D_{(c,m)}G(h,h) = G(m, H(h,h)); returns one (N,2) array per
    interior node.
    """
    n = len(path)
    contrib = []  # per interval: (w, half-H-weight)
    for c0, c1 in zip(path[:-1], path[1:]):
        mid = DiscreteCurve(0.5 * (c0.points + c1.points))
        ct = (c1.points - c0.points) / dt
        w = _metric_apply(spec, mid, ct)  # pairs with delta(c_t)
        hw = _metric_apply(spec, mid, _grad_H(spec, mid, ct))  # pairs with delta(mid)
        contrib.append((w, hw))
    grads = []
    for j in range(1, n - 1):
        w_prev, hw_prev = contrib[j - 1]
        w_next, hw_next = contrib[j]
        g = (w_prev - w_next) + 0.25 * dt * (hw_prev + hw_next)
        grads.append(g)
    return grads


def bvp_descent(
    spec,
    c0,
    c1,
    path_steps=8,
    iters=200,
    step0=1.0,
    normal_project=None,
    stall_tol=1e-10,
    stall_window=50,
):
    """Best-effort boundary value solver: descent on the discrete path energy.

    The path is initialized by straight-line interpolation of the sample
    points; endpoints stay fixed.  Backtracking enforces a monotone energy
    history.  Returns (path, energies, stalled); stalled is set (and descent
    stops) when stall_window consecutive iterations improve by less than
    stall_tol relative.
    """
    if c0.N != c1.N:
        raise ValueError("endpoint curves must share N")
    dt = 1.0 / path_steps
    lam = np.linspace(0.0, 1.0, path_steps + 1)
    path = [
        DiscreteCurve((1 - t) * c0.points + t * c1.points) if 0 < i < path_steps else None
        for i, t in enumerate(lam)
    ]
    path[0], path[-1] = c0, c1
    if normal_project is None:
        normal_project = isinstance(spec, mal.PhiSpec)

    energies = [path_energy(spec, path, dt)]
    step = step0
    stalled = 0
    for _ in range(iters):
        grads = path_energy_gradient(spec, path, dt)
        if normal_project:
            grads = [
                np.einsum("ij,ij->i", g, c.n)[:, None] * c.n
                for g, c in zip(grads, path[1:-1])
            ]
        gnorm2 = sum(float(np.einsum("ij,ij->", g, g)) for g in grads)
        if gnorm2 == 0.0:
            break
        improved = False
        while step > 1e-14:
            try:
                trial = (
                    [path[0]]
                    + [
                        DiscreteCurve(c.points - step * g)
                        for c, g in zip(path[1:-1], grads)
                    ]
                    + [path[-1]]
                )
                e = path_energy(spec, trial, dt)
            except (CurveflowError, ValueError, np.linalg.LinAlgError):
                step *= 0.5
                continue
            if e < energies[-1]:
                path, improved = trial, True
                energies.append(e)
                step *= 1.3
                break
            step *= 0.5
        if not improved:
            energies.append(energies[-1])
        rel = (energies[-2] - energies[-1]) / _drift_scale(energies[-2])
        stalled = stalled + 1 if rel < stall_tol else 0
        if stalled >= stall_window:
            return path, energies, StalledDescent(
                "relative decrease < %g for %d iterations" % (stall_tol, stall_window)
            )
    return path, energies, None
