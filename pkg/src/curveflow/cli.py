"""Command-line front end: config parsing, experiment drivers, reports.

Exit codes: 0 success, 1 configuration error, 2 monitor abort (the
trajectory up to the last good step is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import curve_core as cc
from . import geodesic_engine as ge
from . import metric_almost_local as mal
from . import metric_sobolev_diff as msd
from . import metric_sobolev_imm as msi
from . import oracles_examples as oe
from .errors import CurveflowError, MonitorBlowup


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing


def parse_metric(obj):
    """Metric spec from a JSON object (or JSON string)."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ConfigError("metric is not valid JSON: %s" % exc) from exc
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigError("metric must be an object with a 'family' key")
    fam = obj["family"]
    try:
        if fam == "GA":
            return mal.phi_ga(float(obj.get("A", 1.0)))
        if fam == "power":
            return mal.phi_power_length(float(obj["k"]))
        if fam == "SI":
            return mal.phi_scale_invariant(float(obj.get("A", 1.0)))
        if fam == "wasserstein":
            return mal.phi_wasserstein()
        if fam == "imm":
            return msi.SobolevImmSpec(
                n=int(obj.get("n", 1)),
                A=float(obj.get("A", 1.0)),
                scale_invariant=bool(obj.get("scale_invariant", False)),
            )
        if fam == "diff":
            return msd.SobolevDiffSpec(n=int(obj.get("n", 1)), A=float(obj.get("A", 1.0)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError("bad metric parameters: %s" % exc) from exc
    raise ConfigError("unknown metric family %r" % (fam,))


def default_form(spec):
    if isinstance(spec, mal.PhiSpec):
        return "phi_horizontal"
    if isinstance(spec, msi.SobolevImmSpec):
        return "imm_eq6"
    return "diff_momentum"


def parse_curve(obj, N):
    """Curve from a generator spec, inline points, or a curve file."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError:
            obj = {"kind": obj}
    if not isinstance(obj, dict):
        raise ConfigError("curve spec must be an object or generator name")
    if "points" in obj:
        pts = np.asarray(obj["points"], float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigError("curve points must be an (N, 2) array")
        return cc.DiscreteCurve(pts)
    kind = obj.get("kind")
    try:
        if kind == "file":
            with open(obj["path"]) as fh:
                data = json.load(fh)
            return parse_curve(data, N)
        if kind == "circle":
            return cc.make_circle(r=float(obj.get("r", 1.0)), N=N)
        if kind == "ellipse":
            return cc.make_ellipse(
                a=float(obj.get("a", 2.0)), b=float(obj.get("b", 1.0)), N=N
            )
        if kind == "cigar":
            shape = oe.CigarShape(
                L=float(obj.get("L", 2.5)),
                w=float(obj.get("w", 0.1)),
                lam=float(obj.get("lam", 2.0)),
                f=float(obj.get("f", 25.0)),
            )
            return oe.build_cigar(shape, N)
    except (OSError, KeyError, ValueError, CurveflowError) as exc:
        raise ConfigError("bad curve spec: %s" % exc) from exc
    raise ConfigError("unknown curve kind %r" % (kind,))


def parse_field(obj, spec, form, c):
    """Initial state field from a velocity spec.

    The spec names a scalar normal speed a(theta) = const + amp*sin(mode
    theta + phase); the velocity a*n is converted to whatever companion
    field the chosen form evolves.
    """
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ConfigError("field is not valid JSON: %s" % exc) from exc
    if not isinstance(obj, dict):
        raise ConfigError("field spec must be an object")
    th = cc.theta_grid(c.N)
    try:
        a = float(obj.get("const", 0.0)) + float(obj.get("amp", 0.0)) * np.sin(
            int(obj.get("mode", 1)) * th + float(obj.get("phase", 0.0))
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError("bad field parameters: %s" % exc) from exc
    h = a[:, None] * c.n
    if form in ("phi_horizontal", "imm_atilde", "diff_be"):
        if form == "imm_atilde":
            return np.einsum("ij,ij->i", msi.apply_Ln(spec, c, h), c.n)
        if form == "diff_be":
            Fnn, _, _ = msd.be_kernels(spec, c)
            return np.linalg.solve(Fnn, a)
        return a
    if form == "imm_eq6":
        return h
    if form == "imm_eq7":
        return msi.apply_Ln(spec, c, h)
    if form == "diff_momentum":
        p = msd.apply_Lc(spec, c, h)
        return p * (c.ds / (2.0 * np.pi / c.N))[:, None]
    raise ConfigError("unknown form %r" % (form,))


@dataclass(frozen=True)
class RunConfig:
    spec: object
    form: str
    curve: object
    field: np.ndarray
    N: int
    dt: float
    T: float
    save_every: int
    out: str
    filter_modes: object = None


def _power_of_two(n):
    return n >= 16 and (n & (n - 1)) == 0


def load_config(args):
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("cannot read config: %s" % exc) from exc
    if getattr(args, "metric", None):
        cfg["metric"] = args.metric
    for key in ("N", "dt", "T", "save_every", "out"):
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            cfg[key] = v
    if "metric" not in cfg:
        raise ConfigError("a metric is required (--metric or config file)")
    spec = parse_metric(cfg["metric"])
    form = cfg.get("form", default_form(spec))
    if form not in ge.FORMS:
        raise ConfigError("unknown form %r" % (form,))
    N = int(cfg.get("N", 128))
    if not _power_of_two(N):
        raise ConfigError("N must be a power of two >= 16, got %d" % N)
    dt = float(cfg.get("dt", 1e-3))
    T = float(cfg.get("T", 1.0))
    if dt <= 0 or T <= 0:
        raise ConfigError("dt and T must be positive")
    save_every = int(cfg.get("save_every", 10))
    if save_every < 1:
        raise ConfigError("save_every must be >= 1")
    curve = parse_curve(cfg.get("curve", {"kind": "circle"}), N)
    field = parse_field(cfg.get("field", {"const": 0.2}), spec, form, curve)
    return RunConfig(
        spec=spec,
        form=form,
        curve=curve,
        field=field,
        N=N,
        dt=dt,
        T=T,
        save_every=save_every,
        out=cfg.get("out", "."),
        filter_modes=cfg.get("filter_modes"),
    )


def _dump_json(obj, fh):
    json.dump(obj, fh, sort_keys=True, indent=2)
    fh.write("\n")


def _write_run(out_dir, traj, summary):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trajectory.jsonl"), "w") as fh:
        traj.write_json_lines(fh)
    with open(os.path.join(out_dir, "monitors.csv"), "w", newline="") as fh:
        traj.trace.to_csv(fh)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        _dump_json(summary, fh)


# ---------------------------------------------------------------------------
# subcommands


def cmd_shoot(args):
    config = load_config(args)
    state = ge.GeodesicState(config.curve, config.field, config.form)
    try:
        traj = ge.integrate(
            state,
            config.spec,
            config.dt,
            config.T,
            save_every=config.save_every,
            filter_modes=config.filter_modes,
        )
        aborted = None
    except MonitorBlowup as exc:
        traj = exc.trajectory
        aborted = str(exc)
    final = cc.DiscreteCurve(np.asarray(traj.points[-1]))
    summary = {
        "form": config.form,
        "steps": len(traj.trace.times) - 1,
        "final_time": traj.trace.times[-1],
        "final_length": final.length,
        "warnings": [[t, name, drift] for t, name, drift in traj.trace.warnings],
        "aborted": aborted,
    }
    _write_run(config.out, traj, summary)
    if aborted:
        print("aborted: %s" % aborted, file=sys.stderr)
        return 2
    print("final length %r after %d monitor steps" % (final.length, summary["steps"]))
    return 0


def cmd_momenta(args):
    config = load_config(args)
    state = ge.GeodesicState(config.curve, config.field, config.form)
    try:
        traj = ge.integrate(
            state,
            config.spec,
            config.dt,
            config.T,
            save_every=config.save_every,
            filter_modes=config.filter_modes,
        )
    except MonitorBlowup as exc:
        print("aborted: %s" % exc, file=sys.stderr)
        return 2
    trace = traj.trace
    span = trace.times[-1] - trace.times[0]
    report = {}
    for name in sorted(trace.records[0]):
        col = trace.column(name)
        scale = max(abs(col[0]), 1e-3 * max(1.0, abs(trace.records[0]["energy"])))
        report[name] = {
            "initial": float(col[0]),
            "max_drift": float(np.abs(col - col[0]).max() / scale),
            "drift_per_unit_time": float(np.abs(col - col[0]).max() / scale / span),
        }
    _dump_json(report, sys.stdout)
    return 0


def cmd_energy(args):
    config = load_config(args)
    path = [config.curve]
    if args.traj:
        try:
            with open(args.traj) as fh:
                rows = [json.loads(line) for line in fh if line.strip()]
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("cannot read trajectory: %s" % exc) from exc
        if len(rows) < 2:
            raise ConfigError("trajectory has fewer than two frames")
        path = [cc.DiscreteCurve(np.asarray(r["points"], float)) for r in rows]
        dt = rows[1]["t"] - rows[0]["t"]
    else:
        h = ge.velocity_of(config.spec, config.form, config.curve, config.field)
        _dump_json(
            {"speed_squared": ge.metric_value(config.spec, config.curve, h, h)},
            sys.stdout,
        )
        return 0
    _dump_json(
        {
            "frames": len(path),
            "path_energy": ge.path_energy(config.spec, path, dt),
            "path_length": ge.path_length(config.spec, path, dt),
        },
        sys.stdout,
    )
    return 0


def cmd_bvp(args):
    config = load_config(args)
    target = parse_curve(args.target, config.N)
    path, energies, stalled = ge.bvp_descent(
        config.spec,
        config.curve,
        target,
        path_steps=args.path_steps,
        iters=args.iters,
    )
    os.makedirs(config.out, exist_ok=True)
    with open(os.path.join(config.out, "bvp_path.jsonl"), "w") as fh:
        for i, c in enumerate(path):
            fh.write(
                json.dumps({"k": i, "points": c.points.tolist()}, sort_keys=True) + "\n"
            )
    summary = {
        "energies": [float(e) for e in energies],
        "stalled": str(stalled) if stalled else None,
    }
    with open(os.path.join(config.out, "bvp_summary.json"), "w") as fh:
        _dump_json(summary, fh)
    print("final path energy %r (%d descent steps)" % (energies[-1], len(energies) - 1))
    return 0


def cmd_oracle(args):
    if args.family == "phi":
        at0, atinf = oe.completeness(args.k, args.k)
        print("complete at 0: %s" % str(at0).lower())
        print("complete at infinity: %s" % str(atinf).lower())
        exponent = oe.power_law_exponent(args.k) if args.k > -3 else None
        report = {
            "family": "phi",
            "k": args.k,
            "complete_at_zero": at0,
            "complete_at_infinity": atinf,
            "radius_exponent": exponent,
            "radius_exponent_expected": 2.0 / (args.k + 3) if args.k > -3 else None,
        }
    elif args.family in ("imm", "diff"):
        fn = oe.circle_imm_completeness if args.family == "imm" else oe.circle_diff_completeness
        at0, atinf = fn(args.n, numeric=not args.fast)
        print("complete at 0: %s" % str(at0).lower())
        print("complete at infinity: %s" % str(atinf).lower())
        report = {
            "family": args.family,
            "n": args.n,
            "complete_at_zero": at0,
            "complete_at_infinity": atinf,
        }
    else:
        raise ConfigError("unknown oracle family %r" % (args.family,))
    if args.json:
        _dump_json(report, sys.stdout)
    return 0


def cmd_cigar_table(args):
    shape = oe.CigarShape(L=args.L, w=args.w, lam=args.lam, f=args.f)
    if args.norms_only:
        table = oe.cigar_norms(shape, A=args.A, N=args.N)
    else:
        table = oe.cigar_table(shape, A=args.A, N=args.N)
    header = "%-10s" % "field" + "".join("%14s" % m for m in oe.CIGAR_METRICS)
    print(header)
    for fld in oe.CIGAR_FIELDS:
        row = "%-10s" % fld
        for m in oe.CIGAR_METRICS:
            row += "%14.5g" % table["norms"][(m, fld)]
        print(row)
    print("f_eff = %.6g" % table["f_eff"])
    report = {"f_eff": table["f_eff"]}
    for key in ("norms", "expected", "w_exponent", "f_exponent"):
        if key in table:
            report[key] = {"%s/%s" % k: v for k, v in table[key].items()}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "cigar_table.json"), "w") as fh:
            _dump_json(report, fh)
    if args.json:
        _dump_json(report, sys.stdout)
    return 0


def _selftest_items():
    rng = np.random.default_rng(7)
    c = cc.random_smooth_curve(rng, N=64)
    h = cc.random_smooth_curve_field(rng, N=64, amp=0.3)
    k = cc.random_smooth_curve_field(rng, N=64, amp=0.3)
    m = cc.random_smooth_curve_field(rng, N=64, amp=0.3)

    def gradient_contract():
        worst = 0.0
        for spec in (mal.phi_ga(0.7), msi.SobolevImmSpec(n=2, A=0.8), msd.SobolevDiffSpec(n=2, A=1.1)):
            eps = 1e-6
            gp = ge.metric_value(spec, cc.DiscreteCurve(c.points + eps * m), h, k)
            gm = ge.metric_value(spec, cc.DiscreteCurve(c.points - eps * m), h, k)
            fd = (gp - gm) / (2 * eps)
            if isinstance(spec, mal.PhiSpec):
                Km = mal.grad_K_phi(spec, c, m, h)
            elif isinstance(spec, msi.SobolevImmSpec):
                Km = msi.grad_K_imm(spec, c, m, h)
            else:
                Km = msd.grad_K_diff(spec, c, m, h)
            worst = max(worst, abs(ge.metric_value(spec, c, Km, k) - fd) / max(abs(fd), 1e-12))
        return worst, 1e-4

    def adjointness():
        spec = msi.SobolevImmSpec(n=2, A=0.9)
        Lh = msi.apply_Ln(spec, c, h)
        Lk = msi.apply_Ln(spec, c, k)
        lhs = float(np.einsum("ij,ij,i->", Lh, k, c.ds))
        rhs = float(np.einsum("ij,ij,i->", h, Lk, c.ds))
        return abs(lhs - rhs) / max(abs(lhs), 1e-12), 1e-9

    def bessel_wronskian():
        x = np.linspace(0.3, 12.0, 40)
        eps = 1e-6
        i1p = (msd.bessel_I(1, x + eps) - msd.bessel_I(1, x - eps)) / (2 * eps)
        k1p = (msd.bessel_K(1, x + eps) - msd.bessel_K(1, x - eps)) / (2 * eps)
        w = msd.bessel_I(1, x) * k1p - i1p * msd.bessel_K(1, x)
        return float(np.abs(w + 1.0 / x).max()), 1e-8

    def kernel_fourier():
        spec = msd.SobolevDiffSpec(n=2, A=1.0)
        M, box = 256, 40.0
        g = (np.arange(M) - M // 2) * (box / M)
        X, Y = np.meshgrid(g, g, indexing="ij")
        F = msd.kernel_F(spec, np.stack([X, Y], axis=-1).reshape(-1, 2)).reshape(M, M)
        Fh = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(F))).real * (box / M) ** 2
        xi = 2 * np.pi * np.fft.fftshift(np.fft.fftfreq(M, d=box / M))
        KX, KY = np.meshgrid(xi, xi, indexing="ij")
        want = 1.0 / (1.0 + KX**2 + KY**2) ** 2
        sel = (np.abs(KX) < 4) & (np.abs(KY) < 4)
        return float(np.abs(Fh - want)[sel].max()), 1e-3

    def momenta_drift():
        spec = msi.SobolevImmSpec(n=2, A=1.0)
        state = ge.GeodesicState(c, h, "imm_eq6")
        traj = ge.integrate(state, spec, 5e-3, 0.05)
        lin = traj.trace.column("linear_x")
        scale = max(abs(lin[0]), 1e-3)
        return float(np.abs(lin - lin[0]).max() / scale), 1e-8

    return [
        ("gradient-contract", gradient_contract),
        ("operator-adjointness", adjointness),
        ("bessel-wronskian", bessel_wronskian),
        ("kernel-fourier", kernel_fourier),
        ("momenta-drift", momenta_drift),
    ]


def cmd_selftest(args):
    failures = 0
    for name, fn in _selftest_items():
        try:
            value, tol = fn()
            ok = value <= tol
        except CurveflowError as exc:
            value, tol, ok = str(exc), None, False
        if ok:
            print("PASS %-22s %.3e <= %.0e" % (name, value, tol))
        else:
            failures += 1
            print("FAIL %-22s %s (tol %s)" % (name, value, tol))
    return 1 if failures else 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="curveflow")
    sub = p.add_subparsers(dest="command", required=True)

    def add_run_flags(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--metric", default=None)
        sp.add_argument("--N", type=int, default=None)
        sp.add_argument("--dt", type=float, default=None)
        sp.add_argument("--T", type=float, default=None)
        sp.add_argument("--save-every", dest="save_every", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("shoot", help="integrate a geodesic and write artifacts")
    add_run_flags(sp)
    sp.set_defaults(func=cmd_shoot)

    sp = sub.add_parser("momenta", help="report conserved-momenta drift for a run")
    add_run_flags(sp)
    sp.set_defaults(func=cmd_momenta)

    sp = sub.add_parser("energy", help="metric speed of a state or energy of a path")
    add_run_flags(sp)
    sp.add_argument("--traj", default=None, help="trajectory JSON-lines file")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("bvp", help="path-energy descent between two curves")
    add_run_flags(sp)
    sp.add_argument("--target", required=True)
    sp.add_argument("--path-steps", dest="path_steps", type=int, default=8)
    sp.add_argument("--iters", type=int, default=100)
    sp.set_defaults(func=cmd_bvp)

    sp = sub.add_parser("oracle", help="circle-geodesic closed forms and completeness")
    sp.add_argument("family", choices=["phi", "imm", "diff"])
    sp.add_argument("--k", type=float, default=0.0)
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--fast", action="store_true", help="skip quadrature backing")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("cigar-table", help="norms of the four cigar fields")
    sp.add_argument("--N", type=int, default=512)
    sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--L", type=float, default=2.5)
    sp.add_argument("--w", type=float, default=0.1)
    sp.add_argument("--lam", type=float, default=2.0)
    sp.add_argument("--f", type=float, default=25.0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--norms-only", dest="norms_only", action="store_true")
    sp.set_defaults(func=cmd_cigar_table)

    sp = sub.add_parser("selftest", help="run the invariant smoke suite")
    sp.set_defaults(func=cmd_selftest)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except CurveflowError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
