"""Diffeomorphism-induced Sobolev metrics G^{diff,n} on curves.

The ambient operator (1 - A*Laplace)^n on R^2 has the radial fundamental
solution F_{A,n}(x) = (2^n pi (n-1)! A)^{-1} rho^{n-1} K_{n-1}(rho) with
rho = |x|/sqrt(A).  Restricting to a curve gives the kernel matrix F_c whose
(weighted) inverse L_c defines the metric; geodesics are integrated in the
momentum variable ptilde (a dtheta-density along the curve).

The modified Bessel functions are implemented here from scratch: ascending
log-series below x = 2, a Steed-type continued fraction above, and upward
recurrence in the order.
"""

from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np
import scipy.linalg

from . import curve_core as cc
from .curve_core import MomentaReport, d_s, rot90
from .errors import DomainError, LogPole, SolveFailure

_TWO_PI = 2.0 * np.pi
_EULER_GAMMA = 0.5772156649015328606


# ---------------------------------------------------------------------------
# modified Bessel functions


def bessel_I(nu, x):
    """I_nu(x) for integer nu >= 0 by the ascending power series."""
    if nu < 0 or int(nu) != nu:
        raise DomainError("order must be a non-negative integer")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    half = 0.5 * x
    # term_0 = (x/2)^nu / nu!
    term = half**nu / float(math.factorial(nu)) if nu else np.ones_like(x)
    total = term.copy()
    q = half * half
    for k in range(1, 300):
        term = term * q / (k * (k + nu))
        total += term
        if np.all(term <= 1e-18 * np.abs(total)):
            break
    return float(total[0]) if scalar else total


def _k0_k1_series(x):
    """K_0 and K_1 for 0 < x < 2 via the ascending log series."""
    half = 0.5 * x
    q = half * half
    lg = np.log(half) + _EULER_GAMMA

    # K0 = -lg*I0 + sum_{k>=1} H_k q^k / (k!)^2
    i0_term = np.ones_like(x)
    i0 = i0_term.copy()
    s0 = np.zeros_like(x)
    # K1 = 1/x + log(x/2)*I1 - (x/4)*sum_k (H_k + H_{k+1} - 2*gamma_correction...)
    # standard form: K1 = 1/x + log(x/2)*I1(x)
    #                - (x/4) * sum_k (psi(k+1)+psi(k+2)) q^k / (k! (k+1)!)
    # with psi(m+1) = -gamma + H_m.
    i1_term = np.ones_like(x)  # q^k/(k!(k+1)!) at k=0
    i1 = i1_term.copy()
    s1 = (0.0 + 1.0 - 2.0 * _EULER_GAMMA) * i1_term  # (psi(1)+psi(2)) at k=0
    Hk = 0.0
    for k in range(1, 300):
        Hk += 1.0 / k
        i0_term = i0_term * q / (k * k)
        i0 += i0_term
        s0 += Hk * i0_term
        i1_term = i1_term * q / (k * (k + 1))
        i1 += i1_term
        s1 += (2.0 * Hk + 1.0 / (k + 1) - 2.0 * _EULER_GAMMA) * i1_term
        if np.all(i0_term <= 1e-18 * np.abs(i0)):
            break
    k0 = -lg * i0 + s0
    k1 = 1.0 / x + np.log(half) * (half * i1) - 0.25 * x * s1
    return k0, k1


def _k0_k1_cf(x, max_iter=200, eps=1e-16):
    """K_0 and K_1 for x >= 2 by Steed's continued fraction (CF2)."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    cvar = np.full_like(x, a1)
    a = np.full_like(x, -a1)
    s = 1.0 + q * delh
    done = np.zeros(x.shape, dtype=bool)
    for i in range(2, max_iter):
        a -= 2.0 * (i - 1)
        cvar = -a * cvar / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + cvar * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        done |= np.abs(dels) < eps * np.abs(s)
        if np.all(done):
            break
    h = a1 * h
    k0 = np.sqrt(np.pi / (2.0 * x)) * np.exp(-x) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def bessel_K(nu, x):
    """K_nu(x) for integer nu >= 0, x > 0; series/continued-fraction hybrid."""
    if nu < 0 or int(nu) != nu:
        raise DomainError("order must be a non-negative integer")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x).astype(float)
    if np.any(x <= 0.0) or not np.all(np.isfinite(x)):
        raise DomainError("bessel_K requires x > 0")
    k0 = np.empty_like(x)
    k1 = np.empty_like(x)
    small = x < 2.0
    if np.any(small):
        k0[small], k1[small] = _k0_k1_series(x[small])
    if np.any(~small):
        k0[~small], k1[~small] = _k0_k1_cf(x[~small])
    if nu == 0:
        out = k0
    elif nu == 1:
        out = k1
    else:
        km, kc = k0, k1
        for m in range(1, nu):
            km, kc = kc, km + (2.0 * m / x) * kc
        out = kc
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# kernel


@dataclass(frozen=True)
class SobolevDiffSpec:
    n: int = 2
    A: float = 1.0

    def __post_init__(self):
        if not (1 <= self.n <= 4):
            raise ValueError("n must be in 1..4")
        if self.A <= 0:
            raise ValueError("A must be positive")

    @property
    def norm_const(self):
        """1/(2^n pi (n-1)! A)."""
        return 1.0 / (2**self.n * np.pi * float(math.factorial(self.n - 1)) * self.A)


def kernel_F_radial(spec, r):
    """F_{A,n} as a function of the distance r = |x| >= 0."""
    n, A = spec.n, spec.A
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    rho = r / np.sqrt(A)
    out = np.empty_like(rho)
    zero = rho == 0.0
    if np.any(zero):
        if n == 1:
            raise LogPole("F_{A,1} has a log pole at zero")
        # rho^{n-1} K_{n-1}(rho) -> 2^{n-2} (n-2)!
        out[zero] = spec.norm_const * 2 ** (n - 2) * float(math.factorial(n - 2))
    if np.any(~zero):
        rr = rho[~zero]
        out[~zero] = spec.norm_const * rr ** (n - 1) * bessel_K(n - 1, rr)
    return float(out[0]) if scalar else out


def kernel_F(spec, x):
    """F_{A,n}(x) for points x of shape (...,2)."""
    x = np.asarray(x, dtype=float)
    return kernel_F_radial(spec, np.linalg.norm(x, axis=-1))


def kernel_gradF(spec, x):
    """grad F_{A,n}(x) = -(norm_const) rho^{n-2} K_{n-2}(rho) x / A.

    Uses d/drho [rho^nu K_nu(rho)] = -rho^nu K_{nu-1}(rho); K_{-1} = K_1.
    Returns 0 at x = 0 for n >= 2 (the radial derivative vanishes there).
    """
    n, A = spec.n, spec.A
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    scalar = r.ndim == 0
    x = np.atleast_2d(x)
    r = np.atleast_1d(r)
    rho = r / np.sqrt(A)
    out = np.zeros_like(x)
    zero = rho == 0.0
    if np.any(zero) and n == 1:
        raise LogPole("grad F_{A,1} is singular at zero")
    nz = ~zero
    if np.any(nz):
        rr = rho[nz]
        order = abs(n - 2)  # K_{n-2}; K_{-1} = K_1 for n = 1
        coef = -spec.norm_const * rr ** (n - 2) * bessel_K(order, rr) / A
        out[nz] = coef[:, None] * x[nz]
    return out[0] if scalar else out


def _int_K0(delta):
    """int_0^delta K_0(u) du by the ascending series (delta < 2)."""
    if delta >= 2.0:
        raise ValueError("cell too wide for the series; refine the grid")
    lg = np.log(0.5 * delta) + _EULER_GAMMA
    total = 0.0
    ak = 1.0
    Hk = 0.0
    for k in range(0, 200):
        if k > 0:
            Hk += 1.0 / k
            ak = ak / (4.0 * k * k)  # 1/(4^k (k!)^2) built up incrementally
        p = delta ** (2 * k + 1)
        term = ak * p * (-lg / (2 * k + 1) + 1.0 / (2 * k + 1) ** 2 + Hk / (2 * k + 1))
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return total


def cell_average_F1(spec, ds):
    """(1/ds) int_{-ds/2}^{ds/2} F_{A,1}(|u|) du (the integrable log pole)."""
    sA = np.sqrt(spec.A)
    delta = 0.5 * ds / sA
    if np.ndim(delta) == 0:
        ints = _int_K0(float(delta))
    else:
        ints = np.array([_int_K0(float(d)) for d in np.ravel(delta)]).reshape(np.shape(delta))
    return (2.0 * sA / ds) * ints / (2.0 * np.pi * spec.A)


def _cell_average_F1_derivative(spec, ds, cell_value):
    """d/d(ds) of cell_average_F1: (F_{A,1}(ds/2) - cellavg)/ds."""
    edge = kernel_F_radial(spec, 0.5 * ds)
    return (edge - cell_value) / ds


@dataclass
class KernelMatrix:
    """Kernel values F0[i,j] = F(c_i - c_j) with the n=1 diagonal cell-averaged.

    ds are the arclength weights; the convolution operator is p -> F0 @ (p*ds)
    and its inverse divides the plain solve by ds (the two conventions are
    kept separate to avoid double weighting).  spd records whether a Cholesky
    factorization succeeded.
    """

    F0: np.ndarray
    ds: np.ndarray
    spd: bool
    _factor: object

    def solve(self, rhs):
        rhs = np.asarray(rhs, float)
        try:
            if self.spd:
                return scipy.linalg.cho_solve(self._factor, rhs)
            return scipy.linalg.lu_solve(self._factor, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:  # pragma: no cover
            raise SolveFailure("kernel solve failed: %s" % exc) from exc


def build_Fc(spec, c):
    diff = c.points[:, None, :] - c.points[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    if spec.n == 1:
        F0 = np.empty_like(r)
        off = ~np.eye(c.N, dtype=bool)
        F0[off] = kernel_F_radial(spec, r[off])
        F0[np.diag_indices(c.N)] = cell_average_F1(spec, c.ds)
    else:
        F0 = kernel_F_radial(spec, r)
    try:
        factor = scipy.linalg.cho_factor(F0)
        spd = True
    except np.linalg.LinAlgError:
        factor = scipy.linalg.lu_factor(F0)
        spd = False
    return KernelMatrix(F0=F0, ds=c.ds.copy(), spd=spd, _factor=factor)


def apply_Fc(km, p):
    """(F_c * p)(theta_i) = sum_j F0[i,j] p_j ds_j."""
    p = np.asarray(p, float)
    w = p * (km.ds[:, None] if p.ndim == 2 else km.ds)
    return km.F0 @ w


def apply_Lc(spec, c, h, km=None):
    """The momentum p with F_c * p = h (componentwise SPD solve)."""
    if km is None:
        km = build_Fc(spec, c)
    q = km.solve(np.asarray(h, float))
    return q / (km.ds[:, None] if q.ndim == 2 else km.ds)


def g_diff(spec, c, h, k, km=None):
    """G^{diff,n}_c(h,k) = int <L_c * h, k> ds."""
    if km is None:
        km = build_Fc(spec, c)
    q = km.solve(np.asarray(h, float))
    return float(np.einsum("ij,ij->", q, np.asarray(k, float)))


def g_diff_dual(spec, c, p, q, km=None):
    """Dual metric on momenta: int int F_c(th1,th2) <p(th1), q(th2)> ds ds."""
    if km is None:
        km = build_Fc(spec, c)
    pw = np.asarray(p, float) * km.ds[:, None]
    qw = np.asarray(q, float) * km.ds[:, None]
    return float(np.einsum("ij,ij->", km.F0 @ pw, qw))


def _grad_matrix(spec, c):
    """gradF(c_i - c_j) as two (N,N) arrays (zero on the diagonal)."""
    diff = c.points[:, None, :] - c.points[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    n, A = spec.n, spec.A
    rho = r / np.sqrt(A)
    coef = np.zeros_like(r)
    off = ~np.eye(c.N, dtype=bool)
    rr = rho[off]
    order = abs(n - 2)
    coef[off] = -spec.norm_const * rr ** (n - 2) * bessel_K(order, rr) / A
    return coef * diff[:, :, 0], coef * diff[:, :, 1]


def _dm_F0(spec, c, m):
    """Directional derivative of the F0 matrix along the curve variation m."""
    Gx, Gy = _grad_matrix(spec, c)
    mx, my = np.asarray(m, float)[:, 0], np.asarray(m, float)[:, 1]
    D = Gx * (mx[:, None] - mx[None, :]) + Gy * (my[:, None] - my[None, :])
    if spec.n == 1:
        cell = cell_average_F1(spec, c.ds)
        dcell = _cell_average_F1_derivative(spec, c.ds, cell)
        dmv = np.einsum("ij,ij->i", d_s(c, np.asarray(m, float)), c.v)
        D[np.diag_indices(c.N)] = dcell * dmv * c.ds
    return D


def grad_K_diff(spec, c, m, h, km=None):
    """K(m,h): G(K(m,h),k) equals the c-derivative of G(h,k) along m."""
    if km is None:
        km = build_Fc(spec, c)
    qh = km.solve(np.asarray(h, float))
    return -_dm_F0(spec, c, m) @ qh


def grad_H_diff(spec, c, h, k, km=None):
    """H(h,k): G(m,H(h,k)) equals the c-derivative of G(h,k) along m."""
    if km is None:
        km = build_Fc(spec, c)
    qh = km.solve(np.asarray(h, float))
    qk = km.solve(np.asarray(k, float))
    Gx, Gy = _grad_matrix(spec, c)
    S = qh @ qk.T  # S[i,j] = <qh_i, qk_j>
    M = S + (qk @ qh.T)
    w = np.stack([-np.einsum("ij,ij->i", Gx, M), -np.einsum("ij,ij->i", Gy, M)], axis=1)
    if spec.n == 1:
        cell = cell_average_F1(spec, c.ds)
        dcell = _cell_average_F1_derivative(spec, c.ds, cell)
        g = dcell * c.ds * np.einsum("ij,ij->i", qh, qk)
        w = w + cc.d_theta((g / c.speed)[:, None] * c.v)
    return km.F0 @ w


def geodesic_rhs_diff(spec, c, ptilde, km=None):
    """Momentum-form geodesic equations in (c, ptilde), dtheta convention.

    c_t(th_i) = sum_j F(c_i - c_j) ptilde_j dth;
    ptilde_t(th_i) = -sum_{j != i} gradF(c_i - c_j) <ptilde_i, ptilde_j> dth.
    The diagonal term of ptilde_t is zero (odd kernel, principal value).
    """
    if km is None:
        km = build_Fc(spec, c)
    ptilde = np.asarray(ptilde, float)
    dth = _TWO_PI / c.N
    c_t = km.F0 @ ptilde * dth
    Gx, Gy = _grad_matrix(spec, c)
    pp = ptilde @ ptilde.T  # <p_i, p_j>
    pt_t = -np.stack([np.einsum("ij,ij->i", Gx, pp), np.einsum("ij,ij->i", Gy, pp)], axis=1) * dth
    return c_t, pt_t


def momenta_diff(spec, c, ptilde):
    """Conserved momenta of the (c, ptilde) flow (dtheta convention)."""
    ptilde = np.asarray(ptilde, float)
    dth = _TWO_PI / c.N
    linear = ptilde.sum(axis=0) * dth
    angular = float(np.einsum("ij,ij->", rot90(c.points), ptilde)) * dth
    reparam = np.einsum("ij,ij->i", c.c_theta, ptilde)
    return MomentaReport(reparam=reparam, linear=linear, angular=angular)


# ---------------------------------------------------------------------------
# horizontality and the shape-space (B_e) form


def build_Ltop_Lbot_diff(spec, c, km=None):
    """L_c^T(f) = <L_c*(f v), v> and L_c^P(f) = <L_c*(f v), n> as matrices."""
    if km is None:
        km = build_Fc(spec, c)
    S = km.solve(np.eye(c.N))  # F0^{-1}
    S = S / km.ds[:, None]  # momentum convention (divide by ds after solve)
    vx, vy = c.v[:, 0], c.v[:, 1]
    nx, ny = c.n[:, 0], c.n[:, 1]
    Svx = S * vx[None, :]
    Svy = S * vy[None, :]
    top = vx[:, None] * Svx + vy[:, None] * Svy
    bot = nx[:, None] * Svx + ny[:, None] * Svy
    from .metric_sobolev_imm import OperatorMatrix

    return OperatorMatrix(top, c.ds), OperatorMatrix(bot, c.ds)


def horizontal_lift_diff(spec, c, a, km=None):
    """h = a n + b v with <L_c * h, v> = 0."""
    top, bot = build_Ltop_Lbot_diff(spec, c, km)
    try:
        b = np.linalg.solve(top.mat, bot.apply(a))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SolveFailure("L_c^T solve failed: %s" % exc) from exc
    return cc.recompose(c, a, b)


def reduced_metric_matrix_diff(spec, c, km=None):
    top, bot = build_Ltop_Lbot_diff(spec, c, km)
    try:
        X = np.linalg.solve(top.mat, bot.mat)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SolveFailure("L_c^T solve failed: %s" % exc) from exc
    from .metric_sobolev_imm import OperatorMatrix

    return OperatorMatrix(top.mat + bot.mat @ X, c.ds)


def be_kernels(spec, c, km=None):
    """The three shape-space kernels with ds_2 quadrature weights folded in."""
    if km is None:
        km = build_Fc(spec, c)
    nn = np.einsum("ij,kj->ik", c.n, c.n)  # <n_i, n_k>
    vn = np.einsum("ij,kj->ik", c.v, c.n)
    Fnn = km.F0 * nn.T * km.ds[None, :]
    Fvn = km.F0 * vn * km.ds[None, :]
    if spec.n >= 2:
        # div X(x) = int <gradF(x - c(s2)), n(s2)> a ds2, so the normal is
        # taken at the source point s2
        Gx, Gy = _grad_matrix(spec, c)
        Fdiv = (Gx * c.n[:, 0][None, :] + Gy * c.n[:, 1][None, :]) * km.ds[None, :]
    else:
        Fdiv = None
    return Fnn, Fvn, Fdiv


def be_geodesic_rhs(spec, c, a, km=None):
    """Shape-space geodesic: normal speed C_t and the evolution of a."""
    if spec.n < 2:
        raise LogPole("the divergence kernel needs n >= 2")
    Fnn, Fvn, Fdiv = be_kernels(spec, c, km)
    a = np.asarray(a, float)
    Ct = Fnn @ a
    a_t = -(Fvn @ a) * d_s(c, a) - (Fdiv @ a) * a
    return Ct, a_t


def g_diff_shape(spec, c, a1, a2, km=None):
    """Shape-space inner product of normal fields via the dual nn-kernel."""
    Fnn, _, _ = be_kernels(spec, c, km)
    try:
        x = np.linalg.solve(Fnn, np.asarray(a1, float))
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise SolveFailure("Fnn solve failed: %s" % exc) from exc
    return float(np.dot(x, np.asarray(a2, float) * c.ds))


def horizontalize_path_diff(spec, path, dt):
    """Reparametrize a path so that <L_c * e_t, e_theta> = 0 along it."""
    from .metric_sobolev_imm import flow_reparametrizations, path_velocities

    vels = path_velocities(path, dt)
    xis = []
    for c, ct in zip(path, vels):
        km = build_Fc(spec, c)
        p = apply_Lc(spec, c, ct, km)
        top, _ = build_Ltop_Lbot_diff(spec, c, km)
        rhs = np.einsum("ij,ij->i", p, c.v)
        try:
            xi = -np.linalg.solve(top.mat, rhs) / c.speed
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise SolveFailure("L_c^T solve failed: %s" % exc) from exc
        xis.append(xi)
    phis = flow_reparametrizations(xis, dt, path[0].N)
    return [cc.reparametrize(c, phi) for c, phi in zip(path, phis)]


def reparam_residual_diff(spec, path, dt):
    """sup_t sup_theta |<L_c * c_t, c_theta>| along the path."""
    from .metric_sobolev_imm import path_velocities

    worst = 0.0
    for c, ct in zip(path, path_velocities(path, dt)):
        p = apply_Lc(spec, c, ct)
        r = np.einsum("ij,ij->i", p, c.c_theta)
        worst = max(worst, float(np.abs(r).max()))
    return worst
