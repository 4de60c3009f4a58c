"""Adaptive Gauss-Kronrod quadrature for semi-infinite, principal-value and
oscillatory integrals.

Integrands are vectorised.  They receive a 1-D array of abscissae and return
either an array of the same length or an array of shape ``(m, n)``; in the
latter case ``m`` integrals share one adaptive partition and the result
values are arrays of length ``m``.

Semi-infinite ranges are split at a cap ``c`` (``20 * scale`` unless a
breakpoint lies further out).  ``[0, c]`` is integrated directly and the tail
``[c, inf)`` through ``x = c + scale * u / (1 - u)`` with ``u`` in ``[0, 1)``.
Non-finite integrand values far out in the mapped tail are treated as zero,
which is exact to double precision for integrands decaying at least
exponentially beyond ``scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny

# 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
_XGK = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0,
])
_WGK = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(21)
GAUSS_WEIGHTS[1:10:2] = _WG
GAUSS_WEIGHTS[11:20:2] = _WG[::-1]

DEFAULT_LIMIT = 200_000
DEFAULT_MAX_PHASE = 1.0e4


class QuadratureError(Exception):
    pass


class QuadDomainError(QuadratureError, ValueError):
    pass


class QuadRangeError(QuadratureError, ValueError):
    pass


class BudgetExceededError(QuadratureError):
    """The subdivision budget ran out; ``best`` holds the estimate reached."""

    def __init__(self, message: str, best: "QuadratureResult"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class QuadratureResult:
    value: float | np.ndarray
    error_estimate: float | np.ndarray
    evaluations: int


@dataclass(frozen=True)
class PvIntegrand:
    """``g(w') / (pole - w')`` under a principal value.

    ``pole`` may be an array; the integrals then share one partition.
    """

    pole: float | np.ndarray
    g: Callable[[np.ndarray], np.ndarray]


@dataclass
class Partition:
    """Final adaptive partition: interval ends, per-interval values and errors."""

    a: np.ndarray
    b: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    evaluations: int = 0
    converged: bool = True
    total: np.ndarray = field(init=False)
    error: np.ndarray = field(init=False)

    def __post_init__(self):
        order = np.argsort(self.a, kind="stable")
        self.a, self.b = self.a[order], self.b[order]
        self.values, self.errors = self.values[..., order], self.errors[..., order]
        self.total = self.values.sum(axis=-1)
        self.error = self.errors.sum(axis=-1)


def kronrod_sums(y: np.ndarray, half: np.ndarray):
    """Kronrod value and QUADPACK-style error per interval.

    ``y`` holds integrand values at the 21 nodes along its last axis; ``half``
    the interval half-widths broadcastable against ``y[..., 0]``.
    """
    ahalf = np.abs(half)
    kron = (y @ KRONROD_WEIGHTS) * half
    gauss = (y @ GAUSS_WEIGHTS) * half
    resabs = (np.abs(y) @ KRONROD_WEIGHTS) * ahalf
    mean = 0.5 * (y @ KRONROD_WEIGHTS)
    resasc = (np.abs(y - mean[..., None]) @ KRONROD_WEIGHTS) * ahalf
    err = np.abs(kron - gauss)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    err = np.where(resabs > _TINY / (50 * _EPS), np.maximum(50 * _EPS * resabs, err), err)
    return kron, err, resabs


def _apply_rule(g, a, b):
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = centre[:, None] + half[:, None] * NODES
    y = np.asarray(g(x.ravel()), dtype=float)
    y = y.reshape(y.shape[:-1] + x.shape)
    if not np.all(np.isfinite(y)):
        bad = x[np.any(~np.isfinite(y.reshape((-1,) + x.shape)), axis=0)]
        raise QuadratureError(f"integrand is not finite at x = {bad[:3]}")
    kron, err, resabs = kronrod_sums(y, half)
    return kron, err, resabs, x.size


def _select(e: np.ndarray) -> np.ndarray:
    """Indices of the largest normalised errors whose refinement brings the rest below 1/2."""
    order = np.argsort(e, kind="stable")[::-1]
    remaining = e.sum() - np.cumsum(e[order])
    nsel = int(np.searchsorted(-remaining, -0.5)) + 1
    return order[:nsel]


def adaptive(g, a, b, tol_rel: float, tol_abs: float = 0.0, limit: int = DEFAULT_LIMIT) -> Partition:
    """Globally adaptive bisection over the initial intervals ``[a_i, b_i]``.

    Convergence is declared when, for every component,
    ``error <= max(tol_abs, tol_rel * |value|, 64 eps * int |g|)``.  Intervals
    too narrow to bisect are left as they are and their error is reported.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    val, err, l1, nevals = _apply_rule(g, a, b)
    converged = True
    while True:
        total = val.sum(axis=-1)
        target = np.maximum(np.maximum(tol_abs, tol_rel * np.abs(total)), 64 * _EPS * l1.sum(axis=-1))
        if np.all(err.sum(axis=-1) <= target):
            break
        e = err / np.maximum(target, _TINY)[..., None]
        if e.ndim > 1:
            e = e.max(axis=0)
        sel = _select(e)
        width = b[sel] - a[sel]
        sel = sel[width > 256 * _EPS * np.maximum(np.abs(a[sel]), np.abs(b[sel]))]
        if sel.size == 0:
            converged = False
            break
        if a.size + sel.size > limit:
            part = Partition(a, b, val, err, nevals, converged=False)
            raise BudgetExceededError(
                f"subdivision budget of {limit} intervals exhausted",
                QuadratureResult(_out(part.total), _out(part.error), nevals),
            )
        mid = 0.5 * (a[sel] + b[sel])
        na = np.concatenate([a[sel], mid])
        nb = np.concatenate([mid, b[sel]])
        v2, e2, l2, n2 = _apply_rule(g, na, nb)
        nevals += n2
        keep = np.ones(a.size, dtype=bool)
        keep[sel] = False
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        val = np.concatenate([val[..., keep], v2], axis=-1)
        err = np.concatenate([err[..., keep], e2], axis=-1)
        l1 = np.concatenate([l1[..., keep], l2], axis=-1)
    return Partition(a, b, val, err, nevals, converged=converged)


def _out(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _edges(lo: float, hi: float, points: Sequence[float]) -> np.ndarray:
    pts = [p for p in np.unique(np.asarray(points, dtype=float)) if lo < p < hi]
    return np.array([lo, *pts, hi])


def integrate_interval(g, lo: float, hi: float, tol_rel: float = 1e-10, *,
                       points: Sequence[float] = (), tol_abs: float = 0.0,
                       limit: int = DEFAULT_LIMIT) -> QuadratureResult:
    """Integral of ``g`` over the finite interval ``[lo, hi]``."""
    e = _edges(lo, hi, points)
    part = adaptive(g, e[:-1], e[1:], tol_rel, tol_abs, limit)
    return QuadratureResult(_out(part.total), _out(part.error), part.evaluations)


class _TailMap:
    """Composite variable: ``y < cap`` is ``x = y``; ``y`` in ``[cap, cap+1)`` maps onto ``[cap, inf)``."""

    def __init__(self, cap: float, scale: float):
        self.cap = cap
        self.scale = scale

    def __call__(self, y: np.ndarray):
        u = np.clip(y - self.cap, 0.0, 1.0 - _EPS)
        fin = y < self.cap
        with np.errstate(divide="ignore", over="ignore"):
            x = np.where(fin, y, self.cap + self.scale * u / (1.0 - u))
            jac = np.where(fin, 1.0, self.scale / (1.0 - u) ** 2)
        return x, jac, fin


def _semi_infinite_partition(g, tol_rel, scale, points, tol_abs, limit):
    if not scale > 0:
        raise QuadDomainError("scale must be positive")
    pts = np.asarray(points, dtype=float)
    cap = max(20.0 * scale, 2.0 * float(pts.max()) if pts.size else 0.0)
    tmap = _TailMap(cap, scale)

    def phi(y):
        x, jac, _ = tmap(y)
        with np.errstate(invalid="ignore", over="ignore", under="ignore"):
            vals = np.asarray(g(x), dtype=float) * jac
        far = x > 1e100 * scale
        return np.where(far & ~np.isfinite(vals), 0.0, vals)

    e = np.append(_edges(0.0, cap, pts), cap + 1.0)
    return adaptive(phi, e[:-1], e[1:], tol_rel, tol_abs, limit), tmap


def integrate_semi_infinite(g, tol_rel: float = 1e-10, *, scale: float = 1.0,
                            points: Sequence[float] = (), tol_abs: float = 0.0,
                            limit: int = DEFAULT_LIMIT) -> QuadratureResult:
    """Integral of ``g`` over ``[0, inf)``.

    Parameters
    ----------
    g : callable
        Vectorised integrand, decaying at least exponentially beyond ``scale``.
    tol_rel : float
        Requested relative accuracy.
    scale : float
        Frequency scale of the integrand; sets the cap ``20 * scale`` and the
        tail mapping length.
    points : sequence of float
        Breakpoints (discontinuities, narrow peaks) inside ``(0, inf)``.

    Raises
    ------
    BudgetExceededError
        When ``limit`` subintervals do not reach the tolerance.
    """
    part, _ = _semi_infinite_partition(g, tol_rel, scale, points, tol_abs, limit)
    return QuadratureResult(_out(part.total), _out(part.error), part.evaluations)


def integrate_pv(p: PvIntegrand, tol_rel: float = 1e-10, *, scale: float = 1.0,
                 points: Sequence[float] = (), upper: float | None = None,
                 tol_abs: float = 0.0, limit: int = DEFAULT_LIMIT) -> QuadratureResult:
    """Principal value of ``int_0^upper g(w') / (pole - w') dw'`` (``upper`` defaults to inf).

    Subtraction method: with ``c`` the cap (``max(20 scale, 4 pole)``, or
    ``upper``)::

        PV int_0^c g/(p - w') = int_0^c (g(w') - g(p)) / (p - w') dw' + g(p) ln(p / (c - p))

    and the tail beyond ``c`` is a regular integral.  ``g`` must be smooth at
    the pole.
    """
    poles = np.atleast_1d(np.asarray(p.pole, dtype=float))
    scalar = np.ndim(p.pole) == 0
    if poles.size == 0:
        raise QuadDomainError("no pole given")
    if np.any(~np.isfinite(poles)) or np.any(poles <= 0):
        raise QuadDomainError("pole must lie strictly inside (0, upper)")
    if upper is not None and np.any(poles >= upper):
        raise QuadDomainError("pole must lie strictly inside (0, upper)")
    g = p.g
    gp = np.asarray(g(poles), dtype=float)
    if not np.all(np.isfinite(gp)):
        raise QuadDomainError("g is not finite at the pole")
    h = 1e-6 * poles
    slope = (np.asarray(g(poles + h), dtype=float) - np.asarray(g(poles - h), dtype=float)) / (2 * h)

    pts = np.asarray(points, dtype=float)
    if upper is None:
        cap = max(20.0 * scale, 4.0 * float(poles.max()), 2.0 * float(pts.max()) if pts.size else 0.0)
    else:
        cap = float(upper)
    tmap = _TailMap(cap, scale)

    def phi(y):
        x, jac, fin = tmap(y)
        gx = np.asarray(g(x), dtype=float)
        diff = poles[:, None] - x[None, :]
        num = np.where(fin[None, :], gx[None, :] - gp[:, None], gx[None, :])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            vals = num / diff * jac[None, :]
        vals = np.where(diff == 0, -slope[:, None], vals)
        far = (x > 1e100 * scale)[None, :]
        vals = np.where(far & ~np.isfinite(vals), 0.0, vals)
        return vals[0] if scalar else vals

    e = _edges(0.0, cap, pts)
    if upper is None:
        e = np.append(e, cap + 1.0)
    part = adaptive(phi, e[:-1], e[1:], tol_rel, tol_abs, limit)
    with np.errstate(divide="ignore"):
        log_term = gp * np.log(poles / (cap - poles))
    log_term = np.where(gp == 0, 0.0, log_term)
    value = part.total + (log_term[0] if scalar else log_term)
    return QuadratureResult(_out(value), _out(part.error), part.evaluations + 3 * poles.size)


def integrate_oscillatory(g, t, kind: str = "cos", tol_rel: float = 1e-6, *,
                          scale: float = 1.0, points: Sequence[float] = (),
                          max_phase: float = DEFAULT_MAX_PHASE,
                          limit: int = DEFAULT_LIMIT) -> QuadratureResult:
    """``int_0^inf g(w) cos(w t) dw`` or the ``sin`` analogue for ``g >= 0``.

    ``t`` may be an array; the integrand is evaluated once per node and reused
    for every time.  Accuracy is relative to ``int g``, the natural scale of an
    oscillatory integral with a non-negative weight.

    The support ``R`` of ``g`` is the point beyond which ``int g`` falls under
    ``tol_rel / 10`` of its total; that remainder bounds the truncation error
    and is included in the error estimate.  Panels on ``[0, R]`` are at most
    half a period of ``t.max()`` wide (about 40 nodes per period).  Requests
    with ``t.max() * R > max_phase`` raise :class:`QuadRangeError`; a Filon
    (modified-moment) rule is the path beyond that.
    """
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    scalar_t = np.ndim(t) == 0
    if np.any(ts < 0) or not np.all(np.isfinite(ts)):
        raise QuadDomainError("t must be finite and >= 0")
    trig = np.cos if kind == "cos" else np.sin

    # widen the finite range until the mass beyond it is negligible
    for _ in range(30):
        base, tmap = _semi_infinite_partition(g, 1e-2 * tol_rel, scale, points, 0.0, limit)
        mass = np.atleast_1d(base.total)
        vals = base.values.reshape(mass.size, -1)
        # mass at and beyond each finite edge
        tail_after = np.cumsum(vals[:, ::-1], axis=1)[:, ::-1]
        finite = base.b <= tmap.cap
        allowed = np.all(np.abs(tail_after) <= 0.1 * tol_rel * np.abs(mass[:, None]), axis=0)
        idx = np.nonzero(allowed & finite)[0]
        if idx.size:
            break
        scale *= 2.0
    if idx.size:
        support = float(base.a[idx[0]])
        tail_mass = tail_after[:, idx[0]]
        if support == 0.0:
            support = float(base.b[idx[0]])
            tail_mass = tail_after[:, idx[0] + 1] if idx[0] + 1 < base.a.size else 0 * mass
    else:
        support = tmap.cap
        tail_mass = vals[:, ~finite].sum(axis=1)
    tmax = float(ts.max())
    if tmax * support > max_phase:
        raise QuadRangeError(
            f"t * support = {tmax * support:.4g} exceeds the supported phase {max_phase:.4g}")

    keep = base.b <= support
    a0, b0 = base.a[keep], base.b[keep]
    if tmax > 0:
        width = math.pi / tmax
        nsub = np.maximum(1, np.ceil((b0 - a0) / width).astype(int))
        a = np.concatenate([a0[i] + (b0[i] - a0[i]) * np.arange(n) / n for i, n in enumerate(nsub)])
        b = np.concatenate([a0[i] + (b0[i] - a0[i]) * np.arange(1, n + 1) / n for i, n in enumerate(nsub)])
    else:
        a, b = a0, b0
    nevals = base.evaluations
    target = np.maximum(tol_rel * mass, 64 * _EPS * mass)[:, None]

    def evaluate(a, b):
        half = 0.5 * (b - a)
        x = 0.5 * (a + b)[:, None] + half[:, None] * NODES
        y = np.asarray(g(x.ravel()), dtype=float).reshape(-1, *x.shape)
        return x, half, y

    x, half, y = evaluate(a, b)
    nevals += x.size
    while True:
        value = np.zeros((mass.size, ts.size))
        error = np.zeros((mass.size, ts.size))
        panel_e = np.zeros(a.size)
        chunk = max(1, int(4_000_000 // max(1, y.size)))
        for s in range(0, ts.size, chunk):
            tc = ts[s:s + chunk]
            w = trig(tc[:, None, None] * x[None])              # (nt, np, 21)
            prod = y[:, None] * w[None]                          # (m, nt, np, 21)
            kron, err, _ = kronrod_sums(prod, half)
            value[:, s:s + chunk] = kron.sum(axis=-1)
            error[:, s:s + chunk] = err.sum(axis=-1)
            panel_e = np.maximum(panel_e, (err / target[:, :, None]).max(axis=(0, 1)))
        error += tail_mass[:, None]
        if np.all(error <= target) or not np.all(tail_mass[:, None] < target):
            break
        sel = _select(panel_e)
        sel = sel[(b[sel] - a[sel]) > 256 * _EPS * np.abs(b[sel])]
        if sel.size == 0:
            break
        if a.size + sel.size > limit:
            raise BudgetExceededError(
                "oscillatory subdivision budget exhausted",
                QuadratureResult(_shape(value, mass, scalar_t), _shape(error, mass, scalar_t), nevals))
        mid = 0.5 * (a[sel] + b[sel])
        na, nb = np.concatenate([a[sel], mid]), np.concatenate([mid, b[sel]])
        nx, nhalf, ny = evaluate(na, nb)
        nevals += nx.size
        keepm = np.ones(a.size, dtype=bool)
        keepm[sel] = False
        a, b = np.concatenate([a[keepm], na]), np.concatenate([b[keepm], nb])
        x = np.concatenate([x[keepm], nx])
        half = np.concatenate([half[keepm], nhalf])
        y = np.concatenate([y[:, keepm], ny], axis=1)
    return QuadratureResult(_shape(value, mass, scalar_t), _shape(error, mass, scalar_t), nevals)


def _shape(arr, mass, scalar_t):
    out = arr
    if np.ndim(mass) == 1 and mass.size == 1:
        out = out[0]
    if scalar_t:
        out = out[..., 0]
    return _out(out)
