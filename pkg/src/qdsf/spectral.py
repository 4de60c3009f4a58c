"""Fano coefficients and the mode probability density.

For one field mode the dressed eigenmodes are labelled by their frequency
``omega``.  Everything here derives from a single real function, the bracket

    B(omega) = (omega_k**2 - omega**2) / (2 omega_k)
               + [PV int v(w')**2 / (omega - w') dw' - int v(w')**2 / (omega + w') dw']

so that ``Y = B / v**2`` and the density is

    P(omega) = omega / (omega_k v**2 (Y**2 + pi**2))
             = omega v**2 / (omega_k (B**2 + pi**2 v**4)),

the second form staying finite where ``v**2`` underflows.

The sign in front of the integrals is the one that makes ``B`` minus the
inverse system resolvent of the coupled oscillators:
``B(omega) = (omega_k**2 - omega**2 + Re Sigma(omega**2)) / (2 omega_k)`` with
``Sigma(z) = int f(w')**2 / (z - w'**2) dw'``.  Then ``B(0+)`` is the
renormalised ``Omega_k**2 / (2 omega_k)`` and ``int P = 1``.  The opposite
sign is available as ``convention="as-printed"``; it violates the sum rule
and is kept only for comparison.

Zeros of ``B`` are resonances.  Near one, ``P`` is a Lorentzian of half-width
``pi v**2 / |B'|`` and mass ``omega / (omega_k |B'|)``.  When the width falls
below ``SHARP_RATIO * omega`` the peak cannot be sampled reliably (the
bracket is only known to quadrature accuracy), so it is carried as an atom
of that mass and excluded from the quadrature through a small window.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import quad
from .coupling import CouplingSpec, Mode, eval_f, eval_v_sq

CONVENTIONS = ("first-principles", "as-printed")
DEFAULT_TOL_STATIC = 1e-10
DEFAULT_TOL_OSC = 1e-6
SUM_RULE_THRESHOLD = 1e-6
SHARP_RATIO = 1e-6
ATOM_WINDOW = 1e-3
_POLE_CHUNK = 256


class SpectralDomainError(ValueError):
    pass


class InvalidDensityError(RuntimeError):
    """The sum rule of a density failed; ``defect`` is ``|int P - 1|``."""

    def __init__(self, message: str, defect: float, density: "SpectralDensity | None" = None):
        super().__init__(message)
        self.defect = defect
        self.density = density


def _check_coupled(spec: CouplingSpec):
    if spec.gamma <= 0:
        raise SpectralDomainError(
            "gamma = 0: the field is free, Y is undefined and P is a delta function at omega_k")


def _scale(spec: CouplingSpec, mode: Mode) -> float:
    return max(spec.cutoff, mode.omega_k)


def _positive(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    if np.any(~(w > 0)):
        raise SpectralDomainError("spectral quantities need omega > 0")
    return w


def bracket(spec: CouplingSpec, mode: Mode, omega, tol: float = DEFAULT_TOL_STATIC,
            convention: str = "first-principles"):
    """The bracket ``B(omega) = Y(omega) v(omega)**2``; vectorised over ``omega``."""
    _check_coupled(spec)
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    sign = 1.0 if convention == "first-principles" else -1.0
    w = _positive(omega)
    flat = np.atleast_1d(w).ravel()
    wk = mode.omega_k
    scale = _scale(spec, mode)

    def vsq(x):
        return eval_v_sq(spec, wk, x)

    out = np.empty_like(flat)
    for s in range(0, flat.size, _POLE_CHUNK):
        poles = flat[s:s + _POLE_CHUNK]
        pv = quad.integrate_pv(quad.PvIntegrand(poles, vsq), tol, scale=scale).value

        def regular(x, poles=poles):
            return vsq(x)[None, :] / (poles[:, None] + x[None, :])

        reg = quad.integrate_semi_infinite(regular, tol, scale=scale).value
        out[s:s + _POLE_CHUNK] = (wk * wk - poles**2) / (2 * wk) + sign * (np.atleast_1d(pv) - np.atleast_1d(reg))
    out = out.reshape(w.shape)
    return out if out.ndim else float(out)


def _density_from_bracket(spec, mode, w, b):
    vsq = eval_v_sq(spec, mode.omega_k, w)
    return w * vsq / (mode.omega_k * (b * b + math.pi**2 * vsq * vsq))


def _alpha_sq_from_bracket(spec, mode, w, b):
    wk = mode.omega_k
    vsq = eval_v_sq(spec, wk, w)
    return (w + wk) ** 2 * vsq / (4 * wk * wk * (b * b + math.pi**2 * vsq * vsq))


def eval_Y(spec: CouplingSpec, mode: Mode, omega, tol: float = DEFAULT_TOL_STATIC,
           convention: str = "first-principles"):
    """``Y_k(omega)``; infinite where ``v(omega)**2`` underflows."""
    w = _positive(omega)
    b = np.asarray(bracket(spec, mode, w, tol, convention))
    with np.errstate(divide="ignore", over="ignore"):
        out = b / eval_v_sq(spec, mode.omega_k, w)
    return out if np.ndim(out) else float(out)


def eval_alpha_sq(spec: CouplingSpec, mode: Mode, omega, tol: float = DEFAULT_TOL_STATIC,
                  convention: str = "first-principles"):
    """``|alpha_k(omega)|**2 = (omega + omega_k)**2 / (4 omega_k**2 v**2 (Y**2 + pi**2))``."""
    w = _positive(omega)
    out = _alpha_sq_from_bracket(spec, mode, w, np.asarray(bracket(spec, mode, w, tol, convention)))
    return out if np.ndim(out) else float(out)


def eval_P(spec: CouplingSpec, mode: Mode, omega, tol: float = DEFAULT_TOL_STATIC,
           convention: str = "first-principles"):
    """Mode probability density ``P_k(omega)``."""
    w = _positive(omega)
    out = _density_from_bracket(spec, mode, w, np.asarray(bracket(spec, mode, w, tol, convention)))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SpectralCoefficients:
    """Fano coefficients at one eigenfrequency ``omega``.

    ``alpha`` is taken real and positive.  The reservoir coefficients are
    functions of ``w'``: ``delta(w') = delta_profile(w')`` and
    ``gamma(w') = gamma_pv_weight(w') * P/(omega - w') + gamma_spike * delta(omega - w')``.
    """

    omega: float
    Y: float
    alpha_sq: float
    beta_over_alpha: float
    delta_profile: Callable[[np.ndarray], np.ndarray]
    gamma_pv_weight: Callable[[np.ndarray], np.ndarray]
    gamma_spike: float

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha_sq)

    @property
    def beta(self) -> float:
        return self.beta_over_alpha * self.alpha

    @property
    def gamma_profile(self):
        return self.gamma_pv_weight, self.gamma_spike


def eval_beta_delta_gamma(spec: CouplingSpec, mode: Mode, omega: float,
                          tol: float = DEFAULT_TOL_STATIC,
                          convention: str = "first-principles") -> SpectralCoefficients:
    w = float(_positive(omega))
    wk = mode.omega_k
    b = bracket(spec, mode, w, tol, convention)
    vsq = eval_v_sq(spec, wk, w)
    alpha_sq = float(_alpha_sq_from_bracket(spec, mode, w, b))
    alpha = math.sqrt(alpha_sq)
    common = -2 * wk / (w + wk) * alpha

    def v_of(x):
        return np.sqrt(eval_v_sq(spec, wk, np.asarray(x, dtype=float)))

    def delta_profile(x):
        x = np.asarray(x, dtype=float)
        return v_of(x) * common / (w + x)

    def gamma_pv_weight(x):
        return v_of(x) * common

    y = b / vsq if vsq > 0 else math.copysign(math.inf, b)
    return SpectralCoefficients(
        omega=w,
        Y=y,
        alpha_sq=alpha_sq,
        beta_over_alpha=(w - wk) / (w + wk),
        delta_profile=delta_profile,
        gamma_pv_weight=gamma_pv_weight,
        gamma_spike=y * math.sqrt(vsq) * common,
    )


@dataclass(frozen=True)
class Resonance:
    """A zero of the bracket and its Lorentzian approximation."""

    omega: float
    width: float
    weight: float
    sharp: bool

    @property
    def window(self) -> float:
        return ATOM_WINDOW * self.omega

    @property
    def atom_mass(self) -> float:
        """Lorentzian mass inside the excluded window (sharp resonances only)."""
        return self.weight * 2.0 / math.pi * math.atan(self.window / self.width) if self.width > 0 else self.weight


class _BracketCache:
    """Bracket values keyed by abscissa; each key is computed at most once."""

    def __init__(self, spec, mode, tol, convention):
        self.spec, self.mode, self.tol, self.convention = spec, mode, tol, convention
        self._values: dict[float, float] = {}
        self._lock = threading.Lock()

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        flat = w.ravel()
        with self._lock:
            missing = np.array(sorted({x for x in flat.tolist() if x not in self._values}), dtype=float)
            if missing.size:
                vals = np.atleast_1d(bracket(self.spec, self.mode, missing, self.tol, self.convention))
                self._values.update(zip(missing.tolist(), vals.tolist()))
            out = np.array([self._values[x] for x in flat.tolist()], dtype=float)
        return out.reshape(w.shape)

    def __len__(self):
        return len(self._values)


@dataclass(frozen=True)
class SpectralDensity:
    """``P_k(omega)`` for one mode, with the quadrature data behind its sum rule.

    ``grid``/``values`` are the nodes at which the density was sampled while
    checking the sum rule.  ``cap`` is the truncation frequency (the mass
    beyond it is bounded by ``tail_bound``).  Sharp resonances contribute an
    atom at their frequency.
    """

    spec: CouplingSpec
    mode: Mode
    grid: np.ndarray
    values: np.ndarray
    sum_rule_defect: float
    sum_rule_error: float
    threshold: float
    cap: float
    tail_bound: float
    resonances: tuple[Resonance, ...]
    breakpoints: tuple[float, ...]
    peak: float
    fwhm: float
    tol: float
    _cache: _BracketCache = field(repr=False, compare=False)

    @property
    def valid(self) -> bool:
        return self.sum_rule_defect <= self.threshold

    @property
    def atoms(self) -> tuple[Resonance, ...]:
        return tuple(r for r in self.resonances if r.sharp)

    @property
    def quad_scale(self) -> float:
        """Scale handed to :mod:`quad` so its cap coincides with ``cap``."""
        return self.cap / 20.0

    def bracket(self, omega):
        return self._cache(_positive(omega))

    def P(self, omega):
        w = _positive(omega)
        return _density_from_bracket(self.spec, self.mode, w, self._cache(w))

    def Y(self, omega):
        w = _positive(omega)
        with np.errstate(divide="ignore", over="ignore"):
            return self._cache(w) / eval_v_sq(self.spec, self.mode.omega_k, w)

    def alpha_sq(self, omega):
        w = _positive(omega)
        return _alpha_sq_from_bracket(self.spec, self.mode, w, self._cache(w))

    def continuum(self, omega):
        """``P`` on ``(0, cap)`` outside the atom windows, zero elsewhere."""
        w = np.asarray(omega, dtype=float)
        mask = (w > 0) & (w < self.cap)
        for r in self.atoms:
            mask &= np.abs(w - r.omega) >= r.window
        out = np.zeros_like(w)
        if np.any(mask):
            out[mask] = self.P(w[mask])
        return out

    def moments(self, fns, tol: float | None = None) -> np.ndarray:
        """``<<f>>`` for each vectorised ``f`` in ``fns``, on one shared partition."""
        tol = self.tol if tol is None else tol
        fns = list(fns)

        def integrand(x):
            p = self.continuum(x)
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                rows = [np.where(p > 0, np.asarray(f(x), dtype=float) * p, 0.0) for f in fns]
            return np.array(rows)

        res = quad.integrate_semi_infinite(integrand, tol, scale=self.quad_scale, points=self.breakpoints)
        out = np.atleast_1d(res.value).astype(float)
        for r in self.atoms:
            out += r.atom_mass * np.array([float(np.asarray(f(np.array([r.omega])))[0]) for f in fns])
        return out

    def to_csv(self, header: str | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["omega", "P", "Y", "alpha_sq"])
        ys = self.Y(self.grid)
        asq = self.alpha_sq(self.grid)
        for row in zip(self.grid, self.values, ys, asq):
            writer.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()

    def to_record(self) -> dict:
        return {
            "coupling": {"family": self.spec.family, "gamma": self.spec.gamma,
                         "lambda": self.spec.cutoff, "s": self.spec.s},
            "mode": {"k": self.mode.k, "m": self.mode.m, "omega_k": self.mode.omega_k,
                     "omega_sq_renorm": self.mode.omega_sq_renorm},
            "convention": self._cache.convention,
            "sum_rule_defect": self.sum_rule_defect,
            "sum_rule_error": self.sum_rule_error,
            "sum_rule_threshold": self.threshold,
            "valid": self.valid,
            "cap": self.cap,
            "tail_bound": self.tail_bound,
            "peak": self.peak,
            "fwhm": self.fwhm,
            "resonances": [{"omega": r.omega, "width": r.width, "weight": r.weight, "sharp": r.sharp}
                           for r in self.resonances],
            "n_grid": int(self.grid.size),
        }

    def to_json(self, extra: dict | None = None) -> str:
        rec = self.to_record()
        if extra:
            rec.update(extra)
        return json.dumps(rec, indent=2, sort_keys=True) + "\n"


def _tail_bound(spec: CouplingSpec, mode: Mode, cap: float) -> float:
    # For omega >= cap (beyond the coupling support) |B| >= (omega^2 - omega_k^2) / (2 omega_k),
    # so P <= f^2 / (omega^2 - omega_k^2)^2.
    wk2 = mode.omega_k**2
    res = quad.integrate_semi_infinite(lambda x: eval_f(spec, cap + x) ** 2, 1e-6, scale=spec.cutoff)
    return float(res.value) / (cap * cap - wk2) ** 2


def _derivative(fn, x: float, h: float) -> float:
    pts = np.array([x - 2 * h, x - h, x + h, x + 2 * h])
    b = fn(pts)
    return float((8 * (b[2] - b[1]) - (b[3] - b[0])) / (12 * h))


def find_resonances(spec: CouplingSpec, mode: Mode, cap: float,
                    tol: float = DEFAULT_TOL_STATIC, fn=None,
                    convention: str = "first-principles") -> tuple[Resonance, ...]:
    """Zeros of the bracket on ``(0, cap)`` located from a coarse log scan and refined by Brent's method."""
    fn = fn or (lambda w: np.asarray(bracket(spec, mode, w, tol, convention)))
    lo = 1e-4 * min(spec.cutoff, mode.omega_k) if mode.omega_k > 0 else 1e-4 * spec.cutoff
    scan = np.unique(np.concatenate([np.geomspace(lo, cap, 256), [mode.omega_k] if mode.omega_k > 0 else []]))
    vals = fn(scan)
    found = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        a, b = scan[i], scan[i + 1]
        root = optimize.brentq(lambda x: float(fn(np.array([x]))[0]), a, b, xtol=1e-15 * b, rtol=4 * np.finfo(float).eps)
        slope = _derivative(fn, root, 1e-4 * min(root, b - a, spec.cutoff))
        vsq = float(eval_v_sq(spec, mode.omega_k, root))
        width = math.pi * vsq / abs(slope)
        weight = root / (mode.omega_k * abs(slope))
        found.append(Resonance(root, width, weight, sharp=width < SHARP_RATIO * root))
    return tuple(found)


def _breakpoints(res: tuple[Resonance, ...], cap: float, scale: float) -> tuple[float, ...]:
    pts = list(np.geomspace(1e-3 * scale, cap, 13)[:-1])
    for r in res:
        if r.sharp:
            pts += [r.omega - r.window, r.omega + r.window]
            continue
        pts.append(r.omega)
        d = r.width
        while d < r.omega:
            pts += [r.omega - d, r.omega + d]
            d *= 4.0
    return tuple(sorted(p for p in set(pts) if 0 < p < cap))


def build_density(spec: CouplingSpec, mode: Mode, *, tol: float = DEFAULT_TOL_STATIC,
                  threshold: float = SUM_RULE_THRESHOLD, strict: bool = True,
                  convention: str = "first-principles") -> SpectralDensity:
    """Sample ``P_k`` adaptively, locate its peak and check ``int P = 1``.

    Raises
    ------
    SpectralDomainError
        ``gamma = 0``.
    InvalidDensityError
        ``strict`` and the sum-rule defect exceeds ``threshold``.
    """
    _check_coupled(spec)
    cache = _BracketCache(spec, mode, tol, convention)
    scale = _scale(spec, mode)
    cap = 20.0 * scale
    tail = _tail_bound(spec, mode, cap)
    while tail > 1e-3 * threshold:
        cap *= 1.5
        tail = _tail_bound(spec, mode, cap)

    resonances = find_resonances(spec, mode, cap, tol, fn=cache)
    points = _breakpoints(resonances, cap, spec.cutoff)
    shell = SpectralDensity(spec, mode, np.empty(0), np.empty(0), math.nan, math.nan, threshold,
                            cap, tail, resonances, points, math.nan, math.nan, tol, cache)

    part, _ = quad._semi_infinite_partition(shell.continuum, tol, shell.quad_scale, points, 0.0,
                                            quad.DEFAULT_LIMIT)
    total = float(part.total) + sum(r.atom_mass for r in shell.atoms)
    error = float(part.error) + tail

    fin = part.b <= cap
    half = 0.5 * (part.b[fin] - part.a[fin])
    nodes = (0.5 * (part.a[fin] + part.b[fin]))[:, None] + half[:, None] * quad.NODES
    grid = np.unique(nodes.ravel())
    grid = grid[shell.continuum(grid) > 0]
    values = shell.P(grid)

    peak, fwhm = _peak_and_width(shell, grid, values)
    density = SpectralDensity(spec, mode, grid, values, abs(total - 1.0), error, threshold, cap, tail,
                              resonances, points, peak, fwhm, tol, cache)
    if strict and not density.valid:
        raise InvalidDensityError(
            f"sum rule defect {density.sum_rule_defect:.3g} exceeds {threshold:.3g}",
            density.sum_rule_defect, density)
    return density


def _peak_and_width(d: SpectralDensity, grid: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    atoms = d.atoms
    if atoms:
        top = max(atoms, key=lambda r: r.weight)
        if top.weight > 0.5 or not grid.size:
            return top.omega, 2.0 * top.width
    i = int(np.argmax(values))
    lo = grid[i - 1] if i > 0 else 0.5 * grid[0]
    hi = grid[i + 1] if i + 1 < grid.size else grid[i] * 1.01
    res = optimize.minimize_scalar(lambda x: -float(d.P(np.array([x]))[0]),
                                   bracket=(lo, grid[i], hi), method="golden",
                                   options={"xtol": 1e-10})
    peak = float(res.x) if lo < res.x < hi else float(grid[i])
    pmax = float(d.P(np.array([peak]))[0])
    half = 0.5 * pmax

    def excess(x):
        return float(d.P(np.array([x]))[0]) - half

    left_pts = np.nonzero((grid < peak) & (values < half))[0]
    right_pts = np.nonzero((grid > peak) & (values < half))[0]
    left = optimize.brentq(excess, grid[left_pts[-1]], peak) if left_pts.size else 0.0
    right = optimize.brentq(excess, peak, grid[right_pts[0]]) if right_pts.size else d.cap
    return peak, right - left


def moment(source, fn: Callable, *, mode: Mode | None = None, tol: float | None = None) -> float:
    """``<<fn(omega)>>_k = int fn(omega) P_k(omega) domega``.

    ``source`` is a :class:`SpectralDensity` or a :class:`CouplingSpec`
    together with ``mode``.
    """
    if isinstance(source, CouplingSpec):
        if mode is None:
            raise TypeError("a mode is required when integrating over a coupling spec")
        source = build_density(source, mode)
    return float(source.moments([fn], tol)[0])


class MomentSet:
    """Moments of ``P_k``: ``<<omega>>`` and ``<<1/omega>>`` eagerly, others on demand.

    ``get`` caches by key; concurrent callers of the same key compute it once.
    """

    def __init__(self, density: SpectralDensity, tol: float | None = None):
        self.density = density
        self.mode = density.mode
        self.tol = density.tol if tol is None else tol
        mean, inv = density.moments([lambda w: w, lambda w: 1.0 / w], self.tol)
        self.mean_omega = float(mean)
        self.mean_inv_omega = float(inv)
        self._cache: dict[str, float] = {"omega": self.mean_omega, "inv_omega": self.mean_inv_omega}
        self._lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}

    def get(self, key: str, fn: Callable) -> float:
        with self._lock:
            if key in self._cache:
                return self._cache[key]
            lock = self._key_locks.setdefault(key, threading.Lock())
        with lock:
            with self._lock:
                if key in self._cache:
                    return self._cache[key]
            value = moment(self.density, fn, tol=self.tol)
            with self._lock:
                self._cache[key] = value
            return value

    def get_many(self, items: dict[str, Callable]) -> dict[str, float]:
        """Compute several uncached moments on one shared partition."""
        with self._lock:
            todo = {k: f for k, f in items.items() if k not in self._cache}
        if todo:
            vals = self.density.moments(list(todo.values()), self.tol)
            with self._lock:
                for k, v in zip(todo, vals):
                    self._cache.setdefault(k, float(v))
        with self._lock:
            return {k: self._cache[k] for k in items}

    def keys(self):
        with self._lock:
            return tuple(self._cache)


def moment_set(density: SpectralDensity, tol: float | None = None) -> MomentSet:
    return MomentSet(density, tol)
