"""Ground-state, dynamical and thermal observables of a field mode.

Every quantity is a moment of the mode density ``P_k``.  Where the
closed-form expressions as published differ from what the ladder-operator
conventions give, both are offered behind a ``variant`` switch:

``as-printed``
    the published prefactors: ``(1/2 omega_k) <<sin(wt)/w>>`` in the field
    mean, ``omega_k / (4 <<omega>>)`` as zero-temperature term of the
    occupation;
``first-principles``
    ``<phi(t)> = <<cos>> phi0 + <<sin(wt)/w>> pi0``,
    ``<pi(t)> = <<cos>> pi0 - <<w sin(wt)>> phi0`` and the occupation
    ``(omega_k <phi**2>_T + <pi**2>_T / omega_k) / 2 - 1/2``.

The finite-bath oracle reproduces the first-principles variant, which is
therefore the default.
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass

import numpy as np

from . import quad
from .bath import bose_einstein
from .coupling import CouplingSpec, Mode, make_mode
from .spectral import (DEFAULT_TOL_OSC, MomentSet, SpectralDensity, build_density,
                       moment_set)

VARIANTS = ("first-principles", "as-printed")
DEFAULT_VARIANT = "first-principles"


class ObservableDomainError(ValueError):
    pass


def _check_variant(variant: str):
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


@dataclass(frozen=True)
class GroundStateStats:
    mode: Mode
    var_phi: float
    var_pi: float
    energy: float

    @property
    def energy_excess(self) -> float:
        """Mode energy above the free zero-point value ``omega_k / 2``."""
        return self.energy - 0.5 * self.mode.omega_k

    @property
    def uncertainty_product(self) -> float:
        return self.var_phi * self.var_pi


def ground_state_stats(moments: MomentSet) -> GroundStateStats:
    wk = moments.mode.omega_k
    mw, miw = moments.mean_omega, moments.mean_inv_omega
    return GroundStateStats(
        mode=moments.mode,
        var_phi=miw / 2,
        var_pi=mw / 2,
        energy=wk / 4 * (mw / wk + wk * miw),
    )


def characteristic_function(moments: MomentSet, eta_r, eta_i):
    """Gaussian characteristic function of the reduced mode state."""
    wk = moments.mode.omega_k
    er = np.asarray(eta_r, dtype=float)
    ei = np.asarray(eta_i, dtype=float)
    out = np.exp(-0.5 * (moments.mean_omega / wk * er**2 + moments.mean_inv_omega * wk * ei**2))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ThermalSpec:
    temperature: float

    def __post_init__(self):
        if not self.temperature >= 0:
            raise ObservableDomainError(f"temperature must be >= 0, got {self.temperature}")


def _low_frequency_exponent(density: SpectralDensity) -> float:
    lo = 1e-6 * density.spec.cutoff
    p = density.P(np.array([lo, 2 * lo]))
    return float(np.log(p[1] / p[0]) / math.log(2.0))


def thermal_moments(moments: MomentSet, T: float) -> tuple[float, float]:
    """``(<<omega N(omega)>>, <<N(omega)/omega>>)`` at temperature ``T``."""
    if T < 0:
        raise ObservableDomainError("temperature must be >= 0")
    if T == 0:
        return 0.0, 0.0
    # N/omega ~ T/omega**2 at the origin, so P must vanish faster than omega.
    slope = _low_frequency_exponent(moments.density)
    if not slope > 1.0 + 1e-3:
        raise ObservableDomainError(
            f"<<N/omega>> diverges: P ~ omega^{slope:.3g} at the origin")
    key = repr(float(T))
    got = moments.get_many({
        f"omega_N@{key}": lambda w: w * bose_einstein(w, T),
        f"N_over_omega@{key}": lambda w: bose_einstein(w, T) / w,
    })
    return got[f"omega_N@{key}"], got[f"N_over_omega@{key}"]


def thermal_occupation(moments: MomentSet, th: ThermalSpec | float,
                       variant: str = DEFAULT_VARIANT) -> float:
    """Mean occupation ``<a_k^dag a_k>`` of the field mode at temperature ``T``."""
    _check_variant(variant)
    T = th.temperature if isinstance(th, ThermalSpec) else float(th)
    if T < 0:
        raise ObservableDomainError("temperature must be >= 0")
    wk = moments.mode.omega_k
    mw, miw = moments.mean_omega, moments.mean_inv_omega
    wn, nw = thermal_moments(moments, T)
    if variant == "as-printed":
        return wn / (2 * wk) + wk / 2 * nw + mw / (4 * wk) + wk / (4 * mw) - 0.5
    return (mw + 2 * wn) / (4 * wk) + wk * (miw + 2 * nw) / 4 - 0.5


@dataclass(frozen=True)
class EvolutionKernels:
    mode: Mode
    t: np.ndarray
    K_cos: np.ndarray
    K_sin_over_omega: np.ndarray
    K_omega_sin: np.ndarray
    variant: str
    error: float

    def propagate(self, phi0: float, pi0: float) -> tuple[np.ndarray, np.ndarray]:
        """Mean field and momentum trajectories from initial means ``phi0, pi0``."""
        wk = self.mode.omega_k
        if self.variant == "as-printed":
            phi = self.K_cos * phi0 + self.K_sin_over_omega * pi0 / (2 * wk)
            pi = self.K_cos * pi0 - wk / 2 * self.K_sin_over_omega * phi0
        else:
            phi = self.K_cos * phi0 + self.K_sin_over_omega * pi0
            pi = self.K_cos * pi0 - self.K_omega_sin * phi0
        return phi, pi

    def to_csv(self, header: str | None = None, phi0: float | None = None,
               pi0: float | None = None) -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = [self.t, self.K_cos, self.K_sin_over_omega, self.K_omega_sin]
        names = ["t", "K_cos", "K_sin_over_omega", "K_omega_sin"]
        if phi0 is not None and pi0 is not None:
            cols += list(self.propagate(phi0, pi0))
            names += ["phi", "pi"]
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([f"{x:.17g}" for x in row])
        return buf.getvalue()


def evolution_kernels(density: SpectralDensity, t, variant: str = DEFAULT_VARIANT,
                      tol: float = DEFAULT_TOL_OSC) -> EvolutionKernels:
    """``<<cos wt>>``, ``<<sin(wt)/w>>`` and ``<<w sin wt>>`` on a time grid.

    Raises
    ------
    quad.QuadRangeError
        When ``t.max()`` times the support of ``P`` exceeds the supported phase.
    """
    _check_variant(variant)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    opts = dict(scale=density.quad_scale, points=density.breakpoints)
    cos_res = quad.integrate_oscillatory(density.continuum, ts, "cos", tol, **opts)

    def sin_weights(x):
        p = density.continuum(x)
        return np.array([p / x, p * x])

    sin_res = quad.integrate_oscillatory(sin_weights, ts, "sin", tol, **opts)
    k_cos = np.atleast_1d(cos_res.value).copy()
    k_sin, k_wsin = (np.atleast_1d(v).copy() for v in sin_res.value)
    for r in density.atoms:
        damp = np.exp(-r.width * ts)
        k_cos += r.atom_mass * np.cos(r.omega * ts) * damp
        k_sin += r.atom_mass * np.sin(r.omega * ts) / r.omega * damp
        k_wsin += r.atom_mass * r.omega * np.sin(r.omega * ts) * damp
    err = float(max(np.max(cos_res.error_estimate), np.max(sin_res.error_estimate)))
    return EvolutionKernels(density.mode, ts, k_cos, k_sin, k_wsin, variant, err)


@dataclass(frozen=True)
class MeanSquareField:
    value: float
    k_max: float
    n_k: int
    x: float


def _field_integrand(spec: CouplingSpec, m: float, x: float, ks: np.ndarray, tol: float) -> np.ndarray:
    """Integrand in ``u = asinh(k/m)``, i.e. already multiplied by ``dk/du = omega_k``."""
    out = np.empty(ks.size)
    for i, k in enumerate(ks):
        mode = make_mode(spec, float(k), m)
        ms = moment_set(build_density(spec, mode, tol=tol))
        wk = mode.omega_k
        bracket = ms.mean_omega / (2 * wk) - math.cos(k * x) ** 2 * (1 / wk - ms.mean_inv_omega)
        out[i] = bracket / (2 * math.pi**2)
    return out


def mean_square_field(spec: CouplingSpec, m: float, x: float = 0.0, t: float = 0.0,
                      k_max: float | None = None, n_k: int = 32,
                      tol: float = 1e-10) -> MeanSquareField:
    """``<phi(x, t)**2>`` integrated over modes ``0 <= k <= k_max``.

    The integral grows like ``ln k_max`` in 1+1 dimensions, so the cutoff is
    part of the result.  The expression carries no time dependence; ``t`` is
    accepted for symmetry with the other observables.  Gauss-Legendre
    quadrature with ``n_k`` nodes in ``u = asinh(k/m)``, where the integrand
    becomes bounded and smooth.
    """
    if not m > 0:
        raise ObservableDomainError("the field mass must be > 0 (the k = 0 mode is otherwise unstable)")
    k_max = 50.0 * max(m, spec.cutoff) if k_max is None else float(k_max)
    if not k_max > 0:
        raise ObservableDomainError("k_max must be > 0")
    u_max = math.asinh(k_max / m)
    nodes, weights = np.polynomial.legendre.leggauss(n_k)
    u = 0.5 * u_max * (nodes + 1)
    vals = _field_integrand(spec, m, x, m * np.sinh(u), tol)
    return MeanSquareField(float(0.5 * u_max * weights @ vals), k_max, n_k, float(x))


def mean_square_field_scan(spec: CouplingSpec, m: float, k_maxes, x: float = 0.0,
                           n_per_panel: int = 12, tol: float = 1e-10) -> list[MeanSquareField]:
    """Cumulative cutoff scan: one Gauss-Legendre panel between consecutive cutoffs."""
    if not m > 0:
        raise ObservableDomainError("the field mass must be > 0")
    cuts = np.sort(np.asarray(k_maxes, dtype=float))
    edges = np.concatenate([[0.0], np.arcsinh(cuts / m)])
    nodes, weights = np.polynomial.legendre.leggauss(n_per_panel)
    total = 0.0
    out = []
    for lo, hi, kc in zip(edges[:-1], edges[1:], cuts):
        u = lo + 0.5 * (hi - lo) * (nodes + 1)
        total += 0.5 * (hi - lo) * weights @ _field_integrand(spec, m, x, m * np.sinh(u), tol)
        out.append(MeanSquareField(float(total), float(kc), n_per_panel * len(out) + n_per_panel, float(x)))
    return out


def free_field_kernels(omega_k: float, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kernels of the decoupled mode: ``cos(wk t)``, ``sin(wk t)/wk``, ``wk sin(wk t)``."""
    ts = np.asarray(t, dtype=float)
    return np.cos(omega_k * ts), np.sin(omega_k * ts) / omega_k, omega_k * np.sin(omega_k * ts)
