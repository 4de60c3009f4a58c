"""Coupling functions between the scalar field and its oscillator reservoir.

The reservoir couples to each reciprocal-space mode ``k`` through a real
coupling function ``f(omega)``.  Only one family is provided::

    f(omega) = sqrt(2 gamma / pi) * omega**s * Lambda**(1 - s) * exp(-omega / Lambda)

with ``s = 1`` the ohmic case.  Natural units (hbar = c = k_B = 1) are used
throughout; temperatures and cutoffs are frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("power-law-exponential",)


class InvalidCouplingError(ValueError):
    """Raised when a coupling/mode combination violates the positivity bound."""

    def __init__(self, message: str, margin: float | None = None):
        super().__init__(message)
        self.margin = margin


@dataclass(frozen=True)
class CouplingSpec:
    """Parameters of the coupling function ``f(omega)``.

    Attributes
    ----------
    gamma : float
        Coupling strength (frequency units), ``gamma >= 0``.  ``gamma = 0`` is
        the decoupled field and is accepted here; the spectral routines reject it.
    cutoff : float
        Exponential cutoff frequency ``Lambda > 0``.
    s : float
        Power-law exponent, ``s >= 1``.  Sub-ohmic exponents make
        ``f(omega)**2 / omega**2`` non-integrable at the origin.
    """

    gamma: float
    cutoff: float
    s: float = 1.0
    family: str = "power-law-exponential"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown coupling family {self.family!r}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not (math.isfinite(self.cutoff) and self.cutoff > 0):
            raise ValueError(f"cutoff must be finite and > 0, got {self.cutoff}")
        if not (math.isfinite(self.s) and self.s >= 1):
            raise ValueError(f"exponent s must be >= 1, got {self.s}")

    @property
    def prefactor_sq(self) -> float:
        return 2.0 * self.gamma / math.pi

    def coupling_integral(self) -> float:
        """Closed form of ``int_0^inf f(w)**2 / w**2 dw``.

        With ``x = w / Lambda`` the integral is
        ``(2 gamma / pi) Lambda Gamma(2s - 1) / 2**(2s - 1)``.
        """
        a = 2.0 * self.s - 1.0
        return self.prefactor_sq * self.cutoff * math.gamma(a) / 2.0**a

    def critical_gamma(self, omega_k: float) -> float:
        """Coupling strength at which the renormalised frequency vanishes."""
        if self.gamma == 0:
            probe = CouplingSpec(1.0, self.cutoff, self.s, self.family)
            return omega_k**2 / probe.coupling_integral()
        return self.gamma * omega_k**2 / self.coupling_integral()

    def with_gamma(self, gamma: float) -> "CouplingSpec":
        return CouplingSpec(gamma, self.cutoff, self.s, self.family)


def omega_k(k: float, m: float) -> float:
    return math.hypot(m, k)


@dataclass(frozen=True)
class Mode:
    """One reciprocal-space mode of the field.

    Use :func:`make_mode` to build one; construction fails unless the
    renormalised squared frequency is strictly positive.
    """

    k: float
    m: float
    omega_k: float
    omega_sq_renorm: float

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("mass must be >= 0")
        if not self.omega_sq_renorm > 0:
            raise InvalidCouplingError(
                f"renormalised frequency squared is {self.omega_sq_renorm:.6g} <= 0 "
                f"for k={self.k}, m={self.m}",
                margin=self.omega_sq_renorm,
            )


@dataclass(frozen=True)
class PositivityVerdict:
    passed: bool
    margin: float

    def __bool__(self):
        return self.passed

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"


def eval_f(spec: CouplingSpec, omega):
    """Coupling function ``f(omega)``; vectorised, exactly zero at the origin."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("f(omega) is defined for omega >= 0 only")
    lam = spec.cutoff
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        x = w / lam
        out = np.where(
            w > 0,
            math.sqrt(spec.prefactor_sq) * lam * np.exp(spec.s * np.log(np.where(w > 0, x, 1.0)) - x),
            0.0,
        )
    return out if out.ndim else float(out)


def eval_v_sq(spec: CouplingSpec, omega_k_: float, omega):
    """Square of the ladder-operator coupling ``v(omega, k) = f / (2 sqrt(omega omega_k))``.

    Written as ``(2 gamma / pi) Lambda / (4 omega_k) x**(2s-1) exp(-2x)`` with
    ``x = omega / Lambda`` so the ``omega -> 0`` limit needs no division.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or np.any(np.isnan(w)):
        raise ValueError("v(omega, k) is defined for omega >= 0 only")
    lam = spec.cutoff
    pref = spec.prefactor_sq * lam / (4.0 * omega_k_)
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        x = w / lam
        out = np.where(
            w > 0,
            pref * np.exp((2.0 * spec.s - 1.0) * np.log(np.where(w > 0, x, 1.0)) - 2.0 * x),
            0.0,
        )
    return out if out.ndim else float(out)


def eval_v(spec: CouplingSpec, mode: Mode | float, omega):
    """Coupling ``v(omega, k)``; returns the limit 0 at ``omega = 0``."""
    wk = mode.omega_k if isinstance(mode, Mode) else float(mode)
    out = np.sqrt(eval_v_sq(spec, wk, omega))
    return out if np.ndim(out) else float(out)


def renormalized_frequency_sq(spec: CouplingSpec, k: float, m: float) -> float:
    """``omega_k**2 - int f**2/omega**2``; may be <= 0 for over-strong coupling."""
    wk2 = m * m + k * k
    if spec.gamma == 0:
        return wk2
    return wk2 - spec.coupling_integral()


def check_positivity(spec: CouplingSpec, k: float, m: float) -> PositivityVerdict:
    margin = renormalized_frequency_sq(spec, k, m)
    return PositivityVerdict(passed=margin > 0, margin=margin)


def make_mode(spec: CouplingSpec, k: float, m: float) -> Mode:
    """Build a :class:`Mode`, raising :class:`InvalidCouplingError` on a FAIL verdict."""
    verdict = check_positivity(spec, k, m)
    if not verdict:
        raise InvalidCouplingError(
            f"coupling too strong for k={k}, m={m}: omega_k^2 - int f^2/w^2 = "
            f"{verdict.margin:.6g} (must be > 0)",
            margin=verdict.margin,
        )
    return Mode(k=float(k), m=float(m), omega_k=omega_k(k, m), omega_sq_renorm=verdict.margin)
