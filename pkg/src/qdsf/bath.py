"""Finite-bath oracle.

The reservoir of one field mode is replaced by ``N`` oscillators and the
``(N+1)``-dimensional quadratic form is diagonalised exactly.  The potential
matrix is an arrow matrix::

    V[0, 0] = omega_k**2,  V[j, j] = omega_j**2,  V[0, j] = V[j, 0] = -c_j

with ``c_j = f(omega_j) sqrt(d omega_j)``.  If ``V = O diag(wt**2) O^T`` then
the weight of normal mode ``n`` in the field coordinate is ``u_n**2 = O[0, n]**2``
and every continuum moment ``<<g>>`` has the discrete counterpart
``sum_n u_n**2 g(wt_n)``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingSpec, Mode, eval_f, omega_k as _omega_k


class InstabilityError(RuntimeError):
    """The discretised Hamiltonian has a negative squared eigenfrequency."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True)
class FiniteBath:
    k: float
    m: float
    omega_k: float
    N: int
    frequencies: np.ndarray
    weights: np.ndarray
    couplings: np.ndarray
    omega_max: float
    scheme: str
    eigenvalues: np.ndarray | None = None
    overlaps: np.ndarray | None = None
    residual: float | None = None

    @property
    def diagonalized(self) -> bool:
        return self.eigenvalues is not None

    @property
    def eigenfrequencies(self) -> np.ndarray:
        self._require()
        return np.sqrt(self.eigenvalues)

    @property
    def weights_u2(self) -> np.ndarray:
        self._require()
        return self.overlaps**2

    def _require(self):
        if not self.diagonalized:
            raise RuntimeError("bath has not been diagonalised")

    def coupling_sum(self) -> float:
        """Discrete ``sum c_j**2 / omega_j**2``, the counterpart of ``int f**2 / omega**2``."""
        return float(np.sum(self.couplings**2 / self.frequencies**2))

    def matrix(self) -> np.ndarray:
        n = self.N + 1
        v = np.zeros((n, n))
        v[0, 0] = self.omega_k**2
        idx = np.arange(1, n)
        v[idx, idx] = self.frequencies**2
        v[0, 1:] = v[1:, 0] = -self.couplings
        return v

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``V @ x`` in O(N) per column using the arrow structure."""
        x2 = x.reshape(x.shape[0], -1)
        out = np.empty_like(x2)
        out[0] = self.omega_k**2 * x2[0] - self.couplings @ x2[1:]
        out[1:] = -np.outer(self.couplings, x2[0]) + (self.frequencies**2)[:, None] * x2[1:]
        return out.reshape(x.shape)

    def interlaces(self, rtol: float = 1e-10) -> bool:
        """Cauchy interlacing of the eigenvalues with the bath ``omega_j**2``."""
        self._require()
        lam = np.sort(self.eigenvalues)
        d = np.sort(self.frequencies**2)
        slack = rtol * max(1.0, float(np.abs(lam).max()))
        return bool(np.all(lam[:-1] <= d + slack) and np.all(d <= lam[1:] + slack))

    def spectrum_record(self) -> dict:
        self._require()
        return {
            "k": self.k, "m": self.m, "omega_k": self.omega_k, "N": self.N,
            "omega_max": self.omega_max, "scheme": self.scheme,
            "eigenfrequencies": self.eigenfrequencies.tolist(),
            "u_sq": self.weights_u2.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.spectrum_record(), sort_keys=True) + "\n"


def discretize(spec: CouplingSpec, mode: Mode | tuple[float, float], N: int,
               omega_max: float | None = None, scheme: str = "uniform") -> FiniteBath:
    """Midpoint discretisation of the reservoir on ``(0, omega_max]``.

    ``mode`` may be a :class:`Mode` or a ``(k, m)`` pair; the pair form skips
    the positivity gate so unstable couplings can be examined.  ``uniform``
    places ``N`` equal cells; ``log`` uses ``[0, 1e-3 omega_max]`` followed by
    ``N - 1`` geometric cells.
    """
    if isinstance(mode, Mode):
        k, m, wk = mode.k, mode.m, mode.omega_k
    else:
        k, m = mode
        wk = _omega_k(k, m)
    if N < 1:
        raise ValueError("N must be >= 1")
    omega_max = 20.0 * spec.cutoff if omega_max is None else float(omega_max)
    if scheme == "uniform":
        edges = np.linspace(0.0, omega_max, N + 1)
    elif scheme == "log":
        if N < 2:
            raise ValueError("the log scheme needs N >= 2")
        edges = np.concatenate([[0.0], np.geomspace(1e-3 * omega_max, omega_max, N)])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    freqs = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    couplings = eval_f(spec, freqs) * np.sqrt(widths)
    return FiniteBath(float(k), float(m), float(wk), int(N), freqs, widths, couplings, omega_max, scheme)


def diagonalize(bath: FiniteBath) -> FiniteBath:
    """Dense symmetric eigendecomposition of the arrow matrix.

    Raises
    ------
    InstabilityError
        If the smallest eigenvalue is negative (the discrete analogue of a
        failed positivity check).
    """
    lam, vec = np.linalg.eigh(bath.matrix())
    norm = float(np.abs(lam).max())
    if lam[0] < -1e-12 * norm:
        raise InstabilityError(
            f"negative squared eigenfrequency {lam[0]:.6g}: coupling exceeds the stability bound",
            float(lam[0]))
    resid = bath.matvec(vec) - vec * lam
    residual = float(np.sqrt((resid**2).sum(axis=0)).max()) / norm
    lam = np.maximum(lam, 0.0)
    return dataclasses.replace(bath, eigenvalues=lam, overlaps=vec[0].copy(), residual=residual)


def bose_einstein(omega, T: float):
    """``1 / (exp(omega / T) - 1)``; identically zero at ``T = 0``."""
    w = np.asarray(omega, dtype=float)
    if T < 0:
        raise ValueError("temperature must be >= 0")
    if T == 0:
        return np.zeros_like(w)
    with np.errstate(over="ignore", divide="ignore"):
        return 1.0 / np.expm1(w / T)


@dataclass(frozen=True)
class OracleStats:
    var_phi: float
    var_pi: float
    energy: float
    sum_u2: float
    temperature: float
    occupation: float
    thermal_var_phi: float
    thermal_var_pi: float


def oracle_stats(bath: FiniteBath, T: float = 0.0) -> OracleStats:
    if T < 0:
        raise ValueError("temperature must be >= 0")
    wt = bath.eigenfrequencies
    u2 = bath.weights_u2
    wk = bath.omega_k
    var_phi = float(np.sum(u2 / wt) / 2)
    var_pi = float(np.sum(u2 * wt) / 2)
    coth = 2 * bose_einstein(wt, T) + 1
    tphi = float(np.sum(u2 * coth / wt) / 2)
    tpi = float(np.sum(u2 * coth * wt) / 2)
    return OracleStats(
        var_phi=var_phi,
        var_pi=var_pi,
        energy=0.5 * (var_pi + wk * wk * var_phi),
        sum_u2=float(np.sum(u2)),
        temperature=float(T),
        occupation=0.5 * (wk * tphi + tpi / wk) - 0.5,
        thermal_var_phi=tphi,
        thermal_var_pi=tpi,
    )


def oracle_kernels(bath: FiniteBath, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(K_cos, K_sin_over_omega, K_omega_sin)`` as finite sums over normal modes."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    wt = bath.eigenfrequencies
    u2 = bath.weights_u2
    k_cos = np.empty(ts.size)
    k_sin = np.empty(ts.size)
    k_wsin = np.empty(ts.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc_w = np.where(wt > 0, 1.0 / wt, 0.0)
    for s in range(0, ts.size, 64):
        ph = np.outer(ts[s:s + 64], wt)
        c, sn = np.cos(ph), np.sin(ph)
        k_cos[s:s + 64] = c @ u2
        k_sin[s:s + 64] = sn @ (u2 * sinc_w) + np.where(wt > 0, 0.0, u2).sum() * ts[s:s + 64]
        k_wsin[s:s + 64] = sn @ (u2 * wt)
    return k_cos, k_sin, k_wsin

