"""Run configuration: flat ``section.key = value`` text files plus CLI overrides.

Example::

    # ohmic coupling, one mode
    coupling.gamma = 0.1*pi
    coupling.lambda = 5
    modes.m = 1
    modes.k = 0, 2

Numeric values accept ``pi`` and the operators ``+ - * / **``.  Lists are
comma separated.  A k-range is given by ``modes.k_min``, ``modes.k_max`` and
``modes.k_count`` instead of ``modes.k``.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
import operator
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .coupling import CouplingSpec

VARIANT_CHOICES = ("first-principles", "as-printed", "both")


class ConfigError(ValueError):
    pass


class PhysicsInputError(ConfigError):
    """The configuration is well formed but describes an inadmissible model."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "e": math.e, "inf": math.inf}


def parse_number(text: str) -> float:
    """Evaluate an arithmetic expression such as ``0.1*pi`` without ``eval``."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](walk(node.operand))
        raise ConfigError(f"not a number: {text!r}")

    try:
        return float(walk(ast.parse(text.strip(), mode="eval")))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_list(text: str) -> list[float]:
    return [parse_number(p) for p in text.split(",") if p.strip()]


@dataclass
class RunConfig:
    family: str = "power-law-exponential"
    gamma: float = 0.1 * math.pi
    cutoff: float = 5.0
    s: float = 1.0
    m: float = 1.0
    k: list = field(default_factory=lambda: [0.0])
    tol_static: float = 1e-10
    tol_osc: float = 1e-6
    sum_rule_threshold: float = 1e-6
    oracle_N: int = 4000
    oracle_omega_max: float | None = None
    oracle_scheme: str = "uniform"
    oracle_convergence: list | None = None
    oracle_T: float = 2.0
    oracle_t_max: float = 50.0
    oracle_n_t: int = 501
    T: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    t_max: float = 50.0
    n_t: int = 501
    phi0: float | None = None
    pi0: float | None = None
    variant: str = "first-principles"
    convention: str = "first-principles"
    chi_max: float = 3.0
    chi_n: int = 0
    msf_k_max: list = field(default_factory=list)
    msf_x: float = 0.0
    msf_n: int = 12
    out: str = "qdsf_out"

    # keys that change where results go, not what they are
    _NON_PHYSICAL = ("out",)

    @property
    def spec(self) -> CouplingSpec:
        return CouplingSpec(self.gamma, self.cutoff, self.s, self.family)

    @property
    def variants(self) -> tuple[str, ...]:
        if self.variant == "both":
            return ("as-printed", "first-principles")
        return (self.variant,)

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_t)

    @property
    def convergence_Ns(self) -> list[int]:
        if self.oracle_convergence:
            return sorted(int(n) for n in self.oracle_convergence)
        return sorted({max(2, self.oracle_N // 8), max(2, self.oracle_N // 4),
                       max(2, self.oracle_N // 2), self.oracle_N})

    def validate(self):
        try:
            self.spec
        except ValueError as exc:
            raise PhysicsInputError(str(exc)) from exc
        if self.m < 0:
            raise PhysicsInputError("modes.m must be >= 0")
        if not self.k:
            raise ConfigError("no modes configured")
        if self.variant not in VARIANT_CHOICES:
            raise ConfigError(f"variant must be one of {VARIANT_CHOICES}")
        if self.convention not in ("first-principles", "as-printed"):
            raise ConfigError("spectral.convention must be first-principles or as-printed")
        if self.oracle_scheme not in ("uniform", "log"):
            raise ConfigError("oracle.scheme must be uniform or log")
        if self.oracle_N < 2:
            raise ConfigError("oracle.N must be >= 2")
        if self.t_max < 0 or self.n_t < 1 or self.oracle_t_max < 0 or self.oracle_n_t < 1:
            raise ConfigError("time grids need t_max >= 0 and n >= 1")
        if any(T < 0 for T in self.T) or self.oracle_T < 0:
            raise ConfigError("temperatures must be >= 0")
        if (self.phi0 is None) != (self.pi0 is None):
            raise ConfigError("time.phi0 and time.pi0 must be given together")
        return self

    def physical_record(self) -> dict:
        rec = asdict(self)
        for key in self._NON_PHYSICAL:
            rec.pop(key, None)
        return rec

    def digest(self) -> str:
        """SHA-256 of the physical content; output location does not enter."""
        text = json.dumps(self.physical_record(), sort_keys=True, default=float)
        return hashlib.sha256(text.encode()).hexdigest()

    def provenance(self) -> dict:
        return {"artifact": "qdsf", "version": __version__, "config_sha256": self.digest()}

    def header(self) -> str:
        return f"qdsf {__version__}\nconfig_sha256 {self.digest()}"


def _int(text):
    v = parse_number(text)
    if v != int(v):
        raise ConfigError(f"expected an integer, got {text!r}")
    return int(v)


def _str(text):
    return text.strip()


def _opt(parser):
    return lambda text: None if text.strip().lower() in ("", "none") else parser(text)


# config key -> (RunConfig attribute, parser)
KEYS = {
    "coupling.family": ("family", _str),
    "coupling.gamma": ("gamma", parse_number),
    "coupling.lambda": ("cutoff", parse_number),
    "coupling.s": ("s", parse_number),
    "modes.m": ("m", parse_number),
    "modes.k": ("k", parse_list),
    "quad.tol_static": ("tol_static", parse_number),
    "quad.tol_osc": ("tol_osc", parse_number),
    "quad.sum_rule_threshold": ("sum_rule_threshold", parse_number),
    "oracle.N": ("oracle_N", _int),
    "oracle.omega_max": ("oracle_omega_max", _opt(parse_number)),
    "oracle.scheme": ("oracle_scheme", _str),
    "oracle.convergence": ("oracle_convergence", _opt(parse_list)),
    "oracle.T": ("oracle_T", parse_number),
    "oracle.t_max": ("oracle_t_max", parse_number),
    "oracle.n_t": ("oracle_n_t", _int),
    "thermal.T": ("T", parse_list),
    "time.t_max": ("t_max", parse_number),
    "time.n": ("n_t", _int),
    "time.phi0": ("phi0", _opt(parse_number)),
    "time.pi0": ("pi0", _opt(parse_number)),
    "variant": ("variant", _str),
    "spectral.convention": ("convention", _str),
    "observables.chi_max": ("chi_max", parse_number),
    "observables.chi_n": ("chi_n", _int),
    "observables.msf_k_max": ("msf_k_max", parse_list),
    "observables.msf_x": ("msf_x", parse_number),
    "observables.msf_n": ("msf_n", _int),
    "output.dir": ("out", _str),
}
_RANGE = ("modes.k_min", "modes.k_max", "modes.k_count")


def parse_lines(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS and key not in _RANGE:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(pairs: dict[str, str]) -> RunConfig:
    cfg = RunConfig()
    for key, value in pairs.items():
        if key in KEYS:
            attr, parser = KEYS[key]
            setattr(cfg, attr, parser(value))
    given = [key for key in _RANGE if key in pairs]
    if given:
        if len(given) != 3:
            raise ConfigError("a k-range needs modes.k_min, modes.k_max and modes.k_count")
        if "modes.k" in pairs:
            raise ConfigError("give either modes.k or a k-range, not both")
        n = _int(pairs["modes.k_count"])
        if n < 1:
            raise ConfigError("modes.k_count must be >= 1")
        cfg.k = np.linspace(parse_number(pairs["modes.k_min"]), parse_number(pairs["modes.k_max"]), n).tolist()
    cfg.k = [float(k) for k in cfg.k]
    if any(k < 0 for k in cfg.k):
        raise PhysicsInputError("mode wavenumbers must be >= 0 (half-space convention)")
    return cfg.validate()


def load_config(path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read ``path`` (if any) and apply ``overrides`` on top, key by key."""
    pairs: dict[str, str] = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                pairs.update(parse_lines(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if key not in KEYS and key not in _RANGE:
            raise ConfigError(f"unknown key {key!r}")
        if key == "modes.k":
            for r in _RANGE:
                pairs.pop(r, None)
        elif key in _RANGE:
            pairs.pop("modes.k", None)
        pairs[key] = value
    return build_config(pairs)


def config_fields() -> list[str]:
    return [f.name for f in fields(RunConfig)]
