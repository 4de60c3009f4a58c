"""Command-line front end.

Commands: ``spectrum``, ``observables``, ``evolve``, ``thermal``, ``oracle``.

Exit codes: 0 success, 2 sum-rule failure, 3 invalid physics input,
4 oracle mismatch, 1 anything else.  All output files of a command are
assembled in memory first, so a failing run leaves no partial output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .bath import InstabilityError, bose_einstein, diagonalize, discretize, oracle_kernels, oracle_stats
from .config import ConfigError, PhysicsInputError, RunConfig, load_config
from .coupling import check_positivity, make_mode, omega_k
from .observables import (ObservableDomainError, characteristic_function, evolution_kernels,
                          ground_state_stats, mean_square_field_scan, thermal_occupation)
from .quad import QuadRangeError
from .spectral import InvalidDensityError, build_density, moment_set

EXIT_OK, EXIT_ERROR, EXIT_SUM_RULE, EXIT_PHYSICS, EXIT_ORACLE = 0, 1, 2, 3, 4

FREE_FIELD_NOTE = (
    "gamma = 0 is the decoupled field: P_k is a delta function at omega_k and no density "
    "exists to tabulate. Its observables are analytic: var_phi = 1/(2 omega_k), "
    "var_pi = omega_k/2, K_cos = cos(omega_k t), occupation = 1/(exp(omega_k/T) - 1). "
    "The oracle command accepts gamma = 0 and checks these values.")

# oracle tolerances: relative for variances and occupation, absolute for kernels
ORACLE_TOL = {"var_phi": 1e-2, "var_pi": 1e-2, "K_cos": 1e-3, "occupation": 1e-2,
              "sum_u2": 1e-10, "residual": 1e-10}
FREE_TOL = 1e-10


class PhysicsError(Exception):
    pass


class SumRuleError(Exception):
    pass


class OverwriteError(Exception):
    pass


def fmt(x) -> str:
    return f"{float(x):.17g}"


def k_label(k: float) -> str:
    # shortest repr that round-trips, so 0.2 from a linspace stays "0.2"
    return np.format_float_positional(float(k), trim="-")


def _csv(header: str, columns: list[str], rows) -> str:
    buf = io.StringIO()
    for line in header.splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def _json(record: dict) -> str:
    return json.dumps(record, indent=2, sort_keys=True) + "\n"


def emit(out_dir: str, files: dict[str, str], force: bool) -> list[str]:
    """Write ``files`` into ``out_dir``; refuse to overwrite unless ``force``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in files}
    clash = sorted(p for p in paths.values() if os.path.exists(p))
    if clash and not force:
        raise OverwriteError(f"refusing to overwrite {len(clash)} file(s), e.g. {clash[0]}; pass --force")
    for name in sorted(files):
        tmp = paths[name] + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(files[name])
        os.replace(tmp, paths[name])
    return [paths[n] for n in sorted(files)]


def check_modes(cfg: RunConfig, allow_free: bool = False) -> None:
    """Fail fast with a margin report if any configured mode is inadmissible."""
    if cfg.gamma == 0:
        if allow_free:
            return
        raise PhysicsError(FREE_FIELD_NOTE)
    spec = cfg.spec
    verdicts = [(k, check_positivity(spec, k, cfg.m)) for k in cfg.k]
    if all(v for _, v in verdicts):
        return
    lines = ["positivity check failed (omega_k^2 - int f^2/omega^2 must be > 0):",
             f"  int f^2/omega^2 = {spec.coupling_integral():.6g}"]
    for k, v in verdicts:
        lines.append(f"  k={k_label(k)} m={cfg.m:g} margin={v.margin:.6g} {v.label}")
    worst = min(cfg.k, key=lambda k: k * k)
    lines.append(f"  largest admissible gamma at k={k_label(worst)}: "
                 f"{spec.critical_gamma(omega_k(worst, cfg.m)):.6g}")
    raise PhysicsError("\n".join(lines))


def _density(cfg: RunConfig, k: float, strict: bool = True):
    mode = make_mode(cfg.spec, k, cfg.m)
    try:
        return build_density(cfg.spec, mode, tol=cfg.tol_static, threshold=cfg.sum_rule_threshold,
                             strict=strict, convention=cfg.convention)
    except InvalidDensityError as exc:
        raise SumRuleError(f"k={k_label(k)}: {exc}") from exc


def pmap(fn, cfg: RunConfig, ks, jobs: int):
    """Ordered map over modes, in worker processes when ``jobs > 1``."""
    ks = list(ks)
    if jobs <= 1 or len(ks) <= 1:
        return [fn(cfg, k) for k in ks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(ks))) as pool:
        return list(pool.map(fn, [cfg] * len(ks), ks))


# per-mode jobs; module level so worker processes can unpickle them

def _spectrum_job(cfg: RunConfig, k: float):
    d = _density(cfg, k, strict=False)
    extra = {"provenance": cfg.provenance(), "config": cfg.physical_record()}
    return k, d.to_csv(cfg.header()), d.to_json(extra), d.valid, d.sum_rule_defect


def _observables_job(cfg: RunConfig, k: float):
    d = _density(cfg, k)
    ms = moment_set(d)
    g = ground_state_stats(ms)
    if not g.energy_excess > 0:
        raise RuntimeError(f"k={k_label(k)}: energy {g.energy!r} does not exceed omega_k/2")
    chi_rows = []
    if cfg.chi_n > 0:
        eta = np.linspace(-cfg.chi_max, cfg.chi_max, cfg.chi_n)
        er, ei = np.meshgrid(eta, eta, indexing="ij")
        chi = characteristic_function(ms, er, ei)
        chi_rows = [(k, a, b, c) for a, b, c in zip(er.ravel(), ei.ravel(), chi.ravel())]
    row = (k, cfg.m, g.var_phi, g.var_pi, g.energy, g.energy_excess)
    return row, chi_rows


def _evolve_job(cfg: RunConfig, k: float):
    d = _density(cfg, k)
    files = {}
    for variant in cfg.variants:
        ek = evolution_kernels(d, cfg.t_grid, variant, tol=cfg.tol_osc)
        head = f"{cfg.header()}\nk {k_label(k)}\nvariant {variant}"
        files[f"kernels_k{k_label(k)}_{variant}.csv"] = ek.to_csv(head, cfg.phi0, cfg.pi0)
    return files


def _thermal_job(cfg: RunConfig, k: float):
    ms = moment_set(_density(cfg, k))
    rows = [(T, thermal_occupation(ms, T, "as-printed"), thermal_occupation(ms, T, "first-principles"))
            for T in sorted(cfg.T)]
    return k, rows


def cmd_spectrum(cfg: RunConfig, jobs: int = 1) -> tuple[dict[str, str], int, str]:
    check_modes(cfg)
    files, bad = {}, []
    for k, text_csv, text_json, valid, defect in pmap(_spectrum_job, cfg, cfg.k, jobs):
        files[f"mode_k{k_label(k)}.csv"] = text_csv
        files[f"mode_k{k_label(k)}.json"] = text_json
        if not valid:
            bad.append(f"k={k_label(k)} defect={defect:.3g}")
    if bad:
        return files, EXIT_SUM_RULE, "sum rule failed: " + "; ".join(bad)
    return files, EXIT_OK, f"{len(cfg.k)} mode(s) written"


def _log_fit(k_max: np.ndarray, values: np.ndarray) -> dict:
    x = np.log(k_max)
    (b, a), *_ = np.linalg.lstsq(np.vstack([x, np.ones_like(x)]).T, values, rcond=None)
    resid = values - (a + b * x)
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"a": float(a), "b": float(b), "r_squared": r2}


def cmd_observables(cfg: RunConfig, jobs: int = 1):
    check_modes(cfg)
    results = pmap(_observables_job, cfg, cfg.k, jobs)
    head = cfg.header()
    files = {"ground_state.csv": _csv(
        head, ["k", "m", "var_phi", "var_pi", "energy", "energy_minus_half_omega_k"],
        [row for row, _ in results])}
    if cfg.chi_n > 0:
        files["chi.csv"] = _csv(head, ["k", "eta_r", "eta_i", "chi"],
                                [r for _, rows in results for r in rows])
    if cfg.msf_k_max:
        scan = mean_square_field_scan(cfg.spec, cfg.m, cfg.msf_k_max, x=cfg.msf_x,
                                      n_per_panel=cfg.msf_n, tol=cfg.tol_static)
        kk = np.array([s.k_max for s in scan])
        vv = np.array([s.value for s in scan])
        files["msf_scan.csv"] = _csv(f"{head}\nx {fmt(cfg.msf_x)}", ["k_max", "mean_square_field"],
                                     zip(kk, vv))
        if len(scan) >= 3:
            fit = _log_fit(kk, vv)
            fit.update({"model": "a + b*ln(k_max)", "x": cfg.msf_x, "provenance": cfg.provenance()})
            files["msf_fit.json"] = _json(fit)
    return files, EXIT_OK, f"{len(cfg.k)} mode(s) written"


def cmd_evolve(cfg: RunConfig, jobs: int = 1):
    check_modes(cfg)
    files = {}
    for part in pmap(_evolve_job, cfg, cfg.k, jobs):
        files.update(part)
    return files, EXIT_OK, f"{len(files)} kernel file(s) written"


def cmd_thermal(cfg: RunConfig, jobs: int = 1):
    check_modes(cfg)
    files = {}
    for k, rows in pmap(_thermal_job, cfg, cfg.k, jobs):
        files[f"thermal_k{k_label(k)}.csv"] = _csv(
            f"{cfg.header()}\nk {k_label(k)}", ["T", "occupation_as_printed", "occupation_first_principles"],
            rows)
    return files, EXIT_OK, f"{len(cfg.k)} mode(s) written"


def _check(name, reference, oracle, error, tol):
    return {"quantity": name, "continuum": reference, "oracle": oracle, "error": error,
            "tolerance": tol, "pass": bool(error <= tol)}


def _rel(a, b):
    return abs(a - b) / abs(b)


def _oracle_bath(cfg: RunConfig, mode, N: int):
    return diagonalize(discretize(cfg.spec, mode, N, cfg.oracle_omega_max, cfg.oracle_scheme))


def _oracle_free(cfg: RunConfig, k: float, t: np.ndarray):
    wk = omega_k(k, cfg.m)
    bath = _oracle_bath(cfg, (k, cfg.m), cfg.oracle_N)
    st = oracle_stats(bath, cfg.oracle_T)
    kc, ks, kw = oracle_kernels(bath, t)
    occ = float(bose_einstein(wk, cfg.oracle_T))
    checks = [
        _check("var_phi", 1 / (2 * wk), st.var_phi, _rel(st.var_phi, 1 / (2 * wk)), FREE_TOL),
        _check("var_pi", wk / 2, st.var_pi, _rel(st.var_pi, wk / 2), FREE_TOL),
        _check("K_cos", None, None, float(np.abs(kc - np.cos(wk * t)).max()), FREE_TOL),
        _check("K_sin_over_omega", None, None, float(np.abs(ks - np.sin(wk * t) / wk).max()), FREE_TOL),
        _check("occupation", occ, st.occupation, abs(st.occupation - occ) / max(occ, 1e-300)
               if occ > 0 else abs(st.occupation), FREE_TOL),
        _check("sum_u2", 1.0, st.sum_u2, abs(st.sum_u2 - 1), ORACLE_TOL["sum_u2"]),
    ]
    return {"k": k, "omega_k": wk, "reference": "analytic free field", "checks": checks,
            "agreeing_variant": "both", "convergence": []}, bath


def _oracle_coupled(cfg: RunConfig, k: float, t: np.ndarray):
    d = _density(cfg, k)
    ms = moment_set(d)
    g = ground_state_stats(ms)
    ek = evolution_kernels(d, t, tol=cfg.tol_osc)
    try:
        bath = _oracle_bath(cfg, d.mode, cfg.oracle_N)
    except InstabilityError as exc:
        return {"k": k, "omega_k": d.mode.omega_k, "reference": "continuum",
                "checks": [_check("stability", None, exc.min_eigenvalue, math.inf, 0.0)],
                "agreeing_variant": None, "convergence": []}, None
    st = oracle_stats(bath, cfg.oracle_T)
    kc, _, _ = oracle_kernels(bath, t)
    occ = {v: thermal_occupation(ms, cfg.oracle_T, v) for v in ("as-printed", "first-principles")}
    occ_err = {v: _rel(x, st.occupation) for v, x in occ.items()}
    agreeing = sorted(v for v, e in occ_err.items() if e <= ORACLE_TOL["occupation"])
    best = min(occ_err, key=occ_err.get)
    checks = [
        _check("var_phi", g.var_phi, st.var_phi, _rel(g.var_phi, st.var_phi), ORACLE_TOL["var_phi"]),
        _check("var_pi", g.var_pi, st.var_pi, _rel(g.var_pi, st.var_pi), ORACLE_TOL["var_pi"]),
        _check("K_cos", None, None, float(np.abs(ek.K_cos - kc).max()), ORACLE_TOL["K_cos"]),
        _check(f"occupation[{best}]", occ[best], st.occupation, occ_err[best], ORACLE_TOL["occupation"]),
        _check("sum_u2", 1.0, st.sum_u2, abs(st.sum_u2 - 1), ORACLE_TOL["sum_u2"]),
        _check("residual", 0.0, bath.residual, bath.residual, ORACLE_TOL["residual"]),
        _check("interlacing", None, None, 0.0 if bath.interlaces() else math.inf, 0.0),
    ]
    conv = []
    for N in cfg.convergence_Ns:
        b = bath if N == cfg.oracle_N else _oracle_bath(cfg, d.mode, N)
        s = oracle_stats(b)
        conv.append((N, abs(s.var_phi - g.var_phi), abs(s.var_pi - g.var_pi)))
    dphi = [c[1] for c in conv]
    monotone = all(b < a for a, b in zip(dphi, dphi[1:]))
    checks.append(_check("convergence_monotone", None, None, 0.0 if monotone else math.inf, 0.0))
    rec = {"k": k, "omega_k": d.mode.omega_k, "reference": "continuum", "checks": checks,
           "occupation_by_variant": {v: {"continuum": occ[v], "rel_error": occ_err[v]} for v in occ},
           "occupation_oracle": st.occupation,
           "agreeing_variant": agreeing[0] if len(agreeing) == 1 else (agreeing or None),
           "convergence": conv}
    return rec, bath


def _oracle_job(cfg: RunConfig, k: float):
    t = np.linspace(0.0, cfg.oracle_t_max, cfg.oracle_n_t)
    if cfg.gamma == 0:
        rec, bath = _oracle_free(cfg, k, t)
    else:
        rec, bath = _oracle_coupled(cfg, k, t)
    spectra = bath.to_json() if bath is not None else None
    return k, rec, spectra


def cmd_oracle(cfg: RunConfig, jobs: int = 1):
    check_modes(cfg, allow_free=True)
    files, records = {}, []
    for k, rec, spectra in pmap(_oracle_job, cfg, cfg.k, jobs):
        records.append(rec)
        if rec["convergence"]:
            files[f"oracle_convergence_k{k_label(k)}.csv"] = _csv(
                f"{cfg.header()}\nk {k_label(k)}", ["N", "abs_dvar_phi", "abs_dvar_pi"], rec["convergence"])
        if spectra is not None:
            files[f"oracle_spectra_k{k_label(k)}.json"] = spectra
    # rank measured breaches by error/tolerance; pass/fail checks only when nothing else failed
    failing = [((c["tolerance"] > 0, c["error"] / c["tolerance"] if c["tolerance"] > 0 else 0.0),
                r["k"], c["quantity"], c)
               for r in records for c in r["checks"] if not c["pass"]]
    verdict = "FAIL" if failing else "PASS"
    report = {"verdict": verdict, "provenance": cfg.provenance(), "config": cfg.physical_record(),
              "N": cfg.oracle_N, "scheme": cfg.oracle_scheme, "T": cfg.oracle_T, "modes": records}
    if failing:
        _, k, name, c = max(failing, key=lambda f: f[0])
        report["worst_offender"] = {"k": k, "quantity": name, "error": c["error"], "tolerance": c["tolerance"]}
        msg = (f"oracle verdict FAIL; worst offender k={k_label(k)} {name}: "
               f"error {c['error']:.3g} > tolerance {c['tolerance']:.3g}")
    else:
        msg = "oracle verdict PASS"
    files["oracle_report.json"] = _json(report)
    lines = [msg]
    for r in records:
        for c in r["checks"]:
            lines.append(f"  k={k_label(r['k'])} {c['quantity']:<28} error={c['error']:.3g} "
                         f"tol={c['tolerance']:.3g} {'ok' if c['pass'] else 'FAIL'}")
        if r["convergence"]:
            lines.append("  N      |dvar_phi|     |dvar_pi|")
            lines.extend(f"  {N:<6d} {a:.6e}  {b:.6e}" for N, a, b in r["convergence"])
    return files, EXIT_ORACLE if failing else EXIT_OK, "\n".join(lines)


HELP = {
    "spectrum": "mode density P_k, Y_k and |alpha_k|^2 per mode, with the sum-rule record",
    "observables": "ground-state variances, energy, characteristic function, mean-square field",
    "evolve": "time-evolution kernels of the mean field and momentum",
    "thermal": "thermal occupation per mode and temperature, both variants",
    "oracle": "compare the continuum pipeline against an exactly diagonalized finite bath",
}
COMMANDS = {"spectrum": cmd_spectrum, "observables": cmd_observables, "evolve": cmd_evolve,
            "thermal": cmd_thermal, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value config file")
    common.add_argument("--out", metavar="DIR",
                        help="output directory (default: $QDSF_OUT, then output.dir, then ./qdsf_out)")
    common.add_argument("--force", action="store_true", help="overwrite existing output files")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, metavar="N",
                        help="worker processes for per-mode work (default: all cores)")
    common.add_argument("--variant", choices=("as-printed", "first-principles", "both"))
    common.add_argument("--tol-static", type=float, metavar="X")
    common.add_argument("--tol-osc", type=float, metavar="X")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                        help="override a config key, e.g. --set coupling.gamma=0.2*pi")
    parser = argparse.ArgumentParser(prog="qdsf", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"qdsf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VAL, got {item!r}")
        key, value = (p.strip() for p in item.split("=", 1))
        out[key] = value
    if args.variant:
        out["variant"] = args.variant
    if args.tol_static is not None:
        out["quad.tol_static"] = repr(args.tol_static)
    if args.tol_osc is not None:
        out["quad.tol_osc"] = repr(args.tol_osc)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.out:
            cfg.out = args.out
        elif os.environ.get("QDSF_OUT"):
            cfg.out = os.environ["QDSF_OUT"]
        files, code, msg = COMMANDS[args.command](cfg, max(1, args.jobs))
        emit(cfg.out, files, args.force)
    except (PhysicsError, PhysicsInputError, ObservableDomainError) as exc:
        print(f"qdsf: invalid physics input: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except SumRuleError as exc:
        print(f"qdsf: sum rule failure: {exc}", file=sys.stderr)
        return EXIT_SUM_RULE
    except (ConfigError, OverwriteError, QuadRangeError, OSError) as exc:
        print(f"qdsf: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - last resort, keep the exit-code contract
        print(f"qdsf: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(msg, file=sys.stderr if code else sys.stdout)
    return code
