"""Command-line runs that emit CSV data plus a JSON manifest.

Units: chi = 1, times in 1/chi, damping rates in units of chi.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dicke import NumericalError, SpinEnsemble, ValidationError, css_state

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64
EXIT_CONFIG = 65

THREADS_ENV = "CUBICSPIN_THREADS"
SWEEP_CHUNK = 256

UNITS_NOTE = "Units: chi = 1; times are in 1/chi and damping rates in units of chi."

DEFAULTS = {
    "sweep": {"n": 200, "scheme": "cubic", "t_max": 0.26, "points": 2000},
    "peaks": {"n": 1500, "k_max": 5},
    "cat": {"n": 200, "cat_n": 4, "n_theta": 65, "n_phi": 128},
    "parity": {"n": 201, "t": math.pi / 3, "samples": 1000, "seed": 0,
               "readout_phi": math.pi / 3},
    "hybrid": {"n": 20, "eps_min": 0.01, "eps_max": 1.0, "t_max": math.pi, "t_cap": None},
    "damped": {"n": 20, "scheme": "cubic", "gamma": 0.1, "Gamma_deph": 0.1,
               "t_max": math.pi / 2, "points": 201},
    "gates": {"n": 4, "deltas": [0.1, 0.05, 0.025]},
    "cavity": {"n": 1000, "g": 1.0, "eta": 0.04, "kappa": None, "gamma_atom": 10.0,
               "delta": 150.0, "n_photons": 1000000},
}
COMMANDS = tuple(DEFAULTS)


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" or "warning"
    field: str
    message: str


# ---------------------------------------------------------------------------
# validation


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def validate(command: str, config: dict) -> list[Diagnostic]:
    """Check parameter domains. Never mutates ``config``."""
    out: list[Diagnostic] = []
    err = lambda f, m: out.append(Diagnostic("error", f, m))  # noqa: E731
    warn = lambda f, m: out.append(Diagnostic("warning", f, m))  # noqa: E731
    if command not in DEFAULTS:
        err("command", f"unknown command {command!r}")
        return out
    cfg = {**DEFAULTS[command], **config}
    n = cfg.get("n")
    if not _is_int(n) or n < 1:
        err("n", "N must be a positive integer")
        n = None
    for key in ("gamma", "Gamma_deph"):
        if key in cfg and cfg[key] is not None:
            if not _is_num(cfg[key]) or not math.isfinite(cfg[key]):
                err(key, "rate must be a finite number")
            elif cfg[key] < 0:
                err(key, "rate must be >= 0")
    if "scheme" in cfg and cfg["scheme"] not in ("cubic", "oat"):
        err("scheme", "scheme must be 'cubic' or 'oat'")
    if "points" in cfg and (not _is_int(cfg["points"]) or cfg["points"] < 2):
        err("points", "points must be an integer >= 2")
    if "t_max" in cfg and (not _is_num(cfg["t_max"]) or not cfg["t_max"] > 0):
        err("t_max", "time grid must be increasing: t_max > 0")

    if command == "peaks" and (not _is_int(cfg["k_max"]) or cfg["k_max"] < 1):
        err("k_max", "k_max must be a positive integer")
    if command == "cat":
        if not _is_int(cfg["cat_n"]) or cfg["cat_n"] < 1:
            err("cat_n", "cat_n must be a positive integer")
        if not (_is_int(cfg["n_theta"]) and _is_int(cfg["n_phi"])
                and cfg["n_theta"] >= 32 and cfg["n_phi"] >= 64):
            err("n_theta", "Husimi grid must be at least 32 x 64")
    if command == "parity":
        if not _is_num(cfg["t"]) or abs(cfg["t"] - math.pi / 3) > 1e-9:
            warn("t", "parity probe defined at t=pi/(3 chi)")
        if not _is_int(cfg["samples"]) or cfg["samples"] < 0:
            err("samples", "samples must be a non-negative integer")
        if not _is_int(cfg["seed"]):
            err("seed", "seed must be an integer")
    if command == "hybrid":
        lo, hi = cfg["eps_min"], cfg["eps_max"]
        if not (_is_num(lo) and _is_num(hi) and hi > lo >= 0):
            err("eps_min", "epsilon range must satisfy 0 <= eps_min < eps_max")
        if cfg["t_cap"] is not None and (not _is_num(cfg["t_cap"]) or cfg["t_cap"] <= 0):
            err("t_cap", "t_cap must be positive")
    if command == "damped" and n is not None and n > 60:
        err("n", "the block solver is meant for N <= 60")
    if command == "gates":
        if n is not None and n > 12:
            err("n", "gate synthesis is limited to N <= 12")
        ds = cfg["deltas"]
        if not isinstance(ds, list) or not ds or not all(_is_num(d) for d in ds):
            err("deltas", "deltas must be a non-empty list of numbers")
        elif any(abs(d) > 0.3 for d in ds):
            warn("deltas", "|delta| > 0.3: commutator expansion is not valid")
    if command == "cavity":
        from .cavity import REGIME_THRESHOLD, CavityParams, effective_coupling
        try:
            p = _cavity_params(cfg)
        except (ValidationError, TypeError) as e:
            err("cavity", str(e))
        else:
            eff = effective_coupling(p)
            if not eff.regime_ok:
                warn("cavity", f"kappa0*N = {p.kappa0 * p.n_spins:.3g} >= {REGIME_THRESHOLD}: "
                               "outside the weak-shift regime")
            if not eff.dispersive_ok:
                warn("delta", "Delta is not >= 10x g, kappa and gamma_atom")
    return out


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if _is_int(v):
        return str(int(v))
    return "%.17g" % float(v)


def manifest_hash(command: str, params: dict) -> str:
    blob = json.dumps({"command": command, "params": params, "version": __version__},
                      sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_csv(path: Path, header, rows, digest: str):
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest {digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    """Map in a worker pool; results come back in input order."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# commands; each returns (tables, summary) with tables = {suffix: (header, rows)}


def _cmd_sweep(cfg):
    from .evolution import CUBIC, OAT, evolve_zdiag_grid
    from .qfi import analytic_weak_qfi, qfi_pure_batch

    n = cfg["n"]
    h = CUBIC if cfg["scheme"] == "cubic" else OAT
    t = np.linspace(0.0, cfg["t_max"], cfg["points"])
    psi0 = css_state(SpinEnsemble(n))
    # fixed chunk size: the arithmetic does not depend on the worker count
    chunks = [t[i:i + SWEEP_CHUNK] for i in range(0, t.size, SWEEP_CHUNK)]
    qfi = np.concatenate(_ordered_map(
        lambda tc: qfi_pure_batch(evolve_zdiag_grid(psi0, h, tc), n), chunks))
    if cfg["scheme"] == "cubic":
        ana = [analytic_weak_qfi(n, ti, warn=False) for ti in t]
    else:
        ana = [float("nan")] * t.size
    rows = list(zip(t, n * t, qfi, ana))
    i = int(np.argmax(qfi))
    return ({"": (["t", "alpha", "qfi", "qfi_analytic"], rows)},
            {"qfi_max": float(qfi[i]), "t_at_max": float(t[i])})


def _cmd_peaks(cfg):
    from .cat import cat_state, ghz_components, ghz_projection_qfi, peak_schedule
    from .qfi import cramer_rao, qfi_pure

    n = cfg["n"]
    ens = SpinEnsemble(n)
    times = peak_schedule(ens.parity, cfg["k_max"])
    labels = ([12 * k for k in range(1, cfg["k_max"] + 1)] if ens.parity == "even"
              else [3 * (2 * k - 1) for k in range(1, cfg["k_max"] + 1)])

    def one(arg):
        k, t, lab = arg
        cs = cat_state(ens, lab)
        q = qfi_pure(cs.state).qfi
        proj = ghz_projection_qfi(ghz_components(cs.decomposition), n)
        return (k, t, q, q / n**2, proj.qfi / n**2, proj.phi_opt, cramer_rao(q) * n)

    rows = _ordered_map(one, zip(range(1, cfg["k_max"] + 1), times, labels))
    return ({"": (["k", "t", "qfi", "qfi_over_n2", "projection_over_n2", "phi_opt",
                   "delta_beta_times_n"], rows)},
            {"parity": ens.parity, "qfi_over_n2": [r[3] for r in rows]})


def _cmd_cat(cfg):
    from .cat import cat_state, ghz_components, husimi

    ens = SpinEnsemble(cfg["n"])
    cs = cat_state(ens, cfg["cat_n"])
    comp_rows = [(phi, c.real, c.imag, abs(c)) for phi, c in cs.decomposition.components]
    ghz_rows = [(g.varphi, "+" if g.sign > 0 else "-", g.weight.real, g.weight.imag, abs(g.weight))
                for g in ghz_components(cs.decomposition)]
    hm = husimi(cs.state, cfg["n_theta"], cfg["n_phi"])
    h_rows = [(th, ph, hm.q[i, j]) for i, th in enumerate(hm.theta) for j, ph in enumerate(hm.phi)]
    return ({"": (["phi", "re", "im", "abs"], comp_rows),
             "_ghz": (["varphi", "sign", "re", "im", "abs"], ghz_rows),
             "_husimi": (["theta", "phi", "q"], h_rows)},
            {"parity": ens.parity, "components": len(comp_rows), "ghz_components": len(ghz_rows)})


def _cmd_parity(cfg):
    from .cat import sx_parity_probe
    from .evolution import CUBIC, evolve_zdiag

    ens = SpinEnsemble(cfg["n"])
    psi = evolve_zdiag(css_state(ens), CUBIC, cfg["t"])
    pr = sx_parity_probe(psi, cfg["samples"], cfg["seed"], cfg["readout_phi"])
    rows = list(zip(pr.m_x, pr.probabilities, pr.histogram))
    return ({"": (["m_x", "p", "count"], rows)},
            {"verdict": pr.verdict, "p_top": pr.p_top, "n": cfg["n"]})


def _cmd_hybrid(cfg):
    from .hybrid import optimize_ghz

    r = optimize_ghz(cfg["n"], (cfg["eps_min"], cfg["eps_max"]), (0.0, cfg["t_max"]),
                     t_cap=cfg["t_cap"])
    row = (r.n_spins, r.epsilon_opt, r.t_f, r.qfi_over_n2, r.fidelity, r.speedup)
    summary = {"epsilon_opt": r.epsilon_opt, "t_f": r.t_f, "qfi_over_n2": r.qfi_over_n2,
               "fidelity": r.fidelity, "fidelity_any_phase": r.fidelity_any_phase,
               "speedup": r.speedup}
    return ({"": (["N", "epsilon_opt", "t_f", "qfi_over_N2", "fidelity", "speedup"], [row])},
            summary)


def _cmd_damped(cfg):
    from .open_dynamics import LindbladParams, damped_qfi_sweep

    t = np.linspace(0.0, cfg["t_max"], cfg["points"])
    rows = damped_qfi_sweep(cfg["scheme"], cfg["n"],
                            LindbladParams(cfg["gamma"], cfg["Gamma_deph"]), t)
    q = [r[2] for r in rows]
    i = int(np.argmax(q))
    return ({"": (["t", "trace", "qfi", "n_x", "n_y", "n_z", "mean_sz"], rows)},
            {"qfi_max": q[i], "t_at_max": rows[i][0]})


def _cmd_gates(cfg):
    from .evolution import convergence_order, synthesize_cubic, z_phase_fit

    ens = SpinEnsemble(cfg["n"])
    ds = [float(d) for d in cfg["deltas"]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = [synthesize_cubic(ens, d) for d in ds]
    errs = [r.error_to_target for r in res]
    orders = [float("nan")] + (list(convergence_order(ds, errs)) if len(ds) > 1 else [])
    rows = [(d, r.error_to_target, o, z_phase_fit(r.effective.dense(), ens)[3], r.chi_t)
            for d, r, o in zip(ds, res, orders)]
    return ({"": (["delta", "error", "order", "c3_fit", "chi_t_target"], rows)},
            {"orders": orders[1:]})


def _cavity_params(cfg):
    from .cavity import CavityParams

    if cfg.get("kappa") is not None:
        return CavityParams(cfg["g"], cfg["kappa"], cfg["gamma_atom"], cfg["delta"],
                            cfg["n_photons"], cfg["n"])
    return CavityParams.from_cooperativity(cfg["g"], cfg["eta"], cfg["gamma_atom"], cfg["delta"],
                                           cfg["n_photons"], cfg["n"])


def _cmd_cavity(cfg):
    from .cavity import effective_coupling, phase_expansion_error

    p = _cavity_params(cfg)
    eff = effective_coupling(p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pe = phase_expansion_error(p)
    summary = {**asdict(eff), "kappa": p.kappa, "phase_error": pe.max_error,
               "cubic_span": pe.cubic_span, "near_pole": pe.near_pole}
    rows = [(k, v) for k, v in summary.items()]
    return {"": (["quantity", "value"], rows)}, summary


RUNNERS = {
    "sweep": _cmd_sweep, "peaks": _cmd_peaks, "cat": _cmd_cat, "parity": _cmd_parity,
    "hybrid": _cmd_hybrid, "damped": _cmd_damped, "gates": _cmd_gates, "cavity": _cmd_cavity,
}


def run(command: str, config: dict, out_dir: str | Path = ".", stdout=None) -> int:
    """Execute one command; returns the process exit code."""
    stdout = stdout or sys.stdout
    if command not in RUNNERS:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    unknown = set(config) - set(DEFAULTS[command])
    if unknown:
        print(f"malformed config: unknown keys {sorted(unknown)}", file=sys.stderr)
        return EXIT_CONFIG
    params = {**DEFAULTS[command], **config}
    diags = validate(command, params)
    for d in diags:
        print(f"{d.level}: {d.field}: {d.message}", file=sys.stderr)
    if any(d.level == "error" for d in diags):
        return EXIT_VALIDATION
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = manifest_hash(command, params)
    start = time.perf_counter()
    try:
        tables, summary = RUNNERS[command](params)
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    paths = []
    for suffix, (header, rows) in tables.items():
        path = out / f"{command}{suffix}.csv"
        write_csv(path, header, rows, digest)
        paths.append(str(path))
    manifest = {
        "command": command,
        "params": params,
        "seed": params.get("seed"),
        "version": __version__,
        "manifest_hash": digest,
        "outputs": paths,
        "wall_time_s": time.perf_counter() - start,
        "threads": _threads(),
        "summary": summary,
    }
    with open(out / f"{command}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    print(json.dumps(summary, sort_keys=True, default=_json_default), file=stdout)
    return EXIT_OK


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.bool_,)):
        return bool(v)
    raise TypeError(f"not JSON serializable: {type(v)}")


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cubicspin", description="Cubic collective-spin dynamics runs.",
                epilog=UNITS_NOTE + f" Set {THREADS_ENV} for the worker count.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")

    def common(sp):
        sp.add_argument("--config", help="JSON file with parameters (flags override it)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--n", type=int, help="number of spins N")

    s = sub.add_parser("sweep", help="QFI versus time, with the weak-coupling formula",
                       epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--scheme", choices=("cubic", "oat"))
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--points", type=int)

    s = sub.add_parser("peaks", help="QFI at the cat-state peak times", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--k-max", dest="k_max", type=int)

    s = sub.add_parser("cat", help="CSS and GHZ decomposition plus Husimi map", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--cat-n", dest="cat_n", type=int, help="time label: chi t = pi/cat_n")
    s.add_argument("--n-theta", dest="n_theta", type=int)
    s.add_argument("--n-phi", dest="n_phi", type=int)

    s = sub.add_parser("parity", help="parity of N from a collective spin readout",
                       epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--t", type=float)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--readout-phi", dest="readout_phi", type=float)

    s = sub.add_parser("hybrid", help="optimize eps and t for GHZ preparation", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--eps-min", dest="eps_min", type=float)
    s.add_argument("--eps-max", dest="eps_max", type=float)
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--t-cap", dest="t_cap", type=float)

    s = sub.add_parser("damped", help="QFI under decay and dephasing", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--scheme", choices=("cubic", "oat"))
    s.add_argument("--gamma", type=float, help="single-atom decay rate")
    s.add_argument("--Gamma", dest="Gamma_deph", type=float, help="collective dephasing rate")
    s.add_argument("--t-max", dest="t_max", type=float)
    s.add_argument("--points", type=int)

    s = sub.add_parser("gates", help="cubic gate from rotations and twists", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--deltas", type=float, nargs="+")

    s = sub.add_parser("cavity", help="cavity parameters to cubic coupling", epilog=UNITS_NOTE)
    common(s)
    s.add_argument("--g", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--gamma-atom", dest="gamma_atom", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--n-photons", dest="n_photons", type=int)
    return p


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
        print(f"unknown command {argv[0]!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        ns = _parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if ns.command is None:
        _parser().print_help(sys.stderr)
        return EXIT_USAGE
    args = vars(ns)
    command = args.pop("command")
    out = args.pop("out")
    cfg_path = args.pop("config")
    try:
        config = _load_config(cfg_path) if cfg_path else {}
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    config.update({k: v for k, v in args.items() if v is not None})
    return run(command, config, out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
