"""Batch experiment runner: one command per invocation, CSV artifacts out.

Each run loads a model config, executes a single named experiment, and
writes CSV files plus a one-line summary.  Output is fully deterministic:
the same config and seed produce byte-identical artifacts, whatever the
thread count.  Every artifact carries the model hash and the parameter
block in `#`-prefixed header lines, and the model config is echoed into
the output directory verbatim, so a results directory is self-contained.

Exit codes: 0 success, 1 usage or configuration error, 2 invariant
violation (a soundness check tripped).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import cancellation, orbits, rpf, scales, thermo
from .cancellation import EngineError, EngineParams
from .markov import MarkovModel, ModelConfig, ModelError, build_model
from .thermo import ConvergenceError

OK = 0
USAGE = 1
VIOLATION = 2

COMMANDS = ("model-info", "gibbs", "pressure", "decay", "uni-scan",
            "dolgopyat", "orbits", "correlation", "invariants")

ENV_PREFIX = "TRANSFERLAB_"
# mirrors of command-line flags
_ENV_FLAGS = {"MODEL": "model", "OUT": "out", "SEED": "seed",
              "THREADS": "threads", "A": "a", "B": "b", "EPS": "eps",
              "THETA": "theta", "GRID": "grid"}
# extras with no flag of their own
_ENV_EXTRAS = ("B_LIST", "EPS_LIST", "N_MAX", "T_GRID", "SAMPLES", "BLOCKS")

DEFAULT_B_LIST = (64.0, 128.0, 256.0, 512.0)
DEFAULT_EPS_LIST = tuple(2.0 ** -q for q in range(6, 13))
DEFAULT_N_MAX = 12
DEFAULT_SAMPLES = 100_000
DEFAULT_BLOCKS = 32
DEFAULT_DOLGOPYAT_B = 256.0
MC_CHECK_SAMPLES = 20_000


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One resolved invocation: command, model source, and overrides."""

    command: str
    model_path: str | None
    out_dir: str
    seed: int
    threads: int
    a: float
    b: float | None
    eps: float | None
    theta: float | None
    grid: int | None
    extras: tuple[tuple[str, str], ...] = ()

    def extra(self, name: str) -> str | None:
        for key, val in self.extras:
            if key == name:
                return val
        return None


# ---------------------------------------------------------------------------
# argument and environment handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; that code is reserved for
    # invariant violations here, so remap to the usage-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE)


def _build_parser() -> _Parser:
    p = _Parser(
        prog="transferlab",
        description="Run one transfer-operator experiment and write CSV "
                    "artifacts into the output directory.")
    p.add_argument("command", choices=COMMANDS, metavar="command",
                   help="one of: " + ", ".join(COMMANDS))
    p.add_argument("--model", metavar="<path>",
                   help="model config file (default: built-in doubling map)")
    p.add_argument("--out", metavar="<dir>",
                   help="output directory (default: out)")
    p.add_argument("--seed", type=int, metavar="<u64>",
                   help="random seed for sampled quantities (default: 0)")
    p.add_argument("--threads", type=int, metavar="<n>",
                   help="worker cap for parallel sweeps (default: 1)")
    p.add_argument("--a", type=float, metavar="<f>",
                   help="real tilt of the twisted operator (default: 0)")
    p.add_argument("--b", type=float, metavar="<f>",
                   help="frequency; for decay, replaces the b sweep")
    p.add_argument("--eps", type=float, metavar="<f>",
                   help="scale parameter; for uni-scan, replaces the sweep")
    p.add_argument("--theta", type=float, metavar="<f>",
                   help="override the config Holder exponent")
    p.add_argument("--grid", type=int, metavar="<n>",
                   help="override the config grid size")
    return p


def _env_overrides(environ) -> dict:
    found = {}
    for key in sorted(environ):
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):]
        if name not in _ENV_FLAGS and name not in _ENV_EXTRAS:
            raise UsageError(f"unknown environment override {key}")
        found[name] = environ[key]
    return found


def _coerce(name: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"bad value {raw!r} for {name}") from None


def resolve(args, environ) -> ExperimentConfig:
    """Merge flags over environment overrides over defaults."""
    env = _env_overrides(environ)
    kinds = {"model": str, "out": str, "seed": int, "threads": int,
             "a": float, "b": float, "eps": float, "theta": float,
             "grid": int}
    merged = {}
    for env_name, dest in _ENV_FLAGS.items():
        val = getattr(args, dest)
        if val is None and env_name in env:
            val = _coerce(dest, env[env_name], kinds[dest])
        merged[dest] = val
    extras = tuple((k, env[k]) for k in _ENV_EXTRAS if k in env)

    seed = merged["seed"] if merged["seed"] is not None else 0
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must fit in an unsigned 64-bit integer")
    threads = merged["threads"] if merged["threads"] is not None else 1
    if threads < 1:
        raise UsageError("threads must be at least 1")
    if merged["grid"] is not None and merged["grid"] < 8:
        raise UsageError("grid must be at least 8")
    return ExperimentConfig(
        command=args.command,
        model_path=merged["model"],
        out_dir=merged["out"] if merged["out"] is not None else "out",
        seed=seed,
        threads=threads,
        a=merged["a"] if merged["a"] is not None else 0.0,
        b=merged["b"],
        eps=merged["eps"],
        theta=merged["theta"],
        grid=merged["grid"],
        extras=extras,
    )


def _load_model(cfg: ExperimentConfig) -> tuple[MarkovModel, str]:
    """Build the model; returns it with the config text for the echo."""
    if cfg.model_path is not None:
        try:
            with open(cfg.model_path, "r", encoding="utf-8") as fh:
                source = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read model config: {exc}") from None
        config = ModelConfig.from_text(source)
    else:
        config = ModelConfig()
        source = config.to_text()
    if cfg.grid is not None:
        config = replace(config, grid_size=cfg.grid)
    if cfg.theta is not None:
        config = replace(config, theta=cfg.theta)
    return build_model(config), source


def _parse_float_list(name: str, raw: str) -> tuple[float, ...]:
    vals = tuple(_coerce(name, v.strip(), float)
                 for v in raw.split(",") if v.strip())
    if not vals:
        raise UsageError(f"{name} must list at least one number")
    return vals


# ---------------------------------------------------------------------------
# artifact formatting
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def model_hash(model: MarkovModel) -> str:
    return hashlib.sha256(model.config.to_text().encode("utf-8")).hexdigest()


def _write_csv(path: str, command: str, model: MarkovModel, params,
               header, rows) -> None:
    """CSV with `#` metadata lines: command, model hash, config, params."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# transferlab {command}\n")
        fh.write(f"# model_sha256 = {model_hash(model)}\n")
        for line in model.config.to_text().strip().splitlines():
            fh.write(f"# config {line}\n")
        if params:
            pairs = " ".join(f"{k}={_fmt(v)}" for k, v in params)
            fh.write(f"# params {pairs}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _echo_config(cfg: ExperimentConfig, source: str) -> None:
    path = os.path.join(cfg.out_dir, "config.txt")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(source)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _cmd_model_info(model: MarkovModel, cfg: ExperimentConfig):
    info = [
        ("family", model.config.family),
        ("intervals", len(model.intervals)),
        ("branches", len(model.branches)),
        ("alphabet", " ".join(model.alphabet)),
        ("grid_size", model.grid_size),
        ("theta", model.theta),
        ("tau_0", model.tau_0),
        ("tau_star", model.tau_star),
        ("chi_u", model.chi_u),
        ("chi_u_bar", model.chi_u_bar),
        ("chi_s", model.chi_s),
        ("chi_s_bar", model.chi_s_bar),
        ("chi_0", model.chi_0),
        ("chi_star", model.chi_star),
    ]
    _write_csv(os.path.join(cfg.out_dir, "model.csv"), cfg.command, model,
               [], ("field", "value"), info)
    branch_rows = [(br.sym, br.domain, br.target, float(br.slope),
                    float(br.offset)) for br in model.branches]
    _write_csv(os.path.join(cfg.out_dir, "branches.csv"), cfg.command, model,
               [], ("sym", "domain", "target", "slope", "offset"),
               branch_rows)
    summary = (f"model-info: family={model.config.family} "
               f"branches={len(model.branches)} "
               f"tau=[{_fmt(model.tau_0)},{_fmt(model.tau_star)}] "
               f"-> {cfg.out_dir}/model.csv")
    return summary, OK


def _cmd_gibbs(model: MarkovModel, cfg: ExperimentConfig):
    sys_data = thermo.base_system(model)
    nu = sys_data.nu
    rows = []
    for iv in model.intervals:
        xs = model.grid(iv.id)
        for x, w in zip(xs, nu[iv.index]):
            rows.append((iv.id, float(x), float(w)))
    total = float(nu.sum())
    _write_csv(os.path.join(cfg.out_dir, "gibbs.csv"), cfg.command, model,
               [("total", total), ("fiber_defect", sys_data.fiber_defect)],
               ("interval", "x", "weight"), rows)
    summary = (f"gibbs: total={_fmt(total)} "
               f"fiber_defect={_fmt(sys_data.fiber_defect)} "
               f"-> {cfg.out_dir}/gibbs.csv")
    return summary, OK


def _cmd_pressure(model: MarkovModel, cfg: ExperimentConfig):
    p = thermo.pressure(model)
    h = orbits.entropy(model)
    residual = thermo.pressure(
        model, lambda x, _h=h: -_h * np.asarray(model.roof(x)))
    rows = [("pressure", p), ("entropy", h), ("entropy_residual", residual)]
    _write_csv(os.path.join(cfg.out_dir, "pressure.csv"), cfg.command, model,
               [], ("quantity", "value"), rows)
    summary = (f"pressure: pressure={_fmt(p)} entropy={_fmt(h)} "
               f"-> {cfg.out_dir}/pressure.csv")
    return summary, OK


def _decay_b_list(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.b is not None:
        return (cfg.b,)
    raw = cfg.extra("B_LIST")
    return _parse_float_list("B_LIST", raw) if raw else DEFAULT_B_LIST


def _cmd_decay(model: MarkovModel, cfg: ExperimentConfig):
    b_list = _decay_b_list(cfg)
    # warm the shared eigendata caches before any worker threads start
    thermo.normalize_potential(model, cfg.a)

    def one(b: float):
        return rpf.decay_profile(model, cfg.a, (b,)).rows[0]

    if cfg.threads > 1 and len(b_list) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            profile_rows = list(pool.map(one, b_list))
    else:
        profile_rows = [one(b) for b in b_list]

    good = [r for r in profile_rows if not r.flagged and r.l2 > 0]
    kappa_hat = None
    if len(good) >= 4:
        slope, _ = np.polyfit(np.log([r.b for r in good]),
                              np.log([r.l2 for r in good]), 1)
        kappa_hat = float(-slope)
        if abs(kappa_hat) < 1e-9:
            kappa_hat = 0.0
    rows = [(r.b, r.n, r.c0, r.l2, r.seminorm, r.flagged)
            for r in profile_rows]
    _write_csv(os.path.join(cfg.out_dir, "decay.csv"), cfg.command, model,
               [("a", cfg.a), ("b_list", b_list), ("kappa_hat", kappa_hat)],
               ("b", "n", "c0", "l2", "seminorm", "flagged"), rows)
    shown = _fmt(kappa_hat) if kappa_hat is not None else "none (needs 4 b values)"
    summary = (f"decay: kappa_hat={shown} rows={len(rows)} "
               f"-> {cfg.out_dir}/decay.csv")
    return summary, OK


def _uni_eps_list(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.eps is not None:
        return (cfg.eps,)
    raw = cfg.extra("EPS_LIST")
    return _parse_float_list("EPS_LIST", raw) if raw else DEFAULT_EPS_LIST


def _cmd_uni_scan(model: MarkovModel, cfg: ExperimentConfig):
    eps_list = _uni_eps_list(cfg)

    def one(eps: float):
        scale = scales.matching_scale(model, eps)
        return scales.uni_scan(model, scale)

    if cfg.threads > 1 and len(eps_list) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            certs = list(pool.map(one, eps_list))
    else:
        certs = [one(eps) for eps in eps_list]

    rows = [(c.eps, c.kappa_hat, len(c.witnesses), c.skipped, c.ok)
            for c in certs]
    _write_csv(os.path.join(cfg.out_dir, "uni_scan.csv"), cfg.command, model,
               [("eps_list", eps_list)],
               ("eps", "kappa_hat", "witnesses", "skipped", "ok"), rows)
    kappas = [c.kappa_hat for c in certs]
    summary = (f"uni-scan: kappa_hat=[{_fmt(min(kappas))},{_fmt(max(kappas))}] "
               f"eps_points={len(certs)} -> {cfg.out_dir}/uni_scan.csv")
    return summary, OK


def _cmd_dolgopyat(model: MarkovModel, cfg: ExperimentConfig):
    b = cfg.b if cfg.b is not None else DEFAULT_DOLGOPYAT_B
    params = EngineParams() if cfg.eps is None else EngineParams(eps=cfg.eps)
    cert = cancellation.run_l2_iteration(model, cfg.a, b, params=params)
    rows = [(r.n, r.c0_u, r.l2_u, r.l2_h, r.omega_fraction, r.bumps,
             r.kappa4, r.cs_violation) for r in cert.rows]
    meta = [("a", cert.a), ("b", cert.b), ("eps", cert.eps),
            ("n1", cert.n1), ("burn_in", cert.burn_in),
            ("kappa_uni", cert.kappa_uni), ("kappa6", cert.kappa6),
            ("kappa5", cert.kappa5), ("kappa4_min", cert.kappa4_min),
            ("final_l2", cert.final_l2), ("kappa_fit", cert.kappa_fit),
            ("refused", cert.refused), ("holder_ratio", cert.holder_ratio),
            ("atoms", cert.atoms), ("truncated_at", cert.truncated_at)]
    _write_csv(os.path.join(cfg.out_dir, "dolgopyat.csv"), cfg.command,
               model, meta,
               ("n", "c0_u", "l2_u", "l2_h", "omega_fraction", "bumps",
                "kappa4", "cs_violation"), rows)
    summary = (f"dolgopyat: b={_fmt(cert.b)} refused={_fmt(cert.refused)} "
               f"contracted={_fmt(cert.contracted)} "
               f"kappa_fit={_fmt(cert.kappa_fit)} "
               f"final_l2={_fmt(cert.final_l2)} "
               f"-> {cfg.out_dir}/dolgopyat.csv")
    return summary, OK


def _orbit_params(model: MarkovModel, cfg: ExperimentConfig):
    raw_n = cfg.extra("N_MAX")
    n_max = _coerce("N_MAX", raw_n, int) if raw_n else DEFAULT_N_MAX
    if n_max < 1:
        raise UsageError("N_MAX must be at least 1")
    raw_t = cfg.extra("T_GRID")
    if raw_t:
        t_grid = _parse_float_list("T_GRID", raw_t)
    else:
        t_grid = tuple(j * model.tau_0 for j in range(1, n_max + 1))
    return n_max, t_grid


def _cmd_orbits(model: MarkovModel, cfg: ExperimentConfig):
    n_max, t_grid = _orbit_params(model, cfg)
    orbit_list = orbits.enumerate_periodic_orbits(model, n_max)
    report = orbits.prime_orbit_report(model, n_max, t_grid)
    _write_csv(os.path.join(cfg.out_dir, "orbit_table.csv"), cfg.command,
               model, [("n_max", n_max)], ("word", "n", "period"),
               [(o.word, o.n, o.period) for o in orbit_list])
    count_rows = [
        (float(t), int(pi), float(li), float(pi - li), bool(comp))
        for t, pi, li, comp in zip(report.t_grid, report.pi,
                                   report.li_values, report.complete)]
    _write_csv(os.path.join(cfg.out_dir, "counting.csv"), cfg.command, model,
               [("n_max", n_max), ("entropy", report.h),
                ("c_hat", report.c_hat)],
               ("t", "pi", "li", "diff", "complete"), count_rows)
    summary = (f"orbits: primitives={len(orbit_list)} n_max={n_max} "
               f"entropy={_fmt(report.h)} c_hat={_fmt(report.c_hat)} "
               f"-> {cfg.out_dir}/counting.csv")
    return summary, OK


def _section_sine(x):
    return np.sin(2.0 * np.pi * np.asarray(x))


def _mc_params(cfg: ExperimentConfig):
    raw_s = cfg.extra("SAMPLES")
    samples = _coerce("SAMPLES", raw_s, int) if raw_s else DEFAULT_SAMPLES
    raw_b = cfg.extra("BLOCKS")
    blocks = _coerce("BLOCKS", raw_b, int) if raw_b else DEFAULT_BLOCKS
    if samples < blocks or blocks < 2:
        raise UsageError("need samples >= blocks >= 2")
    raw_t = cfg.extra("T_GRID")
    if raw_t:
        t_grid = _parse_float_list("T_GRID", raw_t)
    else:
        t_grid = tuple(np.linspace(0.0, 2.0, 11))
    return samples, blocks, t_grid


def _cmd_correlation(model: MarkovModel, cfg: ExperimentConfig):
    samples, blocks, t_grid = _mc_params(cfg)
    rep = orbits.correlation_decay(
        model, _section_sine, _section_sine, t_grid, samples,
        seed=cfg.seed, blocks=blocks, threads=cfg.threads)
    rows = [(float(t), float(c), float(s))
            for t, c, s in zip(rep.t_grid, rep.corr, rep.stderr)]
    meta = [("observable", "sin(2*pi*x)"), ("samples", rep.samples),
            ("blocks", rep.blocks), ("seed", rep.seed),
            ("rate", rep.rate), ("rate_err", rep.rate_err),
            ("r_squared", rep.r_squared)]
    _write_csv(os.path.join(cfg.out_dir, "correlation.csv"), cfg.command,
               model, meta, ("t", "corr", "stderr"), rows)
    summary = (f"correlation: rate={_fmt(rep.rate)} "
               f"rate_err={_fmt(rep.rate_err)} r2={_fmt(rep.r_squared)} "
               f"samples={rep.samples} -> {cfg.out_dir}/correlation.csv")
    return summary, OK


def _invariant_checks(model: MarkovModel, cfg: ExperimentConfig):
    """Cross-module soundness checks; each row is (name, value, bound)."""
    checks = []
    sys_data = thermo.base_system(model)
    ones = np.ones((len(model.intervals), model.grid_size + 1))

    op = thermo.transfer_real(model, 0.0)
    checks.append(("transfer_fixes_one",
                   float(np.max(np.abs(op(ones) - 1.0))), 1e-8))
    checks.append(("gibbs_total", abs(float(sys_data.nu.sum()) - 1.0), 1e-10))
    checks.append(("fiber_normalization", sys_data.fiber_defect, 1e-8))

    # sigma after the inverse branch returns the input; skip the right
    # endpoint, which belongs to the neighbouring slice
    worst = 0.0
    for br in model.branches:
        ys = model.grid(br.domain)[:-1]
        worst = max(worst, float(np.max(np.abs(model.forward(br(ys)) - ys))))
    checks.append(("branch_inverse", worst, 1e-9))

    h = orbits.entropy(model)
    residual = abs(thermo.pressure(
        model, lambda x, _h=h: -_h * np.asarray(model.roof(x))))
    checks.append(("entropy_root_residual", residual, 1e-6))

    neck = orbits.necklace_counts(model, 8)
    trace_gap = 0
    for n in range(1, 9):
        lhs = sum(d * neck[d - 1] for d in range(1, n + 1) if n % d == 0)
        trace_gap = max(trace_gap, abs(lhs - orbits.fixed_word_count(model, n)))
    checks.append(("necklace_vs_trace", float(trace_gap), 0.0))

    enum = orbits.enumerate_periodic_orbits(model, 6)
    by_n = [0] * 6
    for o in enum:
        by_n[o.n - 1] += 1
    enum_gap = max(abs(by_n[i] - neck[i]) for i in range(6))
    checks.append(("necklace_vs_enumeration", float(enum_gap), 0.0))

    worst_ret = 0.0
    for o in enum:
        x = orbits.orbit_fixed_point(model, o.word)
        back = float(model.orbit(x, o.n + 1)[-1, 0])
        worst_ret = max(worst_ret, abs(back - x))
    checks.append(("orbit_return_residual", worst_ret, 1e-10))

    quad = orbits.covariance_at_zero(model, _section_sine, _section_sine)
    rep = orbits.correlation_decay(
        model, _section_sine, _section_sine, (0.0,), MC_CHECK_SAMPLES,
        seed=cfg.seed, blocks=20, threads=cfg.threads)
    checks.append(("zero_lag_consistency",
                   abs(float(rep.corr[0]) - quad), 5.0 * float(rep.stderr[0])))

    eps = cfg.eps if cfg.eps is not None else 2.0 ** -6
    cert = scales.uni_scan(model, scales.matching_scale(model, eps))
    neg_part = max(0.0, -cert.kappa_hat)
    if not math.isfinite(cert.kappa_hat):
        neg_part = float("inf")
    checks.append(("uni_kappa_nonnegative", neg_part, 0.0))
    return checks


def _cmd_invariants(model: MarkovModel, cfg: ExperimentConfig):
    checks = _invariant_checks(model, cfg)
    rows = [(name, value, bound, "pass" if value <= bound else "fail")
            for name, value, bound in checks]
    _write_csv(os.path.join(cfg.out_dir, "invariants.csv"), cfg.command,
               model, [("seed", cfg.seed)],
               ("check", "value", "bound", "status"), rows)
    failed = [r[0] for r in rows if r[3] == "fail"]
    if failed:
        summary = (f"invariants: {len(failed)} of {len(rows)} failed "
                   f"({', '.join(failed)}) -> {cfg.out_dir}/invariants.csv")
        return summary, VIOLATION
    summary = (f"invariants: {len(rows)}/{len(rows)} pass "
               f"-> {cfg.out_dir}/invariants.csv")
    return summary, OK


_DISPATCH = {
    "model-info": _cmd_model_info,
    "gibbs": _cmd_gibbs,
    "pressure": _cmd_pressure,
    "decay": _cmd_decay,
    "uni-scan": _cmd_uni_scan,
    "dolgopyat": _cmd_dolgopyat,
    "orbits": _cmd_orbits,
    "correlation": _cmd_correlation,
    "invariants": _cmd_invariants,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run(cfg: ExperimentConfig) -> int:
    model, source = _load_model(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _echo_config(cfg, source)
    summary, code = _DISPATCH[cfg.command](model, cfg)
    print(summary)
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args, os.environ)
        return run(cfg)
    except UsageError as exc:
        sys.stderr.write(f"transferlab: error: {exc}\n")
        return USAGE
    except EngineError as exc:
        sys.stderr.write(f"transferlab: invariant violation: {exc}\n")
        return VIOLATION
    except (ModelError, ConvergenceError) as exc:
        sys.stderr.write(f"transferlab: error: {exc}\n")
        return USAGE
    except OSError as exc:
        sys.stderr.write(f"transferlab: error: {exc}\n")
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
