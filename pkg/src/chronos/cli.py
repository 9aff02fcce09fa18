"""Configuration-driven experiment runner and report emitter.

Subcommands: run <config>, plot <csv>, selftest.  Configs are flat
``key = value`` text with dotted section names; reports are CSV with a
provenance header comment.  Exit codes: 0 success, 1 invariant violation,
2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import ChronosError, ConfigError
from .families import builtin_family, family_from_csv, integrate_family
from .film import FilmSpace, commutation_check, embed, exchange, slot_operator_norm, verify_eq38
from .linalg import matrix_exp, operator_norm
from .path_sum import (PathSumConfig, U_lambda, monte_carlo_U, sample_bubbles,
                       trial_rng)
from .propagators import product_integral, taylor_partial_sum, dyson_terms
from .quadrature import loglog_slope
from .smatrix import SMatrixConfig, S_lambda, oracle_S
from .families import SIGMA_X, SIGMA_Z

EXPERIMENTS = ("dyson-convergence", "asymptotic", "yosida", "lambda-sweep",
               "film-verify", "smatrix-sweep", "monte-carlo")


def worker_count() -> int:
    """Parallelism cap from CHRONOS_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("CHRONOS_THREADS", "1")))
    except ValueError:
        return 1


def parse_config(text: str) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _floats(value: str):
    return [float(x) for x in value.split(",") if x.strip()]


def _get_family(cfg: dict):
    if "family.csv" in cfg:
        return family_from_csv(cfg["family.csv"])
    name = cfg.get("family.name", "two_level_driven")
    params = _floats(cfg.get("family.params", ""))
    interval = _floats(cfg.get("interval", "0, 1"))
    return builtin_family(name, params, interval=tuple(interval))


def _timing(cfg: dict) -> bool:
    return cfg.get("timing", "off") == "on"


class Report:
    """CSV rows with a provenance header; shortest round-trip floats."""

    def __init__(self, columns, seed, digest):
        self.columns = list(columns)
        self.rows = []
        self.seed = seed
        self.digest = digest

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ConfigError("row width does not match the report schema")
        for v in values:
            if isinstance(v, float) and not np.isfinite(v):
                raise ConfigError("refusing to emit a non-finite value")
        self.rows.append(values)

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# chronos {__version__} seed={self.seed} "
                     f"config_digest={self.digest}\n")
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(
                    repr(v) if isinstance(v, float) else str(v)
                    for v in row) + "\n")


def _experiment_asymptotic(cfg, report_cols):
    if "q.diag" in cfg:
        Q = np.diag(np.array(_floats(cfg["q.diag"]), dtype=complex))
    else:
        fam = _get_family(cfg)
        Q = integrate_family(fam, fam.a, fam.b)
    n = int(cfg.get("order", "1"))
    w_list = _floats(cfg.get("sweep.w", "0.1, 0.05, 0.025, 0.0125, 0.00625"))
    report = Report(["w", "residual_norm", "ratio"], cfg.get("seed", "0"),
                    report_cols)
    norms = []
    for w in w_list:
        r = float(np.linalg.norm(
            matrix_exp(w * Q) - taylor_partial_sum(Q, n, w), 2))
        norms.append(r)
        ratio = norms[-2] / r if len(norms) > 1 and r > 0 else 0.0
        report.add(float(w), r, float(ratio))
    order = loglog_slope(w_list, norms)
    ok = abs(order - (n + 1)) <= 0.1
    return report, ok, f"fitted order {order:.3f} (expected {n + 1})"


def _experiment_dyson(cfg, digest):
    fam = _get_family(cfg)
    n = int(cfg.get("order", "5"))
    oracle = product_integral(fam, fam.a, fam.b,
                              float(cfg.get("oracle_tol", "1e-10"))).U
    expn = dyson_terms(fam, fam.a, fam.b, n, int(cfg.get("grid", "1024")))
    ts = np.linspace(fam.a, fam.b, 65)
    M = max(np.linalg.norm(H, 2) for H in fam.evaluate_batch(ts))
    span = fam.b - fam.a
    report = Report(["order", "tail_norm", "classical_bound"],
                    cfg.get("seed", "0"), digest)
    ok = True
    partial = np.zeros_like(oracle)
    import math
    for k in range(n + 1):
        partial = partial + expn.terms[k]
        tail = float(np.linalg.norm(oracle - partial, 2))
        bound = float((M * span) ** (k + 1) / math.factorial(k + 1)
                      * np.exp(M * span))
        ok = ok and tail <= bound + 1e-12
        report.add(k, tail, bound)
    return report, ok, f"tail within classical bound up to order {n}: {ok}"


def _experiment_yosida(cfg, digest):
    fam = _get_family(cfg)
    z_list = _floats(cfg.get("sweep.z", "10, 100, 1000, 10000"))
    from .families import yosida_family
    Q = integrate_family(fam, fam.a, fam.b)
    expQ = matrix_exp(Q)
    report = Report(["z", "q_gap", "exp_gap"], cfg.get("seed", "0"), digest)
    gaps = []
    for z in z_list:
        Qz = integrate_family(yosida_family(fam, z), fam.a, fam.b)
        qg = float(np.linalg.norm(Qz - Q, 2))
        eg = float(np.linalg.norm(matrix_exp(Qz) - expQ, 2))
        gaps.append(eg)
        report.add(float(z), qg, eg)
    slope = loglog_slope(z_list, gaps)
    return report, slope <= -0.9, f"convergence slope {slope:.3f} (need <= -0.9)"


def _experiment_lambda_sweep(cfg, digest):
    fam = _get_family(cfg)
    t = float(cfg.get("horizon", str(fam.b)))
    lambdas = _floats(cfg.get("sweep.lambdas", "10, 100, 1000"))
    tail_tol = float(cfg.get("tail_tol", "1e-10"))
    seed = int(cfg.get("seed", "0"))
    oracle = product_integral(fam, 0.0, t, float(cfg.get("oracle_tol", "1e-10"))).U
    timing = _timing(cfg)

    def one(lam):
        t0 = time.perf_counter()
        res = U_lambda(fam, PathSumConfig(lam=lam, t=t, tail_tol=tail_tol,
                                          seed=seed))
        raw = res.extras["raw"]
        return (float(lam), res.extras["n_max"],
                float(res.extras["captured_mass"]),
                float(np.linalg.norm(raw - oracle, 2)),
                float(np.linalg.norm(res.U - oracle, 2)),
                time.perf_counter() - t0 if timing else 0.0)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        rows = list(pool.map(one, lambdas))
    report = Report(["lambda", "n_max", "captured_mass", "err_raw",
                     "err_normalized", "seconds"], seed, digest)
    for row in rows:
        report.add(*row)
    errs = [row[4] for row in rows]
    ok = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    return report, ok, f"normalized error strictly decreasing: {ok}"


def _experiment_film_verify(cfg, digest):
    d = int(cfg.get("base_dim", "2"))
    N = int(cfg.get("slots", "4"))
    fam = _get_family(cfg)
    film = FilmSpace(d, tuple(np.linspace(fam.a + 0.05 * (fam.b - fam.a),
                                          fam.b - 0.05 * (fam.b - fam.a), N)))
    report = Report(["check", "detail", "residual"], cfg.get("seed", "0"), digest)
    ok = True
    H = fam((fam.a + fam.b) / 2)
    for j in range(1, N + 1):
        for k in range(1, N + 1):
            if j == k:
                continue
            Pjk = exchange(j, k, film).dense()
            r1 = float(np.linalg.norm(
                Pjk @ embed(H, j, film).dense() @ np.linalg.inv(Pjk)
                - embed(H, k, film).dense(), 2))
            r3 = float(np.linalg.norm(
                Pjk @ exchange(k, j, film).dense() - np.eye(film.full_dim), 2))
            rc = commutation_check(H, H @ H, j, k, film)
            ok = ok and r1 <= 1e-13 and r3 <= 1e-13 and rc <= 1e-12
            report.add("exchange_transport", f"{j}-{k}", r1)
            report.add("exchange_involution", f"{j}-{k}", r3)
            report.add("slot_commutation", f"{j}-{k}", float(rc))
    iso = abs(slot_operator_norm(embed(H, 1, film)) - operator_norm(H))
    ok = ok and iso <= 1e-9
    report.add("embedding_isometry", "slot1", float(iso))
    r38 = verify_eq38(fam, film, float(cfg.get("z", "10")), 0)
    ok = ok and r38 <= 1e-10
    report.add("norm_identity", "generating_vector", float(r38))
    return report, ok, f"film identities all within tolerance: {ok}"


def _experiment_smatrix_sweep(cfg, digest):
    H0 = np.diag(np.array(_floats(cfg.get("h0.diag", "1, -1")), dtype=complex))
    coupling = float(cfg.get("coupling", "0.3"))
    V = coupling * SIGMA_X if H0.shape[0] == 2 else coupling * np.eye(H0.shape[0])
    T = float(cfg.get("half_window", "2"))
    lambdas = _floats(cfg.get("sweep.lambdas", "10, 100, 1000"))
    tail_tol = float(cfg.get("tail_tol", "1e-10"))
    n = int(cfg.get("order", "0"))
    timing = _timing(cfg)
    base = SMatrixConfig(H0=H0, V=V, T=T)
    S_ref = oracle_S(base).U
    report = Report(["lambda", "T", "n", "err_vs_oracle", "unitarity_defect",
                     "seconds"], cfg.get("seed", "0"), digest)
    errs = []
    for lam in lambdas:
        t0 = time.perf_counter()
        smc = SMatrixConfig(H0=H0, V=V, T=T, lam=lam)
        S = S_lambda(smc, tail_tol).U
        err = float(np.linalg.norm(S - S_ref, 2))
        defect = float(np.linalg.norm(S.conj().T @ S - np.eye(S.shape[0]), 2))
        errs.append(err)
        report.add(float(lam), T, n, err, defect,
                   time.perf_counter() - t0 if timing else 0.0)
    ok = all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    return report, ok, f"S_lambda error strictly decreasing: {ok}"


def _experiment_monte_carlo(cfg, digest):
    fam = _get_family(cfg)
    t = float(cfg.get("horizon", str(fam.b)))
    lam = float(cfg.get("lambda", "20"))
    trials = int(cfg.get("trials", "500"))
    seed = int(cfg.get("seed", "0"))
    ps = PathSumConfig(lam=lam, t=t, trials=trials, seed=seed)
    draws = int(cfg.get("count_draws", "100000"))
    counts = np.array([len(sample_bubbles(ps, trial_rng(seed, k)))
                       for k in range(draws)])
    mean = float(counts.mean())
    sigma = float(np.sqrt(lam * t / draws))
    res = monte_carlo_U(fam, ps)
    oracle = product_integral(fam, 0.0, t, float(cfg.get("oracle_tol", "1e-9"))).U
    dist = float(np.linalg.norm(res.U - oracle, 2))
    report = Report(["stat", "value"], seed, digest)
    report.add("count_mean", mean)
    report.add("count_expected", float(lam * t))
    report.add("count_sigma", sigma)
    report.add("max_entry_stderr", float(res.error_estimate))
    report.add("distance_to_oracle", dist)
    ok = abs(mean - lam * t) <= 3 * sigma
    return report, ok, f"count mean {mean:.3f} vs {lam * t} (3 sigma {3 * sigma:.3f})"


_RUNNERS = {
    "asymptotic": _experiment_asymptotic,
    "dyson-convergence": _experiment_dyson,
    "yosida": _experiment_yosida,
    "lambda-sweep": _experiment_lambda_sweep,
    "film-verify": _experiment_film_verify,
    "smatrix-sweep": _experiment_smatrix_sweep,
    "monte-carlo": _experiment_monte_carlo,
}


def run(config_path: str) -> int:
    try:
        with open(config_path) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    try:
        cfg = parse_config(text)
        name = cfg.get("experiment")
        if name not in _RUNNERS:
            raise ConfigError(
                f"experiment must be one of {', '.join(EXPERIMENTS)}; got {name!r}")
        _validate(cfg)
        report, ok, summary = _RUNNERS[name](cfg, digest)
        out = cfg.get("output", f"{name}.csv")
        report.write(out)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ChronosError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    print(f"{name}: {summary} -> {out}")
    return 0 if ok else 1


def _validate(cfg: dict):
    for key, value in cfg.items():
        if key.endswith("tol") and float(value) <= 0:
            raise ConfigError(f"{key} must be > 0")
        if key in ("lambda",) and float(value) <= 0:
            raise ConfigError(f"{key} must be > 0")
        if key == "sweep.lambdas" and any(v <= 0 for v in _floats(value)):
            raise ConfigError("sweep.lambdas entries must be > 0")
        if key == "family.csv" and not os.path.exists(value):
            raise ConfigError(f"family csv {value!r} does not exist")


_PLOT_STYLES = {
    ("w", "residual_norm", "ratio"): ("w", ["residual_norm"], True),
    ("lambda", "n_max", "captured_mass", "err_raw", "err_normalized",
     "seconds"): ("lambda", ["err_raw", "err_normalized"], True),
    ("lambda", "T", "n", "err_vs_oracle", "unitarity_defect", "seconds"):
        ("lambda", ["err_vs_oracle", "unitarity_defect"], True),
    ("z", "q_gap", "exp_gap"): ("z", ["q_gap", "exp_gap"], True),
    ("order", "tail_norm", "classical_bound"):
        ("order", ["tail_norm", "classical_bound"], False),
}


def emit_plot_script(csv_path: str) -> int:
    try:
        with open(csv_path) as fh:
            lines = [l for l in fh.read().splitlines()
                     if l and not l.startswith("#")]
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if len(lines) < 2:
        print("error: CSV has no data rows", file=sys.stderr)
        return 2
    header = tuple(lines[0].split(","))
    if header not in _PLOT_STYLES:
        print(f"error: unknown CSV schema {header}", file=sys.stderr)
        return 2
    xcol, ycols, logscale = _PLOT_STYLES[header]
    out = csv_path + ".gp"
    xi = header.index(xcol) + 1
    with open(out, "w") as fh:
        fh.write("set datafile separator ','\n")
        fh.write(f"set xlabel '{xcol}'\n")
        if logscale:
            fh.write("set logscale xy\n")
        plots = [
            f"'{csv_path}' skip 2 using {xi}:{header.index(y) + 1} "
            f"with linespoints title '{y}'" for y in ycols]
        if xcol == "w":
            # Reference power law fitted to the residual sweep.
            data = [[float(v) for v in line.split(",")] for line in lines[1:]]
            xs = np.array([row[xi - 1] for row in data])
            ys = np.array([row[header.index(ycols[0])] for row in data])
            good = ys > 0
            if good.sum() >= 2:
                slope, logc = np.polyfit(np.log(xs[good]), np.log(ys[good]), 1)
                fh.write(f"ref(x) = {float(np.exp(logc))!r}"
                         f" * x**{float(slope)!r}\n")
                plots.append(f"ref(x) with lines dashtype 2 "
                             f"title 'slope {slope:.2f}'")
        fh.write("plot " + ", ".join(plots) + "\n")
    print(f"wrote {out}")
    return 0


def selftest(outdir: str = "selftest_out", seed: int = 12345) -> int:
    """Deterministic invariant battery; CSV outputs carry no wall-clock."""
    os.makedirs(outdir, exist_ok=True)
    configs = {
        "asymptotic.cfg": (
            "experiment = asymptotic\nq.diag = -1, -2\norder = 1\n"
            f"seed = {seed}\noutput = asymptotic.csv\n"),
        "yosida.cfg": (
            "experiment = yosida\nfamily.name = damped_two_level\n"
            f"seed = {seed}\noutput = yosida.csv\n"),
        "film.cfg": (
            "experiment = film-verify\nslots = 4\nbase_dim = 2\n"
            f"seed = {seed}\noutput = film.csv\n"),
        "lambda.cfg": (
            "experiment = lambda-sweep\nfamily.name = two_level_driven\n"
            "sweep.lambdas = 10, 40, 160\ntail_tol = 1e-10\n"
            f"seed = {seed}\noutput = lambda.csv\n"),
        "monte.cfg": (
            "experiment = monte-carlo\nfamily.name = two_level_driven\n"
            "lambda = 20\ntrials = 200\ncount_draws = 20000\n"
            f"seed = {seed}\noutput = monte.csv\n"),
    }
    status = 0
    # Run from the output directory so the config text (and its digest)
    # is independent of where the battery lands.
    here = os.getcwd()
    os.chdir(outdir)
    try:
        for name, text in configs.items():
            with open(name, "w") as fh:
                fh.write(text)
            code = run(name)
            print(f"selftest {name}: exit {code}")
            status = max(status, code)
    finally:
        os.chdir(here)
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="chronos")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_plot = sub.add_parser("plot", help="emit a gnuplot script for a CSV")
    p_plot.add_argument("csv")
    p_self = sub.add_parser("selftest", help="run the invariant battery")
    p_self.add_argument("--outdir", default="selftest_out")
    p_self.add_argument("--seed", type=int, default=12345)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config)
    if args.command == "plot":
        return emit_plot_script(args.csv)
    return selftest(args.outdir, args.seed)


if __name__ == "__main__":
    sys.exit(main())
