"""Command-line interface.

Runs are described by an INI file (every key optional unless noted) and
command-line flags, which override the file::

    [run]
    seed = 0
    output = out
    threads = 1

    [design]
    id = 2               ; 1, 2 or 3

    [instruments]
    kind = boxes_1d
    resolution = 100

    [stats]              ; one section per statistic: [stats], [stats.ks], ...
    family = iv_cvm
    p = 1
    weighting = bounded
    sigma_n_rule = n^-1/3
    bandwidth_rule = n^-1/5   ; or h = 0.2
    kernel = uniform
    x_nodes = 512

    [plan]
    n = 500, 1000
    a = 0.1, 0.2, 0.3, 0.4, 0.5
    alpha = 0.05
    n_reps = 1000
    n_sims = 10000

    [rate_check]         ; optional, used by `power`
    a_const = 1.0
    q = 0.2              ; default: the spec's own exponent

    [rates]
    tuples = 1:1:2, 2:1:1     ; p:d_X:gamma
    n = 1000

    [test]
    data = sample.csv
    theta = 0.1, 0

Exit status: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .critval import CriticalValue, decide, default_cache, empirical_critval, quantile_se, simulate_lf_draws
from .errors import CMIError, ConfigError, EnlargeDomainError, InvalidArgumentError, NoDataInWindowError
from .harness import ExperimentPlan, compare_families, run_power, run_rate_check, write_rate_csv
from .model import median_reg_moment, read_sample_csv
from .rates import rates_rows
from .stats import FAMILIES, RATE_RULES, WEIGHTINGS, StatisticSpec, compute_statistic

__all__ = ["RunConfig", "parse_config", "run", "main", "SUBCOMMANDS"]

SUBCOMMANDS = ("test", "critval", "power", "rates", "mc-reproduce")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

_KNOWN = {
    "run": {"subcommand", "seed", "output", "threads", "quick"},
    "design": {"id"},
    "instruments": {"kind", "resolution"},
    "stats": {"family", "p", "weighting", "sigma_n", "sigma_n_rule", "bandwidth", "h",
              "bandwidth_rule", "kernel", "x_nodes"},
    "plan": {"n", "a", "alpha", "n_reps", "n_sims"},
    "rate_check": {"a_const", "q"},
    "rates": {"tuples", "n", "p", "d_x", "gamma"},
    "test": {"data", "theta"},
}


def paper_specs(resolution: int = 100, x_nodes: int = 512) -> tuple[StatisticSpec, ...]:
    """The statistics of the missing-data Monte Carlo study."""
    specs = [StatisticSpec("iv_cvm", resolution=resolution)]
    specs += [StatisticSpec("iv_cvm", weighting="trunc_var", sigma_n_rule=r, resolution=resolution)
              for r in RATE_RULES]
    specs += [StatisticSpec("iv_ks", resolution=resolution),
              StatisticSpec("iv_ks", weighting="multiscale", resolution=resolution)]
    for fam in ("kern_cvm", "kern_ks"):
        specs += [StatisticSpec(fam, bandwidth_rule=r, x_nodes=x_nodes) for r in RATE_RULES]
    return tuple(specs)


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    seed: int = 0
    output: str = "out"
    threads: int = 1
    quick: bool = False
    design_id: int = 1
    instruments_kind: str = "boxes_1d"
    specs: tuple = ()
    n_list: tuple = (500,)
    a_list: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    alpha: float = 0.05
    n_reps: int = 1000
    n_sims: int = 10000
    rate_a_const: float | None = None
    rate_q: float | None = None
    rate_tuples: tuple = ((1.0, 1, 1.0), (1.0, 1, 2.0), (2.0, 1, 2.0))
    rate_n: tuple = (1000,)
    data: str | None = None
    theta: tuple | None = None
    text: str = field(default="", repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("text")
        out["specs"] = [_spec_dict(s) for s in self.specs]
        return out


def _spec_dict(spec):
    d = asdict(spec)
    d.pop("weight_fn")
    d["p"] = "inf" if math.isinf(spec.p) else spec.p
    return d


def _floats(text):
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text):
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ValueError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse and fully validate a run configuration.

    ``overrides`` maps ``"section.key"`` to string values (command-line
    flags). All problems are collected and raised together as a
    :class:`ConfigError`.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    errors: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, opt = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, opt, str(value))

    stats_sections = []
    for section in parser.sections():
        base = section.split(".", 1)[0]
        if base not in _KNOWN or (base != "stats" and section != base):
            errors.append(f"unknown section [{section}]")
            continue
        if base == "stats":
            stats_sections.append(section)
        for opt in parser.options(section):
            if opt not in _KNOWN[base]:
                errors.append(f"unknown key {section}.{opt}")

    kw: dict = {}

    def get(section, opt, conv, dest, check=None, msg=None):
        if not parser.has_option(section, opt):
            return None
        raw = parser.get(section, opt)
        try:
            val = conv(raw)
        except ValueError as exc:
            errors.append(f"{section}.{opt}: {exc}")
            return None
        if check is not None and not check(val):
            errors.append(f"{section}.{opt}: {msg} (got {raw.strip()!r})")
            return None
        if dest:
            kw[dest] = val
        return val

    sub = get("run", "subcommand", str.strip, "subcommand")
    if sub is None:
        errors.append("missing required key run.subcommand")
    elif sub not in SUBCOMMANDS:
        errors.append(f"run.subcommand must be one of {SUBCOMMANDS}")
    get("run", "seed", int, "seed", lambda v: v >= 0, "must be >= 0")
    get("run", "output", str.strip, "output", bool, "must be non-empty")
    get("run", "threads", int, "threads", lambda v: v >= 1, "must be >= 1")
    quick = get("run", "quick", _bool, "quick") or False
    get("design", "id", int, "design_id", lambda v: v in (1, 2, 3), "must be 1, 2 or 3")
    get("instruments", "kind", str.strip, "instruments_kind", lambda v: v == "boxes_1d",
        "the command line supports d_X = 1 box instruments (boxes_1d) only")
    resolution = get("instruments", "resolution", int, None, lambda v: v >= 2, "must be >= 2") or 100
    get("plan", "n", _ints, "n_list", lambda v: len(v) > 0 and min(v) >= 2, "sample sizes must be >= 2")
    get("plan", "a", _floats, "a_list", lambda v: len(v) > 0 and min(v) >= 0, "all a must be >= 0")
    get("plan", "alpha", float, "alpha", lambda v: 0 < v < 1, "must be in (0,1)")
    get("plan", "n_reps", int, "n_reps", lambda v: v >= 100, "must be >= 100")
    get("plan", "n_sims", int, "n_sims", lambda v: v >= 1000, "must be >= 1000")
    get("rate_check", "a_const", float, "rate_a_const", lambda v: v >= 0, "must be >= 0")
    get("rate_check", "q", float, "rate_q", lambda v: 0 < v <= 1, "must be in (0,1]")
    get("rates", "n", _ints, "rate_n", lambda v: len(v) > 0 and min(v) >= 2, "sample sizes must be >= 2")
    if parser.has_option("rates", "tuples"):
        tuples = []
        for tok in parser.get("rates", "tuples").split(","):
            if not tok.strip():
                continue
            try:
                p, d, g = tok.split(":")
                p, d, g = float(p), int(d), float(g)
            except ValueError:
                errors.append(f"rates.tuples: entry {tok.strip()!r} is not p:d_X:gamma")
                continue
            if not (p >= 1 and d >= 1 and g > 0):
                errors.append(f"rates.tuples: entry {tok.strip()!r} needs p >= 1, d_X >= 1, gamma > 0")
                continue
            tuples.append((p, d, g))
        kw["rate_tuples"] = tuple(tuples)
    elif any(parser.has_option("rates", k) for k in ("p", "d_x", "gamma")):
        ps = get("rates", "p", _floats, None, lambda v: min(v) >= 1, "p must be >= 1") or (1.0,)
        ds = get("rates", "d_x", _ints, None, lambda v: min(v) >= 1, "d_X must be >= 1") or (1,)
        gs = get("rates", "gamma", _floats, None, lambda v: min(v) > 0, "gamma must be > 0") or (1.0,)
        kw["rate_tuples"] = tuple((p, d, g) for p in ps for d in ds for g in gs)
    get("test", "data", str.strip, "data")
    get("test", "theta", _floats, "theta", lambda v: len(v) == 2, "median regression theta has 2 entries")

    x_nodes_default = 512
    specs = []
    for section in stats_sections:
        spec_kw = {"resolution": resolution}
        sec_errors_before = len(errors)
        fam = get(section, "family", str.strip, None, lambda v: v in FAMILIES, f"must be one of {FAMILIES}")
        if fam is None and not parser.has_option(section, "family"):
            errors.append(f"missing required key {section}.family")
        p = get(section, "p", float, None)
        wt = get(section, "weighting", str.strip, None, lambda v: v in WEIGHTINGS, f"must be one of {WEIGHTINGS}")
        sig = get(section, "sigma_n", float, None)
        sig_rule = get(section, "sigma_n_rule", str.strip, None)
        bw = get(section, "bandwidth", float, None)
        h = get(section, "h", float, None)
        bw_rule = get(section, "bandwidth_rule", str.strip, None)
        kern = get(section, "kernel", str.strip, None)
        xn = get(section, "x_nodes", int, None)
        if len(errors) > sec_errors_before or fam is None:
            continue
        for name, val in (("p", p), ("weighting", wt), ("sigma_n", sig), ("sigma_n_rule", sig_rule),
                          ("bandwidth", bw if bw is not None else h), ("bandwidth_rule", bw_rule),
                          ("kernel", kern), ("x_nodes", xn)):
            if val is not None:
                spec_kw[name] = val
        spec_kw.setdefault("x_nodes", x_nodes_default)
        if quick:
            spec_kw["resolution"] = max(2, spec_kw["resolution"] // 10)
            spec_kw["x_nodes"] = max(1, spec_kw["x_nodes"] // 10)
        try:
            spec = StatisticSpec(fam, **spec_kw)
        except InvalidArgumentError as exc:
            errors += [f"{section}: {e}" for e in str(exc).split("; ")]
            continue
        if spec.is_kernel:
            for n in kw.get("n_list", RunConfig.n_list):
                h_n = spec.bandwidth if spec.bandwidth is not None else n ** -RATE_RULES[spec.bandwidth_rule]
                if not 0 < h_n < 1:
                    errors.append(f"{section}: bandwidth in (0,1) fails at n={n}")
        specs.append(spec)

    sub = kw.get("subcommand")
    if sub in ("test", "critval", "power") and not stats_sections:
        errors.append(f"subcommand {sub!r} needs at least one [stats] section")
    if sub == "test":
        if "data" not in kw:
            errors.append("missing required key test.data")
        if "theta" not in kw:
            errors.append("missing required key test.theta")
    if sub == "power" and "rate_q" in kw and "rate_a_const" not in kw:
        errors.append("rate_check.q given without rate_check.a_const")
    if sub == "power" and kw.get("rate_a_const") is not None and kw.get("rate_q") is None:
        if kw.get("design_id", 1) == 1:
            errors.append("rate_check on design 1 (flat conditional mean) needs rate_check.q")
        for spec in specs:
            if spec.is_kernel and spec.bandwidth_rule is None:
                errors.append("rate_check with a fixed bandwidth needs rate_check.q")
                break
    if errors:
        raise ConfigError(errors)

    if sub == "mc-reproduce" and not specs:
        specs = list(paper_specs(max(2, resolution // 10) if quick else resolution,
                                 x_nodes_default // 10 if quick else x_nodes_default))
    if quick:
        kw["n_reps"] = max(1, kw.get("n_reps", RunConfig.n_reps) // 10)
        kw["n_sims"] = max(1000, kw.get("n_sims", RunConfig.n_sims) // 10)
    return RunConfig(specs=tuple(specs), text=text, **kw)


def _spec_columns(spec):
    from .harness import _spec_cols

    return _spec_cols(spec)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _run_rates(cfg, out):
    rows = rates_rows(cfg.rate_tuples, cfg.rate_n)
    _write_csv(out / "rates.csv", ["family", "weighting", "p", "d_X", "gamma", "s", "n", "q", "r_n_at_n"],
               [[f, w, repr(float(p)), d, repr(float(g)), "" if s is None else repr(s), n, repr(q), repr(r)]
                for f, w, p, d, g, s, n, q, r in rows])
    return ["rates.csv"]


def _run_critval(cfg, out):
    cache = default_cache()
    rows = []
    for n in cfg.n_list:
        draws = simulate_lf_draws(cfg.specs, n, cfg.n_sims, cfg.seed, cfg.threads)
        for k, spec in enumerate(cfg.specs):
            value = empirical_critval(draws[:, k], cfg.alpha)
            if cache is not None:
                cache.put(CriticalValue(cfg.alpha, value, cfg.n_sims, cfg.seed, spec.fingerprint(n)), n)
            rows.append([*_spec_columns(spec), n, repr(cfg.alpha), cfg.n_sims, cfg.seed,
                         repr(value), repr(quantile_se(draws[:, k], cfg.alpha))])
    _write_csv(out / "critvals.csv", ["family", "weighting", "p", "bandwidth_rule", "sigma_n_rule",
                                      "n", "alpha", "n_sims", "seed", "critval", "quantile_se"], rows)
    return ["critvals.csv"]


def _run_test(cfg, out):
    sample = read_sample_csv(cfg.data)
    model = median_reg_moment()
    if sample.d_x != 1:
        raise ConfigError(["test: least-favorable critical values are available for d_X = 1 data only"])
    if "w_high" not in sample.w:
        raise ConfigError(["test: data file needs a w_high column"])
    from .critval import simulate_lf_critvals

    cvs = simulate_lf_critvals(cfg.specs, sample.n, cfg.alpha, cfg.n_sims, cfg.seed, cfg.threads, default_cache())
    rows = []
    for spec, cv in zip(cfg.specs, cvs):
        stat = compute_statistic(sample, model, cfg.theta, spec)
        rows.append([*_spec_columns(spec), sample.n, repr(stat.raw), repr(stat.scaled), repr(cv.value),
                     decide(stat, cv)])
    _write_csv(out / "test_result.csv", ["family", "weighting", "p", "bandwidth_rule", "sigma_n_rule", "n",
                                         "raw", "statistic", "critval", "decision"], rows)
    return ["test_result.csv"]


def _run_power(cfg, out):
    plan = ExperimentPlan(cfg.design_id, cfg.n_list, cfg.specs, cfg.a_list, cfg.alpha, cfg.n_reps,
                          cfg.seed, cfg.n_sims, cfg.threads)
    cache = default_cache()
    curve = run_power(plan, cache=cache)
    curve.to_csv(out / "power_table.csv")
    comps = compare_families(plan, curve=curve)
    _write_csv(out / "comparisons.csv",
               ["design", "n", "a", "first", "second", "diff", "paired_se", "unpaired_se"],
               [[c.design, c.n, repr(c.a), c.first, c.second, repr(c.diff), repr(c.paired_se),
                 repr(c.unpaired_se)] for c in comps])
    files = ["power_table.csv", "comparisons.csv"]
    if cfg.rate_a_const is not None:
        rows = []
        for spec in cfg.specs:
            rows += run_rate_check(spec, cfg.design_id, cfg.rate_a_const, cfg.n_list, cfg.rate_q, cfg.n_reps,
                                   cfg.alpha, cfg.seed, cfg.n_sims, cfg.threads, cache)
        write_rate_csv(rows, out / "rate_check.csv")
        files.append("rate_check.csv")
    return files


_RUNNERS = {
    "rates": _run_rates,
    "critval": _run_critval,
    "test": _run_test,
    "power": _run_power,
    "mc-reproduce": _run_power,
}


def run(cfg: RunConfig, stderr=None) -> int:
    """Execute ``cfg``; writes CSV artifacts and ``manifest.json`` to ``cfg.output``."""
    stderr = stderr or sys.stderr
    start = time.perf_counter()
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = _RUNNERS[cfg.subcommand](cfg, out)
        manifest = {
            "subcommand": cfg.subcommand,
            "seed": cfg.seed,
            "version": __version__,
            "numpy": np.__version__,
            "wall_time_s": round(time.perf_counter() - start, 3),
            "artifacts": files,
            "config": cfg.to_dict(),
            "config_text": cfg.text,
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=stderr)
        return EXIT_CONFIG
    except (EnlargeDomainError, NoDataInWindowError, FloatingPointError, ArithmeticError) as exc:
        print(f"{cfg.subcommand}: numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"{cfg.subcommand}: I/O error: {exc}", file=stderr)
        return EXIT_IO
    except CMIError as exc:
        print(f"{cfg.subcommand}: {exc}", file=stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _build_parser():
    parser = argparse.ArgumentParser(prog="cmitest", description="Conditional moment inequality tests.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("-c", "--config", help="INI configuration file")
    parser.add_argument("--design", type=str, help="design id (1, 2 or 3)")
    parser.add_argument("--seed", type=str)
    parser.add_argument("-o", "--output", type=str, help="output directory")
    parser.add_argument("--threads", type=str)
    parser.add_argument("--n", type=str, help="comma-separated sample sizes")
    parser.add_argument("--reps", type=str, help="Monte Carlo replications")
    parser.add_argument("--quick", action="store_true", help="scale replications and grids down 10x")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return EXIT_IO
    overrides = {
        "run.subcommand": args.subcommand,
        "run.seed": args.seed,
        "run.output": args.output,
        "run.threads": args.threads,
        "run.quick": "true" if args.quick else None,
        "design.id": args.design,
        "plan.n": args.n,
        "plan.n_reps": args.reps,
    }
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
