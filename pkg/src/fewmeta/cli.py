"""Command line: ``fewmeta analyze | simulate | replicate-case``.

Exit codes: 0 success, 1 usage or parse error, 2 numerical failure,
3 simulation failure budget exceeded.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bayes import BayesConfig
from .effects import TwoByTwoTable, dataset_from_tables
from .heterogeneity import EstimatorConfig
from .methods import (DEFAULT_ESTIMATORS, DEFAULT_PRIORS, TABLE3_METHODS, parse_methods,
                      split_list)
from .model import ConvergenceError, DatasetError, MetaAnalysisError, validate_dataset
from .report import analyze
from .simulation import (BinomialScenario, CampaignConfig, FailureBudgetExceeded,
                         NormalScenario, case_scenario, run_campaign, write_metrics_csv)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_BUDGET = 3

EFFECTS_HEADER = ("study", "y", "se")
COUNTS_HEADER = ("study", "rt", "nt", "rc", "nc")


class UsageError(MetaAnalysisError):
    """Bad flags, unreadable input or malformed files."""


# input files ---------------------------------------------------------------

def _read_rows(path: str, header: Sequence[str]) -> list[tuple[int, list[str]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise UsageError(f"{path}: not UTF-8 text") from None
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise UsageError(f"{path}: empty file (expected header {','.join(header)})")
    got = tuple(c.strip() for c in rows[0][1])
    if got != tuple(header):
        raise UsageError(f"{path}: line {rows[0][0]}: header must be {','.join(header)}, "
                         f"got {','.join(got)}")
    out = []
    for line, r in rows[1:]:
        if len(r) != len(header):
            raise UsageError(f"{path}: line {line}: expected {len(header)} columns, got {len(r)}")
        out.append((line, [c.strip() for c in r]))
    return out


def _field(path, line, header, col, text, conv):
    try:
        return conv(text)
    except ValueError:
        raise UsageError(f"{path}: line {line}, column {col + 1} ({header[col]}): "
                         f"cannot parse {text!r}") from None


def _count(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(text)
    return int(v)


def read_effects_csv(path: str):
    rows = _read_rows(path, EFFECTS_HEADER)
    raw = []
    for line, r in rows:
        y = _field(path, line, EFFECTS_HEADER, 1, r[1], float)
        se = _field(path, line, EFFECTS_HEADER, 2, r[2], float)
        raw.append((r[0], y, se))
    return validate_dataset(raw)


def read_counts_csv(path: str):
    rows = _read_rows(path, COUNTS_HEADER)
    tables = []
    for line, r in rows:
        counts = [_field(path, line, COUNTS_HEADER, c, r[c], _count) for c in range(1, 5)]
        try:
            tables.append((r[0], TwoByTwoTable(*counts)))
        except DatasetError as exc:
            raise UsageError(f"{path}: line {line} (study {r[0]}): {exc}") from None
    if not tables:
        raise UsageError(f"{path}: no studies")
    return dataset_from_tables(tables)


# simulation config ---------------------------------------------------------

CONFIG_KEYS = {"generator", "k", "tau2", "n_reps", "seed", "mu_true", "case", "arm_means",
               "arm_var", "rho", "patient_counts", "methods", "level", "threads", "name"}


def _floats(text: str) -> list[float]:
    return [float(x) for x in split_list(text)]


def parse_patient_counts(text: str) -> tuple[tuple[int, int], ...]:
    """``"61:47, 28:32"`` -> ``((61, 47), (28, 32))`` as (treatment, control)."""
    out = []
    for item in split_list(text):
        a, sep, b = item.partition(":")
        if not sep:
            raise ValueError(f"patient count {item!r} must look like n_t:n_c")
        out.append((_count(a.strip()), _count(b.strip())))
    return tuple(out)


def load_config(path: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        parser.read_string("[run]\n" + text, source=path)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    cfg = dict(parser["run"])
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise UsageError(f"{path}: unknown key(s) {', '.join(unknown)}")
    return cfg


def _conv(cfg: dict, key: str, conv, default=None):
    if key not in cfg:
        return default
    try:
        return conv(cfg[key])
    except (ValueError, MetaAnalysisError) as exc:
        raise UsageError(f"config key {key!r}: cannot parse {cfg[key]!r} ({exc})") from None


def scenarios_from_config(cfg: dict, seed: Optional[int] = None):
    """Scenario list plus method labels for a parsed config."""
    n_reps = _conv(cfg, "n_reps", _count, 10_000)
    seed = seed if seed is not None else _conv(cfg, "seed", _count, 20151001)
    generator = cfg.get("generator", "binomial" if "case" in cfg else "normal").strip().lower()
    try:
        if generator == "normal":
            ks = _conv(cfg, "k", lambda t: [_count(x) for x in split_list(t)])
            tau2s = _conv(cfg, "tau2", _floats)
            if not ks or not tau2s:
                raise UsageError("normal generator needs keys 'k' and 'tau2'")
            mu = _conv(cfg, "mu_true", float, 0.0)
            scenarios = [NormalScenario(k, t2, n_reps, mu, seed)
                         for k, t2 in itertools.product(ks, tau2s)]
            default_methods = [f"{e}-{i}" for i in ("norm", "KnHa") for e in DEFAULT_ESTIMATORS]
            default_methods += list(DEFAULT_PRIORS)
        elif generator == "binomial":
            counts = _conv(cfg, "patient_counts", parse_patient_counts)
            if "case" in cfg:
                sc = case_scenario(cfg["case"].strip(), n_reps, seed, counts)
                overrides = {}
                if "arm_means" in cfg:
                    overrides["arm_means"] = tuple(_conv(cfg, "arm_means", _floats))
                if "arm_var" in cfg:
                    overrides["arm_var"] = _conv(cfg, "arm_var", float)
                if "rho" in cfg:
                    overrides["rho"] = _conv(cfg, "rho", float)
                if overrides:
                    fields = dict(arm_means=sc.arm_means, arm_var=sc.arm_var, rho=sc.rho,
                                  patient_counts=sc.patient_counts, n_reps=n_reps, seed=seed,
                                  name=sc.name)
                    fields.update(overrides)
                    sc = BinomialScenario(**fields)
            else:
                missing = [k for k in ("arm_means", "arm_var", "rho", "patient_counts")
                           if k not in cfg]
                if missing:
                    raise UsageError(f"binomial generator needs key(s) {', '.join(missing)}")
                sc = BinomialScenario(tuple(_conv(cfg, "arm_means", _floats)),
                                      _conv(cfg, "arm_var", float), _conv(cfg, "rho", float),
                                      counts, n_reps, seed, cfg.get("name", "binomial"))
            scenarios = [sc]
            default_methods = list(TABLE3_METHODS)
        else:
            raise UsageError(f"config key 'generator': expected normal or binomial, "
                             f"got {generator!r}")
    except UsageError:
        raise
    except MetaAnalysisError as exc:
        raise UsageError(f"invalid scenario: {exc}") from None
    methods = split_list(cfg["methods"]) if "methods" in cfg else default_methods
    return scenarios, methods


# commands ------------------------------------------------------------------

def _method_labels(methods: Optional[str], priors: Optional[str]) -> list[str]:
    if methods is None:
        labels = [f"{e}-{i}" for e in DEFAULT_ESTIMATORS for i in ("norm", "KnHa")]
    else:
        labels = [] if methods.strip().lower() == "none" else split_list(methods)
    if priors is None:
        labels += list(DEFAULT_PRIORS)
    elif priors.strip().lower() != "none":
        labels += split_list(priors)
    return labels


def cmd_analyze(args) -> int:
    dataset = read_counts_csv(args.input) if args.format == "counts" else read_effects_csv(args.input)
    specs = parse_methods(_method_labels(args.methods, args.priors))
    est_cfg = EstimatorConfig(tau_max=args.tau_max)
    bayes_cfg = BayesConfig(tau_max=args.tau_max)
    report = analyze(dataset, specs, args.level, est_cfg, bayes_cfg)
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    if args.forest:
        Path(args.forest).write_text(report.forest_csv(), encoding="utf-8")
    if args.forest_svg:
        Path(args.forest_svg).write_text(report.forest_svg(), encoding="utf-8")
    return EXIT_OK


def _campaign(scenarios, methods, args, level: float) -> tuple[list, int]:
    cfg = CampaignConfig(level=level, threads=args.threads)
    try:
        return run_campaign(scenarios, methods, cfg), EXIT_OK
    except FailureBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.metrics, EXIT_BUDGET


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scenarios, methods = scenarios_from_config(cfg, args.seed)
    parse_methods(methods)
    level = _conv(cfg, "level", float, 0.95)
    if args.threads is None and "threads" in cfg:
        args.threads = _conv(cfg, "threads", _count)
    rows, code = _campaign(scenarios, methods, args, level)
    write_metrics_csv(rows, args.out)
    for r in rows:
        print(f"{r.scenario:<28} {r.method:<18} coverage {r.coverage:.6g}  "
              f"mean_len {r.mean_len:.6g}  zero_prop {r.zero_prop:.6g}  "
              f"median_i2 {r.median_i2:.6g}  failures {r.failures}")
    return code


def cmd_replicate_case(args) -> int:
    counts = parse_patient_counts(args.patient_counts) if args.patient_counts else None
    sc = case_scenario(args.arm, args.n_reps, args.seed, counts)
    print(f"{sc.name}: implied tau = {sc.tau_true:.3g}, target log OR = {sc.target:.6g}, "
          f"k = {sc.k}, replications = {sc.n_reps}")
    rows, code = _campaign([sc], list(TABLE3_METHODS), args, 0.95)
    out = ["method,coverage,mean_len"]
    out += [f"{r.method},{r.coverage!r},{r.mean_len!r}" for r in rows]
    text = "\n".join(out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    for r in rows:
        print(f"{r.method:<18} {100 * r.coverage:6.1f} ({r.mean_len:.3g})")
    return code


# entry point ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fewmeta", description="Random-effects meta-analysis for few studies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyze a dataset with every requested method")
    a.add_argument("input", help="CSV with header study,y,se or study,rt,nt,rc,nc")
    a.add_argument("--format", choices=("effects", "counts"), default="effects")
    a.add_argument("--level", type=float, default=0.95)
    a.add_argument("--methods", help="comma list such as DL-norm,REML-KnHa; 'none' for none")
    a.add_argument("--priors", help="comma list such as 'half-Normal(0.5),Uniform(0,4)'; "
                   "'none' for none")
    a.add_argument("--tau-max", type=float, default=10.0)
    a.add_argument("--out", help="report CSV (full precision)")
    a.add_argument("--forest", help="forest plot data CSV (label,point,low,high)")
    a.add_argument("--forest-svg", help="static forest plot SVG")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run a simulation campaign from a config file")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="metrics CSV")
    s.add_argument("--threads", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("replicate-case", help="binomial case-study coverage table")
    r.add_argument("--arm", choices=("ar", "srr"), required=True)
    r.add_argument("--n-reps", type=int, default=10_000)
    r.add_argument("--seed", type=int, default=20151001)
    r.add_argument("--patient-counts", help="per-study n_t:n_c list, e.g. '61:47, 28:32'")
    r.add_argument("--threads", type=int)
    r.add_argument("--out", help="CSV with method,coverage,mean_len")
    r.set_defaults(func=cmd_replicate_case)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MetaAnalysisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
