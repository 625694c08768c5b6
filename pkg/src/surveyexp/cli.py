"""Command-line interface: ``surveyexp estimate | simulate | compare``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or validation
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import warnings
from collections import OrderedDict

from scipy.stats import norm

from . import __version__
from .design import AssignmentPlan, replicate_rng
from .diagnostics import delta_statistic, qq_points
from .errors import ConfigError, StrataMergeWarning, SurveyExpError
from .estimators import EstimatorSpec, evaluate, make_partition, post_stratified_detail
from .io import (
    file_digest,
    format_rows,
    make_manifest,
    read_experiment,
    read_rows,
    require_columns,
    rows_to_experiment,
    write_output,
)
from .model import ESTIMATOR_IDS, EstimateReport
from .simulation import (
    POPULATION_STREAM,
    SAMPLERS,
    DGPConfig,
    StudyConfig,
    gamma_sweep,
    generate_population,
    run_study,
)
from .uncertainty import (
    BootstrapConfig,
    bootstrap_many,
    hh_plugin_variance,
    neyman_sate_var_estimate,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "SURVEYEXP_THREADS"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads_default() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if v < 1:
        raise ConfigError(f"{THREADS_ENV} must be at least 1")
    return v


# ---------------------------------------------------------------- estimate


def _parse_estimators(raw: str):
    names = [s.strip() for s in raw.split(",") if s.strip()]
    for nm in names:
        if nm not in ESTIMATOR_IDS:
            raise ConfigError(f"unknown estimator {nm!r}; choose from {', '.join(ESTIMATOR_IDS)}")
    if not names:
        raise ConfigError("no estimators requested")
    return list(OrderedDict.fromkeys(names))


def _parse_recipe(raw, strata_col):
    """--post-stratify weights:K | strata | strata+weights:K -> (K, covariate)."""
    if raw is None:
        return None
    K = None
    use_cov = False
    for part in raw.split("+"):
        part = part.strip()
        if part == "strata":
            use_cov = True
        elif part.startswith("weights:"):
            try:
                K = int(part.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad strata count in {raw!r}") from None
        else:
            raise ConfigError(f"bad --post-stratify recipe {raw!r} (use weights:K, strata or strata+weights:K)")
    if use_cov and strata_col is None:
        raise ConfigError("--post-stratify strata needs --strata COLUMN")
    return K, strata_col if use_cov else None


def _plugin_se(spec: EstimatorSpec, data):
    if spec.kind == "sate_dm":
        return math.sqrt(neyman_sate_var_estimate(data))
    if spec.kind == "double_hajek":
        return math.sqrt(hh_plugin_variance(data))
    return None


def cmd_estimate(args) -> int:
    data = read_experiment(args.input, args.outcome, args.treatment, args.weight, args.strata, args.normalize_weights)
    recipe = _parse_recipe(args.post_stratify, args.strata)
    if args.estimators:
        names = _parse_estimators(args.estimators)
    else:
        names = ["sate_dm", "double_hajek"] + (["ps_double"] if recipe else [])
    specs = []
    for nm in names:
        K = cov = None
        if nm.startswith("ps_"):
            if recipe is None:
                raise ConfigError(f"{nm} needs --post-stratify")
            K, cov = recipe
        p = args.p if nm in ("single_hajek", "ps_single") else None
        specs.append(EstimatorSpec(nm, K=K, strata=cov, p=p, expected_n=args.expected_n))

    points, notes = [], []
    for spec in specs:
        if spec.post_stratified:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", StrataMergeWarning)
                variant = "double" if spec.kind == "ps_double" else "single"
                est, part = post_stratified_detail(data, make_partition(data, spec), variant, spec.p)
            points.append(est)
            notes.append(part.merges)
        else:
            points.append(evaluate(spec, data))
            notes.append(())

    cfg = BootstrapConfig(B=args.B, seed=args.seed, ci_level=args.ci_level, ci_method=args.ci_method)
    boots = bootstrap_many(data, specs, cfg) if args.se == "bootstrap" else None
    z = float(norm.ppf(0.5 + args.ci_level / 2))
    reports = []
    for j, spec in enumerate(specs):
        se = lo = hi = None
        method, ci_method = "none", None
        extra = list(notes[j])
        if boots is not None:
            b = boots[j]
            se, lo, hi = b.se, b.ci_low, b.ci_high
            method, ci_method = "bootstrap", args.ci_method
            if b.redraws:
                extra.append(f"{b.redraws} bootstrap resamples redrawn for an empty arm")
        elif args.se == "plugin":
            se = _plugin_se(spec, data)
            if se is None:
                extra.append(f"no plug-in variance available for {spec.kind}")
            else:
                method, ci_method = "plugin", "normal"
                lo, hi = points[j] - z * se, points[j] + z * se
        reports.append(
            EstimateReport(spec.kind, points[j], se, lo, hi, method, data.n, data.n1, data.n0, ci_method, tuple(extra))
        )
    rows = [r.to_dict() for r in reports]
    text = format_rows(rows, args.format)
    manifest = make_manifest("estimate", vars(args), file_digest([args.input]), args.seed, __version__)
    write_output(text, args.output, manifest)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

# section -> key -> (type, validator or None, description)
CONFIG_SCHEMA = {
    "population": {
        "N": (int, lambda v: v >= 100, "at least 100"),
        "gamma": (float, lambda v: 0 <= v <= 1, "in [0, 1]"),
        "a": (float, lambda v: v > 0, "positive"),
        "b": (float, lambda v: v > 0, "positive"),
        "noise_sd": (float, lambda v: v >= 0, "non-negative"),
        "effect": (str, lambda v: v in ("heterogeneous", "constant"), "'heterogeneous' or 'constant'"),
        "constant_effect": (float, None, ""),
    },
    "study": {
        "sample_n": (int, lambda v: v >= 4, "at least 4"),
        "reps": (int, lambda v: v >= 1, "positive"),
        "K": (int, lambda v: v >= 1, "positive"),
        "seed": (int, lambda v: v >= 0, "non-negative"),
        "sampler": (str, lambda v: v in SAMPLERS, " or ".join(SAMPLERS)),
        "mechanism": (str, lambda v: v in ("complete", "bernoulli"), "'complete' or 'bernoulli'"),
        "p": (float, lambda v: 0 < v < 1, "in (0, 1)"),
        "threads": (int, lambda v: v >= 1, "positive"),
    },
    "estimator": {
        "estimators": (list, lambda v: all(e in ESTIMATOR_IDS for e in v), "a list of known estimator ids"),
    },
    "bootstrap": {
        "B": (int, lambda v: v == 0 or v >= 2, "0 or at least 2"),
        "ci_level": (float, lambda v: 0 < v < 1, "in (0, 1)"),
    },
    "sweep": {
        "gammas": (list, lambda v: len(v) > 0 and all(0 <= g <= 1 for g in v), "a non-empty list in [0, 1]"),
        "populations": (int, lambda v: v >= 1, "positive"),
    },
}
KEY_SECTION = {k: s for s, keys in CONFIG_SCHEMA.items() for k in keys}

SCENARIOS = {
    "A": {"population": {"effect": "heterogeneous", "gamma": 1.0}},
    "B": {"population": {"effect": "constant", "gamma": 1.0}},
    "C": {
        "population": {"effect": "heterogeneous"},
        "sweep": {"gammas": [0.0, 0.25, 0.5, 0.75, 1.0], "populations": 20},
    },
}


def _line_of(text: str, section, key) -> int:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s.strip("[] ")
        elif s.split("=", 1)[0].strip() == key and (cur == section or section is None):
            return i
    return 0


def _coerce(section, key, value, where):
    typ, check, desc = CONFIG_SCHEMA[section][key]
    try:
        if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
        elif typ is list:
            if isinstance(value, str):
                value = [x.strip() for x in value.split(",") if x.strip()]
            if key == "gammas":
                value = [float(x) for x in value]
            else:
                value = [str(x) for x in value]
        elif typ is int and isinstance(value, str):
            value = int(value)
        elif typ is float and isinstance(value, str):
            value = float(value)
        if not isinstance(value, typ) or isinstance(value, bool):
            raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {section}.{key} must be of type {typ.__name__}, got {value!r}") from None
    if check is not None and not check(value):
        raise ConfigError(f"{where}: {section}.{key} must be {desc}, got {value!r}")
    return value


def load_config(path: str) -> dict:
    """Parse a TOML scenario file into {section: {key: value}} with line-level errors."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    text = raw.decode("utf-8", errors="replace")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    out = {}
    for section, body in doc.items():
        if section == "scenario":
            if body not in SCENARIOS:
                raise ConfigError(f"{path}:{_line_of(text, None, 'scenario')}: unknown scenario {body!r}")
            out["scenario"] = body
            continue
        if section not in CONFIG_SCHEMA or not isinstance(body, dict):
            raise ConfigError(f"{path}:{_line_of(text, None, section) or _section_line(text, section)}: unknown section {section!r}")
        for key, value in body.items():
            line = _line_of(text, section, key)
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"{path}:{line}: unknown key {section}.{key}")
            out.setdefault(section, {})[key] = _coerce(section, key, value, f"{path}:{line}")
    return out


def _section_line(text, section):
    for i, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return i
    return 0


def _merge(base: dict, extra: dict) -> dict:
    out = {s: dict(v) for s, v in base.items() if isinstance(v, dict)}
    for s, v in extra.items():
        if isinstance(v, dict):
            out.setdefault(s, {}).update(v)
    return out


def resolve_simulation(args) -> dict:
    cfg = {}
    scenario = args.scenario
    if args.config:
        loaded = load_config(args.config)
        scenario = scenario or loaded.pop("scenario", None)
        cfg = loaded
    if scenario is None and not args.config:
        raise ConfigError("give --scenario A|B|C or --config FILE")
    base = SCENARIOS.get(scenario or "A")
    cfg = _merge(base, cfg)
    overrides = {}
    for key, section in KEY_SECTION.items():
        v = getattr(args, "opt_" + key)
        if v is not None:
            overrides.setdefault(section, {})[key] = _coerce(section, key, v, "command line")
    cfg = _merge(cfg, overrides)
    cfg["scenario"] = scenario or ("C" if "sweep" in cfg else "custom")
    return cfg


def build_configs(cfg: dict):
    pop = cfg.get("population", {})
    st = cfg.get("study", {})
    bs = cfg.get("bootstrap", {})
    a = pop.get("a", DGPConfig.a)
    dgp = DGPConfig(
        N=pop.get("N", 10_000),
        gamma=pop.get("gamma", 1.0),
        a=a,
        b=pop.get("b", a + 23.88),
        noise_sd=pop.get("noise_sd", 5.0),
        effect=pop.get("effect", "heterogeneous"),
        constant_effect=pop.get("constant_effect", 30.0),
    )
    plan = AssignmentPlan(st.get("mechanism", "complete"), st.get("p", 0.5))
    ests = tuple(cfg.get("estimator", {}).get("estimators", ("sate_dm", "double_hajek", "ps_double")))
    study = StudyConfig(
        sample_n=st.get("sample_n", 500),
        assignment=plan,
        reps=st.get("reps", 10_000),
        K=st.get("K", 7),
        estimators=ests,
        bootstrap_B=bs.get("B", 400),
        seed=st.get("seed", 0),
        ci_level=bs.get("ci_level", 0.95),
        sampler=st.get("sampler", "systematic"),
        threads=st.get("threads", _threads_default()),
    )
    if study.sample_n >= dgp.N:
        raise ConfigError("study.sample_n must be smaller than population.N")
    return dgp, study


def _fmt(v, spec="{:8.2f}"):
    return " " * (len(spec.format(0.0))) if v is None else spec.format(v)


def summary_table(rows, tau) -> str:
    lines = [f"tau = {tau:.2f}", f"{'estimator':<14}{'E[est]':>8}{'bias':>8}{'SE':>8}{'RMSE':>8}{'bootSE':>8}{'cover':>8}"]
    for r in rows:
        cov = None if r["coverage"] is None else 100 * r["coverage"]
        lines.append(
            f"{r['estimator']:<14}{r['mean']:8.2f}{r['bias']:8.2f}{r['se']:8.2f}{r['rmse']:8.2f}"
            f"{_fmt(r['boot_se'])}{_fmt(cov, '{:7.1f}%')}"
        )
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = resolve_simulation(args)
    dgp, study = build_configs(cfg)
    scenario = cfg["scenario"]
    digest = file_digest([args.config]) if args.config else None
    manifest = make_manifest("simulate", {"resolved": cfg, "argv": vars(args)}, digest, study.seed, __version__)
    if "sweep" in cfg:
        sw = cfg["sweep"]
        res = gamma_sweep(dgp, study, sw.get("gammas", [0.0, 0.25, 0.5, 0.75, 1.0]), sw.get("populations", 20))
        rows = [dict(scenario=scenario, **r) for r in res.rows]
        write_output(format_rows(rows, args.format), args.output, manifest)
        avg_text = format_rows(res.averages, "csv")
        if args.output and args.output != "-":
            if args.averages:
                write_output(format_rows(res.averages, args.format), args.averages)
            sys.stdout.write(avg_text)
        elif args.averages:
            write_output(format_rows(res.averages, args.format), args.averages)
        return EXIT_OK
    pop = generate_population(dgp, replicate_rng(study.seed, POPULATION_STREAM), study.sample_n)
    summ = run_study(pop, study)
    rows = []
    for r in summ.table():
        rows.append(dict(scenario=scenario, tau=summ.tau, mc_se=summ.mc_se(r["estimator"]), **r))
    cols = ["scenario", "estimator", "tau", "mean", "bias", "se", "rmse", "mc_se", "boot_se", "coverage"]
    write_output(format_rows(rows, args.format, cols), args.output, manifest)
    if args.output and args.output != "-":
        sys.stdout.write(summary_table(summ.table(), summ.tau))
        if summ.assignment_redraws or summ.bootstrap_redraws:
            sys.stdout.write(
                f"redraws: {summ.assignment_redraws} assignment, {summ.bootstrap_redraws} bootstrap\n"
            )
    return EXIT_OK


# ---------------------------------------------------------------- compare


def _label_key(group: str, experiment: str) -> int:
    h = hashlib.sha256(f"{group}\x1f{experiment}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def cmd_compare(args) -> int:
    header, rows = read_rows(args.input)
    require_columns(header, (args.outcome, args.treatment, args.weight, args.group, args.experiment), args.input)
    groups = OrderedDict()
    for r in rows:
        g = (r.get(args.group) or "").strip() if args.group else ""
        e = (r.get(args.experiment) or "").strip()
        groups.setdefault((g, e), []).append(r)
    cfg = BootstrapConfig(B=args.B, seed=args.seed)
    out = []
    deltas = []
    for (g, e), rs in groups.items():
        row = dict(group=g if args.group else None, experiment_id=e, sate=None, hh=None, se_diff=None, delta=None,
                   status="ok", error=None)
        try:
            data = rows_to_experiment(rs, args.outcome, args.treatment, args.weight)
            # substream keyed by the experiment's identity, so row order and batch content do not matter
            rep = delta_statistic(data, cfg, rng=replicate_rng(args.seed, _label_key(g, e)), group=g, experiment_id=e)
            row.update(sate=rep.sate_est, hh=rep.hh_est, se_diff=rep.se_diff, delta=rep.delta)
            deltas.append(rep.delta)
        except SurveyExpError as err:
            row.update(status="error", error=f"{type(err).__name__}: {err}")
        out.append(row)
    cols = ["group", "experiment_id", "sate", "hh", "se_diff", "delta", "status", "error"]
    manifest = make_manifest("compare", vars(args), file_digest([args.input]), args.seed, __version__)
    write_output(format_rows(out, args.format, cols), args.output, manifest)
    if args.qq:
        if len(deltas) >= 2:
            theo, obs = qq_points(deltas)
            qrows = [dict(theoretical_q=float(a), observed_q=float(b)) for a, b in zip(theo, obs)]
            write_output(format_rows(qrows, args.format, ["theoretical_q", "observed_q"]), args.qq, manifest)
        else:
            print("warning: fewer than two valid experiments, qq table not written", file=sys.stderr)
    n_bad = sum(r["status"] != "ok" for r in out)
    if n_bad:
        print(f"warning: {n_bad} of {len(out)} experiments failed", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surveyexp", description="Design-based treatment effect estimation for survey experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common_cols(sp):
        sp.add_argument("input", help="delimited text file with a header row")
        sp.add_argument("--outcome", required=True)
        sp.add_argument("--treatment", required=True, help="column of 0/1 values")
        sp.add_argument("--weight", required=True)
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--output", "-o", default=None, help="output path (default stdout)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--B", type=int, default=1000, help="bootstrap replicates")

    e = sub.add_parser("estimate", help="estimate treatment effects from one experiment")
    common_cols(e)
    e.add_argument("--strata", default=None, help="categorical column for post-stratification")
    e.add_argument("--estimators", default=None, help="comma-separated ids: " + ",".join(ESTIMATOR_IDS))
    e.add_argument("--post-stratify", default=None, metavar="RECIPE", help="weights:K, strata or strata+weights:K")
    e.add_argument("--se", choices=("bootstrap", "plugin", "none"), default="bootstrap")
    e.add_argument("--ci-level", type=float, default=0.95)
    e.add_argument("--ci-method", choices=("normal", "percentile"), default="normal")
    e.add_argument("--p", type=float, default=None, help="treated share for single-Hajek variants")
    e.add_argument("--expected-n", type=float, default=None, help="E[n] for ht_mean")
    e.add_argument("--normalize-weights", action="store_true")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    s.add_argument("--scenario", choices=tuple(SCENARIOS), default=None)
    s.add_argument("--config", default=None, help="TOML scenario file")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--output", "-o", default=None)
    s.add_argument("--averages", default=None, help="sweep only: write per-gamma averages here")
    for key, section in KEY_SECTION.items():
        flag = "--" + key.replace("_", "-")
        typ = CONFIG_SCHEMA[section][key][0]
        s.add_argument(flag, dest="opt_" + key, default=None, type=str if typ is list else typ,
                       help=f"override {section}.{key}")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="standardized SATE vs double-Hajek differences per experiment")
    common_cols(c)
    c.add_argument("--group", default=None, help="column naming the survey an experiment belongs to")
    c.add_argument("--experiment", required=True, help="column identifying experiments")
    c.add_argument("--qq", default=None, help="write the qq table here")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits on --help, --version and usage errors
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SurveyExpError as e:
        print(f"data error ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        print(f"internal error ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
