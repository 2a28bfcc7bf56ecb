"""Command-line interface and the file formats shared with it.

Subcommands:
  simulate     run benchmark scenarios from a JSON config; writes
               results.csv and metadata.json into the output directory
  estimate     run the estimator suite once on a dataset CSV
  sensitivity  estimate under a grid of model specs with homogeneity tests
  density      kernel density series for a column of values

Dataset CSV format ("t", "y", then covariate columns, header required):
t is 0/1, y may be blank where t is 0, covariates must be numeric
everywhere.  Results CSV columns are fixed:

  scenario,n,reps,estimator,bias,var,mse,skewness,
  q01,q05,q25,q50,q75,q95,q99,min,max,failures

Floats are written with repr (shortest round-trip form) and files use
"\n" line endings, so identical inputs give byte-identical outputs on
any platform and with any worker count.

Exit codes: 0 success, 2 configuration problem, 3 data problem.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._util import PRNG_NAME, SEED_DERIVATION
from .dgp import AnalysisView, DgpConfig
from .errors import ConfigError, DataError, DrmeanError
from .estimators import ESTIMATOR_NAMES, estimate_all
from .mc import QUANTILE_LEVELS, ScenarioSpec, run_scenario
from .sensitivity import DR_ESTIMATORS, ModelSpec, run_sensitivity
from .mc import density_points

RESULT_COLUMNS = (
    "scenario",
    "n",
    "reps",
    "estimator",
    "bias",
    "var",
    "mse",
    "skewness",
    "q01",
    "q05",
    "q25",
    "q50",
    "q75",
    "q95",
    "q99",
    "min",
    "max",
    "failures",
)

_DGP_KEYS = {"intercept", "slope", "z_star_weights", "propensity_coefficients", "noise_sd"}


@dataclass
class RunConfig:
    """Validated simulate configuration."""

    base_seed: int
    reps: int
    sample_sizes: tuple[int, ...]
    scenarios: tuple[tuple[bool, bool], ...]  # (pi_correct, m_correct)
    reverse_roles: bool
    estimators: tuple[str, ...]
    dgp: DgpConfig
    raw: dict


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _no_unknown_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    _require(not unknown, f"unknown key(s) in {where}: {', '.join(unknown)}")


def _load_json(path: str, what: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{what} {path} is not valid JSON (line {exc.lineno}, column {exc.colno}): "
            f"{exc.msg}"
        ) from None
    _require(isinstance(obj, dict), f"{what} {path} must hold a JSON object")
    return obj


def load_run_config(path: str) -> RunConfig:
    raw = _load_json(path, "config")
    allowed = {
        "base_seed",
        "reps",
        "sample_sizes",
        "scenarios",
        "reverse_roles",
        "estimators",
        "dgp",
    }
    _no_unknown_keys(raw, allowed, "config")
    _require("base_seed" in raw, "config requires base_seed")
    _require("reps" in raw, "config requires reps")
    _require("sample_sizes" in raw, "config requires sample_sizes")
    base_seed = raw["base_seed"]
    _require(
        isinstance(base_seed, int) and not isinstance(base_seed, bool)
        and base_seed >= 0,
        "base_seed must be a nonnegative integer",
    )
    reps = raw["reps"]
    _require(isinstance(reps, int) and not isinstance(reps, bool) and reps >= 1,
             "reps must be an integer >= 1")
    sizes = raw["sample_sizes"]
    _require(
        isinstance(sizes, list) and sizes
        and all(isinstance(n, int) and not isinstance(n, bool) and n >= 2 for n in sizes),
        "sample_sizes must be a nonempty list of integers >= 2",
    )
    scenarios_raw = raw.get(
        "scenarios",
        [
            {"pi_correct": True, "m_correct": True},
            {"pi_correct": True, "m_correct": False},
            {"pi_correct": False, "m_correct": True},
            {"pi_correct": False, "m_correct": False},
        ],
    )
    _require(isinstance(scenarios_raw, list) and scenarios_raw,
             "scenarios must be a nonempty list")
    scenarios = []
    for k, sc in enumerate(scenarios_raw):
        _require(isinstance(sc, dict), f"scenarios[{k}] must be an object")
        _no_unknown_keys(sc, {"pi_correct", "m_correct"}, f"scenarios[{k}]")
        _require(
            isinstance(sc.get("pi_correct"), bool) and isinstance(sc.get("m_correct"), bool),
            f"scenarios[{k}] requires boolean pi_correct and m_correct",
        )
        scenarios.append((sc["pi_correct"], sc["m_correct"]))
    reverse = raw.get("reverse_roles", False)
    _require(isinstance(reverse, bool), "reverse_roles must be a boolean")
    estimators = raw.get("estimators", list(ESTIMATOR_NAMES))
    _require(
        isinstance(estimators, list) and estimators
        and all(isinstance(e, str) for e in estimators),
        "estimators must be a nonempty list of names",
    )
    bad = [e for e in estimators if e not in ESTIMATOR_NAMES]
    _require(not bad, f"unknown estimator name(s): {', '.join(bad)}")
    dgp_raw = raw.get("dgp", {})
    _require(isinstance(dgp_raw, dict), "dgp must be an object")
    _no_unknown_keys(dgp_raw, _DGP_KEYS, "dgp")
    kwargs = dict(dgp_raw)
    for key in ("z_star_weights", "propensity_coefficients"):
        if key in kwargs:
            _require(isinstance(kwargs[key], list), f"dgp.{key} must be a list")
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    try:
        dgp_cfg = DgpConfig(**kwargs)
    except DrmeanError as exc:
        raise ConfigError(f"invalid dgp settings: {exc}") from None
    return RunConfig(
        base_seed=base_seed,
        reps=reps,
        sample_sizes=tuple(sizes),
        scenarios=tuple(scenarios),
        reverse_roles=reverse,
        estimators=tuple(estimators),
        dgp=dgp_cfg,
        raw=raw,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _sha256_of(obj: dict) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json_clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


# ---------------------------------------------------------------- datasets


def write_dataset(path: str, T, Y, covariates, names: list[str] | None = None) -> None:
    """Write a dataset CSV (t, y, covariates); y is blank where t == 0."""
    T = np.asarray(T)
    Y = np.asarray(Y, dtype=float)
    covariates = np.asarray(covariates, dtype=float)
    p = covariates.shape[1]
    if names is None:
        names = [f"x{j + 1}" for j in range(p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "y"] + list(names))
        for i in range(len(T)):
            y_cell = _fmt(Y[i]) if T[i] == 1 else ""
            writer.writerow([str(int(T[i])), y_cell] + [_fmt(v) for v in covariates[i]])


def read_dataset(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Read a dataset CSV.  Returns (T, Y with NaN where missing, X, names).

    Outcome values supplied on nonrespondent rows are ignored with a
    single warning on stderr; every other malformedness is a DataError
    naming the offending row.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "t" not in header or "y" not in header:
        raise DataError(f"{path}: header must contain 't' and 'y' columns")
    t_col, y_col = header.index("t"), header.index("y")
    x_cols = [k for k in range(len(header)) if k not in (t_col, y_col)]
    names = [header[k] for k in x_cols]
    t_vals, y_vals, x_vals = [], [], []
    ignored_y = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        cell = row[t_col].strip()
        if cell not in ("0", "1"):
            raise DataError(f"{path}: row {lineno}: t must be 0 or 1, got {cell!r}")
        t = int(cell)
        y_cell = row[y_col].strip()
        if t == 1:
            try:
                y = float(y_cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno}: respondent outcome {y_cell!r} is not numeric"
                ) from None
            if not math.isfinite(y):
                raise DataError(f"{path}: row {lineno}: respondent outcome is not finite")
        else:
            if y_cell:
                ignored_y += 1
            y = math.nan
        xs = []
        for k in x_cols:
            try:
                v = float(row[k])
            except ValueError:
                raise DataError(
                    f"{path}: row {lineno}: covariate {header[k]!r} value {row[k]!r} "
                    "is not numeric"
                ) from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {lineno}: covariate {header[k]!r} is not finite")
            xs.append(v)
        t_vals.append(t)
        y_vals.append(y)
        x_vals.append(xs)
    if not t_vals:
        raise DataError(f"{path}: no data rows")
    if ignored_y:
        print(
            f"warning: ignored outcome values on {ignored_y} nonrespondent row(s)",
            file=sys.stderr,
        )
    return (
        np.array(t_vals, dtype=np.int64),
        np.array(y_vals),
        np.array(x_vals),
        names,
    )


def _file_sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- simulate


def results_csv_text(summaries: list) -> str:
    """Render MCSummary objects into the results CSV (fixed column order)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for summary in summaries:
        spec = summary.scenario
        for name in spec.estimators:
            row = summary.rows[name]
            writer.writerow(
                [
                    spec.label(),
                    str(spec.n),
                    str(spec.reps),
                    name,
                    _fmt(row.bias),
                    _fmt(row.variance),
                    _fmt(row.mse),
                    _fmt(row.skewness),
                ]
                + [_fmt(row.quantiles[q]) for q in QUANTILE_LEVELS]
                + [_fmt(row.minimum), _fmt(row.maximum), str(row.failures)]
            )
    return buf.getvalue()


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    reverse = config.reverse_roles or args.reverse
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    failure_counts: dict[str, int] = {}
    for pi_correct, m_correct in config.scenarios:
        for n in config.sample_sizes:
            spec = ScenarioSpec(
                n=n,
                reps=config.reps,
                pi_model_correct=pi_correct,
                m_model_correct=m_correct,
                reverse=reverse,
                base_seed=config.base_seed,
                estimators=config.estimators,
            )
            summary = run_scenario(spec, config.dgp, workers=args.workers)
            summaries.append(summary)
            for name, row in summary.rows.items():
                if row.failures:
                    failure_counts[f"{spec.label()}:n={n}:{name}"] = row.failures
    (out_dir / "results.csv").write_text(results_csv_text(summaries))
    metadata = {
        "package_version": __version__,
        "prng": PRNG_NAME,
        "seed_derivation": SEED_DERIVATION,
        "base_seed": config.base_seed,
        "reverse_roles": reverse,
        "mu_true": summaries[0].mu_true,
        "config": config.raw,
        "config_sha256": _sha256_of(config.raw),
        "failure_counts": failure_counts,
    }
    (out_dir / "metadata.json").write_text(
        json.dumps(metadata, indent=2, sort_keys=True) + "\n"
    )
    return 0


# ---------------------------------------------------------------- estimate


def _select_columns(names: list[str], spec: str | None, what: str) -> list[int]:
    if spec is None:
        return list(range(len(names)))
    wanted = [s.strip() for s in spec.split(",") if s.strip()]
    if not wanted:
        raise ConfigError(f"{what} must name at least one column")
    missing = [w for w in wanted if w not in names]
    if missing:
        raise ConfigError(f"{what}: unknown column(s) {', '.join(missing)}")
    return [names.index(w) for w in wanted]


def cmd_estimate(args: argparse.Namespace) -> int:
    T, Y, X, names = read_dataset(args.data)
    pi_idx = _select_columns(names, args.pi_cols, "--pi-cols")
    m_idx = _select_columns(names, args.m_cols, "--m-cols")
    if args.estimators is None:
        which = tuple(nm for nm in ESTIMATOR_NAMES if nm != "FULL")
    else:
        which = tuple(s.strip() for s in args.estimators.split(",") if s.strip())
        bad = [nm for nm in which if nm not in ESTIMATOR_NAMES]
        if bad:
            raise ConfigError(f"unknown estimator name(s): {', '.join(bad)}")
    ones = np.ones((len(T), 1))
    # ascontiguousarray: fancy column selection yields Fortran order, which
    # would change BLAS rounding relative to a plain [1, X] design
    view = AnalysisView(
        design_pi=np.ascontiguousarray(np.hstack([ones, X[:, pi_idx]])),
        design_m=np.ascontiguousarray(np.hstack([ones, X[:, m_idx]])),
        T=T,
        y_observed=Y,
    )
    result = estimate_all(view, None, which)
    diag = result.diagnostics
    payload = {
        "values": {k: _json_clean(v) for k, v in result.values.items()},
        "flags": result.flags,
        "messages": result.messages,
        "weight_diagnostics": None
        if diag is None
        else {
            "min_pi": _json_clean(diag.min_pi),
            "max_inv_pi_respondents": _json_clean(diag.max_inv_pi_respondents),
            "max_inv_pi_nonrespondents": _json_clean(diag.max_inv_pi_nonrespondents),
            "var_inv_pi": _json_clean(diag.var_inv_pi),
        },
        "metadata": {
            "package_version": __version__,
            "n": int(len(T)),
            "respondents": int((T == 1).sum()),
            "pi_cols": [names[k] for k in pi_idx],
            "m_cols": [names[k] for k in m_idx],
            "data_sha256": _file_sha256(args.data),
        },
    }
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


# ------------------------------------------------------------- sensitivity


def load_sensitivity_config(path: str, names: list[str]) -> dict:
    raw = _load_json(path, "config")
    allowed = {"estimator", "boot_reps", "seed", "propensity_models", "outcome_models"}
    _no_unknown_keys(raw, allowed, "config")
    _require("estimator" in raw, "config requires estimator")
    _require(
        raw["estimator"] in DR_ESTIMATORS,
        f"estimator must be one of {', '.join(DR_ESTIMATORS)}",
    )
    boot_reps = raw.get("boot_reps", 500)
    _require(
        isinstance(boot_reps, int) and not isinstance(boot_reps, bool) and boot_reps >= 2,
        "boot_reps must be an integer >= 2",
    )
    seed = raw.get("seed", 0)
    _require(
        isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
        "seed must be a nonnegative integer",
    )

    def parse_models(key: str, role: str) -> tuple[ModelSpec, ...]:
        _require(key in raw, f"config requires {key}")
        models = raw[key]
        _require(isinstance(models, list) and models, f"{key} must be a nonempty list")
        specs = []
        for k, spec in enumerate(models):
            _require(isinstance(spec, dict), f"{key}[{k}] must be an object")
            _no_unknown_keys(spec, {"covariates", "kind"}, f"{key}[{k}]")
            cols = spec.get("covariates")
            _require(
                isinstance(cols, list) and cols and all(isinstance(c, str) for c in cols),
                f"{key}[{k}] requires a nonempty list of covariate names",
            )
            missing = [c for c in cols if c not in names]
            _require(not missing, f"{key}[{k}]: unknown column(s) {', '.join(missing)}")
            kind = spec.get("kind")
            _require(kind is None or isinstance(kind, str), f"{key}[{k}].kind must be a string")
            try:
                specs.append(
                    ModelSpec(
                        role=role,
                        covariates=tuple(names.index(c) for c in cols),
                        kind=kind,
                    )
                )
            except DrmeanError as exc:
                raise ConfigError(f"{key}[{k}]: {exc}") from None
        return tuple(specs)

    return {
        "estimator": raw["estimator"],
        "boot_reps": boot_reps,
        "seed": seed,
        "p_specs": parse_models("propensity_models", "propensity"),
        "o_specs": parse_models("outcome_models", "outcome"),
        "raw": raw,
    }


def cmd_sensitivity(args: argparse.Namespace) -> int:
    T, Y, X, names = read_dataset(args.data)
    config = load_sensitivity_config(args.config, names)
    try:
        matrix = run_sensitivity(
            X,
            T,
            Y,
            config["p_specs"],
            config["o_specs"],
            config["estimator"],
            boot_reps=config["boot_reps"],
            seed=config["seed"],
        )
    except DrmeanError as exc:
        raise ConfigError(str(exc)) from None
    payload = matrix.to_dict()
    payload["metadata"] = {
        "package_version": __version__,
        "prng": PRNG_NAME,
        "seed_derivation": SEED_DERIVATION,
        "config_sha256": _sha256_of(config["raw"]),
        "data_sha256": _file_sha256(args.data),
        "covariate_names": names,
    }
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


# ----------------------------------------------------------------- density


def read_values(path: str, column: str | None) -> np.ndarray:
    """Read a numeric column from a CSV (header optional for one column)."""
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")

    def is_number(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = rows[0]
    has_header = not all(is_number(c) for c in header if c.strip())
    if has_header:
        names = [h.strip() for h in header]
        if column is not None:
            if column not in names:
                raise DataError(f"{path}: no column named {column!r}")
            idx = names.index(column)
        elif "value" in names:
            idx = names.index("value")
        elif len(names) == 1:
            idx = 0
        else:
            raise DataError(f"{path}: specify --column (candidates: {', '.join(names)})")
        body = rows[1:]
    else:
        if column is not None:
            raise DataError(f"{path}: file has no header to look up {column!r}")
        if len(header) != 1:
            raise DataError(f"{path}: headerless input must have exactly one column")
        idx = 0
        body = rows
    values = []
    start = 2 if has_header else 1
    for lineno, row in enumerate(body, start=start):
        if idx >= len(row):
            raise DataError(f"{path}: row {lineno} has no field {idx + 1}")
        cell = row[idx].strip()
        try:
            v = float(cell)
        except ValueError:
            raise DataError(f"{path}: row {lineno}: {cell!r} is not numeric") from None
        if not math.isfinite(v):
            raise DataError(f"{path}: row {lineno}: value is not finite")
        values.append(v)
    if not values:
        raise DataError(f"{path}: no values")
    return np.array(values)


def cmd_density(args: argparse.Namespace) -> int:
    values = read_values(args.data, args.column)
    if args.bandwidth != "auto":
        try:
            bandwidth = float(args.bandwidth)
        except ValueError:
            raise ConfigError(
                f"--bandwidth must be 'auto' or a positive number, got {args.bandwidth!r}"
            ) from None
    else:
        bandwidth = "auto"
    try:
        series = density_points(values, bandwidth, args.clip_quantile)
    except DrmeanError as exc:
        raise DataError(str(exc)) from None
    buf = io.StringIO()
    buf.write(f"# package_version={__version__}\n")
    buf.write(f"# bandwidth={_fmt(series.bandwidth)}\n")
    clip = "" if series.clip_quantile is None else _fmt(series.clip_quantile)
    buf.write(f"# clip_quantile={clip}\n")
    buf.write(f"# n_used={series.n_used}\n")
    buf.write(f"# data_sha256={_file_sha256(args.data)}\n")
    buf.write("grid,density\n")
    for g, d in zip(series.grid, series.density):
        buf.write(f"{_fmt(g)},{_fmt(d)}\n")
    _write_text(args.out, buf.getvalue())
    return 0


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drmean",
        description="Doubly robust estimation of an outcome mean under "
        "missing-at-random data, with a simulation benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run benchmark scenarios from a config")
    p_sim.add_argument("--config", required=True, help="JSON run configuration")
    p_sim.add_argument("--out", default=".", help="output directory")
    p_sim.add_argument("--workers", type=int, default=1, help="worker processes")
    p_sim.add_argument(
        "--reverse", action="store_true", help="swap respondent and nonrespondent roles"
    )
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="estimate the outcome mean on a dataset")
    p_est.add_argument("--data", required=True, help="dataset CSV (t, y, covariates)")
    p_est.add_argument("--pi-cols", default=None, help="comma-separated response-model columns")
    p_est.add_argument("--m-cols", default=None, help="comma-separated outcome-model columns")
    p_est.add_argument("--estimators", default=None, help="comma-separated estimator names")
    p_est.add_argument("--out", default="-", help="output JSON path (default stdout)")
    p_est.set_defaults(func=cmd_estimate)

    p_sens = sub.add_parser("sensitivity", help="model-grid sensitivity analysis")
    p_sens.add_argument("--data", required=True, help="dataset CSV (t, y, covariates)")
    p_sens.add_argument("--config", required=True, help="JSON model-grid configuration")
    p_sens.add_argument("--out", default="-", help="output JSON path (default stdout)")
    p_sens.set_defaults(func=cmd_sensitivity)

    p_den = sub.add_parser("density", help="kernel density series for sampled values")
    p_den.add_argument("--data", required=True, help="CSV holding the values")
    p_den.add_argument("--column", default=None, help="column name to read")
    p_den.add_argument("--bandwidth", default="auto", help="'auto' or a positive number")
    p_den.add_argument("--clip-quantile", type=float, default=None,
                       help="drop values outside [q, 1-q] first")
    p_den.add_argument("--out", default="-", help="output CSV path (default stdout)")
    p_den.set_defaults(func=cmd_density)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DrmeanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
