"""Monte Carlo harness: replicate, summarise, and density utilities.

Replication r draws its own PCG64 seed from the scenario's base seed
(see _util.derive_seed), so any subset of replications can be recomputed
in isolation and worker processes need no shared stream.  Results are
reduced in replication order regardless of how many workers ran, which
makes summaries bit-identical across worker counts.

Failures are per estimator, not per replication: a replicate where only
the weighted fits blow up still contributes its OLS and FULL values.
"""

import math
import multiprocessing
from dataclasses import dataclass

import numpy as np

from ._util import PRNG_NAME, SEED_DERIVATION, derive_seed
from .dgp import DgpConfig, generate_sample, make_view, reverse_roles
from .errors import DegenerateInputError, InvalidArgumentError
from .estimators import ESTIMATOR_NAMES, FLAG_FAILED, estimate_all

QUANTILE_LEVELS = (1, 5, 25, 50, 75, 95, 99)


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the benchmark: a model-correctness pair at one size."""

    n: int
    reps: int
    pi_model_correct: bool
    m_model_correct: bool
    reverse: bool = False
    base_seed: int = 0
    estimators: tuple[str, ...] = ESTIMATOR_NAMES

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidArgumentError("n must be at least 2")
        if self.reps < 1:
            raise InvalidArgumentError("reps must be at least 1")
        if self.base_seed < 0:
            raise InvalidArgumentError("base_seed must be nonnegative")
        bad = [nm for nm in self.estimators if nm not in ESTIMATOR_NAMES]
        if bad:
            raise InvalidArgumentError(f"unknown estimator names: {bad}")

    def label(self) -> str:
        tag = (
            f"pi_{'right' if self.pi_model_correct else 'wrong'}"
            f"_m_{'right' if self.m_model_correct else 'wrong'}"
        )
        return tag + ("_reversed" if self.reverse else "")


@dataclass
class EstimatorSummary:
    """Moment and quantile summary of one estimator's sampling distribution.

    variance uses divisor r - 1 and mse divisor r, so the exact identity
    mse = bias**2 + variance * (r - 1) / r holds.  skewness is the
    standardised third central moment with biased (divisor r) moments,
    defined as 0 for constant values.  With a single value the variance
    is NaN.
    """

    n_used: int
    failures: int
    mean: float
    bias: float
    variance: float
    mse: float
    skewness: float
    quantiles: dict[int, float]
    minimum: float
    maximum: float


@dataclass
class MCSummary:
    scenario: ScenarioSpec
    mu_true: float
    prng: str
    seed_derivation: str
    rows: dict[str, EstimatorSummary]


@dataclass
class DensitySeries:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_used: int
    clip_quantile: float | None = None


def summarize(values: np.ndarray, mu_true: float) -> EstimatorSummary:
    """Summary statistics of a vector of estimates against the truth."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidArgumentError("no values to summarise")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("values contain non-finite entries")
    r = values.size
    mean = math.fsum(values) / r
    bias = mean - mu_true
    dev = values - mean
    variance = math.fsum(dev * dev) / (r - 1) if r > 1 else math.nan
    mse = math.fsum((values - mu_true) ** 2) / r
    m2 = math.fsum(dev * dev) / r
    if m2 == 0.0:
        skewness = 0.0
    else:
        # standardise first: m3 / m2**1.5 underflows when the spread is
        # tiny.  Cube by multiplication; array ** 3 is not sign-symmetric.
        z = dev / math.sqrt(m2)
        skewness = math.fsum(z * z * z) / r
    qs = np.percentile(values, QUANTILE_LEVELS)  # linear interpolation
    return EstimatorSummary(
        n_used=r,
        failures=0,
        mean=mean,
        bias=bias,
        variance=variance,
        mse=mse,
        skewness=skewness,
        quantiles=dict(zip(QUANTILE_LEVELS, (float(q) for q in qs))),
        minimum=float(np.min(values)),
        maximum=float(np.max(values)),
    )


def _empty_summary(failures: int) -> EstimatorSummary:
    nan = math.nan
    return EstimatorSummary(
        n_used=0,
        failures=failures,
        mean=nan,
        bias=nan,
        variance=nan,
        mse=nan,
        skewness=nan,
        quantiles={q: nan for q in QUANTILE_LEVELS},
        minimum=nan,
        maximum=nan,
    )


def _replicate(args: tuple[int, ScenarioSpec, DgpConfig]) -> dict[str, float | None]:
    r, spec, cfg = args
    sample = generate_sample(spec.n, derive_seed(spec.base_seed, r), cfg)
    if spec.reverse:
        sample = reverse_roles(sample)
    view = make_view(sample, spec.pi_model_correct, spec.m_model_correct)
    result = estimate_all(view, sample, spec.estimators)
    return {
        name: (None if result.flags[name] == FLAG_FAILED else result.values[name])
        for name in spec.estimators
    }


def run_scenario(
    spec: ScenarioSpec,
    cfg: DgpConfig | None = None,
    workers: int = 1,
) -> MCSummary:
    """Run all replications of a scenario and summarise per estimator.

    workers > 1 farms replications out to a process pool; the reduction
    still walks results in replication order, so the summary does not
    depend on the worker count.
    """
    if cfg is None:
        cfg = DgpConfig()
    if workers < 1:
        raise InvalidArgumentError("workers must be at least 1")
    tasks = [(r, spec, cfg) for r in range(spec.reps)]
    if workers == 1 or spec.reps == 1:
        results = [_replicate(t) for t in tasks]
    else:
        ctx = multiprocessing.get_context()
        chunk = max(1, spec.reps // (4 * workers))
        with ctx.Pool(workers) as pool:
            results = pool.map(_replicate, tasks, chunksize=chunk)

    rows: dict[str, EstimatorSummary] = {}
    for name in spec.estimators:
        vals = [res[name] for res in results if res[name] is not None]
        failures = spec.reps - len(vals)
        if vals:
            row = summarize(np.array(vals), mu_true=cfg.intercept)
            row.failures = failures
        else:
            row = _empty_summary(failures)
        rows[name] = row
    return MCSummary(
        scenario=spec,
        mu_true=cfg.intercept,
        prng=PRNG_NAME,
        seed_derivation=SEED_DERIVATION,
        rows=rows,
    )


def density_points(
    values: np.ndarray,
    bandwidth: float | str = "auto",
    clip_quantile: float | None = None,
) -> DensitySeries:
    """Gaussian kernel density of a sample on a fixed 512-point grid.

    The grid spans [min, max] padded by three bandwidths.  "auto" uses
    0.9 * min(sd, IQR / 1.34) * m**(-1/5); if the IQR is zero the sd
    alone is used.  clip_quantile in (0, 0.5) drops values outside the
    [q, 1 - q] sample quantiles before anything else is computed.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("values contain non-finite entries")
    if clip_quantile is not None:
        if not 0.0 < clip_quantile < 0.5:
            raise InvalidArgumentError("clip_quantile must lie in (0, 0.5)")
        lo, hi = np.percentile(values, [100 * clip_quantile, 100 * (1 - clip_quantile)])
        values = values[(values >= lo) & (values <= hi)]
    m = values.size
    if m < 2 or np.min(values) == np.max(values):
        raise DegenerateInputError("need at least two distinct values")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise InvalidArgumentError(f"unknown bandwidth rule {bandwidth!r}")
        sd = float(np.std(values, ddof=1))
        q25, q75 = np.percentile(values, [25, 75])
        spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
        bw = 0.9 * spread * m ** (-0.2)
        if bw <= 0:
            raise DegenerateInputError("automatic bandwidth collapsed to zero")
    else:
        bw = float(bandwidth)
        if not bw > 0:
            raise InvalidArgumentError("bandwidth must be positive")
    grid = np.linspace(np.min(values) - 3 * bw, np.max(values) + 3 * bw, 512)
    norm = 1.0 / (m * bw * math.sqrt(2 * math.pi))
    density = np.empty(512)
    step = max(1, int(5e6 // max(m, 1)))
    for start in range(0, 512, step):
        block = grid[start : start + step, None]
        density[start : start + step] = norm * np.sum(
            np.exp(-0.5 * ((block - values[None, :]) / bw) ** 2), axis=1
        )
    return DensitySeries(
        grid=grid,
        density=density,
        bandwidth=bw,
        n_used=m,
        clip_quantile=clip_quantile,
    )
