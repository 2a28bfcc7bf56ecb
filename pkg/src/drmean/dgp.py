"""Benchmark data-generating process for missing-at-random outcome data.

One draw produces latent standard-normal covariates Z, an outcome Y that
is linear in a weighted sum of the Z's, a response indicator T whose
probability is logistic in Z, and nonlinear transforms X of Z.  Analyses
that regress on Z use correctly specified models; analyses that regress
on X use misspecified ones, although X carries the same information.

Reproducibility contract: a (n, seed, config) triple fixes every array
bit for bit.  Each unit consumes six uniforms from a PCG64 stream in a
fixed order (four for Z, one for the outcome noise, one for the response
draw), and normals come from the inverse CDF, so no rejection step can
desynchronise the stream.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri

from .errors import InvalidArgumentError

_BASE_WEIGHTS = (2.0, 1.0, 1.0, 1.0)
_BASE_PROPENSITY = (0.0, -1.0, 0.5, -0.25, -0.1)


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the generating process.

    Defaults reproduce the standard benchmark: Y has mean 210, the outcome
    signal is 13.7 * (2 Z1 + Z2 + Z3 + Z4), unit-variance Gaussian noise,
    and response probability expit(-Z1 + 0.5 Z2 - 0.25 Z3 - 0.1 Z4) with
    zero intercept (propensity_coefficients[0]).
    """

    intercept: float = 210.0
    slope: float = 13.7
    z_star_weights: tuple[float, ...] = _BASE_WEIGHTS
    propensity_coefficients: tuple[float, ...] = _BASE_PROPENSITY
    noise_sd: float = 1.0

    def __post_init__(self) -> None:
        if len(self.z_star_weights) != 4:
            raise InvalidArgumentError("z_star_weights must have length 4")
        if len(self.propensity_coefficients) != 5:
            raise InvalidArgumentError(
                "propensity_coefficients must have length 5 (intercept first)"
            )
        if not self.noise_sd > 0:
            raise InvalidArgumentError("noise_sd must be positive")


@dataclass
class FullSample:
    """One complete draw, including quantities hidden from the analyst."""

    n: int
    Z: np.ndarray        # (n, 4) latent covariates
    X: np.ndarray        # (n, 4) observed nonlinear transforms
    pi_true: np.ndarray  # (n,) true response probabilities, in (0, 1)
    T: np.ndarray        # (n,) response indicators, int, 0 or 1
    Y: np.ndarray        # (n,) complete outcomes


@dataclass
class AnalysisView:
    """What an analyst sees: designs, response indicator, observed outcomes.

    y_observed holds NaN where T == 0; no code may read those entries.
    """

    design_pi: np.ndarray  # (n, 5) design for the response model
    design_m: np.ndarray   # (n, 5) design for the outcome model
    T: np.ndarray
    y_observed: np.ndarray


def transform_covariates(Z: np.ndarray) -> np.ndarray:
    """Map latent Z to the observed nonlinear covariates X.

    Pure function of Z:
        X1 = exp(Z1 / 2)
        X2 = Z2 / (1 + exp(Z1)) + 10
        X3 = (Z1 * Z3 / 25 + 0.6) ** 3
        X4 = (Z2 + Z4 + 20) ** 2
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != 4:
        raise InvalidArgumentError("Z must have shape (n, 4)")
    x1 = np.exp(Z[:, 0] / 2.0)
    x2 = Z[:, 1] / (1.0 + np.exp(Z[:, 0])) + 10.0
    x3 = (Z[:, 0] * Z[:, 2] / 25.0 + 0.6) ** 3
    x4 = (Z[:, 1] + Z[:, 3] + 20.0) ** 2
    return np.column_stack([x1, x2, x3, x4])


def generate_sample(n: int, seed: int, cfg: DgpConfig | None = None) -> FullSample:
    """Draw a sample of size n, fully determined by (n, seed, cfg)."""
    if n < 1:
        raise InvalidArgumentError("n must be at least 1")
    if cfg is None:
        cfg = DgpConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((n, 6))
    # random() can return exactly 0, where ndtri gives -inf
    u[:, :5] = np.maximum(u[:, :5], 1e-300)
    Z = ndtri(u[:, :4])
    eps = ndtri(u[:, 4])
    weights = np.asarray(cfg.z_star_weights)
    Y = cfg.intercept + cfg.slope * (Z @ weights) + cfg.noise_sd * eps
    coef = np.asarray(cfg.propensity_coefficients)
    pi_true = expit(coef[0] + Z @ coef[1:])
    T = (u[:, 5] < pi_true).astype(np.int64)
    X = transform_covariates(Z)
    return FullSample(n=n, Z=Z, X=X, pi_true=pi_true, T=T, Y=Y)


def reverse_roles(sample: FullSample) -> FullSample:
    """Swap respondents and nonrespondents: T -> 1 - T, pi -> 1 - pi.

    Everything else (Z, X, Y) is shared with the input sample, so the
    operation is an involution up to array identity.
    """
    return FullSample(
        n=sample.n,
        Z=sample.Z,
        X=sample.X,
        pi_true=1.0 - sample.pi_true,
        T=1 - sample.T,
        Y=sample.Y,
    )


def make_view(
    sample: FullSample,
    pi_model_correct: bool,
    m_model_correct: bool,
) -> AnalysisView:
    """Build the analyst's view of a sample.

    A correct model regresses on [1, Z]; a misspecified one on [1, X].
    Outcomes are masked to NaN wherever T == 0.
    """
    ones = np.ones((sample.n, 1))
    design_z = np.hstack([ones, sample.Z])
    design_x = np.hstack([ones, sample.X])
    return AnalysisView(
        design_pi=design_z if pi_model_correct else design_x,
        design_m=design_z if m_model_correct else design_x,
        T=sample.T.copy(),
        y_observed=np.where(sample.T == 1, sample.Y, np.nan),
    )
