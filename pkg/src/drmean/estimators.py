"""Point estimators of the outcome mean and the pipeline that runs them all.

Estimator names are part of the output schema (CSV and JSON) and never
change spelling:

  OLS         plug-in mean of the unweighted outcome regression
  HT          unnormalised inverse-probability weighting
  IPW_POP     weights normalised to sum to one
  DR_REG      augmented IPW with the unweighted regression
  DR_WLS      plug-in mean of the inverse-weighted regression
  DR_IPW_NR   plug-in mean of the weighted fit with pi_hat as covariate
  DR_EXT_REG  plug-in mean of the fit with 1/pi_hat as covariate
  B_DR_REG    bounded augmented IPW (correction renormalised)
  B_DR_EXT    bounded form under the one-parameter extended propensity
  FULL        mean of the complete outcomes (simulation reference)

The three plug-in doubly robust forms (DR_WLS, DR_IPW_NR, DR_EXT_REG)
coincide with their augmented-IPW counterparts because each fit zeroes
the inverse-weighted respondent residual moment by construction; they
are reported through the plug-in route, which is bounded by the range
of the fitted values.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import linmod
from .dgp import AnalysisView, FullSample
from .errors import (
    DrmeanError,
    InvalidArgumentError,
    InvalidWeightError,
    UndefinedEstimatorError,
)

ESTIMATOR_NAMES = (
    "OLS",
    "HT",
    "IPW_POP",
    "DR_REG",
    "DR_WLS",
    "DR_IPW_NR",
    "DR_EXT_REG",
    "B_DR_REG",
    "B_DR_EXT",
    "FULL",
)

FLAG_OK = "ok"
FLAG_OUT_OF_RANGE = "out_of_observed_range"
FLAG_FAILED = "fit_failed"


def _respondent_weights(pi_hat, T):
    T = np.asarray(T)
    resp = T == 1
    pi_hat = np.asarray(pi_hat, dtype=float)
    if pi_hat.shape != T.shape:
        raise InvalidArgumentError("pi_hat length must match T")
    if not resp.any():
        raise UndefinedEstimatorError("no respondents")
    pr = pi_hat[resp]
    if np.any(pr <= 0) or not np.all(np.isfinite(pr)):
        raise InvalidWeightError("pi_hat must be finite and positive on respondents")
    return resp, 1.0 / pr


def mu_ht(pi_hat, T, Y) -> float:
    """Unnormalised IPW mean: P_n[T y / pi_hat].  Unbounded."""
    resp, w = _respondent_weights(pi_hat, T)
    y = np.asarray(Y, dtype=float)[resp]
    return math.fsum(w * y) / len(np.asarray(T))


def mu_ipw_pop(pi_hat, T, Y) -> float:
    """Normalised IPW mean, a convex combination of observed outcomes."""
    resp, w = _respondent_weights(pi_hat, T)
    y = np.asarray(Y, dtype=float)[resp]
    return math.fsum(w * y) / math.fsum(w)


def mu_aipw(pi_hat, m_hat, T, Y) -> float:
    """Augmented IPW: P_n[m_hat] + P_n[T (y - m_hat) / pi_hat]."""
    resp, w = _respondent_weights(pi_hat, T)
    m_hat = np.asarray(m_hat, dtype=float)
    y = np.asarray(Y, dtype=float)[resp]
    n = len(np.asarray(T))
    return math.fsum(m_hat) / n + math.fsum(w * (y - m_hat[resp])) / n


def mu_b_dr(pi_hat, m_hat, T, Y) -> float:
    """Bounded variant: the correction term is divided by P_n[T / pi_hat].

    Equals P_n[m_hat] plus a weighted mean of respondent residuals, so it
    can never leave [min m_hat, max m_hat] by more than the largest
    absolute residual.
    """
    resp, w = _respondent_weights(pi_hat, T)
    m_hat = np.asarray(m_hat, dtype=float)
    y = np.asarray(Y, dtype=float)[resp]
    n = len(np.asarray(T))
    denom = math.fsum(w)
    if denom <= 0:
        raise UndefinedEstimatorError("sum of inverse weights is not positive")
    return math.fsum(m_hat) / n + math.fsum(w * (y - m_hat[resp])) / denom


def mu_from_regression(m_hat) -> float:
    """Plug-in mean of fitted values: P_n[m_hat]."""
    m_hat = np.asarray(m_hat, dtype=float)
    if m_hat.size == 0:
        raise UndefinedEstimatorError("no fitted values")
    return math.fsum(m_hat) / m_hat.size


def mu_full(Y) -> float:
    """Mean of the complete outcomes (available in simulation only)."""
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        raise UndefinedEstimatorError("no outcomes")
    if not np.all(np.isfinite(Y)):
        raise InvalidArgumentError("complete outcomes contain non-finite values")
    return math.fsum(Y) / Y.size


@dataclass
class EstimateSet:
    """Results of estimate_all: values keyed by estimator name.

    flags[name] is "ok", "out_of_observed_range" (value defined but
    outside the respondent outcome range) or "fit_failed"; messages
    carries the failure reason for the last case.  values has an entry
    for every requested name, NaN when the fit failed.
    """

    values: dict[str, float]
    flags: dict[str, str]
    messages: dict[str, str] = field(default_factory=dict)
    diagnostics: linmod.WeightDiagnostics | None = None


# fits needed per estimator: (propensity, reg, wls, ext_reg, ipw_nr, extended)
_NEEDS = {
    "OLS": (False, True, False, False, False, False),
    "HT": (True, False, False, False, False, False),
    "IPW_POP": (True, False, False, False, False, False),
    "DR_REG": (True, True, False, False, False, False),
    "DR_WLS": (True, False, True, False, False, False),
    "DR_IPW_NR": (True, False, False, False, True, False),
    "DR_EXT_REG": (True, False, False, True, False, False),
    "B_DR_REG": (True, True, False, False, False, False),
    "B_DR_EXT": (True, True, False, False, False, True),
    "FULL": (False, False, False, False, False, False),
}


class _Pipeline:
    """Lazy, memoised model fits shared across the requested estimators."""

    def __init__(self, view: AnalysisView):
        self.view = view
        self._cache: dict[str, object] = {}

    def _get(self, key: str, build):
        if key not in self._cache:
            try:
                self._cache[key] = build()
            except DrmeanError as exc:
                self._cache[key] = exc
        out = self._cache[key]
        if isinstance(out, DrmeanError):
            raise out
        return out

    def propensity(self) -> linmod.PropensityFit:
        return self._get(
            "pi", lambda: linmod.fit_logistic_propensity(self.view.design_pi, self.view.T)
        )

    def reg(self) -> linmod.OutcomeFit:
        return self._get("reg", lambda: linmod.fit_outcome_reg(self.view))

    def wls(self) -> linmod.OutcomeFit:
        return self._get(
            "wls", lambda: linmod.fit_outcome_wls(self.view, self.propensity().pi_hat)
        )

    def ext_reg(self) -> linmod.OutcomeFit:
        return self._get(
            "ext_reg",
            lambda: linmod.fit_outcome_ext_reg(self.view, self.propensity().pi_hat),
        )

    def ipw_nr(self) -> linmod.OutcomeFit:
        return self._get(
            "ipw_nr",
            lambda: linmod.fit_outcome_ipw_nr(self.view, self.propensity().pi_hat),
        )

    def extended(self) -> linmod.PropensityFit:
        def build():
            m_reg = self.reg()
            mu_ols = mu_from_regression(m_reg.m_hat)
            h = m_reg.m_hat - mu_ols
            return linmod.fit_extended_propensity(
                self.propensity(), h, m_reg, mu_ols, self.view.T
            )

        return self._get("extended", build)


def estimate_all(
    view: AnalysisView,
    full: FullSample | None = None,
    which: tuple[str, ...] | None = None,
) -> EstimateSet:
    """Compute the requested estimators on one analysis view.

    Model fits are shared and each failure is isolated: a propensity fit
    that diverges marks every weighted estimator as failed but leaves OLS
    (and FULL, when a complete sample is supplied) intact.
    """
    names = ESTIMATOR_NAMES if which is None else tuple(which)
    bad = [nm for nm in names if nm not in ESTIMATOR_NAMES]
    if bad:
        raise InvalidArgumentError(f"unknown estimator names: {bad}")

    pipe = _Pipeline(view)
    T = np.asarray(view.T)
    y = np.asarray(view.y_observed, dtype=float)
    resp = T == 1
    values: dict[str, float] = {}
    flags: dict[str, str] = {}
    messages: dict[str, str] = {}

    def compute(name: str) -> float:
        if name == "OLS":
            return mu_from_regression(pipe.reg().m_hat)
        if name == "HT":
            return mu_ht(pipe.propensity().pi_hat, T, y)
        if name == "IPW_POP":
            return mu_ipw_pop(pipe.propensity().pi_hat, T, y)
        if name == "DR_REG":
            return mu_aipw(pipe.propensity().pi_hat, pipe.reg().m_hat, T, y)
        if name == "DR_WLS":
            return mu_from_regression(pipe.wls().m_hat)
        if name == "DR_IPW_NR":
            return mu_from_regression(pipe.ipw_nr().m_hat)
        if name == "DR_EXT_REG":
            return mu_from_regression(pipe.ext_reg().m_hat)
        if name == "B_DR_REG":
            return mu_b_dr(pipe.propensity().pi_hat, pipe.reg().m_hat, T, y)
        if name == "B_DR_EXT":
            return mu_b_dr(pipe.extended().pi_hat, pipe.reg().m_hat, T, y)
        if full is None:
            raise UndefinedEstimatorError("complete outcomes unavailable")
        return mu_full(full.Y)

    for name in names:
        try:
            value = compute(name)
        except DrmeanError as exc:
            values[name] = math.nan
            flags[name] = FLAG_FAILED
            messages[name] = f"{type(exc).__name__}: {exc}"
            continue
        values[name] = value
        if resp.any() and np.nanmin(y[resp]) <= value <= np.nanmax(y[resp]):
            flags[name] = FLAG_OK
        else:
            flags[name] = FLAG_OUT_OF_RANGE

    diagnostics = None
    try:
        diagnostics = pipe.propensity().diagnostics
    except DrmeanError:
        pass
    return EstimateSet(values=values, flags=flags, messages=messages, diagnostics=diagnostics)


@dataclass
class IdentitiesReport:
    """Outcome of the algebraic cross-checks around the OLS estimator."""

    mu_ols: float
    bounded_ht: float
    abs_difference: float
    eq_weighted_residuals: list[float]  # |P_n[T (a'x)(y - m_hat)]| per draw
    moment_residual: float              # max |P_n[(T alpha'x - 1) x]|
    tol: float
    passed: bool
    skipped: bool = False
    reason: str = ""


def mu_ols_identities_check(
    view: AnalysisView,
    n_random_alphas: int = 3,
    seed: int = 0,
    tol: float = 1e-8,
) -> IdentitiesReport:
    """Verify that OLS is itself an inverse-linear weighted mean.

    Fits the unconstrained inverse-linear response model on the outcome
    design and checks (a) the plug-in OLS mean equals the bounded
    weighted mean sum(T a'x y) / sum(T a'x) at the fitted alpha, and (b)
    the respondent residuals of the outcome fit are orthogonal to a'x
    for random coefficient draws.  Returns a report instead of raising
    when the moment system is singular, since the check is advisory.
    """
    m_fit = linmod.fit_outcome_reg(view)
    mu_ols = mu_from_regression(m_fit.m_hat)
    try:
        inv = linmod.fit_inverse_linear(view.design_m, view.T, "unconstrained_moment")
    except DrmeanError as exc:
        return IdentitiesReport(
            mu_ols=mu_ols,
            bounded_ht=math.nan,
            abs_difference=math.nan,
            eq_weighted_residuals=[],
            moment_residual=math.nan,
            tol=tol,
            passed=False,
            skipped=True,
            reason=f"{type(exc).__name__}: {exc}",
        )
    T = np.asarray(view.T)
    resp = T == 1
    y = np.asarray(view.y_observed, dtype=float)[resp]
    s = inv.eta[resp]  # alpha'x on respondents
    denom = math.fsum(s)
    if denom == 0:
        return IdentitiesReport(
            mu_ols=mu_ols,
            bounded_ht=math.nan,
            abs_difference=math.nan,
            eq_weighted_residuals=[],
            moment_residual=math.nan,
            tol=tol,
            passed=False,
            skipped=True,
            reason="weighted mean undefined: sum of alpha'x vanishes",
        )
    bounded_ht = math.fsum(s * y) / denom
    diff = abs(mu_ols - bounded_ht)

    design = np.asarray(view.design_m, dtype=float)
    n = design.shape[0]
    tx = design * resp[:, None].astype(float)
    moment = np.array(
        [math.fsum(col) / n for col in (design * ((tx @ inv.alpha) - 1.0)[:, None]).T]
    )
    moment_residual = float(np.max(np.abs(moment)))

    rng = np.random.Generator(np.random.PCG64(seed))
    resid = y - m_fit.m_hat[resp]
    residuals = []
    for _ in range(n_random_alphas):
        a = rng.standard_normal(design.shape[1])
        residuals.append(abs(math.fsum((design[resp] @ a) * resid) / n))
    passed = diff <= tol and all(r <= tol for r in residuals)
    return IdentitiesReport(
        mu_ols=mu_ols,
        bounded_ht=bounded_ht,
        abs_difference=diff,
        eq_weighted_residuals=residuals,
        moment_residual=moment_residual,
        tol=tol,
        passed=passed,
    )
