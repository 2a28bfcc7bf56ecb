"""Weighted linear and logistic fits, plus the propensity models.

All fits go through one iteratively reweighted least squares routine.
Solves are done on column-equilibrated designs via SVD least squares
with an explicit rank check, followed by iterative refinement driven by
compensated (fsum) score sums.  The refinement matters: downstream
identities are asserted to absolute tolerances near 1e-10 on raw-scale
designs whose columns differ by orders of magnitude.

Propensity models:
  * logistic maximum likelihood, pi = expit(alpha'x);
  * inverse-linear, pi = 1 / (alpha'x), fit by constrained maximum
    likelihood, by a constrained moment criterion, or by solving the
    unconstrained moment equation P_n[(T alpha'x - 1) x] = 0 exactly;
  * a one-parameter logistic extension expit(alpha'x + phi h) whose phi
    solves P_n[(T / pi - 1) h_tilde] = 0 for a caller-chosen direction.

Outcome fits are computed on respondents only and return fitted values
for every unit.  The four variants differ in weighting and in whether a
function of the fitted propensity is appended as an extra covariate.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from ._util import fsum_col_means
from .dgp import AnalysisView
from .errors import (
    InfeasibleConstraintError,
    InvalidArgumentError,
    InvalidWeightError,
    NonconvergenceError,
    NoRootError,
    SingularDesignError,
)

IRLS_MAX_ITER = 100
SCORE_TOL = 1e-10      # max-norm of the mean score at convergence
STEP_TOL = 1e-12       # max-norm of the Newton step at convergence
RANK_RCOND = 1e-10     # singular values below rcond * smax count as zero
ETA_SEPARATION = 33.0  # |linear predictor| beyond this means separation
PHI_BRACKET_MAX = 50.0
PHI_GTOL = 1e-10
PHI_XTOL = 1e-12
_CONSTRAINT_DELTA = 1e-6
_OPT_MAX_ITER = 10_000


class Link(enum.Enum):
    """Mean link for IRLS: the map from linear predictor to fitted mean."""

    IDENTITY = "identity"
    LOGIT = "logit"

    def forward(self, eta: np.ndarray) -> np.ndarray:
        if self is Link.IDENTITY:
            return np.asarray(eta, dtype=float)
        return expit(eta)

    def mean_derivative(self, eta: np.ndarray) -> np.ndarray:
        if self is Link.IDENTITY:
            return np.ones_like(np.asarray(eta, dtype=float))
        p = expit(eta)
        return p * (1.0 - p)


class PropensityKind(enum.Enum):
    LOGISTIC_MLE = "LOGISTIC_MLE"
    INV_LINEAR_ML = "INV_LINEAR_ML"
    INV_LINEAR_MOMENT = "INV_LINEAR_MOMENT"
    INV_LINEAR_UNCONSTRAINED = "INV_LINEAR_UNCONSTRAINED"
    LOGISTIC_EXTENDED = "LOGISTIC_EXTENDED"


class OutcomeKind(enum.Enum):
    REG = "REG"
    WLS = "WLS"
    EXT_REG = "EXT_REG"
    IPW_NR = "IPW_NR"


@dataclass
class WeightDiagnostics:
    """Summary of the inverse-probability weights implied by a fit."""

    min_pi: float
    max_inv_pi_respondents: float
    max_inv_pi_nonrespondents: float
    var_inv_pi: float


@dataclass
class PropensityFit:
    kind: PropensityKind
    alpha: np.ndarray       # coefficients of the base model
    phi: float | None       # extension coefficient, when applicable
    eta: np.ndarray         # per-unit linear predictor (alpha'x [+ phi h])
    pi_hat: np.ndarray      # per-unit fitted response probability
    diagnostics: WeightDiagnostics
    converged: bool
    iterations: int


@dataclass
class OutcomeFit:
    kind: OutcomeKind
    beta: np.ndarray        # appended covariate's coefficient last, if any
    link: Link
    m_hat: np.ndarray       # fitted outcome mean for every unit
    converged: bool
    iterations: int


def weight_diagnostics(pi_hat: np.ndarray, T: np.ndarray) -> WeightDiagnostics:
    """Inverse-weight summaries split by response status.

    Groups with no members report 0 for their max.  With any pi_hat <= 0
    the summaries can be infinite; callers decide whether that is fatal.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    T = np.asarray(T)
    with np.errstate(divide="ignore", over="ignore"):
        inv = 1.0 / pi_hat
    resp = T == 1
    max_resp = float(np.max(inv[resp])) if resp.any() else 0.0
    max_nonresp = float(np.max(inv[~resp])) if (~resp).any() else 0.0
    var = float(np.var(inv)) if pi_hat.size else 0.0
    return WeightDiagnostics(
        min_pi=float(np.min(pi_hat)),
        max_inv_pi_respondents=max_resp,
        max_inv_pi_nonrespondents=max_nonresp,
        var_inv_pi=var,
    )


def _check_design(design: np.ndarray, response: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2:
        raise InvalidArgumentError("design must be 2-d")
    if response.shape != (design.shape[0],):
        raise InvalidArgumentError("response length must match design rows")
    if design.shape[0] < design.shape[1]:
        raise SingularDesignError(
            f"{design.shape[0]} rows cannot identify {design.shape[1]} coefficients"
        )
    if not np.all(np.isfinite(design)):
        raise InvalidArgumentError("design contains non-finite entries")
    if not np.all(np.isfinite(response)):
        raise InvalidArgumentError("response contains non-finite entries")
    return design, response


def _equilibrated_lstsq(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Least squares on a column-equilibrated design, with rank check."""
    scale = np.sqrt(np.mean(design * design, axis=0))
    scale[scale == 0.0] = 1.0
    coef, _, rank, _ = np.linalg.lstsq(design / scale, rhs, rcond=RANK_RCOND)
    if rank < design.shape[1]:
        raise SingularDesignError(
            f"rank {rank} < {design.shape[1]} columns at rcond={RANK_RCOND:g}"
        )
    return coef / scale


def _assert_full_column_rank(design: np.ndarray) -> None:
    """Rank check with the lstsq cutoff, for paths that may never solve."""
    scale = np.sqrt(np.mean(design * design, axis=0))
    scale[scale == 0.0] = 1.0
    s = np.linalg.svd(design / scale, compute_uv=False)
    rank = 0 if s.size == 0 or s[0] == 0.0 else int(np.sum(s > RANK_RCOND * s[0]))
    if rank < design.shape[1]:
        raise SingularDesignError(
            f"rank {rank} < {design.shape[1]} columns at rcond={RANK_RCOND:g}"
        )


def _irls(
    design: np.ndarray,
    response: np.ndarray,
    unit_weights: np.ndarray | None,
    link: Link,
) -> tuple[np.ndarray, int]:
    """IRLS core.  Returns (coefficients, iterations).

    Identity link: one weighted solve, then refinement passes against the
    fsum score until max|P_n-score| <= SCORE_TOL or the step stalls.
    Logit link: Newton steps from beta = 0 with the same exit rules and a
    separation check on the final linear predictor.
    """
    design, response = _check_design(design, response)
    n, p = design.shape
    if unit_weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(unit_weights, dtype=float)
        if w.shape != (n,):
            raise InvalidArgumentError("unit_weights length must match design rows")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidWeightError("unit weights must be finite and nonnegative")
        if not np.any(w > 0):
            raise InvalidWeightError("all unit weights are zero")

    if link is Link.IDENTITY:
        sw = np.sqrt(w)
        beta = _equilibrated_lstsq(design * sw[:, None], response * sw)
        iterations = 1
        for _ in range(IRLS_MAX_ITER):
            resid = response - design @ beta
            score = fsum_col_means(design * (w * resid)[:, None])
            if np.max(np.abs(score)) <= SCORE_TOL:
                break
            step = _equilibrated_lstsq(design * sw[:, None], resid * sw)
            beta = beta + step
            iterations += 1
            if np.max(np.abs(step)) <= STEP_TOL:
                break
        return beta, iterations

    # logit.  The rank check must come first: a stationary start (score
    # already zero at beta = 0) would exit before any solve sees the design.
    _assert_full_column_rank(design[w > 0])
    beta = np.zeros(p)
    converged = False
    first = True
    for iterations in range(1, IRLS_MAX_ITER + 1):
        eta = design @ beta
        mu = expit(eta)
        resid = w * (response - mu)
        score = fsum_col_means(design * resid[:, None])
        if np.max(np.abs(score)) <= SCORE_TOL:
            converged = True
            break
        v = w * mu * (1.0 - mu)
        live = v > 0
        if not live.any():
            raise NonconvergenceError("all fitted variances vanished")
        sv = np.sqrt(v[live])
        try:
            step = _equilibrated_lstsq(
                design[live] * sv[:, None], resid[live] / sv
            )
        except SingularDesignError:
            if first:
                raise
            raise NonconvergenceError(
                "weighted design lost rank during iteration (separation?)"
            ) from None
        first = False
        beta = beta + step
        if np.max(np.abs(step)) <= STEP_TOL:
            converged = True
            break
    if not converged:
        raise NonconvergenceError(f"no convergence in {IRLS_MAX_ITER} iterations")
    eta = design @ beta
    if np.max(np.abs(eta[w > 0])) > ETA_SEPARATION:
        raise NonconvergenceError(
            "fitted probabilities pinned at 0/1: data are separated"
        )
    return beta, iterations


def irls_fit(
    design: np.ndarray,
    response: np.ndarray,
    unit_weights: np.ndarray | None = None,
    link: Link = Link.IDENTITY,
) -> np.ndarray:
    """Weighted regression coefficients under the given link."""
    beta, _ = _irls(design, response, unit_weights, link)
    return beta


def fit_logistic_propensity(design: np.ndarray, T: np.ndarray) -> PropensityFit:
    """Logistic maximum-likelihood fit of P(T = 1 | x) = expit(alpha'x)."""
    T = np.asarray(T)
    alpha, iterations = _irls(design, T.astype(float), None, Link.LOGIT)
    eta = np.asarray(design, dtype=float) @ alpha
    pi_hat = expit(eta)
    return PropensityFit(
        kind=PropensityKind.LOGISTIC_MLE,
        alpha=alpha,
        phi=None,
        eta=eta,
        pi_hat=pi_hat,
        diagnostics=weight_diagnostics(pi_hat, T),
        converged=True,
        iterations=iterations,
    )


def _inv_linear_unconstrained(design: np.ndarray, T: np.ndarray) -> tuple[np.ndarray, int]:
    """Solve P_n[(T alpha'x - 1) x] = 0 by linear solve plus refinement."""
    n, p = design.shape
    tx = design * (T == 1)[:, None].astype(float)
    gram = np.empty((p, p))
    for j in range(p):
        gram[j] = fsum_col_means(tx * design[:, j][:, None])
    target = fsum_col_means(design)
    alpha = _equilibrated_lstsq(gram, target)
    iterations = 1
    for _ in range(20):
        score = fsum_col_means(design * ((tx @ alpha) - 1.0)[:, None])
        if np.max(np.abs(score)) <= 1e-13:
            break
        step = _equilibrated_lstsq(gram, -score)
        alpha = alpha + step
        iterations += 1
        if np.max(np.abs(step)) <= STEP_TOL * max(1.0, np.max(np.abs(alpha))):
            break
    return alpha, iterations


def _inv_linear_constrained(
    design: np.ndarray, T: np.ndarray, method: str
) -> tuple[np.ndarray, int]:
    """Constrained inverse-linear fits via SLSQP with analytic gradients.

    likelihood: minimize -P_n[T log pi + (1 - T) log(1 - pi)] subject to
    alpha'x_i >= 1 + delta (keeps both logs finite).  moment: minimize
    ||P_n[(T alpha'x - 1) x]||^2 subject to alpha'x_i >= delta.
    """
    n, p = design.shape
    t = (np.asarray(T) == 1).astype(float)

    if method == "likelihood":
        bound = 1.0 + _CONSTRAINT_DELTA

        def objective(alpha):
            s = design @ alpha
            if np.any(s <= bound - 1e-12):
                s = np.maximum(s, bound)
            val = np.mean(np.log(s) - (1.0 - t) * np.log(s - 1.0))
            grad = fsum_col_means(
                design * (1.0 / s - (1.0 - t) / (s - 1.0))[:, None]
            )
            return val, grad

        x0 = np.zeros(p)
        x0[0] = 2.0 / np.min(design[:, 0]) if np.all(design[:, 0] > 0) else 0.0
        if np.any(design @ x0 < bound):
            raise InfeasibleConstraintError(
                "no feasible starting point for the likelihood constraints"
            )
    else:
        bound = _CONSTRAINT_DELTA
        tx = design * t[:, None]

        def objective(alpha):
            m = fsum_col_means(design * ((tx @ alpha) - 1.0)[:, None])
            jac = (tx.T @ design) / n
            return float(m @ m), 2.0 * (jac.T @ m)

        x0 = np.zeros(p)
        x0[0] = 1.0 if np.all(design[:, 0] > 0) else 0.0
        if np.any(design @ x0 < bound):
            raise InfeasibleConstraintError(
                "no feasible starting point for the moment constraints"
            )

    constraints = {
        "type": "ineq",
        "fun": lambda alpha: design @ alpha - bound,
        "jac": lambda alpha: design,
    }
    res = minimize(
        objective,
        x0,
        jac=True,
        method="SLSQP",
        constraints=[constraints],
        options={"maxiter": _OPT_MAX_ITER, "ftol": 1e-14},
    )
    if res.status == 4:
        raise InfeasibleConstraintError(res.message)
    if not res.success and res.status != 0:
        raise NonconvergenceError(f"constrained fit failed: {res.message}")
    return res.x, int(res.nit)


def fit_inverse_linear(
    design: np.ndarray, T: np.ndarray, method: str = "likelihood"
) -> PropensityFit:
    """Fit the inverse-linear response model pi(x) = 1 / (alpha'x).

    method is one of "likelihood", "moment", "unconstrained_moment".  The
    constrained variants keep alpha'x_i away from the region where the
    criterion is undefined; the unconstrained moment solve can produce
    fitted values outside (0, 1], which is intentional (its point is the
    algebraic identity it induces, not plausibility of the weights).
    """
    design = np.asarray(design, dtype=float)
    T = np.asarray(T)
    design, _ = _check_design(design, T.astype(float))
    kinds = {
        "likelihood": PropensityKind.INV_LINEAR_ML,
        "moment": PropensityKind.INV_LINEAR_MOMENT,
        "unconstrained_moment": PropensityKind.INV_LINEAR_UNCONSTRAINED,
    }
    if method not in kinds:
        raise InvalidArgumentError(f"unknown method {method!r}")
    if method == "unconstrained_moment":
        alpha, iterations = _inv_linear_unconstrained(design, T)
    else:
        alpha, iterations = _inv_linear_constrained(design, T, method)
    eta = design @ alpha
    with np.errstate(divide="ignore"):
        pi_hat = 1.0 / eta
    return PropensityFit(
        kind=kinds[method],
        alpha=alpha,
        phi=None,
        eta=eta,
        pi_hat=pi_hat,
        diagnostics=weight_diagnostics(pi_hat, T),
        converged=True,
        iterations=iterations,
    )


def _respondent_parts(view: AnalysisView) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    resp = np.asarray(view.T) == 1
    if not resp.any():
        raise SingularDesignError("no respondents to fit on")
    y = np.asarray(view.y_observed, dtype=float)[resp]
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("observed outcomes contain non-finite values")
    return resp, np.asarray(view.design_m, dtype=float)[resp], y


def fit_outcome_reg(view: AnalysisView, link: Link = Link.IDENTITY) -> OutcomeFit:
    """Unweighted outcome regression on respondents."""
    resp, a, y = _respondent_parts(view)
    beta, iterations = _irls(a, y, None, link)
    m_hat = link.forward(np.asarray(view.design_m, dtype=float) @ beta)
    return OutcomeFit(OutcomeKind.REG, beta, link, m_hat, True, iterations)


def fit_outcome_wls(
    view: AnalysisView, pi_hat: np.ndarray, link: Link = Link.IDENTITY
) -> OutcomeFit:
    """Outcome regression on respondents, weighted by 1 / pi_hat."""
    resp, a, y = _respondent_parts(view)
    pi_hat = np.asarray(pi_hat, dtype=float)
    if np.any(pi_hat[resp] <= 0) or not np.all(np.isfinite(pi_hat[resp])):
        raise InvalidWeightError("pi_hat must be finite and positive on respondents")
    beta, iterations = _irls(a, y, 1.0 / pi_hat[resp], link)
    m_hat = link.forward(np.asarray(view.design_m, dtype=float) @ beta)
    return OutcomeFit(OutcomeKind.WLS, beta, link, m_hat, True, iterations)


def fit_outcome_ext_reg(
    view: AnalysisView, pi_hat: np.ndarray, link: Link = Link.IDENTITY
) -> OutcomeFit:
    """Unweighted regression with 1 / pi_hat appended as a covariate.

    pi_hat must be positive on all units because the appended column is
    needed to predict for nonrespondents too.  A constant pi_hat makes
    the appended column collinear with the intercept and the fit fails.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    if np.any(pi_hat <= 0) or not np.all(np.isfinite(pi_hat)):
        raise InvalidWeightError("pi_hat must be finite and positive on all units")
    aug = np.hstack(
        [np.asarray(view.design_m, dtype=float), (1.0 / pi_hat)[:, None]]
    )
    resp = np.asarray(view.T) == 1
    if not resp.any():
        raise SingularDesignError("no respondents to fit on")
    y = np.asarray(view.y_observed, dtype=float)[resp]
    beta, iterations = _irls(aug[resp], y, None, link)
    m_hat = link.forward(aug @ beta)
    return OutcomeFit(OutcomeKind.EXT_REG, beta, link, m_hat, True, iterations)


def fit_outcome_ipw_nr(
    view: AnalysisView, pi_hat: np.ndarray, link: Link = Link.IDENTITY
) -> OutcomeFit:
    """Regression weighted by 1 / pi_hat with pi_hat appended as covariate.

    With an identity link the fitted values satisfy both the inverse-
    weighted and the unweighted respondent moment conditions, so the
    plug-in mean P_n[m_hat] equals P_n[T y + (1 - T) m_hat].
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    if np.any(pi_hat <= 0) or np.any(pi_hat >= 1) or not np.all(np.isfinite(pi_hat)):
        raise InvalidWeightError("pi_hat must lie strictly inside (0, 1) on all units")
    aug = np.hstack([np.asarray(view.design_m, dtype=float), pi_hat[:, None]])
    resp = np.asarray(view.T) == 1
    if not resp.any():
        raise SingularDesignError("no respondents to fit on")
    y = np.asarray(view.y_observed, dtype=float)[resp]
    beta, iterations = _irls(aug[resp], y, 1.0 / pi_hat[resp], link)
    m_hat = link.forward(aug @ beta)
    return OutcomeFit(OutcomeKind.IPW_NR, beta, link, m_hat, True, iterations)


def _sign(x: float) -> int:
    if math.isnan(x):
        return 0
    return (x > 0) - (x < 0)


def fit_extended_propensity(
    base: PropensityFit,
    h: np.ndarray,
    m_reg: OutcomeFit,
    mu_ols: float,
    T: np.ndarray,
) -> PropensityFit:
    """Add one coefficient to a logistic fit so that a chosen moment is zero.

    Solves g(phi) = P_n[(T / expit(eta + phi h) - 1) (m_hat - mu_ols)] = 0
    for scalar phi by bracketing and bisection.  The default direction
    used by callers is h = m_hat - mu_ols itself, which turns the bounded
    doubly robust estimator built from this fit into a weighted mean of
    observed outcomes.
    """
    if not base.converged:
        raise InvalidArgumentError("base propensity fit did not converge")
    if base.kind not in (PropensityKind.LOGISTIC_MLE, PropensityKind.LOGISTIC_EXTENDED):
        raise InvalidArgumentError("extension requires a logistic base fit")
    T = np.asarray(T)
    h = np.asarray(h, dtype=float)
    if h.shape != base.eta.shape:
        raise InvalidArgumentError("h must have one entry per unit")
    if not np.all(np.isfinite(h)):
        raise InvalidArgumentError("h contains non-finite entries")
    htilde = m_reg.m_hat - mu_ols
    t1 = (T == 1).astype(float)
    evals = 0

    def g(phi: float) -> float:
        nonlocal evals
        evals += 1
        eta = np.clip(base.eta + phi * h, -700.0, 700.0)
        # T/expit(eta) - 1 = exp(-eta) for respondents, -1 otherwise
        term = np.where(t1 == 1.0, np.exp(-eta), -1.0)
        return float(np.mean(term * htilde))

    g0 = g(0.0)
    if abs(g0) <= PHI_GTOL:
        phi_hat = 0.0
    else:
        lo, hi = -1.0, 1.0
        glo, ghi = g(lo), g(hi)
        bracket = None
        if _sign(glo) * _sign(g0) < 0:
            bracket = (lo, 0.0, glo, g0)
        elif _sign(g0) * _sign(ghi) < 0:
            bracket = (0.0, hi, g0, ghi)
        else:
            while bracket is None and (lo > -PHI_BRACKET_MAX or hi < PHI_BRACKET_MAX):
                lo_new = max(2.0 * lo, -PHI_BRACKET_MAX)
                hi_new = min(2.0 * hi, PHI_BRACKET_MAX)
                glo_new, ghi_new = g(lo_new), g(hi_new)
                if _sign(glo_new) * _sign(glo) < 0:
                    bracket = (lo_new, lo, glo_new, glo)
                elif _sign(ghi) * _sign(ghi_new) < 0:
                    bracket = (hi, hi_new, ghi, ghi_new)
                lo, hi, glo, ghi = lo_new, hi_new, glo_new, ghi_new
        if bracket is None:
            raise NoRootError(
                f"no sign change for the extension moment in [-{PHI_BRACKET_MAX:g}, "
                f"{PHI_BRACKET_MAX:g}]"
            )
        a, b, ga, gb = bracket
        while b - a > PHI_XTOL:
            mid = 0.5 * (a + b)
            gm = g(mid)
            if abs(gm) <= PHI_GTOL:
                a = b = mid
                break
            if _sign(ga) * _sign(gm) < 0:
                b, gb = mid, gm
            else:
                a, ga = mid, gm
        phi_hat = 0.5 * (a + b)

    eta = base.eta + phi_hat * h
    pi_hat = expit(eta)
    return PropensityFit(
        kind=PropensityKind.LOGISTIC_EXTENDED,
        alpha=base.alpha.copy(),
        phi=phi_hat,
        eta=eta,
        pi_hat=pi_hat,
        diagnostics=weight_diagnostics(pi_hat, T),
        converged=True,
        iterations=evals,
    )
