"""Panel fully modified OLS, pooled and group-mean."""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from .coint import CointSpec, canonical_order
from .errors import RankDeficient, TooFewPeriods
from .kernels import DEFAULT_BANDWIDTH, long_run_variance, ols
from .panel import Panel

logger = logging.getLogger(__name__)

# residual sum of squares relative to sum y^2 below which a fit counts as exact
ZERO_RSS_TOLERANCE = 1e-20


class FmolsMode(str, Enum):
    POOLED = "pooled"
    GROUPED = "grouped"


def _normal_p(t_stats: np.ndarray) -> np.ndarray:
    """Two-sided standard-normal p-values; NaN where the t-statistic is undefined."""
    return 2.0 * stats.norm.sf(np.abs(np.asarray(t_stats, dtype=float)))


@dataclass
class FmolsEntityFit:
    """Fully modified estimate for one entity, plus the moments pooling needs.

    All regressions use t = 2..T so the first difference of X exists.
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    ols_coefficients: np.ndarray
    Omega: np.ndarray
    omega_u_given_v: float
    n_obs: int
    xtx: np.ndarray = field(repr=False)
    xty_plus: np.ndarray = field(repr=False)
    zero_residual_variance: bool = False


@dataclass
class EntityEstimate:
    entity: str
    coefficients: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    Omega: list[list[float]]


@dataclass
class FmolsReport:
    mode: FmolsMode
    regressors: list[str]
    coefficients: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    per_entity: list[EntityEstimate]
    bandwidth: int
    n_obs_used: int
    flags: list[str] = field(default_factory=list)


def fmols_entity(
    y: np.ndarray,
    X: np.ndarray,
    bandwidth: int = DEFAULT_BANDWIDTH,
    demean: bool = True,
    zero_long_run_covariance: bool = False,
) -> FmolsEntityFit:
    """Phillips-Hansen fully modified OLS for a single entity.

    Args:
        y: Dependent variable, length T
        X: Regressors, T x k (I(1) columns)
        bandwidth: Bartlett bandwidth for the long-run covariance of (u, dX)
        demean: Remove the entity mean from y and X first (absorbs alpha_i)
        zero_long_run_covariance: Zero the off-diagonal long-run covariances
            between u and dX, which turns both corrections off

    Raises:
        TooFewPeriods: If T <= k + bandwidth + 2
        RankDeficient: If X is collinear
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T, k = X.shape
    if T <= k + bandwidth + 2:
        raise TooFewPeriods(f"FMOLS needs T > k + bandwidth + 2 = {k + bandwidth + 2}, got {T}")
    if demean:
        y = y - y.mean()
        X = X - X.mean(axis=0)

    dX = np.diff(X, axis=0)
    ys, Xs = y[1:], X[1:]
    n = len(ys)
    first = ols(ys, Xs, context="FMOLS first stage")
    u = first.residuals

    lrv = long_run_variance(np.column_stack([u, dX]), bandwidth, demean=True)
    Omega = lrv.Omega.copy()
    Delta = lrv.Sigma + lrv.Lambda.T
    if zero_long_run_covariance:
        Omega[0, 1:] = Omega[1:, 0] = 0.0
        Delta[0, 1:] = Delta[1:, 0] = 0.0

    Omega_vv = Omega[1:, 1:]
    Omega_vv_inv_vu = np.linalg.solve(Omega_vv, Omega[1:, 0])
    y_plus = ys - dX @ Omega_vv_inv_vu
    delta_plus = Delta[1:, 0] - Delta[1:, 1:] @ Omega_vv_inv_vu

    xtx = Xs.T @ Xs
    xty_plus = Xs.T @ y_plus - n * delta_plus
    beta = np.linalg.solve(xtx, xty_plus)
    omega_u_v = max(float(Omega[0, 0] - Omega[0, 1:] @ Omega_vv_inv_vu), 0.0)
    se = np.sqrt(omega_u_v * np.diag(np.linalg.inv(xtx)))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = beta / se
    zero_var = omega_u_v == 0.0 or float(u @ u) <= ZERO_RSS_TOLERANCE * float(ys @ ys)
    if zero_var:
        logger.warning("FMOLS entity regression fits perfectly; residual variance is zero")

    return FmolsEntityFit(
        coefficients=beta,
        standard_errors=se,
        t_stats=t_stats,
        ols_coefficients=first.coefficients,
        Omega=Omega,
        omega_u_given_v=omega_u_v,
        n_obs=n,
        xtx=xtx,
        xty_plus=xty_plus,
        zero_residual_variance=zero_var,
    )


def fmols_panel(
    panel: Panel, spec: CointSpec, mode: FmolsMode | str = FmolsMode.POOLED
) -> FmolsReport:
    """Panel FMOLS of the long-run relation with entity intercepts.

    Pooled mode sums the corrected moment matrices across entities before
    solving and uses the average conditional long-run variance for its
    t-statistics. Grouped mode averages the entity estimates and combines
    their t-statistics as sum(t_i) / sqrt(N).
    """
    mode = FmolsMode(mode)
    panel.require(spec.dependent, *spec.regressors)
    regressors = list(spec.regressors)
    if panel.n_entities < 2:
        logger.info("FMOLS on a single entity: pooled and grouped estimates coincide")

    y = panel.series(spec.dependent)
    X = panel.matrix(regressors)
    fits: list[tuple[str, FmolsEntityFit]] = []
    for i in canonical_order(panel):
        entity = panel.entities[i]
        try:
            fit = fmols_entity(y[i], X[i], spec.bandwidth)
        except RankDeficient as exc:
            raise RankDeficient(exc.rank, exc.columns, f"entity {entity!r}") from exc
        fits.append((entity, fit))
        logger.debug("FMOLS %s: %s", entity, np.round(fit.coefficients, 6))

    N = len(fits)
    if mode is FmolsMode.GROUPED:
        beta = np.mean([f.coefficients for _, f in fits], axis=0)
        t_stats = np.sum([f.t_stats for _, f in fits], axis=0) / np.sqrt(N)
    else:
        xtx = np.sum([f.xtx for _, f in fits], axis=0)
        xty = np.sum([f.xty_plus for _, f in fits], axis=0)
        beta = np.linalg.solve(xtx, xty)
        omega_bar = float(np.mean([f.omega_u_given_v for _, f in fits]))
        se = np.sqrt(omega_bar * np.diag(np.linalg.inv(xtx)))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_stats = beta / se

    per_entity = [
        EntityEstimate(
            entity=entity,
            coefficients=dict(zip(regressors, map(float, f.coefficients))),
            t_stats=dict(zip(regressors, map(float, f.t_stats))),
            p_values=dict(zip(regressors, map(float, _normal_p(f.t_stats)))),
            Omega=f.Omega.tolist(),
        )
        for entity, f in fits
    ]
    flags = [f"zero-residual-variance:{e}" for e, f in fits if f.zero_residual_variance]
    n_used = sum(f.n_obs for _, f in fits)
    logger.info("FMOLS (%s): N=%d, observations used=%d", mode.value, N, n_used)
    return FmolsReport(
        mode=mode,
        regressors=regressors,
        coefficients=dict(zip(regressors, map(float, beta))),
        t_stats=dict(zip(regressors, map(float, t_stats))),
        p_values=dict(zip(regressors, map(float, _normal_p(t_stats)))),
        per_entity=per_entity,
        bandwidth=spec.bandwidth,
        n_obs_used=n_used,
        flags=flags,
    )
