"""Least squares, ADF regressions and Bartlett long-run variances.

These are the numeric kernels every test and estimator in the package is
built from. All functions are pure and work on plain numpy arrays.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

from .errors import (
    EmptySequence,
    NegativeBandwidth,
    RankDeficient,
    SequenceTooShort,
    TooFewObservations,
)
from .panel import Panel

logger = logging.getLogger(__name__)

DEFAULT_BANDWIDTH = 3
RANK_TOLERANCE = 1e-10


@dataclass
class RegressionFit:
    """Least-squares fit with conventional (homoskedastic) inference."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    residuals: np.ndarray
    rss: float
    dof: int
    design_columns: list[str]
    cov: np.ndarray
    # (X'X)^{-1}, kept so callers can build their own covariance estimators
    xtx_inv: np.ndarray = field(repr=False)

    @property
    def n_obs(self) -> int:
        return len(self.residuals)

    @property
    def sigma2(self) -> float:
        return self.rss / self.dof

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.design_columns.index(name)])


def ols(
    y: Sequence[float] | np.ndarray,
    X: np.ndarray | None,
    intercept: bool = False,
    names: Sequence[str] | None = None,
    context: str = "",
) -> RegressionFit:
    """Ordinary least squares via the singular value decomposition.

    Args:
        y: Dependent variable, length n
        X: Design matrix (n x k); may be None or have zero columns when
           ``intercept`` is set
        intercept: Prepend a column of ones named "const"
        names: Column names for X (defaults to x0, x1, ...)
        context: Label used in error messages

    Raises:
        RankDeficient: If the effective rank is below the column count at
                       tolerance 1e-10 x the leading singular value
        TooFewObservations: If n <= k
    """
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if X is None:
        X = np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows but y has {n} observations")
    columns = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if len(columns) != X.shape[1]:
        raise ValueError(f"Got {len(columns)} names for {X.shape[1]} columns")
    if intercept:
        X = np.column_stack([np.ones(n), X])
        columns = ["const", *columns]

    k = X.shape[1]
    if k == 0:
        raise ValueError("Regression needs at least one column")
    if n <= k:
        raise TooFewObservations(f"Need more observations than parameters: n={n}, k={k}")

    U, s, Vt = linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > RANK_TOLERANCE * s[0])) if s[0] > 0 else 0
    if rank < k:
        raise RankDeficient(rank, k, context)

    beta = Vt.T @ ((U.T @ y) / s)
    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    dof = n - k
    xtx_inv = (Vt.T / s**2) @ Vt
    cov = (rss / dof) * xtx_inv
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = beta / se

    return RegressionFit(
        coefficients=beta,
        standard_errors=se,
        t_stats=t_stats,
        residuals=residuals,
        rss=rss,
        dof=dof,
        design_columns=columns,
        cov=cov,
        xtx_inv=xtx_inv,
    )


class Deterministic(str, Enum):
    NONE = "none"
    INTERCEPT = "intercept"
    TREND = "intercept+trend"

    @property
    def n_terms(self) -> int:
        return {"none": 0, "intercept": 1, "intercept+trend": 2}[self.value]


@dataclass
class AdfResult:
    statistic: float
    aug_lags: int
    deterministic: Deterministic
    rho: float
    n_obs: int


def adf_design(
    series: np.ndarray, aug_lags: int, deterministic: Deterministic | str
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Build the ADF regression: dx_t on x_{t-1}, deterministics, dx_{t-1..t-p}.

    The first column of the returned design is always x_{t-1}.
    """
    x = np.asarray(series, dtype=float)
    det = Deterministic(deterministic)
    p = aug_lags
    dx = np.diff(x)
    # usable observations start once p lagged differences exist
    y = dx[p:]
    n = len(y)
    cols = [x[p : p + n]]
    names = ["lag_level"]
    if det is not Deterministic.NONE:
        cols.append(np.ones(n))
        names.append("const")
    if det is Deterministic.TREND:
        cols.append(np.arange(p + 1, p + 1 + n, dtype=float))
        names.append("trend")
    for j in range(1, p + 1):
        cols.append(dx[p - j : p - j + n])
        names.append(f"lag_diff{j}")
    return y, np.column_stack(cols), names


def adf_test(
    series: Sequence[float] | np.ndarray,
    aug_lags: int = 0,
    deterministic: Deterministic | str = Deterministic.INTERCEPT,
) -> AdfResult:
    """Augmented Dickey-Fuller t-ratio on the lagged level.

    Raises:
        SequenceTooShort: If the series is too short for the lags and
                          deterministic terms requested
    """
    x = np.asarray(series, dtype=float)
    det = Deterministic(deterministic)
    if aug_lags < 0:
        raise ValueError(f"aug_lags must be >= 0, got {aug_lags}")
    if len(x) <= aug_lags + 3 + det.n_terms:
        raise SequenceTooShort(
            f"ADF with {aug_lags} lags and {det.value} needs more than "
            f"{aug_lags + 3 + det.n_terms} observations, got {len(x)}"
        )
    y, X, names = adf_design(x, aug_lags, det)
    fit = ols(y, X, names=names, context="ADF regression")
    gamma = float(fit.coefficients[0])
    return AdfResult(
        statistic=float(fit.t_stats[0]),
        aug_lags=aug_lags,
        deterministic=det,
        rho=1.0 + gamma,
        n_obs=fit.n_obs,
    )


@dataclass
class PanelAdfSummary:
    """Descriptive unit-root pretest: per-entity ADF plus their average."""

    variable: str
    per_entity: dict[str, float]
    mean_statistic: float
    aug_lags: int
    deterministic: Deterministic


def panel_adf(
    panel: Panel,
    variable: str,
    aug_lags: int = 1,
    deterministic: Deterministic | str = Deterministic.INTERCEPT,
) -> PanelAdfSummary:
    """Run adf_test on every entity's series and average the statistics."""
    data = panel.series(variable)
    stats = {
        entity: adf_test(data[i], aug_lags, deterministic).statistic
        for i, entity in enumerate(panel.entities)
    }
    return PanelAdfSummary(
        variable=variable,
        per_entity=stats,
        mean_statistic=float(np.mean(list(stats.values()))),
        aug_lags=aug_lags,
        deterministic=Deterministic(deterministic),
    )


@dataclass
class LrvEstimate:
    """Contemporaneous, one-sided and two-sided long-run (co)variances.

    Sigma, Lambda and Omega are always m x m matrices (1 x 1 for a scalar
    series); the scalar accessors read their [0, 0] element.
    """

    Sigma: np.ndarray
    Lambda: np.ndarray
    Omega: np.ndarray
    bandwidth: int
    kernel: str = "bartlett"

    @property
    def sigma2(self) -> float:
        return float(self.Sigma[0, 0])

    @property
    def omega2(self) -> float:
        return float(self.Omega[0, 0])

    @property
    def lambda_(self) -> float:
        return float(self.Lambda[0, 0])

    @property
    def Delta(self) -> np.ndarray:
        """Sigma + Lambda: the one-sided sum including lag zero."""
        return self.Sigma + self.Lambda


def bartlett_weights(bandwidth: int) -> np.ndarray:
    """w_j = 1 - j/(bandwidth+1) for j = 1..bandwidth."""
    j = np.arange(1, bandwidth + 1)
    return 1.0 - j / (bandwidth + 1.0)


def long_run_variance(
    u: Sequence[float] | np.ndarray,
    bandwidth: int = DEFAULT_BANDWIDTH,
    kernel: str = "bartlett",
    demean: bool = False,
) -> LrvEstimate:
    """Bartlett (Newey-West) long-run covariance of a scalar or vector series.

    Lambda[a, b] = sum_j w_j T^{-1} sum_t u_t[a] u_{t-j}[b], i.e. the
    covariance of the current value of a with past values of b.

    Raises:
        EmptySequence: If u has no observations
        NegativeBandwidth: If bandwidth < 0
    """
    if kernel.lower() != "bartlett":
        raise ValueError(f"Only the Bartlett kernel is supported, got {kernel!r}")
    if bandwidth < 0:
        raise NegativeBandwidth(f"Bandwidth must be >= 0, got {bandwidth}")
    w = np.asarray(u, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    T = w.shape[0]
    if T == 0:
        raise EmptySequence("Cannot estimate a long-run variance from an empty sequence")
    if demean:
        w = w - w.mean(axis=0)

    sigma = w.T @ w / T
    lam = np.zeros_like(sigma)
    for j, weight in enumerate(bartlett_weights(min(bandwidth, T - 1)), start=1):
        lam += weight * (w[j:].T @ w[:-j]) / T
    omega = sigma + lam + lam.T
    return LrvEstimate(Sigma=sigma, Lambda=lam, Omega=omega, bandwidth=bandwidth, kernel="bartlett")
