"""Residual-based panel cointegration tests (Kao and Pedroni).

Kao's statistics assume one cointegrating vector shared by every panel and
pool the within-demeaned regression. Pedroni's statistics fit one
regression per entity and standardise the resulting residual-based
statistics to N(0, 1) with null moments of the per-entity functionals.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import stats

from .errors import RankDeficient, TooFewEntities, TooFewPeriods
from .kernels import DEFAULT_BANDWIDTH, long_run_variance, ols
from .panel import Panel

logger = logging.getLogger(__name__)

MIN_KAO_PERIODS = 8

KAO_STATISTICS = (
    "Modified Dickey-Fuller t",
    "Dickey-Fuller t",
    "Augmented Dickey-Fuller t",
    "Unadjusted modified Dickey-Fuller t",
    "Unadjusted Dickey-Fuller t",
)

PEDRONI_PANEL_STATISTICS = (
    "Modified variance ratio",
    "Modified Phillips-Perron t",
    "Phillips-Perron t",
    "Augmented Dickey-Fuller t",
)

# The variance ratio has no group-mean form.
PEDRONI_GROUP_STATISTICS = PEDRONI_PANEL_STATISTICS[1:]

# Kao finite-sample moments are simulated once per (N, T, regressors, bandwidth, lags).
KAO_MOMENT_REPS = 1000
KAO_MOMENT_SEED = 19990102

# Simulated Pedroni moments, for regressor counts and deterministics the table lacks.
NULL_MOMENT_REPS = 4000
NULL_MOMENT_SEED = 19990101

# Asymptotic (mu, nu) of the per-entity functionals under no cointegration, from
# Pedroni (1999, Oxford Bulletin of Economics and Statistics 61, Table 2), the
# rows for one regressor. The panel PP t and panel ADF t share a limit, as do
# the group PP t and group ADF t. Keyed by (regressors, trend, variant).
PEDRONI_TABLE_MOMENTS: dict[tuple[int, bool, str], dict[str, tuple[float, float]]] = {
    (1, False, "panel"): {
        "Modified variance ratio": (8.62, 60.75),
        "Modified Phillips-Perron t": (-6.02, 31.27),
        "Phillips-Perron t": (-1.73, 0.93),
        "Augmented Dickey-Fuller t": (-1.73, 0.93),
    },
    (1, True, "panel"): {
        "Modified variance ratio": (17.86, 101.68),
        "Modified Phillips-Perron t": (-10.22, 39.52),
        "Phillips-Perron t": (-2.29, 0.66),
        "Augmented Dickey-Fuller t": (-2.29, 0.66),
    },
    (1, False, "group"): {
        "Modified Phillips-Perron t": (-9.05, 35.98),
        "Phillips-Perron t": (-2.03, 0.66),
        "Augmented Dickey-Fuller t": (-2.03, 0.66),
    },
}


class VectorHomogeneity(str, Enum):
    SAME = "same-for-all-panels"
    PANEL_SPECIFIC = "panel-specific"


class CointDeterministic(str, Enum):
    MEANS = "panel means"
    MEANS_TRENDS = "panel means + panel-specific linear trends"


class PedroniVariant(str, Enum):
    PANEL = "panel"
    GROUP = "group"


class KaoStandardisation(str, Enum):
    FINITE_SAMPLE = "finite-sample"
    ASYMPTOTIC = "asymptotic"


class MomentSource(str, Enum):
    """Where Pedroni's null moments come from."""

    TABLE = "table"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class CointSpec:
    dependent: str
    regressors: tuple[str, ...]
    vector_homogeneity: VectorHomogeneity = VectorHomogeneity.SAME
    deterministic: CointDeterministic = CointDeterministic.MEANS
    bandwidth: int = DEFAULT_BANDWIDTH
    aug_lags: int = 1

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors:
            raise ValueError("CointSpec needs at least one regressor")
        if self.bandwidth < 0:
            raise ValueError(f"bandwidth must be >= 0, got {self.bandwidth}")
        if self.aug_lags < 0:
            raise ValueError(f"aug_lags must be >= 0, got {self.aug_lags}")

    @classmethod
    def kao(cls, dependent: str, regressors: Sequence[str], **kwargs) -> "CointSpec":
        return cls(dependent, tuple(regressors), VectorHomogeneity.SAME, CointDeterministic.MEANS, **kwargs)

    @classmethod
    def pedroni(cls, dependent: str, regressors: Sequence[str], trend: bool = True, **kwargs) -> "CointSpec":
        det = CointDeterministic.MEANS_TRENDS if trend else CointDeterministic.MEANS
        return cls(dependent, tuple(regressors), VectorHomogeneity.PANEL_SPECIFIC, det, **kwargs)


@dataclass
class TestStatistic:
    name: str
    value: float
    p_value: float

    # keep pytest from collecting this as a test class
    __test__ = False


@dataclass
class CointReport:
    test_family: str
    statistics: list[TestStatistic]
    n_panels: int
    n_periods_used: int
    spec: CointSpec
    variant: str | None = None
    tail: str = "lower"
    standardisation: str = KaoStandardisation.ASYMPTOTIC.value
    flags: list[str] = field(default_factory=list)

    def statistic(self, name: str) -> TestStatistic:
        for stat in self.statistics:
            if stat.name == name:
                return stat
        raise KeyError(name)

    def values(self) -> dict[str, float]:
        return {s.name: s.value for s in self.statistics}


def canonical_order(panel: Panel) -> list[int]:
    """Entity indices sorted by identifier, so reductions ignore input order."""
    return sorted(range(panel.n_entities), key=lambda i: panel.entities[i])


def _lower_p(z: float) -> float:
    return float(stats.norm.cdf(z))


def _two_sided_p(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


# Kao


def _kao_values(y: np.ndarray, X: np.ndarray, bandwidth: int, aug_lags: int) -> tuple[np.ndarray, float]:
    """Kao's five statistics, asymptotically standardised, in KAO_STATISTICS order.

    y is N x T and X is N x T x m, entities already in canonical order.
    Returns the statistics and the pooled autoregressive coefficient rho.
    """
    N, T, m = X.shape
    p = aug_lags

    # Pooled within regression imposing a common beta
    y_w = y - y.mean(axis=1, keepdims=True)
    X_w = X - X.mean(axis=1, keepdims=True)
    e = ols(y_w.ravel(), X_w.reshape(N * T, m), context="Kao first stage").residuals.reshape(N, T)

    # Dickey-Fuller regression on pooled residuals, no deterministics
    de = np.diff(e, axis=1)
    df_fit = ols(de.ravel(), e[:, :-1].ravel(), names=["lag_resid"], context="Kao DF regression")
    rho = 1.0 + float(df_fit.coefficients[0])
    t_rho = float(df_fit.t_stats[0])

    # ADF regression with p lagged differences on a common sample
    n_i = T - 1 - p
    rows_y, rows_x = [], []
    for i in range(N):
        rows_y.append(de[i, p:])
        cols = [e[i, p : p + n_i]]
        cols += [de[i, p - j : p - j + n_i] for j in range(1, p + 1)]
        rows_x.append(np.column_stack(cols))
    t_adf = float(ols(np.concatenate(rows_y), np.vstack(rows_x), context="Kao ADF regression").t_stats[0])

    # Long-run covariance of the DF innovations and dx, averaged across entities
    v = de - (rho - 1.0) * e[:, :-1]
    dX = np.diff(X, axis=1)
    sig = np.zeros((m + 1, m + 1))
    omg = np.zeros((m + 1, m + 1))
    for i in range(N):
        lrv = long_run_variance(np.column_stack([v[i], dX[i]]), bandwidth, demean=True)
        sig += lrv.Sigma / N
        omg += lrv.Omega / N
    sigma_v2 = _conditional_variance(sig)
    sigma_0v2 = _conditional_variance(omg)

    T_df = T - 1
    sqN = np.sqrt(N)
    ratio = sigma_v2 / sigma_0v2
    df_rho = (sqN * T_df * (rho - 1.0) + 3.0 * sqN) / np.sqrt(10.2)
    df_t = np.sqrt(1.25) * t_rho + np.sqrt(1.875 * N)
    df_rho_star = (sqN * T_df * (rho - 1.0) + 3.0 * sqN * ratio) / np.sqrt(3.0 + 36.0 * ratio**2 / 5.0)
    adj_den = np.sqrt(1.0 / (2.0 * ratio) + 3.0 * ratio / 10.0)
    shift = np.sqrt(6.0 * N) * np.sqrt(ratio) / 2.0
    df_t_star = (t_rho + shift) / adj_den
    adf = (t_adf + shift) / adj_den
    return np.array([df_rho_star, df_t_star, adf, df_rho, df_t], dtype=float), rho


@lru_cache(maxsize=64)
def kao_null_moments(
    n_panels: int, n_periods: int, n_regressors: int, bandwidth: int, aug_lags: int
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of Kao's statistics under no cointegration.

    Simulated from independent Gaussian random walks of the same shape as the
    data. The statistics are invariant to the scale of y and of each x, so
    these moments only depend on the panel dimensions and the test options.
    """
    rng = np.random.default_rng([KAO_MOMENT_SEED, n_panels, n_periods, n_regressors, bandwidth, aug_lags])
    draws = np.empty((KAO_MOMENT_REPS, len(KAO_STATISTICS)))
    for r in range(KAO_MOMENT_REPS):
        walks = np.cumsum(rng.standard_normal((n_panels, n_periods, n_regressors + 1)), axis=1)
        draws[r], _ = _kao_values(walks[:, :, 0], walks[:, :, 1:], bandwidth, aug_lags)
    logger.debug("Simulated Kao null moments for N=%d, T=%d, m=%d", n_panels, n_periods, n_regressors)
    return draws.mean(axis=0), draws.std(axis=0, ddof=1)


def kao_test(panel: Panel, spec: CointSpec, finite_sample: bool = True) -> CointReport:
    """Kao (1999) residual-based test with a homogeneous cointegrating vector.

    The five statistics are N(0, 1) under the null only as N and T grow. With
    finite_sample set (the default) each is re-centred and re-scaled by its
    simulated null mean and standard deviation at the panel's own N and T;
    otherwise the asymptotic standardisation is reported as is.

    Raises:
        TooFewPeriods: If fewer than 8 periods survive the lags
    """
    if spec.vector_homogeneity is not VectorHomogeneity.SAME:
        raise ValueError("Kao's test requires a cointegrating vector shared by all panels")
    panel.require(spec.dependent, *spec.regressors)
    order = canonical_order(panel)
    y = panel.series(spec.dependent)[order]
    X = panel.matrix(spec.regressors)[order]
    N, T, m = X.shape
    n_used = T - 1 - spec.aug_lags
    if n_used < MIN_KAO_PERIODS:
        raise TooFewPeriods(f"Kao test needs at least {MIN_KAO_PERIODS} usable periods, got {n_used}")
    flags = []
    if N == 1:
        flags.append("single-entity")
        logger.warning("Kao test run on a single entity; panel asymptotics do not apply")

    values, rho = _kao_values(y, X, spec.bandwidth, spec.aug_lags)
    if finite_sample:
        mean, sd = kao_null_moments(N, T, m, spec.bandwidth, spec.aug_lags)
        values = (values - mean) / sd
    mode = KaoStandardisation.FINITE_SAMPLE if finite_sample else KaoStandardisation.ASYMPTOTIC
    statistics = [
        TestStatistic(name, float(v), _lower_p(float(v))) for name, v in zip(KAO_STATISTICS, values)
    ]
    logger.info("Kao test (%s): N=%d, periods used=%d, rho=%.4f", mode.value, N, n_used, rho)
    return CointReport(
        test_family="Kao",
        statistics=statistics,
        n_panels=N,
        n_periods_used=n_used,
        spec=spec,
        tail="lower",
        standardisation=mode.value,
        flags=flags,
    )


def _conditional_variance(M: np.ndarray) -> float:
    """M_11 - M_12 M_22^{-1} M_21 for a partitioned covariance matrix."""
    return float(M[0, 0] - M[0, 1:] @ np.linalg.solve(M[1:, 1:], M[1:, 0]))


# Pedroni


@dataclass
class _EntityFunctionals:
    """Per-entity pieces the Pedroni statistics are built from."""

    A: float  # T^-2 sum L^-2 e_{t-1}^2
    B: float  # T^-1 sum L^-2 (e_{t-1} de_t - lambda)
    C: float  # sigma^2 / L^2
    A_adf: float
    B_adf: float
    S_adf: float  # s*^2 / L^2
    group_rho: float
    group_t: float
    group_adf: float


def _entity_functionals(
    y: np.ndarray, X: np.ndarray, trend: bool, bandwidth: int, aug_lags: int
) -> _EntityFunctionals:
    T = len(y)
    det = [np.ones(T)]
    if trend:
        det.append(np.arange(1, T + 1, dtype=float))
    design = np.column_stack([X, *det])
    e = ols(y, design, context="Pedroni entity regression").residuals

    # L11^2 from the differenced regression
    dy = np.diff(y)
    dX = np.diff(X, axis=0)
    eta = ols(dy, dX, intercept=trend, context="Pedroni differenced regression").residuals
    L2 = long_run_variance(eta, bandwidth).omega2

    # Nonparametric (Phillips-Perron) pieces
    e_lag = e[:-1]
    de = np.diff(e)
    n = len(de)
    gamma = float(e_lag @ e[1:] / (e_lag @ e_lag))
    mu = e[1:] - gamma * e_lag
    lrv_mu = long_run_variance(mu, bandwidth)
    s2 = lrv_mu.sigma2
    sigma2 = lrv_mu.omega2
    lam = 0.5 * (sigma2 - s2)
    sum_e2 = float(e_lag @ e_lag)
    cross = float(e_lag @ de) - n * lam

    # Parametric (ADF) pieces: partial lagged differences out of e_{t-1} and de_t
    p = aug_lags
    n_adf = n - p
    lhs = de[p:]
    lag_level = e_lag[p:]
    if p > 0:
        Z = np.column_stack([de[p - j : p - j + n_adf] for j in range(1, p + 1)])
        lhs = ols(lhs, Z, context="Pedroni ADF partialling").residuals
        lag_level = ols(lag_level, Z, context="Pedroni ADF partialling").residuals
    coef = float(lag_level @ lhs / (lag_level @ lag_level))
    resid = lhs - coef * lag_level
    s2_adf = float(resid @ resid / n_adf)
    sum_e2_adf = float(lag_level @ lag_level)
    cross_adf = float(lag_level @ lhs)

    return _EntityFunctionals(
        A=sum_e2 / (L2 * n**2),
        B=cross / (L2 * n),
        C=sigma2 / L2,
        A_adf=sum_e2_adf / (L2 * n_adf**2),
        B_adf=cross_adf / (L2 * n_adf),
        S_adf=s2_adf / L2,
        group_rho=n * cross / sum_e2,
        group_t=cross / np.sqrt(sigma2 * sum_e2),
        group_adf=cross_adf / np.sqrt(s2_adf * sum_e2_adf),
    )


def _panel_values(f: dict[str, np.ndarray]) -> dict[str, float]:
    """Pedroni statistics before standardisation, divided by sqrt(N)."""
    A, B, C = f["A"].mean(), f["B"].mean(), f["C"].mean()
    Aa, Ba, Sa = f["A_adf"].mean(), f["B_adf"].mean(), f["S_adf"].mean()
    return {
        "Modified variance ratio": 1.0 / A,
        "Modified Phillips-Perron t": B / A,
        "Phillips-Perron t": B / np.sqrt(C * A),
        "Augmented Dickey-Fuller t": Ba / np.sqrt(Sa * Aa),
    }


def _group_values(f: dict[str, np.ndarray]) -> dict[str, float]:
    return {
        "Modified Phillips-Perron t": f["group_rho"].mean(),
        "Phillips-Perron t": f["group_t"].mean(),
        "Augmented Dickey-Fuller t": f["group_adf"].mean(),
    }


def _panel_influence(f: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """First-order (delta method) influence of each entity on the panel statistics."""
    A, B, C = f["A"], f["B"], f["C"]
    Aa, Ba, Sa = f["A_adf"], f["B_adf"], f["S_adf"]
    mA, mB, mC = A.mean(), B.mean(), C.mean()
    mAa, mBa, mSa = Aa.mean(), Ba.mean(), Sa.mean()
    t_mu = mB / np.sqrt(mC * mA)
    adf_mu = mBa / np.sqrt(mSa * mAa)
    return {
        "Modified variance ratio": -A / mA**2,
        "Modified Phillips-Perron t": (B - (mB / mA) * A) / mA,
        "Phillips-Perron t": B / np.sqrt(mC * mA) - t_mu * C / (2 * mC) - t_mu * A / (2 * mA),
        "Augmented Dickey-Fuller t": Ba / np.sqrt(mSa * mAa)
        - adf_mu * Sa / (2 * mSa)
        - adf_mu * Aa / (2 * mAa),
    }


@lru_cache(maxsize=64)
def null_moments(
    n_regressors: int, trend: bool, n_periods: int, bandwidth: int, aug_lags: int, variant: str
) -> dict[str, tuple[float, float]]:
    """Mean and variance of each statistic's per-entity functional under no cointegration.

    Simulated from independent Gaussian random walks with the same number of
    regressors, deterministic terms, sample length, bandwidth and lag
    augmentation as the data, with a fixed seed so results are reproducible.
    """
    rng = np.random.default_rng([NULL_MOMENT_SEED, n_regressors, int(trend), n_periods])
    draws = []
    for _ in range(NULL_MOMENT_REPS):
        walks = np.cumsum(rng.standard_normal((n_periods, n_regressors + 1)), axis=0)
        draws.append(_entity_functionals(walks[:, 0], walks[:, 1:], trend, bandwidth, aug_lags))
    f = _stack(draws)
    if PedroniVariant(variant) is PedroniVariant.GROUP:
        return {name: (float(np.mean(f[key])), float(np.var(f[key]))) for name, key in _GROUP_KEYS.items()}
    means = _panel_values(f)
    influence = _panel_influence(f)
    return {name: (float(means[name]), float(np.var(influence[name]))) for name in PEDRONI_PANEL_STATISTICS}


def pedroni_moments(
    n_regressors: int,
    trend: bool,
    n_periods: int,
    bandwidth: int,
    aug_lags: int,
    variant: PedroniVariant | str,
    source: MomentSource | str = MomentSource.TABLE,
) -> tuple[dict[str, tuple[float, float]], MomentSource]:
    """Null moments for the requested variant and the source they actually came from.

    The table is used when it covers the regressor count and deterministics;
    otherwise, or when simulation is asked for, the moments are simulated.
    """
    variant = PedroniVariant(variant)
    source = MomentSource(source)
    if source is MomentSource.TABLE:
        row = PEDRONI_TABLE_MOMENTS.get((n_regressors, trend, variant.value))
        if row is not None:
            return row, MomentSource.TABLE
        logger.info(
            "No tabulated Pedroni moments for %d regressors (trend=%s, %s); simulating",
            n_regressors,
            trend,
            variant.value,
        )
    return null_moments(n_regressors, trend, n_periods, bandwidth, aug_lags, variant.value), MomentSource.SIMULATED


_GROUP_KEYS = {
    "Modified Phillips-Perron t": "group_rho",
    "Phillips-Perron t": "group_t",
    "Augmented Dickey-Fuller t": "group_adf",
}


def _stack(items: list[_EntityFunctionals]) -> dict[str, np.ndarray]:
    keys = _EntityFunctionals.__dataclass_fields__.keys()
    return {k: np.array([getattr(item, k) for item in items]) for k in keys}


def pedroni_test(
    panel: Panel,
    spec: CointSpec,
    variant: PedroniVariant | str = PedroniVariant.PANEL,
    moments: MomentSource | str = MomentSource.TABLE,
) -> CointReport:
    """Pedroni residual-based tests with panel-specific cointegrating vectors.

    Each statistic is reported as sqrt(N) (value - mu) / sqrt(nu), with two-sided
    standard-normal p-values. The (mu, nu) pairs come from the published table
    where it has a row for the regressor count, and are simulated otherwise;
    the report's standardisation field names the source used.

    Raises:
        TooFewEntities: If the panel has fewer than 2 entities
        TooFewPeriods: If an entity regression has too few observations
        RankDeficient: If an entity's regression is collinear
    """
    if spec.vector_homogeneity is not VectorHomogeneity.PANEL_SPECIFIC:
        raise ValueError("Pedroni's test requires panel-specific cointegrating vectors")
    variant = PedroniVariant(variant)
    panel.require(spec.dependent, *spec.regressors)
    if panel.n_entities < 2:
        raise TooFewEntities(f"Pedroni's test needs at least 2 entities, got {panel.n_entities}")
    trend = spec.deterministic is CointDeterministic.MEANS_TRENDS
    m = len(spec.regressors)
    T = panel.n_periods
    min_T = m + 2 + int(trend) + spec.aug_lags + 4
    if T < min_T:
        raise TooFewPeriods(f"Pedroni's test needs at least {min_T} periods, got {T}")

    order = canonical_order(panel)
    y = panel.series(spec.dependent)[order]
    X = panel.matrix(spec.regressors)[order]
    items = []
    for pos, i in enumerate(order):
        try:
            items.append(_entity_functionals(y[pos], X[pos], trend, spec.bandwidth, spec.aug_lags))
        except RankDeficient as exc:
            raise RankDeficient(exc.rank, exc.columns, f"entity {panel.entities[i]!r}") from exc
    f = _stack(items)
    N = len(items)

    if variant is PedroniVariant.PANEL:
        raw = _panel_values(f)
        names = PEDRONI_PANEL_STATISTICS
    else:
        raw = _group_values(f)
        names = PEDRONI_GROUP_STATISTICS
    null, source = pedroni_moments(m, trend, T, spec.bandwidth, spec.aug_lags, variant, moments)

    statistics = []
    for name in names:
        mu, nu = null[name]
        z = float(np.sqrt(N) * (raw[name] - mu) / np.sqrt(nu))
        statistics.append(TestStatistic(name, z, _two_sided_p(z)))
    logger.info("Pedroni test (%s, %s moments): N=%d, periods used=%d", variant.value, source.value, N, T - 1)
    return CointReport(
        test_family="Pedroni",
        statistics=statistics,
        n_panels=N,
        n_periods_used=T - 1,
        spec=spec,
        variant=variant.value,
        tail="two-sided",
        standardisation=source.value,
    )
