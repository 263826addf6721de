"""Granger non-causality testing in heterogeneous panels (Dumitrescu-Hurlin).

Each entity gets its own autoregression of the effect on K lags of itself
and K lags of the cause. The per-entity Wald statistics for the K cause
coefficients are averaged into W-bar and standardised two ways:

- Z-bar uses the asymptotic chi-square(K) moments (T large)
- Z-bar tilde uses the exact finite-T mean and variance of the individual
  Wald statistic, evaluated at the post-lag sample length
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coint import canonical_order
from .errors import RankDeficient, SequenceTooShort
from .kernels import ols
from .panel import Panel

logger = logging.getLogger(__name__)

DEFAULT_LAGS = 2


@dataclass
class IndividualWald:
    statistic: float
    n_obs: int
    degenerate: bool = False


@dataclass
class DhReport:
    cause: str
    effect: str
    lag_order: int
    wald_individual: dict[str, float]
    w_bar: float
    z_bar: float
    z_bar_tilde: float
    p_values: dict[str, float]
    n_panels: int
    T_used: int
    degenerate_entities: list[str] = field(default_factory=list)

    @property
    def hypothesis(self) -> str:
        return f"{self.cause} does not Granger-cause {self.effect}"


def wald_detail(
    effect_series: Sequence[float] | np.ndarray, cause_series: Sequence[float] | np.ndarray, K: int
) -> IndividualWald:
    """Wald statistic for the joint nullity of K cause lags, with sample details.

    A cause series without variation cannot be tested; the statistic is then
    0 and the result is flagged as degenerate.

    Raises:
        SequenceTooShort: If the series are too short for K lags
    """
    y = np.asarray(effect_series, dtype=float)
    x = np.asarray(cause_series, dtype=float)
    if len(y) != len(x):
        raise ValueError(f"Series lengths differ: effect {len(y)}, cause {len(x)}")
    if K < 1:
        raise ValueError(f"Lag order must be >= 1, got {K}")
    T = len(y)
    if T - 2 * K - 1 <= K:
        raise SequenceTooShort(f"Granger regression with K={K} needs T > {3 * K + 1}, got {T}")

    n = T - K
    own = [y[K - j : T - j] for j in range(1, K + 1)]
    cross = [x[K - j : T - j] for j in range(1, K + 1)]
    if np.ptp(x[: T - 1]) == 0.0:
        logger.warning("Cause series has no variation; Wald statistic set to 0")
        return IndividualWald(statistic=0.0, n_obs=n, degenerate=True)

    names = [f"effect_lag{j}" for j in range(1, K + 1)] + [f"cause_lag{j}" for j in range(1, K + 1)]
    fit = ols(y[K:], np.column_stack(own + cross), intercept=True, names=names, context="Granger regression")
    idx = slice(1 + K, 1 + 2 * K)
    b = fit.coefficients[idx]
    V = fit.cov[idx, idx]
    wald = float(b @ np.linalg.solve(V, b))
    return IndividualWald(statistic=max(wald, 0.0), n_obs=n)


def individual_wald(
    effect_series: Sequence[float] | np.ndarray, cause_series: Sequence[float] | np.ndarray, K: int
) -> float:
    """Wald statistic for "cause does not Granger-cause effect" in one entity."""
    return wald_detail(effect_series, cause_series, K).statistic


def wald_moments(K: int, T: int) -> tuple[float, float]:
    """Exact mean and variance of an individual Wald statistic under the null.

    T is the number of observations in the Granger regression.
    """
    if T - 2 * K - 5 <= 0:
        raise SequenceTooShort(f"Finite-sample moments need T > 2K + 5, got T={T}, K={K}")
    mean = K * (T - 2 * K - 1) / (T - 2 * K - 3)
    var = 2 * K * (T - 2 * K - 1) ** 2 * (T - K - 3) / ((T - 2 * K - 3) ** 2 * (T - 2 * K - 5))
    return mean, var


def dh_statistics(walds: Sequence[float], K: int, T_used: int) -> tuple[float, float, float]:
    """Aggregate individual Wald statistics into (W-bar, Z-bar, Z-bar tilde)."""
    N = len(walds)
    w_bar = math.fsum(walds) / N
    z_bar = math.sqrt(N / (2 * K)) * (w_bar - K)
    mean, var = wald_moments(K, T_used)
    z_tilde = math.sqrt(N) * (w_bar - mean) / math.sqrt(var)
    return w_bar, z_bar, z_tilde


def dh_test(panel: Panel, cause: str, effect: str, K: int = DEFAULT_LAGS) -> DhReport:
    """Dumitrescu-Hurlin test of homogeneous Granger non-causality.

    Raises:
        SequenceTooShort: If the panel is too short for K lags
        RankDeficient: If an entity's regression is collinear
    """
    panel.require(cause, effect)
    if K < 1:
        raise ValueError(f"Lag order must be >= 1, got {K}")
    y = panel.series(effect)
    x = panel.series(cause)
    walds: dict[str, float] = {}
    degenerate = []
    n_obs = panel.n_periods - K
    for i in canonical_order(panel):
        entity = panel.entities[i]
        try:
            detail = wald_detail(y[i], x[i], K)
        except RankDeficient as exc:
            raise RankDeficient(exc.rank, exc.columns, f"entity {entity!r}") from exc
        walds[entity] = detail.statistic
        if detail.degenerate:
            degenerate.append(entity)
        logger.debug("Wald %s -> %s for %s: %.4f", cause, effect, entity, detail.statistic)

    w_bar, z_bar, z_tilde = dh_statistics(list(walds.values()), K, n_obs)
    p_values = {
        "z_bar": float(2 * stats.norm.sf(abs(z_bar))),
        "z_bar_tilde": float(2 * stats.norm.sf(abs(z_tilde))),
    }
    logger.info("DH test %s -> %s: W-bar=%.4f, N=%d, T used=%d", cause, effect, w_bar, len(walds), n_obs)
    return DhReport(
        cause=cause,
        effect=effect,
        lag_order=K,
        wald_individual=walds,
        w_bar=w_bar,
        z_bar=z_bar,
        z_bar_tilde=z_tilde,
        p_values=p_values,
        n_panels=len(walds),
        T_used=n_obs,
        degenerate_entities=degenerate,
    )
