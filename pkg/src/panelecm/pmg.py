"""Pooled Mean Group estimation of a panel error-correction model.

Each entity follows

    D.y_t = phi_i (y_{t-1} - theta' x_{t-1}) + sum_{j=1}^{p-1} g_ij D.y_{t-j}
            + sum_m sum_{j=0}^{q_m-1} d_imj D.x_{m,t-j} + c_i + e_it

with theta shared across entities. Given theta, every entity's phi_i,
short-run coefficients and error variance have closed forms (least squares
on its own ECM regression), so theta is estimated by maximising the
concentrated log-likelihood

    L(theta) = -sum_i (n_i / 2) (1 + ln(2 pi RSS_i(theta) / n_i))

with Gauss-Newton steps and step-halving.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .coint import canonical_order
from .errors import InvalidParameters, NotConverged, RankDeficient, TooFewPeriods
from .kernels import ols
from .panel import Panel

logger = logging.getLogger(__name__)

STEP_TOLERANCE = 1e-8
DECREMENT_TOLERANCE = 1e-8
MAX_ITERATIONS = 200
MAX_HALVINGS = 40
ERROR_CORRECTION = "COINTEQ"
INTERCEPT = "C"


def _normal_p(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def diff_name(variable: str, lag: int) -> str:
    """Column label for a lagged difference, e.g. D(FLOW(-3))."""
    return f"D({variable})" if lag == 0 else f"D({variable}(-{lag}))"


@dataclass(frozen=True)
class ArdlOrder:
    """Lag orders of an ARDL(p, q_1, ..., q_k) model.

    p counts lags of the dependent variable (p - 1 lagged differences in the
    ECM form); q[name] counts the differenced lags 0..q-1 of a regressor.
    """

    p: int
    q: Mapping[str, int]

    def __post_init__(self):
        if self.p < 1:
            raise InvalidParameters(f"ARDL p must be >= 1, got {self.p}")
        bad = {k: v for k, v in self.q.items() if v < 0}
        if bad:
            raise InvalidParameters(f"ARDL q must be >= 0, got {bad}")

    @classmethod
    def default_for(cls, regressors: Sequence[str], flow_variable: str = "FLOW") -> "ArdlOrder":
        """p=2; four differenced lags of the flow variable, one of every other regressor."""
        return cls(p=2, q={r: 4 if r == flow_variable else 1 for r in regressors})

    def lags(self, regressor: str) -> int:
        return int(self.q.get(regressor, 1))

    def start(self, regressors: Sequence[str]) -> int:
        """First usable time index once every lag exists."""
        return max([self.p, 1, *(self.lags(r) for r in regressors)])

    def n_short_run(self, regressors: Sequence[str]) -> int:
        """Short-run columns per entity, intercept included."""
        return (self.p - 1) + sum(self.lags(r) for r in regressors) + 1


@dataclass
class PmgEntityFit:
    entity: str
    phi: float
    phi_se: float
    phi_z: float
    phi_p: float
    short_run: dict[str, float]
    short_run_z: dict[str, float]
    short_run_p: dict[str, float]
    sigma2: float
    n_obs: int
    residuals: np.ndarray = field(repr=False)
    design: np.ndarray = field(repr=False)


@dataclass
class MeanGroupRow:
    """Cross-entity averages with their across-entity standard errors."""

    phi: float
    phi_se: float
    phi_z: float
    phi_p: float
    short_run: dict[str, float]
    short_run_se: dict[str, float]
    short_run_z: dict[str, float]
    short_run_p: dict[str, float]


@dataclass
class PmgFit:
    dependent: str
    regressors: list[str]
    order: ArdlOrder
    theta: dict[str, float]
    theta_se: dict[str, float]
    z_stats: dict[str, float]
    p_values: dict[str, float]
    entities: list[PmgEntityFit]
    mean_group: MeanGroupRow
    loglik: float
    loglik_history: list[float]
    iterations: int
    converged: bool
    gradient_norm: float
    n_obs_used: int
    flags: list[str] = field(default_factory=list)

    @property
    def phi(self) -> dict[str, float]:
        return {e.entity: e.phi for e in self.entities}

    @property
    def short_run(self) -> dict[str, dict[str, float]]:
        return {e.entity: e.short_run for e in self.entities}

    def entity(self, name: str) -> PmgEntityFit:
        for e in self.entities:
            if e.entity == name:
                return e
        raise KeyError(name)


@dataclass
class _EcmData:
    entity: str
    dy: np.ndarray
    y_lag: np.ndarray
    X_lag: np.ndarray
    W: np.ndarray
    names: list[str]


def _ecm_data(panel: Panel, dependent: str, regressors: Sequence[str], order: ArdlOrder) -> list[_EcmData]:
    panel.require(dependent, *regressors)
    T = panel.n_periods
    s = order.start(regressors)
    n = T - s
    needed = 5 + 1 + len(regressors) + order.n_short_run(regressors)
    if n < needed:
        raise TooFewPeriods(
            f"ARDL order p={order.p}, q={dict(order.q)} leaves {n} observations per entity; need at least {needed}"
        )
    y_all = panel.series(dependent)
    X_all = panel.matrix(list(regressors))
    out = []
    for i in canonical_order(panel):
        y, X = y_all[i], X_all[i]
        dy_full = np.diff(y)
        dX_full = np.diff(X, axis=0)
        # dy_full[t-1] = y_t - y_{t-1}
        cols, names = [], []
        for j in range(1, order.p):
            cols.append(dy_full[s - 1 - j : T - 1 - j])
            names.append(diff_name(dependent, j))
        for m, r in enumerate(regressors):
            for j in range(order.lags(r)):
                cols.append(dX_full[s - 1 - j : T - 1 - j, m])
                names.append(diff_name(r, j))
        cols.append(np.ones(n))
        names.append(INTERCEPT)
        out.append(
            _EcmData(
                entity=panel.entities[i],
                dy=dy_full[s - 1 :],
                y_lag=y[s - 1 : T - 1],
                X_lag=X[s - 1 : T - 1],
                W=np.column_stack(cols),
                names=names,
            )
        )
    return out


@dataclass
class _Profile:
    loglik: float
    gradient: np.ndarray
    information: np.ndarray


def _profile(theta: np.ndarray, data: list[_EcmData], derivatives: bool = True) -> _Profile:
    k = len(theta)
    loglik = 0.0
    grad = np.zeros(k)
    info = np.zeros((k, k))
    for d in data:
        xi = d.y_lag - d.X_lag @ theta
        Z = np.column_stack([xi, d.W])
        coef, _, rank, _ = linalg.lstsq(Z, d.dy)
        if rank < Z.shape[1]:
            raise RankDeficient(rank, Z.shape[1], f"ECM regression for entity {d.entity!r}")
        e = d.dy - Z @ coef
        n = len(e)
        sigma2 = float(e @ e) / n
        loglik -= 0.5 * n * (1.0 + math.log(2.0 * math.pi * sigma2))
        if derivatives:
            phi = coef[0]
            grad -= (phi / sigma2) * (d.X_lag.T @ e)
            proj, *_ = linalg.lstsq(Z, d.X_lag)
            R = d.X_lag - Z @ proj
            info += (phi * phi / sigma2) * (R.T @ R)
    return _Profile(loglik, grad, info)


def pmg_loglik(
    theta: Sequence[float] | np.ndarray,
    panel: Panel,
    dependent: str,
    regressors: Sequence[str],
    order: ArdlOrder,
) -> float:
    """Concentrated log-likelihood at theta, entity nuisance parameters profiled out."""
    data = _ecm_data(panel, dependent, regressors, order)
    return _profile(np.asarray(theta, dtype=float), data, derivatives=False).loglik


def pmg_gradient(
    theta: Sequence[float] | np.ndarray,
    panel: Panel,
    dependent: str,
    regressors: Sequence[str],
    order: ArdlOrder,
) -> np.ndarray:
    """Analytic gradient of pmg_loglik with respect to theta."""
    data = _ecm_data(panel, dependent, regressors, order)
    return _profile(np.asarray(theta, dtype=float), data).gradient


def _starting_theta(data: list[_EcmData]) -> np.ndarray:
    ys = np.concatenate([d.y_lag - d.y_lag.mean() for d in data])
    Xs = np.vstack([d.X_lag - d.X_lag.mean(axis=0) for d in data])
    return ols(ys, Xs, context="PMG starting values").coefficients


def _entity_fit(d: _EcmData, theta: np.ndarray) -> PmgEntityFit:
    xi = d.y_lag - d.X_lag @ theta
    design = np.column_stack([xi, d.W])
    fit = ols(d.dy, design, names=[ERROR_CORRECTION, *d.names], context=f"ECM regression for entity {d.entity!r}")
    return PmgEntityFit(
        entity=d.entity,
        phi=float(fit.coefficients[0]),
        phi_se=float(fit.standard_errors[0]),
        phi_z=float(fit.t_stats[0]),
        phi_p=_normal_p(fit.t_stats[0]),
        short_run=dict(zip(d.names, map(float, fit.coefficients[1:]))),
        short_run_z=dict(zip(d.names, map(float, fit.t_stats[1:]))),
        short_run_p={name: _normal_p(t) for name, t in zip(d.names, fit.t_stats[1:])},
        sigma2=fit.rss / fit.n_obs,
        n_obs=fit.n_obs,
        residuals=fit.residuals,
        design=design,
    )


def _mean_group(entities: list[PmgEntityFit]) -> MeanGroupRow:
    N = len(entities)

    def avg(values: list[float]) -> tuple[float, float, float]:
        arr = np.asarray(values)
        mean = float(arr.mean())
        se = float(arr.std(ddof=1) / math.sqrt(N)) if N > 1 else math.nan
        z = mean / se if se > 0 else math.nan
        return mean, se, z

    phi, phi_se, phi_z = avg([e.phi for e in entities])
    names = list(entities[0].short_run)
    sr = {name: avg([e.short_run[name] for e in entities]) for name in names}
    return MeanGroupRow(
        phi=phi,
        phi_se=phi_se,
        phi_z=phi_z,
        phi_p=_normal_p(phi_z),
        short_run={k: v[0] for k, v in sr.items()},
        short_run_se={k: v[1] for k, v in sr.items()},
        short_run_z={k: v[2] for k, v in sr.items()},
        short_run_p={k: _normal_p(v[2]) for k, v in sr.items()},
    )


def pmg_fit(
    panel: Panel,
    dependent: str,
    regressors: Sequence[str],
    order: ArdlOrder | None = None,
    theta0: Sequence[float] | None = None,
    max_iter: int = MAX_ITERATIONS,
    tol: float = STEP_TOLERANCE,
    require_convergence: bool = False,
) -> PmgFit:
    """Fit the PMG model by concentrated maximum likelihood.

    Args:
        panel: Balanced panel holding the dependent variable and regressors
        dependent: Name of y
        regressors: Names of the long-run regressors x
        order: ARDL lag orders; defaults to ArdlOrder.default_for(regressors)
        theta0: Starting long-run vector; defaults to pooled within OLS of
            the static levels regression
        max_iter: Iteration cap
        tol: Convergence threshold on max |change in theta|
        require_convergence: Raise NotConverged instead of returning the best
            iterate with converged=False

    Raises:
        TooFewPeriods: If the lag orders leave too few observations
        RankDeficient: If an entity's ECM regression is collinear
        NotConverged: Only when require_convergence is set
    """
    regressors = list(regressors)
    order = order or ArdlOrder.default_for(regressors)
    data = _ecm_data(panel, dependent, regressors, order)
    theta = np.asarray(theta0, dtype=float) if theta0 is not None else _starting_theta(data)

    prof = _profile(theta, data)
    history = [prof.loglik]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        try:
            step = linalg.solve(prof.information, prof.gradient, assume_a="pos")
        except linalg.LinAlgError:
            step = linalg.lstsq(prof.information, prof.gradient)[0]
        scale = 1.0
        accepted = None
        for _ in range(MAX_HALVINGS):
            trial = theta + scale * step
            candidate = _profile(trial, data)
            if np.isfinite(candidate.loglik) and candidate.loglik >= prof.loglik:
                accepted = (trial, candidate)
                break
            scale *= 0.5
        if accepted is None:
            logger.debug("PMG iteration %d: no ascent along Newton direction, stopping", iterations)
            converged = True
            break
        change = float(np.max(np.abs(accepted[0] - theta)))
        theta, prof = accepted
        history.append(prof.loglik)
        logger.debug("PMG iteration %d: loglik=%.10f step=%.3e scale=%g", iterations, prof.loglik, change, scale)
        if change < tol:
            converged = True
            break

    decrement = float(prof.gradient @ linalg.lstsq(prof.information, prof.gradient)[0])
    converged = converged and decrement <= DECREMENT_TOLERANCE
    flags: list[str] = []
    if not converged:
        flags.append("not-converged")
        message = f"PMG did not converge in {iterations} iterations (Newton decrement {decrement:.3e})"
        if require_convergence:
            raise NotConverged(message)
        logger.warning(message)

    cov = linalg.pinv(prof.information)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = theta / se

    entities = [_entity_fit(d, theta) for d in data]
    for e in entities:
        if e.phi >= 0.0:
            flags.append(f"no-error-correction:{e.entity}")
            logger.warning("Entity %s has phi=%.4f >= 0: no error correction", e.entity, e.phi)
        if not -2.0 < e.phi <= 0.0:
            flags.append(f"non-stationary-adjustment:{e.entity}")
            logger.warning("Entity %s has phi=%.4f outside (-2, 0]", e.entity, e.phi)

    logger.info(
        "PMG: N=%d, observations used=%d, iterations=%d, loglik=%.4f",
        len(entities),
        sum(e.n_obs for e in entities),
        iterations,
        prof.loglik,
    )
    return PmgFit(
        dependent=dependent,
        regressors=regressors,
        order=order,
        theta=dict(zip(regressors, map(float, theta))),
        theta_se=dict(zip(regressors, map(float, se))),
        z_stats=dict(zip(regressors, map(float, z))),
        p_values={r: _normal_p(v) for r, v in zip(regressors, z)},
        entities=entities,
        mean_group=_mean_group(entities),
        loglik=prof.loglik,
        loglik_history=history,
        iterations=iterations,
        converged=converged,
        gradient_norm=float(np.linalg.norm(prof.gradient)),
        n_obs_used=sum(e.n_obs for e in entities),
        flags=flags,
    )


@dataclass
class ArdlLevels:
    """ARDL levels form y_t = c + sum a_j y_{t-j} + sum_m sum_j b_mj x_{m,t-j}."""

    const: float
    ar: np.ndarray
    distributed_lags: dict[str, np.ndarray]

    def implied_long_run(self) -> dict[str, float]:
        denom = 1.0 - float(self.ar.sum())
        return {name: float(b.sum()) / denom for name, b in self.distributed_lags.items()}


def ardl_levels(fit: PmgFit, entity: str) -> ArdlLevels:
    """Expand one entity's fitted ECM back into ARDL levels form."""
    e = fit.entity(entity)
    p = fit.order.p
    ar = np.zeros(p)
    ar[0] = 1.0 + e.phi
    for j in range(1, p):
        g = e.short_run[diff_name(fit.dependent, j)]
        ar[j - 1] += g
        ar[j] -= g
    lags = {}
    for r in fit.regressors:
        q = fit.order.lags(r)
        b = np.zeros(max(q, 1) + 1)
        b[1] -= e.phi * fit.theta[r]
        for j in range(q):
            d = e.short_run[diff_name(r, j)]
            b[j] += d
            b[j + 1] -= d
        lags[r] = b
    return ArdlLevels(const=e.short_run[INTERCEPT], ar=ar, distributed_lags=lags)


def implied_long_run(fit: PmgFit, entity: str) -> dict[str, float]:
    """Long-run coefficients re-derived from the entity's ARDL levels form."""
    return ardl_levels(fit, entity).implied_long_run()
