"""Fixed-effect error-correction regression with an institution x flow interaction."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coint import canonical_order
from .errors import SequenceTooShort
from .kernels import ols
from .panel import Panel, Period

logger = logging.getLogger(__name__)

LAGS_CONSUMED = 2
CONVENTIONAL = "conventional"
CLUSTER_ENTITY = "cluster-entity"


def interaction_name(inst_variable: str, flow_variable: str) -> str:
    return f"{inst_variable}_{flow_variable}"


@dataclass
class EcmDesign:
    """Stacked ECM regression: D.y on lagged levels and lagged differences.

    Rows are ordered entity-major (canonical entity order) then by period.
    """

    rows: list[tuple[str, Period]]
    columns: list[str]
    dependent: str
    y: np.ndarray
    X: np.ndarray
    entity_index: np.ndarray
    period_index: np.ndarray
    n_entities: int
    n_periods_used: int
    flags: list[str] = field(default_factory=list)

    @property
    def n_obs(self) -> int:
        return len(self.y)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]


def build_ecm_design(
    panel: Panel,
    inst_variable: str = "INST",
    flow_variable: str = "FLOW",
    dependent: str = "HP",
    controls: Sequence[str] = ("INTEREST",),
    extra_regressors: Sequence[str] = (),
) -> EcmDesign:
    """Build the lagged-level / lagged-difference design with INST_FLOW = INST x FLOW.

    Column order is L. for [dependent, flow, interaction, controls..., extras...]
    followed by LD. for the same list. Two periods are consumed per entity.

    Raises:
        MissingVariable: If any named variable is absent
        SequenceTooShort: If the panel has fewer than four periods
    """
    panel.require(dependent, flow_variable, inst_variable, *controls, *extra_regressors)
    inter = interaction_name(inst_variable, flow_variable)
    inst_flow = panel.series(inst_variable) * panel.series(flow_variable)
    block = [dependent, flow_variable, inter, *controls, *extra_regressors]
    T = panel.n_periods
    if T < LAGS_CONSUMED + 2:
        raise SequenceTooShort(f"ECM design needs at least {LAGS_CONSUMED + 2} periods, got {T}")

    def values(name: str) -> np.ndarray:
        return inst_flow if name == inter else panel.series(name)

    order = canonical_order(panel)
    ys, Xs, rows, e_idx, t_idx = [], [], [], [], []
    for pos, i in enumerate(order):
        y = panel.series(dependent)[i]
        ys.append(y[2:] - y[1:-1])
        cols = [values(v)[i][1:-1] for v in block]
        cols += [values(v)[i][1:-1] - values(v)[i][:-2] for v in block]
        Xs.append(np.column_stack(cols))
        rows += [(panel.entities[i], panel.periods[t]) for t in range(2, T)]
        e_idx.append(np.full(T - 2, pos))
        t_idx.append(np.arange(T - 2))

    columns = [f"L.{v}" for v in block] + [f"LD.{v}" for v in block]
    X = np.vstack(Xs)
    e_index = np.concatenate(e_idx)
    flags = _degenerate_columns(X, columns, e_index)
    design = EcmDesign(
        rows=rows,
        columns=columns,
        dependent=f"D.{dependent}",
        y=np.concatenate(ys),
        X=X,
        entity_index=e_index,
        period_index=np.concatenate(t_idx),
        n_entities=len(order),
        n_periods_used=T - LAGS_CONSUMED,
        flags=flags,
    )
    logger.info("ECM design: %d rows, %d columns", design.n_obs, len(columns))
    return design


def _degenerate_columns(X: np.ndarray, columns: list[str], entity_index: np.ndarray) -> list[str]:
    flags = []
    for j, name in enumerate(columns):
        col = X[:, j]
        if np.all(col == 0.0):
            flags.append(f"degenerate:{name}")
            logger.warning("ECM column %s is identically zero", name)
        elif np.allclose(_demean_by(col, entity_index), 0.0, atol=1e-14):
            flags.append(f"degenerate:{name}")
            logger.warning("ECM column %s has no within-entity variation", name)
    return flags


def _demean_by(a: np.ndarray, groups: np.ndarray) -> np.ndarray:
    counts = np.bincount(groups)
    if a.ndim == 1:
        means = np.bincount(groups, weights=a) / counts
        return a - means[groups]
    out = np.empty_like(a)
    for j in range(a.shape[1]):
        out[:, j] = _demean_by(a[:, j], groups)
    return out


def within_transform(a: np.ndarray, entity_index: np.ndarray, period_index: np.ndarray | None = None) -> np.ndarray:
    """Entity-demean, or two-way demean when period_index is given (balanced rows)."""
    a = np.asarray(a, dtype=float)
    out = _demean_by(a, entity_index)
    if period_index is not None:
        out = _demean_by(out, period_index)
    return out


@dataclass
class FeEcmReport:
    dependent: str
    columns: list[str]
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    z_stats: dict[str, float]
    p_values: dict[str, float]
    entity_fe: bool
    time_fe: bool
    n_obs: int
    n_entities: int
    dof: int
    r2_within: float
    se_type: str = CONVENTIONAL
    flags: list[str] = field(default_factory=list)


def fe_estimate(design: EcmDesign, time_fe: bool = False, cluster: bool = False) -> FeEcmReport:
    """Least squares on the within-transformed ECM design.

    Entity effects are always removed. With time_fe the two-way within
    transform also removes period effects, which on a balanced design equals
    adding period dummies. Standard errors are conventional unless cluster
    is set, in which case they are clustered by entity.

    Raises:
        RankDeficient: If a column is collinear after the transform
    """
    periods = design.period_index if time_fe else None
    y = within_transform(design.y, design.entity_index, periods)
    X = within_transform(design.X, design.entity_index, periods)
    fit = ols(y, X, names=design.columns, context="fixed-effect ECM")

    n, k = X.shape
    absorbed = design.n_entities + ((design.n_periods_used - 1) if time_fe else 0)
    dof = n - k - absorbed
    if cluster:
        G = design.n_entities
        meat = np.zeros((k, k))
        for g in range(G):
            mask = design.entity_index == g
            s = X[mask].T @ fit.residuals[mask]
            meat += np.outer(s, s)
        factor = G / (G - 1) * (n - 1) / (n - k) if G > 1 else 1.0
        cov = factor * fit.xtx_inv @ meat @ fit.xtx_inv
        se_type = CLUSTER_ENTITY
    else:
        cov = (fit.rss / dof) * fit.xtx_inv
        se_type = CONVENTIONAL
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = fit.coefficients / se
    p = 2 * stats.norm.sf(np.abs(z))
    tss = float(y @ y)
    r2 = 1.0 - fit.rss / tss if tss > 0 else float("nan")

    logger.info("FE-ECM (time FE=%s, %s SE): n=%d, dof=%d", time_fe, se_type, n, dof)
    return FeEcmReport(
        dependent=design.dependent,
        columns=list(design.columns),
        coefficients=dict(zip(design.columns, map(float, fit.coefficients))),
        standard_errors=dict(zip(design.columns, map(float, se))),
        z_stats=dict(zip(design.columns, map(float, z))),
        p_values=dict(zip(design.columns, map(float, p))),
        entity_fe=True,
        time_fe=time_fe,
        n_obs=n,
        n_entities=design.n_entities,
        dof=dof,
        r2_within=r2,
        se_type=se_type,
        flags=list(design.flags),
    )
