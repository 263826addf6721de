"""Synthetic panels and Monte Carlo rejection-rate studies.

Every family draws standard normal innovations from a numpy Generator. Panels
start in 2009Q1 and run for T consecutive quarters. Generic families name
their variables Y and X1..Xk; causal-var uses Y (effect) and X (cause).

Families:

- independent-random-walks: Y and every X are independent driftless random walks.
- cointegrated-homogeneous: X random walks, Y = alpha_i + beta'X + u with
  u_t = rho u_{t-1} + e_t and corr(e_t, dX_t) = endogeneity.
- cointegrated-heterogeneous: as above with beta_i = beta + beta_spread * N(0, 1).
- ecm-pmg: X random walks, dY_t = phi_i (Y_{t-1} - theta'X_{t-1}) + e_t.
- causal-var: X_t = b X_{t-1} + v_t, Y_t = a Y_{t-1} + causal X_{t-1} + e_t.
- study-shaped: six entities carrying HP, FLOW, INCOME, INTEREST, EXRATE,
  STOCKPRICE and INST (annual, step-held), where dHP responds positively to
  lagged FLOW and negatively to lagged INST x FLOW.
"""

import logging
import math
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .causality import DEFAULT_LAGS, dh_test
from .coint import CointSpec, MomentSource, PedroniVariant, kao_test, pedroni_test
from .errors import InvalidParameters, PanelEcmError
from .panel import Panel, Period, period_range

logger = logging.getLogger(__name__)

START = Period(2009, 1)
BURN_IN = 50
MIN_REPS = 100
STUDY_ENTITIES = ("Indonesia", "Malaysia", "Philippines", "Singapore", "Thailand", "Vietnam")


class DgpFamily(str, Enum):
    INDEPENDENT_RANDOM_WALKS = "independent-random-walks"
    COINTEGRATED_HOMOGENEOUS = "cointegrated-homogeneous"
    COINTEGRATED_HETEROGENEOUS = "cointegrated-heterogeneous"
    ECM_PMG = "ecm-pmg"
    CAUSAL_VAR = "causal-var"
    STUDY_SHAPED = "study-shaped"


@dataclass(frozen=True)
class DgpSpec:
    family: DgpFamily
    N: int
    T: int
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", DgpFamily(self.family))
        except ValueError:
            choices = ", ".join(f.value for f in DgpFamily)
            raise InvalidParameters(f"Unknown DGP family {self.family!r}; choose from {choices}") from None
        if self.N < 1:
            raise InvalidParameters(f"N must be >= 1, got {self.N}")
        if self.T < 20:
            raise InvalidParameters(f"T must be >= 20, got {self.T}")
        object.__setattr__(self, "params", dict(self.params))

    def param(self, name: str, default: Any) -> Any:
        return self.params.get(name, default)


def entity_names(N: int) -> list[str]:
    width = max(2, len(str(N)))
    return [f"E{i:0{width}d}" for i in range(1, N + 1)]


def _as_vector(value: Any, k: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.repeat(arr, k)
    if arr.size != k:
        raise InvalidParameters(f"{name} needs {k} values, got {arr.size}")
    return arr


def _panel(entities: list[str], T: int, columns: dict[str, np.ndarray]) -> Panel:
    periods = period_range(START, _shift(START, T - 1))
    names = list(columns)
    cube = np.stack([columns[n] for n in names], axis=2)
    return Panel(entities, periods, names, cube)


def _shift(p: Period, quarters: int) -> Period:
    o = p.ordinal + quarters
    return Period(o // 4, o % 4 + 1)


def _random_walks(rng: np.random.Generator, N: int, T: int, k: int, sd: float = 1.0) -> np.ndarray:
    return np.cumsum(sd * rng.standard_normal((N, T, k)), axis=1)


def _independent_random_walks(spec: DgpSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    k = int(spec.param("k", 1))
    walks = _random_walks(rng, spec.N, spec.T, k + 1)
    cols = {"Y": walks[:, :, 0]}
    cols.update({f"X{j + 1}": walks[:, :, j + 1] for j in range(k)})
    return cols


def _cointegrated(spec: DgpSpec, rng: np.random.Generator, heterogeneous: bool) -> dict[str, np.ndarray]:
    N, T = spec.N, spec.T
    k = int(spec.param("k", 1))
    beta = _as_vector(spec.param("beta", 2.0), k, "beta")
    rho = float(spec.param("rho", 0.0))
    sd = float(spec.param("noise_sd", 1.0))
    corr = float(spec.param("endogeneity", 0.0))
    if not -1.0 < rho < 1.0:
        raise InvalidParameters(f"rho must lie in (-1, 1) for a cointegrated DGP, got {rho}")
    if not -1.0 < corr < 1.0:
        raise InvalidParameters(f"endogeneity must lie in (-1, 1), got {corr}")

    v = rng.standard_normal((N, T, k))
    X = np.cumsum(v, axis=1)
    e = corr * v[:, :, 0] + math.sqrt(1.0 - corr**2) * rng.standard_normal((N, T))
    u = np.zeros((N, T))
    u[:, 0] = e[:, 0] / math.sqrt(1.0 - rho**2)
    for t in range(1, T):
        u[:, t] = rho * u[:, t - 1] + e[:, t]
    betas = np.tile(beta, (N, 1))
    if heterogeneous:
        betas = betas + float(spec.param("beta_spread", 0.5)) * rng.standard_normal((N, k))
    alpha = rng.standard_normal(N) if spec.param("intercepts", True) else np.zeros(N)
    y = alpha[:, None] + np.einsum("ntk,nk->nt", X, betas) + sd * u
    cols = {"Y": y}
    cols.update({f"X{j + 1}": X[:, :, j] for j in range(k)})
    return cols


def _ecm_pmg(spec: DgpSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    N, T = spec.N, spec.T
    theta = np.atleast_1d(np.asarray(spec.param("theta", 0.5), dtype=float))
    k = len(theta)
    default_phi = np.linspace(-0.1, -0.6, N) if N > 1 else np.array([-0.3])
    phi = _as_vector(spec.param("phi", default_phi), N, "phi")
    if np.any((phi >= 0) | (phi <= -2)):
        raise InvalidParameters(f"phi must lie in (-2, 0) for error correction, got {phi.tolist()}")
    sd = float(spec.param("noise_sd", 1.0))
    total = T + BURN_IN
    X = _random_walks(rng, N, total, k)
    eps = sd * rng.standard_normal((N, total))
    y = np.zeros((N, total))
    y[:, 0] = X[:, 0] @ theta
    for t in range(1, total):
        gap = y[:, t - 1] - X[:, t - 1] @ theta
        y[:, t] = y[:, t - 1] + phi * gap + eps[:, t]
    cols = {"Y": y[:, BURN_IN:]}
    cols.update({f"X{j + 1}": X[:, BURN_IN:, j] for j in range(k)})
    return cols


def _causal_var(spec: DgpSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    N, T = spec.N, spec.T
    a = float(spec.param("ar", 0.5))
    b = float(spec.param("cause_ar", a))
    gamma = float(spec.param("causal", 0.0))
    if abs(a) >= 1 or abs(b) >= 1:
        raise InvalidParameters(f"Autoregressive coefficients must lie in (-1, 1), got {a}, {b}")
    total = T + BURN_IN
    e = rng.standard_normal((N, total))
    v = rng.standard_normal((N, total))
    x = np.zeros((N, total))
    y = np.zeros((N, total))
    for t in range(1, total):
        x[:, t] = b * x[:, t - 1] + v[:, t]
        y[:, t] = a * y[:, t - 1] + gamma * x[:, t - 1] + e[:, t]
    return {"Y": y[:, BURN_IN:], "X": x[:, BURN_IN:]}


def _study_shaped(spec: DgpSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    N, T = spec.N, spec.T
    phi = float(spec.param("phi", -0.2))
    b_flow = float(spec.param("flow_effect", 0.05))
    b_inter = float(spec.param("interaction_effect", -0.0006))
    b_rate = float(spec.param("interest_effect", -0.2))
    sd = float(spec.param("noise_sd", 0.002))

    flow = 7.0 + 2.0 * rng.random(N)[:, None] + np.cumsum(0.25 * rng.standard_normal((N, T)), axis=1)
    income = (
        10.0
        + rng.random(N)[:, None]
        + 0.01 * np.arange(T)[None, :]
        + np.cumsum(0.01 * rng.standard_normal((N, T)), axis=1)
    )
    interest = 0.03 + np.cumsum(0.002 * rng.standard_normal((N, T)), axis=1)
    exrate = np.log(1.0 + 50.0 * rng.random(N))[:, None] + np.cumsum(0.02 * rng.standard_normal((N, T)), axis=1)
    stock = 7.0 + np.cumsum(0.05 * rng.standard_normal((N, T)), axis=1)

    # annual score, held constant within each calendar year
    years = [START.year + (START.quarter - 1 + t) // 4 for t in range(T)]
    n_years = years[-1] - years[0] + 1
    annual = 55.0 + 35.0 * rng.random(N)[:, None] + np.cumsum(2.5 * rng.standard_normal((N, n_years)), axis=1)
    annual = np.clip(annual, 0.0, 100.0)
    inst = annual[:, [y - years[0] for y in years]]

    alpha = 0.5 * rng.random(N)
    hp = np.zeros((N, T))
    hp[:, 0] = 4.5 + rng.random(N)
    eps = sd * rng.standard_normal((N, T))
    for t in range(1, T):
        hp[:, t] = (
            hp[:, t - 1]
            + alpha
            + phi * hp[:, t - 1]
            + b_flow * flow[:, t - 1]
            + b_inter * inst[:, t - 1] * flow[:, t - 1]
            + b_rate * interest[:, t - 1]
            + eps[:, t]
        )
    return {
        "HP": hp,
        "FLOW": flow,
        "INCOME": income,
        "INTEREST": interest,
        "EXRATE": exrate,
        "STOCKPRICE": stock,
        "INST": inst,
    }


def synth_dgp(spec: DgpSpec, rng: np.random.Generator | None = None) -> Panel:
    """Draw one synthetic panel; deterministic given spec.seed (or the rng passed in).

    Raises:
        InvalidParameters: If the family's parameters are out of range
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    family = spec.family
    if family is DgpFamily.INDEPENDENT_RANDOM_WALKS:
        cols = _independent_random_walks(spec, rng)
    elif family is DgpFamily.COINTEGRATED_HOMOGENEOUS:
        cols = _cointegrated(spec, rng, heterogeneous=False)
    elif family is DgpFamily.COINTEGRATED_HETEROGENEOUS:
        cols = _cointegrated(spec, rng, heterogeneous=True)
    elif family is DgpFamily.ECM_PMG:
        cols = _ecm_pmg(spec, rng)
    elif family is DgpFamily.CAUSAL_VAR:
        cols = _causal_var(spec, rng)
    else:
        cols = _study_shaped(spec, rng)

    if family is DgpFamily.STUDY_SHAPED and spec.N <= len(STUDY_ENTITIES):
        entities = list(STUDY_ENTITIES[: spec.N])
    else:
        entities = entity_names(spec.N)
    return _panel(entities, spec.T, cols)


def study_fixture(seed: int = 0) -> Panel:
    """Six entities x 41 quarters (2009Q1-2019Q1) shaped like the house-price study."""
    return synth_dgp(DgpSpec(DgpFamily.STUDY_SHAPED, N=6, T=41, seed=seed))


# Monte Carlo


class McTest(str, Enum):
    KAO = "kao"
    PEDRONI = "pedroni"
    PEDRONI_GROUP = "pedroni-group"
    DH = "dh"


@dataclass
class RejectionReport:
    test: str
    family: str
    reps: int
    nominal: float
    rates: dict[str, float]
    standard_errors: dict[str, float]
    n_errors: int = 0
    error_messages: dict[str, int] = field(default_factory=dict)

    @property
    def n_completed(self) -> int:
        return self.reps - self.n_errors


def _regressor_names(panel: Panel) -> list[str]:
    return [v for v in panel.variables if v.startswith("X")]


def run_test(test: McTest | str, panel: Panel, options: Mapping[str, Any] | None = None) -> dict[str, float]:
    """Apply one test to a synthetic panel, returning p-values by statistic name.

    Options: bandwidth and aug_lags for the cointegration tests, finite_sample
    for Kao, trend and moments for Pedroni, K for Dumitrescu-Hurlin.
    """
    test = McTest(test)
    options = dict(options or {})
    bandwidth = int(options.get("bandwidth", 3))
    aug_lags = int(options.get("aug_lags", 1))
    if test is McTest.KAO:
        spec = CointSpec.kao("Y", _regressor_names(panel), bandwidth=bandwidth, aug_lags=aug_lags)
        finite_sample = bool(options.get("finite_sample", True))
        return {s.name: s.p_value for s in kao_test(panel, spec, finite_sample).statistics}
    if test in (McTest.PEDRONI, McTest.PEDRONI_GROUP):
        spec = CointSpec.pedroni(
            "Y", _regressor_names(panel), trend=bool(options.get("trend", True)), bandwidth=bandwidth, aug_lags=aug_lags
        )
        variant = PedroniVariant.GROUP if test is McTest.PEDRONI_GROUP else PedroniVariant.PANEL
        moments = options.get("moments", MomentSource.TABLE.value)
        return {s.name: s.p_value for s in pedroni_test(panel, spec, variant, moments).statistics}
    report = dh_test(panel, cause="X", effect="Y", K=int(options.get("K", DEFAULT_LAGS)))
    return dict(report.p_values)


def _replicate(
    test: str, dgp: DgpSpec, options: Mapping[str, Any], seed: np.random.SeedSequence
) -> dict[str, float] | str:
    panel = synth_dgp(dgp, np.random.default_rng(seed))
    try:
        return run_test(test, panel, options)
    except PanelEcmError as exc:
        return f"{type(exc).__name__}: {exc}"


def monte_carlo(
    test: McTest | str,
    dgp: DgpSpec,
    reps: int,
    nominal: float = 0.05,
    options: Mapping[str, Any] | None = None,
    workers: int = 0,
) -> RejectionReport:
    """Empirical rejection rates of a test over independent synthetic panels.

    Replication i draws from the i-th child of SeedSequence(dgp.seed), so the
    rates do not depend on whether replications run serially or in a process
    pool. Replications that raise are counted in n_errors and excluded from
    the rates.

    Raises:
        InvalidParameters: If reps < 100 or nominal is not in (0, 1)
    """
    test = McTest(test)
    if reps < MIN_REPS:
        raise InvalidParameters(f"Monte Carlo needs at least {MIN_REPS} replications, got {reps}")
    if not 0.0 < nominal < 1.0:
        raise InvalidParameters(f"Nominal level must lie in (0, 1), got {nominal}")
    options = dict(options or {})
    seeds = np.random.SeedSequence(dgp.seed).spawn(reps)
    logger.info("Monte Carlo %s on %s: %d reps, workers=%d", test.value, dgp.family.value, reps, workers)

    args = ([test.value] * reps, [dgp] * reps, [options] * reps, seeds)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(_replicate, *args, chunksize=max(1, reps // (4 * workers))))
    else:
        outcomes = list(map(_replicate, *args))

    errors: dict[str, int] = {}
    rejections: dict[str, int] = {}
    completed = 0
    for outcome in outcomes:
        if isinstance(outcome, str):
            errors[outcome] = errors.get(outcome, 0) + 1
            continue
        completed += 1
        for name, p in outcome.items():
            rejections[name] = rejections.get(name, 0) + int(p < nominal)
    n_errors = reps - completed
    if n_errors:
        logger.warning("%d of %d replications raised and were excluded", n_errors, reps)

    rates, ses = {}, {}
    for name, count in rejections.items():
        rate = count / completed
        rates[name] = rate
        ses[name] = math.sqrt(rate * (1.0 - rate) / completed)
    return RejectionReport(
        test=test.value,
        family=dgp.family.value,
        reps=reps,
        nominal=nominal,
        rates=rates,
        standard_errors=ses,
        n_errors=n_errors,
        error_messages=errors,
    )
