"""Pytest configuration and shared fixtures."""

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from panelecm.panel import Panel, Period, period_range
from panelecm.simulate import study_fixture


@pytest.fixture(autouse=True)
def serial_monte_carlo(monkeypatch):
    """Keep Monte Carlo runs in-process unless a test asks otherwise."""
    monkeypatch.delenv("PANELECM_WORKERS", raising=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)


@pytest.fixture
def make_panel() -> Callable[..., Panel]:
    """Build a Panel from {variable: (N, T) array}, starting in 2009Q1."""

    def _make(columns: dict[str, np.ndarray], entities: list[str] | None = None) -> Panel:
        arrays = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in columns.items()}
        N, T = next(iter(arrays.values())).shape
        entities = entities or [f"E{i}" for i in range(N)]
        end = Period(2009 + (T - 1) // 4, (T - 1) % 4 + 1)
        cube = np.stack([arrays[k] for k in arrays], axis=2)
        return Panel(entities, period_range(Period(2009, 1), end), list(arrays), cube)

    return _make


@pytest.fixture(scope="session")
def study_panel() -> Panel:
    """Six entities x 41 quarters shaped like the house-price study."""
    return study_fixture(seed=0)


@pytest.fixture
def write_file(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write text to a file under tmp_path and return its path."""

    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path

    return _write
