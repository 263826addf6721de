"""panelecm - panel cointegration, causality and error-correction estimation."""

__version__ = "0.1.0"
