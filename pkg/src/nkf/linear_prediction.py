"""Autocorrelation linear-prediction analysis and companion-form state matrices.

The biased autocorrelation estimator (divide by N, not N-k) keeps the
Toeplitz normal equations positive semidefinite, so the Levinson-Durbin
recursion below is well defined for any finite input with r(0) > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericsError


@dataclass(frozen=True)
class LpModel:
    """A P-order forward predictor x(n) ~ sum_j coeffs[j-1] * x(n-j)."""

    order: int
    coeffs: np.ndarray
    residual_var: float

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.order < 1 or coeffs.shape != (self.order,):
            raise DataError("LP coefficient vector must have length = order")
        if not np.all(np.isfinite(coeffs)) or not np.isfinite(self.residual_var):
            raise DataError("LP model must be finite")
        if self.residual_var < 0:
            raise DataError("residual variance must be nonnegative")
        object.__setattr__(self, "coeffs", coeffs)


@dataclass(frozen=True)
class TransitionMatrix:
    """Companion form: LP coefficients in row one, shifted identity below."""

    a: np.ndarray
    u: np.ndarray


def autocorrelate(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation r(k) = (1/N) sum_n x(n) x(n-k), k = 0..max_lag."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n <= max_lag:
        raise DataError("sequence too short for requested lag")
    return np.array([x[k:] @ x[:n - k] for k in range(max_lag + 1)]) / n


def levinson_durbin(r: np.ndarray, order: int) -> LpModel:
    """Solve the Toeplitz normal equations by the Levinson-Durbin recursion.

    Parameters
    ----------
    r : array_like
        Autocorrelation sequence, lags 0..order at least.
    order : int
        Predictor order P >= 1.

    Returns
    -------
    LpModel
        Forward prediction coefficients and the final prediction error.
    """
    r = np.asarray(r, dtype=np.float64)
    if len(r) < order + 1:
        raise DataError("autocorrelation sequence shorter than order + 1")
    if r[0] <= 0:
        raise NumericsError("degenerate autocorrelation")
    a = np.zeros(order)
    err = r[0]
    for m in range(1, order + 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            k = (r[m] - a[:m - 1] @ r[1:m][::-1]) / err
        if not np.isfinite(k):
            raise NumericsError("non-finite reflection coefficient")
        a[:m - 1] = a[:m - 1] - k * a[:m - 1][::-1]
        a[m - 1] = k
        err *= 1.0 - k * k
    return LpModel(order=order, coeffs=a, residual_var=max(err, 0.0))


def transition_matrix(m: LpModel) -> TransitionMatrix:
    """Companion state-transition matrix for the LP state recursion."""
    p = m.order
    a = np.zeros((p, p))
    a[0, :] = m.coeffs
    if p > 1:
        a[np.arange(1, p), np.arange(p - 1)] = 1.0
    u = np.zeros(p)
    u[0] = 1.0
    return TransitionMatrix(a=a, u=u)
