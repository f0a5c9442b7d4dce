"""State prediction for unscheduled slots: periodic-kernel GPR, an
AR(3)-on-differences baseline, and the no-prediction stub.

Dimensions are treated independently; one kernel matrix over the window
times is factorised once and reused across dimensions and query times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _core

SOURCE_GPR = "GPR"
SOURCE_ARIMA = "ARIMA"
SOURCE_NONE = "NONE"
SOURCE_DECODED = "DECODED"


@dataclass(frozen=True)
class KernelParams:
    """Periodic-kernel hyperparameters plus observation noise variance."""

    h: float = 1.0
    l: float = 1.0
    s: float = 20.0
    noise: float = 1e-4

    def __post_init__(self):
        for name in ("h", "l", "s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")


@dataclass
class Prediction:
    x_hat: np.ndarray
    Psi: np.ndarray  # D x D diagonal, nonnegative
    source: str


class ObservationWindow:
    """Sliding window of decoded states keyed by strictly increasing slots."""

    def __init__(self, dim: int, capacity: int = 10):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.dim = dim
        self.capacity = capacity
        self.times: list[int] = []
        self._values: list[np.ndarray] = []

    def add(self, k: int, x) -> None:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError("observation dimension mismatch")
        if self.times and k <= self.times[-1]:
            raise ValueError("observation times must be strictly increasing")
        self.times.append(int(k))
        self._values.append(x)
        if len(self.times) > self.capacity:
            self.times.pop(0)
            self._values.pop(0)

    def values(self) -> np.ndarray:
        """Window contents as an (n, D) array."""
        return np.array(self._values, dtype=float).reshape(len(self.times), self.dim)

    def __len__(self) -> int:
        return len(self.times)


def periodic_kernel(k: int, k_prime: int, params: KernelParams) -> float:
    """h^2 exp(-(2/l^2) sin^2(pi (k - k')/s)); symmetric in its arguments."""
    out = _core.periodic_kernel_matrix(
        np.array([float(k)]), np.array([float(k_prime)]), params.h, params.l, params.s
    )
    return float(out[0, 0])


def kernel_matrix(ta, tb, params: KernelParams) -> np.ndarray:
    return np.asarray(
        _core.periodic_kernel_matrix(
            np.asarray(ta, dtype=float), np.asarray(tb, dtype=float),
            params.h, params.l, params.s,
        )
    )


@dataclass
class GprModel:
    """Cholesky-factorised kernel system over one window."""

    times: np.ndarray
    params: KernelParams
    R_inv: np.ndarray
    alpha: np.ndarray  # R^-1 X, (n, D)
    jitter: float


def _chol_with_jitter(R: np.ndarray):
    """Cholesky factor with escalating diagonal jitter (x10 up to 1e-4)."""
    try:
        return scipy.linalg.cholesky(R, lower=True), 0.0
    except scipy.linalg.LinAlgError:
        pass
    jitter = 1e-10
    while jitter <= 1e-4:
        try:
            L = scipy.linalg.cholesky(R + jitter * np.eye(R.shape[0]), lower=True)
            return L, jitter
        except scipy.linalg.LinAlgError:
            jitter *= 10.0
    raise np.linalg.LinAlgError("kernel matrix not factorizable even at jitter 1e-4")


def gpr_fit(window: ObservationWindow, params: KernelParams) -> GprModel:
    """Factorise R = K(times, times) + noise I for reuse across queries."""
    if len(window) == 0:
        raise ValueError("cannot fit an empty window")
    times = np.asarray(window.times, dtype=float)
    R = kernel_matrix(times, times, params) + params.noise * np.eye(len(window))
    L, jitter = _chol_with_jitter(R)
    identity = np.eye(len(window))
    R_inv = scipy.linalg.cho_solve((L, True), identity)
    alpha = R_inv @ window.values()
    return GprModel(times=times, params=params, R_inv=R_inv, alpha=alpha, jitter=jitter)


def gpr_predict(model: GprModel, window: ObservationWindow, k: int) -> Prediction:
    """Posterior mean and per-dimension variance at query slot k.

    mean_d = r' R^-1 X_d and var = R(k,k) - r' R^-1 r (clamped at 0);
    the variance is shared across dimensions because the kernel is.
    """
    if len(window) == 0:
        raise ValueError("empty window; caller must use the NONE source")
    r = kernel_matrix(np.array([float(k)]), model.times, model.params)[0]
    x_hat = r @ model.alpha
    prior = model.params.h**2
    var = prior - float(r @ model.R_inv @ r)
    var = max(var, 0.0)
    return Prediction(x_hat=x_hat, Psi=var * np.eye(window.dim), source=SOURCE_GPR)


def gpr_tune(window: ObservationWindow, grid) -> KernelParams:
    """Pick the grid member maximising the Gaussian log marginal
    likelihood of the window, summed over dimensions. Ties keep the
    earliest grid entry."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X = window.values()
    n = len(window)
    best = None
    best_ll = -np.inf
    for params in grid:
        R = kernel_matrix(np.asarray(window.times, float), np.asarray(window.times, float), params)
        R = R + params.noise * np.eye(n)
        try:
            L, _ = _chol_with_jitter(R)
        except np.linalg.LinAlgError:
            continue
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        quad = 0.0
        for d in range(window.dim):
            sol = scipy.linalg.cho_solve((L, True), X[:, d])
            quad += float(X[:, d] @ sol)
        ll = -0.5 * quad - 0.5 * window.dim * (logdet + n * np.log(2.0 * np.pi))
        if ll > best_ll:
            best_ll = ll
            best = params
    if best is None:
        raise np.linalg.LinAlgError("every grid candidate was singular")
    return best


def arima_predict(window: ObservationWindow, ar_order: int = 3) -> Prediction:
    """One-step forecast per dimension: difference, fit AR(p) by OLS,
    predict one difference ahead, integrate. Falls back to last-value
    hold with Psi = I when the window is shorter than 5."""
    n = len(window)
    if n == 0:
        raise ValueError("empty window; caller must use the NONE source")
    X = window.values()
    if n < 5:
        return Prediction(
            x_hat=X[-1].copy(), Psi=np.eye(window.dim), source=SOURCE_ARIMA
        )
    x_hat = np.empty(window.dim)
    variances = np.empty(window.dim)
    for d in range(window.dim):
        diffs = np.diff(X[:, d])
        # the AR fit is scale-invariant; normalising keeps the least
        # squares finite when the series spans hundreds of decades
        scale = max(1.0, float(np.max(np.abs(diffs))))
        diffs_n = diffs / scale
        rows = len(diffs_n) - ar_order
        design = np.column_stack(
            [diffs_n[ar_order - 1 - j : ar_order - 1 - j + rows] for j in range(ar_order)]
        )
        target = diffs_n[ar_order:]
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        with np.errstate(over="ignore", invalid="ignore"):
            resid = (target - design @ coef) * scale
            next_diff = float(coef @ diffs_n[-1 : -ar_order - 1 : -1]) * scale
            forecast = X[-1, d] + next_diff
            var = float(np.mean(resid**2)) if rows > 0 else 0.0
        if not np.isfinite(forecast):
            forecast = X[-1, d]
        x_hat[d] = forecast
        variances[d] = max(var if np.isfinite(var) else 0.0, 1e-8)
    return Prediction(x_hat=x_hat, Psi=np.diag(variances), source=SOURCE_ARIMA)


def none_predict(dim: int) -> Prediction:
    """No-prediction stub: zero state, identity covariance.

    The simulator interprets the NONE source as "apply zero control this
    slot"; AoI bookkeeping is unaffected."""
    return Prediction(x_hat=np.zeros(dim), Psi=np.eye(dim), source=SOURCE_NONE)
