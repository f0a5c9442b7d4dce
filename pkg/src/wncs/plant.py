"""Plant dynamics, the mountain-car instantiation, and the tail-gated
stage cost x'Qx * f + u'Yu with f the outside-the-band indicator.

States are stored as deviations from the equilibrium point, so the origin
is the stability target; the factory records the equilibrium for
reporting in original coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mathkit import RngStream, psd_factor


@dataclass(frozen=True, eq=False)
class SystemModel:
    """One plant's matrices, costs, and thresholds."""

    A: np.ndarray
    B: np.ndarray
    W: np.ndarray
    Q: np.ndarray
    Y: np.ndarray
    eta: np.ndarray
    zeta: float
    Omega: np.ndarray
    equilibrium: np.ndarray
    T: float = 0.01
    tail_norm: str = "inf"  # "inf": any |x_d| > eta_d, "2": ||x/eta||_2 > 1
    _W_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("A", "B", "W", "Q", "Y", "Omega"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), float)))
        for name in ("eta", "equilibrium"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).reshape(-1))
        D, N = self.B.shape
        if self.A.shape != (D, D) or self.Q.shape != (D, D) or self.W.shape != (D, D):
            raise ValueError("A, Q, W must be D x D matching B's row count")
        if self.Y.shape != (N, N) or self.Omega.shape != (D, D):
            raise ValueError("Y must be N x N and Omega D x D")
        if not (0.0 < self.zeta <= 1.0):
            raise ValueError("zeta must lie in (0, 1]")
        if np.any(self.eta <= 0):
            raise ValueError("eta must be positive elementwise")
        if self.tail_norm not in ("inf", "2"):
            raise ValueError("tail_norm must be 'inf' or '2'")
        if np.any(np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)) < -1e-10):
            raise ValueError("Q must be positive semi-definite")
        if np.any(np.linalg.eigvalsh(0.5 * (self.Y + self.Y.T)) <= 0):
            raise ValueError("Y must be positive definite")
        object.__setattr__(self, "_W_factor", psd_factor(self.W))

    @property
    def D(self) -> int:
        return self.B.shape[0]

    @property
    def N(self) -> int:
        return self.B.shape[1]


@dataclass
class PlantState:
    x: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        if not np.all(np.isfinite(self.x)):
            raise ValueError("state entries must be finite")
        if self.k < 0:
            raise ValueError("time index must be nonnegative")


def mountain_car(
    alpha: float = 0.0025,
    b: float = 3.0,
    *,
    plant_noise_var: float = 0.02,
    eta=(0.1, 0.1),
    zeta: float = 0.1,
    T: float = 0.01,
    tail_norm: str = "inf",
) -> SystemModel:
    """Discretised mountain-car plant linearised about its equilibrium.

    A = [[1+alpha*b, 1], [alpha*b, 1]], B = [1, 1]', Y = 1, Q = I, with
    equilibrium [pi/(2b), 0]. The open loop is unstable for alpha, b > 0.
    """
    if alpha <= 0 or b <= 0:
        raise ValueError("alpha and b must be positive")
    ab = alpha * b
    A = np.array([[1.0 + ab, 1.0], [ab, 1.0]])
    B = np.array([[1.0], [1.0]])
    return SystemModel(
        A=A,
        B=B,
        W=plant_noise_var * np.eye(2),
        Q=np.eye(2),
        Y=np.array([[1.0]]),
        eta=np.asarray(eta, dtype=float),
        zeta=zeta,
        Omega=np.eye(2),
        equilibrium=np.array([np.pi / (2.0 * b), 0.0]),
        T=T,
        tail_norm=tail_norm,
    )


def tail_indicator(x, eta, norm: str = "inf") -> int:
    """1 iff the state is outside the stability band defined by eta."""
    x = np.asarray(x, dtype=float).reshape(-1)
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if np.any(eta <= 0):
        raise ValueError("eta must be positive elementwise")
    if norm == "2":
        return int(np.sum((x / eta) ** 2) > 1.0)
    return int(np.any(np.abs(x) > eta))


def stage_cost(model: SystemModel, x, u) -> float:
    """Tail-gated quadratic stage cost x'Qx * f + u'Yu."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != model.D or u.shape[0] != model.N:
        raise ValueError("state/action dimensions do not match the model")
    f = tail_indicator(x, model.eta, model.tail_norm)
    return float(f * (x @ model.Q @ x) + u @ model.Y @ u)


def plant_noise(model: SystemModel, rng: RngStream) -> np.ndarray:
    """One additive noise draw w ~ N(0, W), using the cached factor."""
    return model._W_factor @ rng.standard_normal(model.D)


def step(model: SystemModel, state: PlantState, u, rng: RngStream) -> PlantState:
    """Advance one slot: x' = A x + B u + w with w ~ N(0, W)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.shape[0] != model.N or state.x.shape[0] != model.D:
        raise ValueError("state/action dimensions do not match the model")
    x_next = model.A @ state.x + model.B @ u + plant_noise(model, rng)
    return PlantState(x=x_next, k=state.k + 1)
