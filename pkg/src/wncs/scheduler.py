"""Uplink scheduling: AoI bookkeeping, the drift-derived stability ratio,
virtual-queue drift-plus-penalty selection, and the round-robin baseline.

The per-slot weight trades queue backlog against staleness relief and
power spend: w_m = Q_m + V psi_beta log(1+beta_m) - V psi_p log(1+p_m).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .plant import SystemModel


@dataclass
class SchedulerState:
    """Per-system AoI, virtual-queue backlogs, and the tradeoff weights."""

    beta: np.ndarray  # int AoI values, >= 1
    Q: np.ndarray  # nonnegative virtual queues
    V: float = 1000.0
    psi_beta: float = 1.0
    psi_p: float = 1.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=int).reshape(-1)
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1)
        if np.any(self.beta < 1):
            raise ValueError("AoI values must be >= 1")
        if np.any(self.Q < 0):
            raise ValueError("queue backlogs must be nonnegative")
        if self.V <= 0:
            raise ValueError("V must be positive")

    @classmethod
    def initial(cls, M: int, V: float = 1000.0, psi_beta: float = 1.0, psi_p: float = 1.0):
        return cls(beta=np.ones(M, dtype=int), Q=np.zeros(M), V=V, psi_beta=psi_beta, psi_p=psi_p)


@dataclass
class ScheduleDecision:
    """At most one transmitter per slot; p is nonzero only at the choice."""

    chosen: int | None
    a: np.ndarray
    p: np.ndarray


def update_aoi(beta_prev: int, scheduled: bool, success: bool) -> int:
    """AoI resets to 1 on a successful scheduled update, else increments."""
    if beta_prev < 1:
        raise ValueError("AoI must be >= 1")
    return 1 if (scheduled and success) else beta_prev + 1


def g_clamp(v: float) -> float:
    """Lower-bound service rate clamp into [0, 1]."""
    return float(min(max(v, 0.0), 1.0))


class DriftRatio:
    """Required-service-rate computation with the slot-invariant parts
    (everything except Psi and V) precomputed once per episode."""

    def __init__(self, model: SystemModel, Z, Phi, W):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
        W = np.atleast_2d(np.asarray(W, dtype=float))
        A, B = model.A, model.B
        BPhi = B @ Phi
        self.credit_weight = BPhi.T @ Z @ BPhi
        dev = A - BPhi - model.zeta * np.eye(model.D)
        self.gamma_const = float(np.trace(dev.T @ Z @ dev)) + float(np.trace(Z @ W))
        self.gamma_weight = Z @ B @ B.T + (A.T @ Z @ A - model.zeta * Z)

    def ratio(self, Psi, V_cov) -> float:
        Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
        V_cov = np.atleast_2d(np.asarray(V_cov, dtype=float))
        upsilon = float(np.trace(self.credit_weight @ (Psi - V_cov)))
        gamma = self.gamma_const + float(np.trace(self.gamma_weight @ Psi))
        if upsilon <= 0.0:
            return 1.0
        return gamma / upsilon


def stability_ratio(model: SystemModel, Z, Phi, Psi, V_cov, W) -> float:
    """Required service rate c = Gamma / Upsilon from the drift condition.

    Upsilon is the per-transmission drift credit (decoding error replaces
    prediction error); Gamma the per-slot drift excess. When the credit is
    nonpositive the ratio is forced to 1 (always-schedule pressure).
    """
    return DriftRatio(model, Z, Phi, W).ratio(Psi, V_cov)


def update_queues(state: SchedulerState, c, xi) -> SchedulerState:
    """Virtual-queue step Q <- max(Q + G(c) - xi, 0) with G the [0,1] clamp."""
    c = np.asarray(c, dtype=float).reshape(-1)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    arrivals = np.clip(c, 0.0, 1.0)
    Q_next = np.maximum(state.Q + arrivals - xi, 0.0)
    return replace(state, Q=Q_next)


def ca_select(state: SchedulerState, p_req, p_ref: float = 1.0) -> ScheduleDecision:
    """Drift-plus-penalty pick: argmax over feasible systems of
    Q_m + V psi_beta log(1+beta_m) - V psi_p log(1+p_m/p_ref), transmitting
    at minimal feasible power; NONE when no weight is positive. Ties go to
    the lowest index.

    p_ref (normally Pmax) makes the power charge dimensionless and of the
    same order as the staleness relief; charging raw log-power starves the
    scheduler for hundreds of slots at realistic power levels.
    """
    M = state.beta.shape[0]
    if len(p_req) != M:
        raise ValueError("need one p_req entry per system")
    if p_ref <= 0:
        raise ValueError("p_ref must be positive")
    a = np.zeros(M)
    p = np.zeros(M)
    best_idx = None
    best_w = 0.0
    for m in range(M):
        if p_req[m] is None:
            continue
        w = (
            state.Q[m]
            + state.V * state.psi_beta * np.log1p(state.beta[m])
            - state.V * state.psi_p * np.log1p(p_req[m] / p_ref)
        )
        if w > best_w:
            best_w = w
            best_idx = m
    if best_idx is not None:
        a[best_idx] = 1.0
        p[best_idx] = p_req[best_idx]
    return ScheduleDecision(chosen=best_idx, a=a, p=p)


def rr_select(k: int, M: int, fixed_p: float) -> ScheduleDecision:
    """Round-robin baseline: slot k serves system k mod M at fixed power."""
    if M < 1:
        raise ValueError("M must be >= 1")
    a = np.zeros(M)
    p = np.zeros(M)
    chosen = k % M
    a[chosen] = 1.0
    p[chosen] = fixed_p
    return ScheduleDecision(chosen=chosen, a=a, p=p)
