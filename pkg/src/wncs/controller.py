"""Tail-based control: reward, linear-Gaussian policy, REINFORCE
training, the classic LQR baseline, and the feedback-gain fit.

Training is offline on the fully observed plant (the online loop only
consumes the trained policy). The per-step rollout runs on the compiled
core when available.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.signal

from . import _core
from .mathkit import RngStream, least_squares, solve_dare
from .plant import SystemModel, stage_cost

POLICY_MAGIC = "wncs-gaussian-policy"
POLICY_VERSION = 1


class EpochReturn(NamedTuple):
    """Undiscounted return statistics over one epoch's episodes."""

    mean: float
    std: float


class TrainingDiverged(RuntimeError):
    """Raised when epoch returns collapse; carries the learning curve."""

    def __init__(self, message, curve):
        super().__init__(message)
        self.curve = list(curve)


@dataclass
class GaussianPolicy:
    """Linear-in-state Gaussian policy with bias and learnable std."""

    mean_weights: np.ndarray  # N x (D+1), last column is the bias
    log_std: np.ndarray  # N
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        self.mean_weights = np.atleast_2d(np.asarray(self.mean_weights, float))
        self.log_std = np.asarray(self.log_std, float).reshape(-1)
        self.action_low = np.asarray(self.action_low, float).reshape(-1)
        self.action_high = np.asarray(self.action_high, float).reshape(-1)
        if np.any(self.action_low >= self.action_high):
            raise ValueError("action_low must be strictly below action_high")
        if not np.all(np.isfinite(self.log_std)):
            raise ValueError("log_std must be finite")

    @property
    def state_dim(self) -> int:
        return self.mean_weights.shape[1] - 1

    @property
    def action_dim(self) -> int:
        return self.mean_weights.shape[0]


@dataclass
class TrainConfig:
    epochs: int = 100
    episodes_per_epoch: int = 200
    horizon: int = 200
    discount: float = 0.9
    learning_rate: float = 0.1
    seed: int = 0
    action_low: float = -10.0
    action_high: float = 10.0
    x0: tuple = (-1.5, 0.0)
    x0_jitter: float = 0.1
    grad_clip: float = 10.0
    optimizer: str = "adam"
    log_std_floor: float = -5.0
    objective: str = "tail"  # "classic" drops the band (LQR-style cost)
    state_bound: float = 100.0  # training rollouts stop past this magnitude
    updates_per_epoch: int = 5
    lr_decay: float = 0.75  # fraction of learning_rate shed linearly over training

    def __post_init__(self):
        if min(self.epochs, self.episodes_per_epoch, self.horizon) < 1:
            raise ValueError("epochs, episodes_per_epoch, horizon must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if not 1 <= self.updates_per_epoch <= self.episodes_per_epoch:
            raise ValueError("updates_per_epoch must be in [1, episodes_per_epoch]")
        if not 0.0 <= self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in [0, 1]")
        if self.objective not in ("tail", "classic"):
            raise ValueError("objective must be 'tail' or 'classic'")


@dataclass
class PolicyGain:
    Phi: np.ndarray  # N x D

    def __post_init__(self):
        self.Phi = np.atleast_2d(np.asarray(self.Phi, float))
        if not np.all(np.isfinite(self.Phi)):
            raise ValueError("gain entries must be finite")


def reward(model: SystemModel, x, u) -> float:
    """Negated tail-gated stage cost; zero iff inside the band with u = 0."""
    return -stage_cost(model, x, u)


def policy_sample(policy: GaussianPolicy, x, rng: RngStream | None = None,
                  deterministic: bool = False) -> np.ndarray:
    """Draw (or take the mean of) the policy at state x, clipped to bounds."""
    x = np.asarray(x, dtype=float).reshape(-1)
    mean = policy.mean_weights @ np.append(x, 1.0)
    if deterministic:
        return np.clip(mean, policy.action_low, policy.action_high)
    if rng is None:
        raise ValueError("stochastic sampling needs an RngStream")
    u = mean + np.exp(policy.log_std) * rng.standard_normal(policy.action_dim)
    return np.clip(u, policy.action_low, policy.action_high)


def rollout(model: SystemModel, policy: GaussianPolicy, x0, horizon: int,
            rng: RngStream | None = None, deterministic: bool = False,
            eta_override=None, stop_bound: float = np.inf):
    """Trajectory of (states, raw_actions, actions, rewards, n_steps).

    Plant noise is always drawn (pass a zero-W model for noiseless runs);
    deterministic suppresses only the policy noise. The rollout ends early
    once any state coordinate exceeds stop_bound.
    """
    N = policy.action_dim
    if rng is None:
        plant_noise = np.zeros((horizon, model.D))
        action_noise = np.zeros((horizon, N))
    else:
        plant_noise = rng.standard_normal((horizon, model.D)) @ model._W_factor.T
        action_noise = (
            np.zeros((horizon, N)) if deterministic
            else rng.standard_normal((horizon, N))
        )
    sigma = np.zeros(N) if deterministic else np.exp(policy.log_std)
    eta = model.eta if eta_override is None else np.asarray(eta_override, float)
    return _core.policy_rollout(
        model.A, model.B, model.Q, model.Y, eta, model.tail_norm == "2",
        policy.mean_weights, sigma, policy.action_low, policy.action_high,
        np.asarray(x0, float), plant_noise, action_noise, stop_bound,
    )


def _discounted_to_go(rewards: np.ndarray, nu: float) -> np.ndarray:
    return scipy.signal.lfilter([1.0], [1.0, -nu], rewards[::-1])[::-1]


def policy_log_prob(policy: GaussianPolicy, x, u_raw) -> float:
    """Log density of the pre-clip Gaussian draw u_raw at state x."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u_raw = np.asarray(u_raw, dtype=float).reshape(-1)
    mean = policy.mean_weights @ np.append(x, 1.0)
    sigma = np.exp(policy.log_std)
    z = (u_raw - mean) / sigma
    return float(np.sum(-policy.log_std - 0.5 * np.log(2.0 * np.pi) - 0.5 * z**2))


def reinforce_gradient(mean_weights, log_std, feats, raw_actions, weights):
    """Score-function gradient sum_i w_i * grad log pi(u_i | x_i).

    feats is (n, D+1) with the bias column appended, raw_actions the
    pre-clip draws, and weights whatever return estimate the caller
    attaches (reward, reward-to-go, baselined advantage, ...). Returns
    (grad_mean_weights, grad_log_std).
    """
    mean_weights = np.atleast_2d(np.asarray(mean_weights, float))
    log_std = np.asarray(log_std, float).reshape(-1)
    weights = np.asarray(weights, float).reshape(-1)
    sigma = np.exp(log_std)
    xi = (raw_actions - feats @ mean_weights.T) / sigma
    grad_W = (weights[:, None] * (xi / sigma)).T @ feats
    grad_ls = ((xi**2 - 1.0) * weights[:, None]).sum(axis=0)
    return grad_W, grad_ls


def train_policy(model: SystemModel, cfg: TrainConfig):
    """REINFORCE with discounted reward-to-go and per-step baselines.

    Each epoch's episodes are split across `updates_per_epoch` minibatch
    gradient steps. Reward-to-go is baselined and std-normalised per step
    index: on this unstable plant the raw scales span orders of magnitude
    across the horizon, and an unnormalised gradient carries no usable
    step size. Returns (policy, per-epoch mean undiscounted returns).
    """
    D, N = model.D, model.N
    rng = RngStream(cfg.seed).substream("train")
    lo = np.full(N, cfg.action_low)
    hi = np.full(N, cfg.action_high)
    Wm = np.zeros((N, D + 1))
    log_std = np.zeros(N)
    eta_override = np.full(D, 1e-300) if cfg.objective == "classic" else None

    adam_m = [np.zeros_like(Wm), np.zeros_like(log_std)]
    adam_v = [np.zeros_like(Wm), np.zeros_like(log_std)]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    adam_t = 0
    curve: list[EpochReturn] = []
    x0_base = np.asarray(cfg.x0, dtype=float)
    H = cfg.horizon
    batch_sizes = [
        len(chunk)
        for chunk in np.array_split(np.arange(cfg.episodes_per_epoch), cfg.updates_per_epoch)
        if len(chunk) > 0
    ]

    for epoch in range(cfg.epochs):
        lr_now = cfg.learning_rate * (1.0 - cfg.lr_decay * epoch / max(cfg.epochs - 1, 1))
        epoch_returns = []
        for E in batch_sizes:
            policy = GaussianPolicy(Wm, log_std, lo, hi)
            feats = np.zeros((E * H, D + 1))
            raws = np.zeros((E * H, N))
            alive = np.zeros(E * H, dtype=bool)
            togo_mat = np.empty((E, H))
            for ep in range(E):
                x0 = x0_base + cfg.x0_jitter * rng.uniform(-1.0, 1.0, D)
                states, raw, _acts, rewards, n = rollout(
                    model, policy, x0, H, rng=rng,
                    eta_override=eta_override, stop_bound=cfg.state_bound,
                )
                # early-terminated rollouts continue at the boundary cost
                # rate for the remaining horizon, so escaping never pays
                padded = np.empty(H)
                padded[:n] = rewards[:n]
                padded[n:] = rewards[n - 1]
                epoch_returns.append(float(padded.sum()))
                togo_mat[ep] = _discounted_to_go(padded, cfg.discount)
                feats[ep * H : ep * H + n] = np.column_stack([states[:n], np.ones(n)])
                raws[ep * H : ep * H + n] = raw[:n]
                alive[ep * H : ep * H + n] = True

            baseline = togo_mat.mean(axis=0)
            spread = togo_mat.std(axis=0)
            advantage = ((togo_mat - baseline) / (spread + 1e-8)).reshape(-1)

            weights = np.where(alive, advantage, 0.0) / E
            grad_W, grad_ls = reinforce_gradient(Wm, log_std, feats, raws, weights)

            gnorm = float(np.sqrt(np.sum(grad_W**2) + np.sum(grad_ls**2)))
            if gnorm > cfg.grad_clip:
                scale = cfg.grad_clip / gnorm
                grad_W = grad_W * scale
                grad_ls = grad_ls * scale

            if cfg.optimizer == "adam":
                adam_t += 1
                for i, g in enumerate((grad_W, grad_ls)):
                    adam_m[i] = beta1 * adam_m[i] + (1 - beta1) * g
                    adam_v[i] = beta2 * adam_v[i] + (1 - beta2) * g**2
                    mhat = adam_m[i] / (1 - beta1**adam_t)
                    vhat = adam_v[i] / (1 - beta2**adam_t)
                    stepv = lr_now * mhat / (np.sqrt(vhat) + adam_eps)
                    if i == 0:
                        Wm = Wm + stepv
                    else:
                        log_std = log_std + stepv
            else:
                Wm = Wm + lr_now * grad_W
                log_std = log_std + lr_now * grad_ls
            log_std = np.maximum(log_std, cfg.log_std_floor)

        curve.append(
            EpochReturn(float(np.mean(epoch_returns)), float(np.std(epoch_returns)))
        )

        # untrained-phase returns on this unstable plant fluctuate over
        # ~3 orders of magnitude at a fixed policy, so the initial scale
        # is the worst of the first three epochs and only a sustained
        # (two-epoch) collapse below 10x that counts as divergence
        if len(curve) > 3:
            floor = 10.0 * min(min(c.mean for c in curve[:3]), -1.0)
            if curve[-1].mean < floor and curve[-2].mean < floor:
                raise TrainingDiverged(
                    f"epoch {epoch} mean return {curve[-1].mean:.3e} stayed below {floor:.3e}",
                    curve,
                )
    return GaussianPolicy(Wm, log_std, lo, hi), curve


def lqr_policy(model: SystemModel) -> PolicyGain:
    """Infinite-horizon LQR gain K for the action rule u = -K x."""
    _P, K = solve_dare(model.A, model.B, model.Q, model.Y)
    return PolicyGain(Phi=K)


def lqr_as_policy(model: SystemModel, action_low: float = -10.0,
                  action_high: float = 10.0) -> GaussianPolicy:
    """The LQR rule wrapped as a deterministic-mean GaussianPolicy."""
    K = lqr_policy(model).Phi
    Wm = np.hstack([-K, np.zeros((model.N, 1))])
    return GaussianPolicy(
        Wm, np.full(model.N, -30.0), np.full(model.N, action_low),
        np.full(model.N, action_high),
    )


def feedback_gain(states, actions, ridge: float = 1e-6) -> PolicyGain:
    """Least-squares linearisation of a logged deterministic rollout."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] < 20:
        raise ValueError("need at least 20 logged samples")
    return PolicyGain(Phi=least_squares(states, actions, ridge=ridge))


def save_policy(policy: GaussianPolicy, path) -> None:
    """Versioned flat text file; decimal text round-trips bit-exactly."""
    lines = [POLICY_MAGIC, str(POLICY_VERSION),
             str(policy.state_dim), str(policy.action_dim)]
    lines += [repr(float(v)) for v in policy.action_low]
    lines += [repr(float(v)) for v in policy.action_high]
    lines += [repr(float(v)) for v in policy.mean_weights.reshape(-1)]
    lines += [repr(float(v)) for v in policy.log_std]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_policy(path) -> GaussianPolicy:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != POLICY_MAGIC:
        raise ValueError(f"{path}: not a policy file (bad magic)")
    if int(lines[1]) != POLICY_VERSION:
        raise ValueError(f"{path}: unsupported policy format version {lines[1]}")
    D, N = int(lines[2]), int(lines[3])
    vals = [float(v) for v in lines[4:]]
    expected = 2 * N + N * (D + 1) + N
    if len(vals) != expected:
        raise ValueError(f"{path}: expected {expected} numbers, found {len(vals)}")
    lo = np.array(vals[:N])
    hi = np.array(vals[N : 2 * N])
    w = np.array(vals[2 * N : 2 * N + N * (D + 1)]).reshape(N, D + 1)
    ls = np.array(vals[2 * N + N * (D + 1) :])
    return GaussianPolicy(w, ls, lo, hi)
