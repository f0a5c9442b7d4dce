"""Pure-numpy fallback for the compiled kernels.

Mirrors the operation order of the Cython backend so both produce the
same trajectories up to floating-point rounding.
"""

import numpy as np


def periodic_kernel_matrix(ta, tb, h, l, s):
    """Pairwise periodic covariance h^2 * exp(-2/l^2 * sin^2(pi*(ta-tb)/s))."""
    ta = np.asarray(ta, dtype=float)
    tb = np.asarray(tb, dtype=float)
    diff = np.subtract.outer(ta, tb)
    return h * h * np.exp((-2.0 / (l * l)) * np.sin(np.pi * diff / s) ** 2)


def policy_rollout(A, B, Qc, Y, eta, tail_two_norm, Wm, sigma, lo, hi,
                   x0, plant_noise, action_noise, stop_bound=np.inf):
    """Roll a linear-Gaussian policy through the plant for up to H steps.

    plant_noise (H, D) is the already-scaled additive state noise and
    action_noise (H, N) the standard normals behind the policy draws, so
    the caller owns all randomness. Returns (states, raw_actions,
    actions, rewards, n_steps) with states[t] the state the step-t action
    saw; entries past n_steps are unwritten. The rollout stops once any
    state coordinate exceeds stop_bound in magnitude.
    """
    H = plant_noise.shape[0]
    D = A.shape[0]
    N = B.shape[1]
    states = np.empty((H, D))
    raw = np.empty((H, N))
    acts = np.empty((H, N))
    rewards = np.empty(H)
    x = np.array(x0, dtype=float)
    n_steps = H
    for t in range(H):
        feat = np.append(x, 1.0)
        mean = Wm @ feat
        u_raw = mean + sigma * action_noise[t]
        u = np.clip(u_raw, lo, hi)
        if tail_two_norm:
            outside = np.sum((x / eta) ** 2) > 1.0
        else:
            outside = np.any(np.abs(x) > eta)
        r = -float(u @ Y @ u)
        if outside:
            r -= float(x @ Qc @ x)
        states[t] = x
        raw[t] = u_raw
        acts[t] = u
        rewards[t] = r
        x = A @ x + B @ u + plant_noise[t]
        if np.any(np.abs(x) > stop_bound):
            n_steps = t + 1
            break
    return states, raw, acts, rewards, n_steps
