"""Shared numerical kernels: spectral analysis, Lyapunov and Riccati
solvers, ridge least squares, and Gaussian sampling.

Everything is deterministic given an explicit :class:`RngStream`; nothing
here touches global random state.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = [
    "RngStream",
    "spectral_radius",
    "solve_lyapunov",
    "solve_dare",
    "least_squares",
    "gaussian_draw",
]


def _key_words(seed: int, algorithm: str, labels: tuple) -> list[int]:
    """Hash (seed, algorithm, labels) into two 64-bit key words."""
    payload = repr((int(seed), algorithm, labels)).encode()
    digest = hashlib.sha256(payload).digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in (0, 8)]


class RngStream:
    """Named deterministic random stream backed by counter-based Philox.

    Identical (seed, algorithm, labels) reproduce the identical draw
    sequence. ``substream`` derives an independent child stream, so adding
    a consumer never perturbs the draws any existing consumer sees.
    """

    def __init__(self, seed: int, labels: tuple = (), algorithm: str = "philox"):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if algorithm != "philox":
            raise ValueError(f"unknown rng algorithm {algorithm!r}")
        self.seed = int(seed)
        self.algorithm = algorithm
        self.labels = tuple(labels)
        self.generator = np.random.Generator(
            np.random.Philox(key=_key_words(self.seed, algorithm, self.labels))
        )

    def substream(self, *labels) -> "RngStream":
        return RngStream(self.seed, self.labels + labels, self.algorithm)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, labels={self.labels!r})"


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def spectral_radius(M) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    M = _as_square(M)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_lyapunov(Ac, form: str = "continuous") -> np.ndarray:
    """Solve Ac' Z + Z Ac = -I (or Ac' Z Ac - Z = -I with form="discrete").

    Small dense systems only: the equation is vectorised with Kronecker
    products and solved directly. Raises ``LinAlgError`` naming the
    condition estimate when the system is singular or near-singular.
    """
    Ac = _as_square(Ac, "Ac")
    D = Ac.shape[0]
    eye_d = np.eye(D)
    # row-major vec: vec(P Z Q) = kron(P, Q') vec(Z)
    if form == "continuous":
        Kmat = np.kron(Ac.T, eye_d) + np.kron(eye_d, Ac.T)
    elif form == "discrete":
        Kmat = np.kron(Ac.T, Ac.T) - np.eye(D * D)
    else:
        raise ValueError(f"unknown Lyapunov form {form!r}")
    cond = np.linalg.cond(Kmat)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(
            f"Lyapunov system ill-conditioned (condition estimate {cond:.3e})"
        )
    z = np.linalg.solve(Kmat, -eye_d.reshape(-1))
    Z = z.reshape(D, D)
    return 0.5 * (Z + Z.T)


def solve_dare(A, B, Q, Y, tol: float = 1e-12, max_iter: int = 10_000):
    """Fixed-point solution of the discrete algebraic Riccati equation.

    Iterates P <- Q + A'PA - A'PB (Y + B'PB)^-1 B'PA from P0 = Q until
    successive iterates differ by less than ``tol``. Returns (P, K) with
    K = (Y + B'PB)^-1 B'PA.
    """
    A = _as_square(A, "A")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    Q = _as_square(Q, "Q")
    Y = _as_square(Y, "Y")
    P = Q.copy()
    for _ in range(max_iter):
        BtPB = Y + B.T @ P @ B
        BtPA = B.T @ P @ A
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(BtPB, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            break
        P = P_next
    else:
        raise np.linalg.LinAlgError(
            f"Riccati iteration did not converge within {max_iter} iterations"
        )
    K = np.linalg.solve(Y + B.T @ P @ B, B.T @ P @ A)
    return P, K


def least_squares(X, U, ridge: float = 0.0) -> np.ndarray:
    """Ridge least-squares fit of actions onto states: minimises
    sum_k ||u_k - Phi x_k||^2 + ridge ||Phi||^2, returning Phi (N x D).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if X.shape[0] != U.shape[0]:
        raise ValueError(f"{X.shape[0]} states but {U.shape[0]} actions")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    D = X.shape[1]
    if X.shape[0] < D:
        raise ValueError(f"need at least {D} samples, got {X.shape[0]}")
    gram = X.T @ X
    if ridge == 0.0 and np.linalg.matrix_rank(gram) < D:
        raise np.linalg.LinAlgError(
            "rank-deficient design with ridge=0; pass ridge > 0"
        )
    Phi_t = np.linalg.solve(gram + ridge * np.eye(D), X.T @ U)
    return Phi_t.T


def psd_factor(cov) -> np.ndarray:
    """Symmetric PSD square root of a covariance; rejects indefinite input."""
    cov = _as_square(cov, "cov")
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min(initial=0.0) < -1e-10:
        raise ValueError(f"covariance is indefinite (min eigenvalue {w.min():.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gaussian_draw(rng: RngStream, mean, cov) -> np.ndarray:
    """Sample N(mean, cov) as mean + L xi with L a symmetric PSD factor."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    L = psd_factor(cov)
    if L.shape[0] != mean.shape[0]:
        raise ValueError("mean and cov dimensions disagree")
    return mean + L @ rng.standard_normal(mean.shape[0])
