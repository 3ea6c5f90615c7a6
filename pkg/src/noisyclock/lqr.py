"""Time-changed linear quadratic regulator machinery.

The Riccati flow under a noisy clock replaces the classical terms
A'P + PA, P, 0, trace(P MM') with linear mappings F, G, H, g computed
jointly from the moment function of an augmented Kronecker-sum matrix:

    vec([[F(P), G(P)], [G(P)', H(P)]]) = beta(At (+) At) vec([[P,0],[0,0]])

with At the transpose of [[A, I], [0, 0]].  That matrix function is built
once per (clock model, plant) pair and cached; each evaluation of the
mappings is then a single matrix-vector product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clocks import Deterministic, SubordinatorModel
from .errors import BetaDomainError, DivergenceError, SolverError
from .matops import beta_matrix, kron_sum, spectrum_check, unvec, vec

__all__ = [
    "LinearPlant", "QuadraticCost", "MappingSet", "RiccatiSolution",
    "PolicyCostSolution", "GainSchedule", "build_augmented",
    "compute_mappings", "solve_riccati", "policy_cost", "classical_lqr",
    "bellman_residual",
]


def _sym(P):
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class LinearPlant:
    """dY = (A Y + B U) dt + M dW in plant time."""

    A: np.ndarray
    B: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        M = np.asarray(self.M, dtype=float)
        if M.ndim == 0:
            M = M * np.ones((n, 1)) if M else np.zeros((n, 1))
        M = M.reshape(n, -1)
        for name, mat in (("A", A), ("B", B), ("M", M)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} must have finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "M", M)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class QuadraticCost:
    """Running weights Q, R, terminal weight Phi, controller horizon S."""

    Q: np.ndarray
    R: np.ndarray
    Phi: np.ndarray
    S: float

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        for name, mat in (("Q", Q), ("Phi", Phi)):
            if not np.allclose(mat, mat.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(mat).min() < -1e-10:
                raise ValueError(f"{name} must be positive semidefinite")
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        if not self.S > 0:
            raise ValueError("horizon S must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Phi", Phi)


@dataclass(frozen=True)
class MappingSet:
    """F(P), G(P), H(P), g(P) and the P-independent noise matrix N."""

    FP: np.ndarray
    GP: np.ndarray
    HP: np.ndarray
    gP: float
    N: np.ndarray


def build_augmented(A):
    """Return (A_tilde, A_hat) for the vectorized mapping computation.

    A_tilde = [[A, I], [0, 0]]; its exponential carries int_0^t e^{Ar} dr
    in the upper-right block.  A_hat plays the same role for A (+) A.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    A_tilde = np.block([[A, np.eye(n)],
                        [np.zeros((n, n)), np.zeros((n, n))]])
    AkA = kron_sum(A, A)
    A_hat = np.block([[AkA, np.eye(n * n)],
                      [np.zeros((n * n, n * n)), np.zeros((n * n, n * n))]])
    return A_tilde, A_hat


class _MappingOperator:
    """Cached beta of the augmented Kronecker sum for one (model, plant)."""

    def __init__(self, model: SubordinatorModel, plant: LinearPlant):
        report = spectrum_check(model, plant.A, scale=2.0)
        if not report.passed:
            raise BetaDomainError(
                "spec(2A) reaches Re = "
                f"{report.max_real_part:g}, outside dom(beta) with "
                f"r_max = {model.r_max():g}",
                r_max=model.r_max(), report=report)
        n = plant.n
        A_tilde, A_hat = build_augmented(plant.A)
        self.n = n
        self.W = beta_matrix(model, kron_sum(A_tilde.T, A_tilde.T))
        # g(P) = trace(P N): vec(N) = [I 0] beta(A_hat) [0; I] vec(MM')
        MMt = plant.M @ plant.M.T
        upper_right = beta_matrix(model, A_hat)[: n * n, n * n:]
        self.N = _sym(unvec(upper_right @ vec(MMt), n, n))

    def maps(self, P):
        n = self.n
        Z = np.zeros((2 * n, 2 * n))
        Z[:n, :n] = P
        blk = unvec(self.W @ vec(Z), 2 * n, 2 * n)
        F = _sym(blk[:n, :n])
        G = blk[:n, n:]
        H = _sym(blk[n:, n:])
        g = float(np.trace(P @ self.N))
        return F, G, H, g


_OPERATOR_CACHE: dict = {}


def _operator(model, plant):
    key = (model, plant.A.tobytes(), plant.M.tobytes(), plant.A.shape[0])
    op = _OPERATOR_CACHE.get(key)
    if op is None:
        op = _MappingOperator(model, plant)
        _OPERATOR_CACHE[key] = op
    return op


def compute_mappings(model: SubordinatorModel, plant: LinearPlant,
                     P) -> MappingSet:
    """Evaluate the generalized Riccati mappings at a symmetric P."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not np.allclose(P, P.T, atol=1e-10):
        raise ValueError("P must be symmetric")
    op = _operator(model, plant)
    F, G, H, g = op.maps(P)
    return MappingSet(FP=F, GP=G, HP=H, gP=g, N=op.N)


@dataclass(frozen=True)
class GainSchedule:
    """Feedback gains on a uniform grid, piecewise-linear between nodes."""

    s_grid: np.ndarray
    K: np.ndarray

    def __call__(self, s):
        s_grid = self.s_grid
        s = float(np.clip(s, s_grid[0], s_grid[-1]))
        i = min(int(np.searchsorted(s_grid, s, side="right")) - 1,
                len(s_grid) - 2)
        w = (s - s_grid[i]) / (s_grid[i + 1] - s_grid[i])
        return (1.0 - w) * self.K[i] + w * self.K[i + 1]


@dataclass(frozen=True)
class RiccatiSolution:
    """Backward Riccati solution: V(s, x) = x'P_s x + h_s, gains K_s."""

    s_grid: np.ndarray
    P: np.ndarray
    h: np.ndarray
    K: np.ndarray
    model: SubordinatorModel = field(compare=False, default=None)
    plant: LinearPlant = field(compare=False, default=None)
    cost: QuadraticCost = field(compare=False, default=None)

    def gain_schedule(self) -> GainSchedule:
        return GainSchedule(self.s_grid, self.K)

    def value(self, s, x):
        P, h = _interp_quad(self.s_grid, self.P, self.h, s)
        x = np.asarray(x, dtype=float).ravel()
        return float(x @ P @ x + h)


@dataclass(frozen=True)
class PolicyCostSolution:
    """Cost-to-go of a fixed linear policy: J(s, x) = x'Z_s x + p_s."""

    s_grid: np.ndarray
    Z: np.ndarray
    p: np.ndarray

    def value(self, s, x):
        Z, p = _interp_quad(self.s_grid, self.Z, self.p, s)
        x = np.asarray(x, dtype=float).ravel()
        return float(x @ Z @ x + p)


def _interp_quad(s_grid, P, h, s):
    s = float(np.clip(s, s_grid[0], s_grid[-1]))
    i = min(int(np.searchsorted(s_grid, s, side="right")) - 1,
            len(s_grid) - 2)
    w = (s - s_grid[i]) / (s_grid[i + 1] - s_grid[i])
    return (1.0 - w) * P[i] + w * P[i + 1], (1.0 - w) * h[i] + w * h[i + 1]


def _gain_from(R, B, G, H):
    Sm = R + B.T @ H @ B
    if np.linalg.cond(Sm) > 1e12:
        raise SolverError("R + B'H(P)B is numerically singular")
    return -np.linalg.solve(Sm, B.T @ G.T)


def solve_riccati(model: SubordinatorModel, plant: LinearPlant,
                  cost: QuadraticCost, n_steps: int = 1000) -> RiccatiSolution:
    """Integrate the generalized Riccati equations backward from s = S.

    Classical fixed-step RK4 on a uniform grid with symmetrization after
    every stage; the value function is V(s,x) = x'P_s x + h_s and the
    optimal gain K_s = -(R + B'H(P_s)B)^{-1} B'G(P_s)'.
    """
    if n_steps < 10:
        raise ValueError("n_steps must be at least 10")
    op = _operator(model, plant)
    B, Q, R = plant.B, cost.Q, cost.R
    n = plant.n
    ds = cost.S / n_steps
    s_grid = np.linspace(0.0, cost.S, n_steps + 1)
    P = np.empty((n_steps + 1, n, n))
    h = np.empty(n_steps + 1)
    P[-1] = cost.Phi
    h[-1] = 0.0

    def rhs(Pm):
        # dP/d(remaining time); symmetrize the stage input
        Pm = _sym(Pm)
        F, G, H, g = op.maps(Pm)
        Sm = R + B.T @ H @ B
        if np.linalg.cond(Sm) > 1e12:
            raise SolverError("R + B'H(P)B is numerically singular")
        GB = G @ B
        dP = Q + F - GB @ np.linalg.solve(Sm, GB.T)
        return _sym(dP), g

    for i in range(n_steps, 0, -1):
        Pi, hi = P[i], h[i]
        k1, g1 = rhs(Pi)
        k2, g2 = rhs(Pi + 0.5 * ds * k1)
        k3, g3 = rhs(Pi + 0.5 * ds * k2)
        k4, g4 = rhs(Pi + ds * k3)
        P[i - 1] = _sym(Pi + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        h[i - 1] = hi + ds / 6.0 * (g1 + 2 * g2 + 2 * g3 + g4)
        if not (np.all(np.isfinite(P[i - 1])) and math.isfinite(h[i - 1])):
            raise DivergenceError(
                f"Riccati integration diverged at s = {s_grid[i - 1]:g}",
                where=s_grid[i - 1])

    K = np.empty((n_steps + 1, plant.p, n))
    for i in range(n_steps + 1):
        F, G, H, _ = op.maps(P[i])
        K[i] = _gain_from(R, B, G, H)
    return RiccatiSolution(s_grid=s_grid, P=P, h=h, K=K,
                           model=model, plant=plant, cost=cost)


def policy_cost(model: SubordinatorModel, plant: LinearPlant,
                cost: QuadraticCost, gain_schedule, n_steps: int = 1000
                ) -> PolicyCostSolution:
    """Cost-to-go ODEs for the fixed linear policy U_s = L_s X_{s-}."""
    if n_steps < 10:
        raise ValueError("n_steps must be at least 10")
    op = _operator(model, plant)
    B, Q, R = plant.B, cost.Q, cost.R
    n = plant.n
    ds = cost.S / n_steps
    s_grid = np.linspace(0.0, cost.S, n_steps + 1)
    Z = np.empty((n_steps + 1, n, n))
    p = np.empty(n_steps + 1)
    Z[-1] = cost.Phi
    p[-1] = 0.0

    def rhs(Zm, s):
        Zm = _sym(Zm)
        L = np.asarray(gain_schedule(s), dtype=float).reshape(plant.p, n)
        F, G, H, g = op.maps(Zm)
        GB = G @ B
        dZ = Q + F + L.T @ GB.T + GB @ L + L.T @ (R + B.T @ H @ B) @ L
        return _sym(dZ), g

    for i in range(n_steps, 0, -1):
        si = s_grid[i]
        Zi, pi = Z[i], p[i]
        k1, g1 = rhs(Zi, si)
        k2, g2 = rhs(Zi + 0.5 * ds * k1, si - 0.5 * ds)
        k3, g3 = rhs(Zi + 0.5 * ds * k2, si - 0.5 * ds)
        k4, g4 = rhs(Zi + ds * k3, si - ds)
        Z[i - 1] = _sym(Zi + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        p[i - 1] = pi + ds / 6.0 * (g1 + 2 * g2 + 2 * g3 + g4)
        if not (np.all(np.isfinite(Z[i - 1])) and math.isfinite(p[i - 1])):
            raise DivergenceError(
                f"cost-to-go integration diverged at s = {s_grid[i - 1]:g}",
                where=s_grid[i - 1])
    return PolicyCostSolution(s_grid=s_grid, Z=Z, p=p)


def classical_lqr(plant: LinearPlant, cost: QuadraticCost,
                  n_steps: int = 1000) -> GainSchedule:
    """Finite-horizon LQR gains computed as if the clock were noiseless."""
    sol = solve_riccati(Deterministic(b=1.0), plant, cost, n_steps)
    return sol.gain_schedule()


def _grid_derivative(arr, ds, i):
    """Second-order finite difference of a grid function at node i."""
    last = len(arr) - 1
    if 0 < i < last:
        return (arr[i + 1] - arr[i - 1]) / (2.0 * ds)
    if i == 0:
        return (-3.0 * arr[0] + 4.0 * arr[1] - arr[2]) / (2.0 * ds)
    return (3.0 * arr[last] - 4.0 * arr[last - 1] + arr[last - 2]) / (2.0 * ds)


def bellman_residual(model: SubordinatorModel, plant: LinearPlant,
                     cost: QuadraticCost, sol: RiccatiSolution,
                     s: float, x, u) -> float:
    """Evaluate c(s,x,u) + A^u V(s,x) for the quadratic value function.

    Time derivatives of P_s and h_s are taken by finite differences of the
    stored grid, so the residual genuinely measures how well the stored
    solution satisfies the dynamic programming equation (it vanishes to
    integration tolerance at u = K_s x).
    """
    s_grid = sol.s_grid
    ds = s_grid[1] - s_grid[0]
    i = int(round((s - s_grid[0]) / ds))
    if not (0 <= i < len(s_grid)) or abs(s_grid[i] - s) > 1e-9 * max(1, ds):
        raise ValueError(f"s = {s:g} is not a grid node")
    x = np.asarray(x, dtype=float).ravel()
    u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
    P_dot = _grid_derivative(sol.P, ds, i)
    h_dot = _grid_derivative(sol.h, ds, i)
    F, G, H, g = _operator(model, plant).maps(sol.P[i])
    B, Q, R = plant.B, cost.Q, cost.R
    quad = (x @ (P_dot + F) @ x + 2.0 * x @ (G @ B) @ u
            + u @ (B.T @ H @ B) @ u)
    return float(x @ Q @ x + u @ R @ u + h_dot + g + quad)
