"""Finite-dimensional action on a uniform grid.

With ``h = t/K``, nodes ``y_0..y_K`` (``y_K = x``) and forward slopes
``y'_k = (y_{k+1} - y_k)/h``, the discrete action is the left Riemann sum

    A_K(y) = sum_{k<K} L(y_k, t_k, y'_k) h  (+ w(y_0) for the Bolza problem).

Its gradient in ``y_k`` is ``h L_x(k) - L_xi(k) + L_xi(k-1)`` for interior
nodes; vanishing of that expression is the discrete Euler-Lagrange system,
which under ``z_k = L_xi(k)`` is the explicit Euler scheme for Hamilton's
equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .legendre import conjugate_velocity


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = h k``, ``k = 0..K``, with ``t_K`` pinned to ``t``."""

    t: float
    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ContractError(f"K must be an integer >= 2, got {self.K}")
        if not (np.isfinite(self.t) and self.t > 0):
            raise ContractError(f"horizon must be positive, got {self.t}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "K", int(self.K))

    @property
    def h(self):
        return self.t / self.K

    @property
    def nodes(self):
        tk = self.h * np.arange(self.K + 1)
        tk[-1] = self.t
        return tk


@dataclass(frozen=True)
class DiscretePath:
    """All nodes ``y_0..y_K`` of a grid path, shape ``(K+1, d)``.

    Use :meth:`from_free` to build a path from the free variables of a problem;
    fixed end points are then copied bit-exactly.
    """

    grid: Grid
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.shape[0] != self.grid.K + 1:
            raise ContractError(f"expected {self.grid.K + 1} nodes, got {nodes.shape[0]}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_free(cls, problem, grid, free):
        """Assemble a path from free nodes (``y_0..y_{K-1}`` or ``y_1..y_{K-1}``)."""
        d = problem.dim
        free = np.asarray(free, dtype=float).reshape(-1, d)
        if free.shape[0] != problem.n_free(grid.K):
            raise ContractError(f"expected {problem.n_free(grid.K)} free nodes, got {free.shape[0]}")
        nodes = np.empty((grid.K + 1, d))
        if problem.is_bolza:
            nodes[:-1] = free
        else:
            nodes[0] = problem.x_tilde
            nodes[1:-1] = free
        nodes[-1] = problem.x
        return cls(grid, nodes)

    @property
    def K(self):
        return self.grid.K

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def slopes(self):
        return np.diff(self.nodes, axis=0) / self.grid.h

    def free(self, problem):
        return self.nodes[:-1] if problem.is_bolza else self.nodes[1:-1]


@dataclass(frozen=True)
class MomentumPath:
    """Discrete momenta ``z_k = L_xi(y_k, t_k, y'_k)``, ``k = 0..K-1``."""

    grid: Grid
    z: np.ndarray

    @property
    def differences(self):
        """``z'_k = (z_k - z_{k-1})/h`` for ``k = 1..K-1``."""
        return np.diff(self.z, axis=0) / self.grid.h


@dataclass(frozen=True)
class BoundsCertificate:
    """A-priori bounds for minimisers in the sublevel set ``{A_K <= C_x}``.

    ``C_x`` is evaluated at the path's own ``K`` (``c_x_source == "grid"``)
    unless overridden. ``approximate`` is set when the model's superlinearity
    constants are not exact global bounds.
    """

    C_x: float
    R1: float
    R2: float
    k_star: int
    holds: bool
    action: float
    max_node_norm: float
    min_slope_norm: float
    momentum_at_k_star: float
    alpha: float
    beta: float
    b_alpha: float
    b_one_plus_alpha: float
    approximate: bool
    c_x_source: str = "grid"
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "C_x": self.C_x, "R1": self.R1, "R2": self.R2, "k_star": self.k_star,
            "holds": self.holds, "action": self.action, "max_node_norm": self.max_node_norm,
            "min_slope_norm": self.min_slope_norm, "momentum_at_k_star": self.momentum_at_k_star,
            "alpha": self.alpha, "beta": self.beta, "b_alpha": self.b_alpha,
            "b_one_plus_alpha": self.b_one_plus_alpha, "approximate": self.approximate,
            "c_x_source": self.c_x_source,
        }


def _check_path(problem, path):
    if path.grid.t != problem.t:
        raise ContractError(f"path horizon {path.grid.t} does not match problem horizon {problem.t}")
    if path.dim != problem.dim:
        raise ContractError(f"path dimension {path.dim} does not match problem dimension {problem.dim}")
    if not np.array_equal(path.nodes[-1], problem.x):
        raise ContractError("path does not end at the problem's end point x")
    if not problem.is_bolza and not np.array_equal(path.nodes[0], problem.x_tilde):
        raise ContractError("path does not start at the problem's fixed point x_tilde")


def _evaluate(model, path):
    tk = path.grid.nodes[:-1]
    return model(path.nodes[:-1], tk, path.slopes)


def discrete_action(problem, path):
    """Riemann-sum action of ``path`` (plus ``w(y_0)`` for Bolza)."""
    _check_path(problem, path)
    val = _evaluate(problem.model, path)[0]
    total = float(np.sum(val) * path.grid.h)
    if problem.is_bolza:
        total += float(problem.terminal.value(path.nodes[0]))
    return total


def discrete_gradient(problem, path):
    """Gradient of :func:`discrete_action` in the free nodes, shape ``(n_free, d)``."""
    _check_path(problem, path)
    h = path.grid.h
    _, lx, lxi, _ = _evaluate(problem.model, path)
    lx = np.asarray(lx, dtype=float)
    lxi = np.asarray(lxi, dtype=float)
    g = h * lx
    g[:, :] -= lxi
    g[1:] += lxi[:-1]
    if problem.is_bolza:
        g[0] += np.asarray(problem.terminal.grad(path.nodes[0]), dtype=float)
        return g
    return g[1:]


def discrete_momenta(model, path):
    """``z_k = L_xi(y_k, t_k, y'_k)`` for ``k = 0..K-1``."""
    lxi = _evaluate(model, path)[2]
    return MomentumPath(path.grid, np.array(lxi, dtype=float))


def hamilton_residuals(model, path, momenta, tol=1e-12):
    """Both residual families of the discrete Hamilton system.

    Returns ``(velocity, momentum)`` where ``velocity[k] = |y'_k - H_p(y_k, t_k, z_k)|``
    for ``k = 0..K-1`` and ``momentum[k-1] = |z'_k + H_x(y_k, t_k, z_k)|`` for
    ``k = 1..K-1``.
    """
    tk = path.grid.nodes[:-1]
    y = path.nodes[:-1]
    slopes = path.slopes
    conj = conjugate_velocity(model, y, tk, momenta.z, guess=slopes, tol=tol)
    vel = np.linalg.norm(slopes - conj.dH_dp, axis=-1)
    mom = np.linalg.norm(momenta.differences + conj.dH_dx[1:], axis=-1)
    return vel, mom


def discrete_hamilton_residual(model, path, momenta):
    """Max-norm residual of the explicit Euler Hamilton system (a diagnostic)."""
    vel, mom = hamilton_residuals(model, path, momenta)
    return float(max(np.max(vel, initial=0.0), np.max(mom, initial=0.0)))


def finite_difference_gradient(problem, path, step=1e-6):
    """Central differences of :func:`discrete_action` in every free coordinate."""
    free = np.array(path.free(problem), dtype=float)
    out = np.empty_like(free)
    for idx in np.ndindex(free.shape):
        up = free.copy()
        dn = free.copy()
        up[idx] += step
        dn[idx] -= step
        fu = discrete_action(problem, DiscretePath.from_free(problem, path.grid, up))
        fd = discrete_action(problem, DiscretePath.from_free(problem, path.grid, dn))
        out[idx] = (fu - fd) / (2 * step)
    return out


def gradient_check(problem, K, n_paths=20, seed=0, spread=1.0, step=1e-6):
    """Worst ``max|g - g_fd| / max(1, max|g|)`` over random paths around the comparison path."""
    rng = np.random.default_rng(seed)
    grid = Grid(problem.t, K)
    base = comparison_path(problem, grid).free(problem)
    worst = 0.0
    for _ in range(n_paths):
        free = base + rng.uniform(-spread, spread, size=base.shape)
        path = DiscretePath.from_free(problem, grid, free)
        g = discrete_gradient(problem, path)
        fd = finite_difference_gradient(problem, path, step)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g)))))
    return worst


def comparison_path(problem, grid):
    """Constant path at ``x`` (Bolza) or the straight segment ``x_tilde -> x`` (two-point)."""
    if problem.is_bolza:
        free = np.broadcast_to(problem.x, (grid.K, problem.dim))
    else:
        s = grid.nodes[1:-1, None] / problem.t
        free = problem.x_tilde + (problem.x - problem.x_tilde) * s
    return DiscretePath.from_free(problem, grid, free)


def bounds_certificate(problem, path, C_x_override=None):
    """Evaluate ``C_x``, ``R1``, ``R2`` and ``k*`` for ``path``.

    ``R1 = C_x + (1+alpha)|x| - b_{1+alpha} t - beta`` bounds every node and
    ``R2 = (C_x + alpha|x| - b_{1+alpha} t - beta)/t`` bounds the smallest slope
    of any path in the sublevel set ``{A_K <= C_x}``. ``k*`` is the first index
    of minimal slope norm.
    """
    _check_path(problem, path)
    model = problem.model
    grid = path.grid
    if problem.is_bolza:
        alpha, beta = float(problem.terminal.alpha), float(problem.terminal.beta)
    else:
        alpha, beta = 0.0, 0.0
    b_alpha, exact_a = model.b(alpha)
    b_1a, exact_1a = model.b(1.0 + alpha)
    notes = []
    if C_x_override is None:
        C_x = discrete_action(problem, comparison_path(problem, grid))
        source = "grid"
        if not model.time_independent:
            notes.append("C_x evaluated at this K only; sup over K not computed")
    else:
        C_x = float(C_x_override)
        source = "override"
    t = problem.t
    xn = float(np.linalg.norm(problem.x))
    R1 = C_x + (1.0 + alpha) * xn - b_1a * t - beta
    R2 = (C_x + alpha * xn - b_1a * t - beta) / t
    action = discrete_action(problem, path)
    slope_norm = np.linalg.norm(path.slopes, axis=-1)
    k_star = int(np.argmin(slope_norm))
    z_star = discrete_momenta(model, path).z[k_star]
    return BoundsCertificate(
        C_x=float(C_x), R1=float(R1), R2=float(R2), k_star=k_star, holds=bool(action <= C_x),
        action=action, max_node_norm=float(np.max(np.linalg.norm(path.nodes, axis=-1))),
        min_slope_norm=float(slope_norm[k_star]), momentum_at_k_star=float(np.linalg.norm(z_star)),
        alpha=alpha, beta=beta, b_alpha=b_alpha, b_one_plus_alpha=b_1a,
        approximate=not (exact_a and exact_1a), c_x_source=source, notes=notes)


def action_lower_bound(problem):
    """``-alpha|x| + b_alpha t + beta``, a bound valid for every discrete Bolza path."""
    if not problem.is_bolza:
        raise ContractError("lower bound is stated for the Bolza problem")
    w = problem.terminal
    b_alpha, _ = problem.model.b(w.alpha)
    return -w.alpha * float(np.linalg.norm(problem.x)) + b_alpha * problem.t + w.beta
