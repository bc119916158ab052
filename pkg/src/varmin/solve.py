"""Minimisation of the discrete action over the free nodes.

Node ``k`` couples only to ``k-1`` and ``k+1`` through the slopes, so the
Hessian of the discrete action is block tridiagonal with ``d x d`` blocks and
each Newton system is solved by block Thomas elimination in ``O(K d^3)``.
Steps are globalised with Armijo backtracking; when the Newton direction is
unusable the iteration takes a steepest-descent step instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discrete import (
    BoundsCertificate,
    DiscretePath,
    Grid,
    MomentumPath,
    bounds_certificate,
    comparison_path,
    discrete_action,
    discrete_gradient,
    discrete_momenta,
)
from .errors import ContractError
from .problem import Problem

logger = logging.getLogger(__name__)

__all__ = [
    "Problem", "SolveOptions", "SolveResult", "initial_guess", "minimize_discrete",
    "transversality_residual", "newton_direction", "hessian_blocks", "block_thomas_solve",
    "solve",
]

ARMIJO_C = 1e-4
MAX_HALVINGS = 60
NOISE_REL = 1e-12


@dataclass(frozen=True)
class SolveOptions:
    tol_grad: float = 1e-10
    max_iter: int = 200
    method: str = "newton"  # or "gradient"

    def __post_init__(self):
        if not self.tol_grad > 0:
            raise ContractError("tol_grad must be positive")
        if self.max_iter < 0:
            raise ContractError("max_iter must be >= 0")
        if self.method not in ("newton", "gradient"):
            raise ContractError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class SolveResult:
    """Best iterate of :func:`minimize_discrete` and its diagnostics.

    ``history`` holds the action after every accepted step, starting with the
    initial guess.
    """

    path: DiscretePath
    momenta: MomentumPath
    action: float
    grad_norm: float
    iterations: int
    converged: bool
    certificate: Optional[BoundsCertificate]
    tol_grad: float
    history: tuple = ()
    diagnostics: dict = field(default_factory=dict)


def initial_guess(problem, K, strategy="straight_line"):
    """Deterministic starting path.

    ``"constant"`` puts every node at ``x`` (Bolza only); ``"straight_line"`` puts
    the nodes on the segment from the left end point (``x`` itself for Bolza) to ``x``.
    """
    grid = Grid(problem.t, K)
    if strategy == "constant":
        if not problem.is_bolza:
            raise ContractError("constant initial guess is only valid for the Bolza problem")
        return comparison_path(problem, grid)
    if strategy == "straight_line":
        return comparison_path(problem, grid)
    raise ContractError(f"unknown initial guess strategy {strategy!r}")


def hessian_blocks(problem, path):
    """Diagonal blocks ``(n, d, d)`` and super-diagonal blocks ``(n-1, d, d)`` of the Hessian."""
    model = problem.model
    grid = path.grid
    h = grid.h
    d = problem.dim
    y = path.nodes[:-1]
    tk = grid.nodes[:-1]
    slopes = path.slopes
    lxixi = np.asarray(model(y, tk, slopes)[3], dtype=float)
    lxx, lxxi = (np.asarray(a, dtype=float) for a in model.mixed(y, tk, slopes))
    lxix = np.swapaxes(lxxi, -1, -2)
    # term k = h L(y_k, t_k, (y_{k+1} - y_k)/h), Hessian over (y_k, y_{k+1})
    uu = h * lxx - lxxi - lxix + lxixi / h
    uv = lxxi - lxixi / h
    vv = lxixi / h

    K = grid.K
    diag = np.zeros((K, d, d))  # indexed by node k = 0..K-1
    diag += uu
    diag[1:] += vv[:-1]
    upper = uv[:-1]  # coupling of node k with k+1, k = 0..K-2
    if problem.is_bolza:
        diag[0] += problem.terminal.hessian(path.nodes[0])
        return diag, upper
    return diag[1:], upper[1:]


def block_thomas_solve(diag, upper, rhs):
    """Solve a symmetric block-tridiagonal system by block Thomas elimination.

    ``diag`` has shape ``(n, d, d)``; ``upper[k]`` couples unknown ``k`` to
    ``k+1`` (the sub-diagonal is its transpose). No pivoting across blocks.

    Raises
    ------
    numpy.linalg.LinAlgError
        If an eliminated diagonal block is singular or the result is not finite.
    """
    n = diag.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    cp = np.empty_like(upper)
    rp = np.empty_like(rhs)
    m = diag[0]
    rp[0] = np.linalg.solve(m, rhs[0])
    if n > 1:
        cp[0] = np.linalg.solve(m, upper[0])
    for k in range(1, n):
        low = upper[k - 1].T
        m = diag[k] - low @ cp[k - 1]
        r = rhs[k] - low @ rp[k - 1]
        if k < n - 1:
            sol = np.linalg.solve(m, np.column_stack([upper[k], r]))
            cp[k] = sol[:, :-1]
            rp[k] = sol[:, -1]
        else:
            rp[k] = np.linalg.solve(m, r)
    x = np.empty_like(rhs)
    x[-1] = rp[-1]
    for k in range(n - 2, -1, -1):
        x[k] = rp[k] - cp[k] @ x[k + 1]
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("non-finite block Thomas solution")
    return x


def newton_direction(problem, path, grad=None):
    """Newton step ``-H^{-1} g`` in the free nodes, shape ``(n_free, d)``."""
    if grad is None:
        grad = discrete_gradient(problem, path)
    diag, upper = hessian_blocks(problem, path)
    return -block_thomas_solve(diag, upper, grad)


def _armijo(problem, grid, free, f0, grad, direction):
    """Backtracking line search.

    Accepts a step by the Armijo test when the decrease is resolvable. Once
    the trial action agrees with ``f0`` to within ``NOISE_REL (1 + |f0|)``,
    action differences carry no information, so the step is accepted instead
    when it strictly reduces the gradient norm.
    """
    slope = float(np.sum(grad * direction))
    noise = NOISE_REL * (1.0 + abs(f0))
    gnorm = float(np.linalg.norm(grad))
    step = 1.0
    for _ in range(MAX_HALVINGS):
        trial = DiscretePath.from_free(problem, grid, free + step * direction)
        try:
            f = discrete_action(problem, trial)
        except (FloatingPointError, OverflowError):
            f = np.inf
        if np.isfinite(f):
            if f <= f0 + ARMIJO_C * step * slope and f < f0 - noise:
                return step, trial, f
            if abs(f - f0) <= noise and np.linalg.norm(discrete_gradient(problem, trial)) < gnorm:
                return step, trial, f
        step *= 0.5
    return 0.0, None, f0


def minimize_discrete(problem, K, init=None, opts=None, **kwargs):
    """Minimise the discrete action with ``K`` intervals.

    Parameters
    ----------
    problem : Problem
    K : int
    init : DiscretePath, optional
        Starting path; :func:`initial_guess` with ``"straight_line"`` by default.
    opts : SolveOptions, optional
        Keyword arguments ``tol_grad``, ``max_iter`` and ``method`` are accepted too.

    Returns
    -------
    SolveResult
        ``converged`` is False (not an exception) when ``max_iter`` runs out or
        the line search stalls; the best iterate is returned either way.
    """
    opts = opts or SolveOptions(**kwargs)
    grid = Grid(problem.t, K)
    path = init if init is not None else initial_guess(problem, K)
    if path.grid != grid:
        raise ContractError("initial path grid does not match (t, K)")
    free = np.array(path.free(problem), dtype=float)
    f = discrete_action(problem, path)
    g = discrete_gradient(problem, path)
    gnorm = float(np.max(np.abs(g), initial=0.0))
    history = [f]
    diag = {"gradient_steps": 0, "singular_newton": 0, "non_descent_newton": 0,
            "line_search_failures": 0, "method": opts.method}
    it = 0
    while gnorm > opts.tol_grad and it < opts.max_iter:
        direction = None
        if opts.method == "newton":
            try:
                direction = newton_direction(problem, path, g)
            except np.linalg.LinAlgError:
                diag["singular_newton"] += 1
            if direction is not None and not np.sum(g * direction) < 0:
                diag["non_descent_newton"] += 1
                direction = None
        used_gradient = direction is None
        if used_gradient:
            diag["gradient_steps"] += 1
            direction = -g
        step, trial, f_new = _armijo(problem, grid, free, f, g, direction)
        if trial is None and not used_gradient:
            diag["gradient_steps"] += 1
            step, trial, f_new = _armijo(problem, grid, free, f, g, -g)
        it += 1
        if trial is None:
            diag["line_search_failures"] += 1
            logger.debug("line search stalled at iteration %d (|g| = %.3e)", it, gnorm)
            break
        path, f = trial, f_new
        free = np.array(path.free(problem), dtype=float)
        g = discrete_gradient(problem, path)
        gnorm = float(np.max(np.abs(g), initial=0.0))
        history.append(f)

    converged = gnorm <= opts.tol_grad
    return SolveResult(path=path, momenta=discrete_momenta(problem.model, path), action=f,
                       grad_norm=gnorm, iterations=it, converged=bool(converged),
                       certificate=_certificate(problem, path), tol_grad=opts.tol_grad,
                       history=tuple(history), diagnostics=diag)


def _certificate(problem, path):
    # no certificate without a declared superlinearity map
    if problem.model.superlinearity is None:
        return None
    return bounds_certificate(problem, path)


def solve(problem, K, strategy="straight_line", **kwargs):
    """:func:`minimize_discrete` from :func:`initial_guess`."""
    return minimize_discrete(problem, K, initial_guess(problem, K, strategy), SolveOptions(**kwargs))


def transversality_residual(problem, result):
    """``|z_0 - grad w(y_0)|`` for a Bolza solution.

    At a converged minimiser this equals ``|h L_x(0) - g_0|``, so it is small
    when ``L_x`` vanishes along the path and ``O(h)`` in general.
    """
    if not problem.is_bolza:
        raise ContractError("transversality applies to the Bolza problem only")
    z0 = result.momenta.z[0]
    gw = np.asarray(problem.terminal.grad(result.path.nodes[0]), dtype=float)
    return float(np.linalg.norm(z0 - gw))
