"""Numerical Legendre transform ``H(x, t, p) = sup_xi {p . xi - L(x, t, xi)}``.

The maximiser solves ``L_xi(x, t, xi) = p``; strict convexity in ``xi``
makes the root unique, and damped Newton with the velocity Hessian as
Jacobian finds it. All functions broadcast over leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditionViolationError, ConjugateSolveError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 50
_MAX_HALVINGS = 40


@dataclass(frozen=True)
class ConjugateResult:
    """Outcome of :func:`conjugate_velocity`.

    ``dH_dp`` is the velocity ``xi`` itself and ``dH_dx = -L_x(x, t, xi)``.
    """

    xi: np.ndarray
    H: np.ndarray
    dH_dp: np.ndarray
    dH_dx: np.ndarray
    newton_iters: int
    residual: float


def _newton_direction(hess, f):
    try:
        step = np.linalg.solve(hess, f[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ConditionViolationError(f"singular velocity Hessian in Legendre solve: {exc}") from None
    if not np.all(np.isfinite(step)):
        raise ConditionViolationError("singular velocity Hessian in Legendre solve")
    return step


def conjugate_velocity(model, x, t, p, guess=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Solve ``L_xi(x, t, xi) = p`` for ``xi`` and evaluate ``H`` and its derivatives.

    Parameters
    ----------
    model : LagrangianModel
    x, p : array_like, shape (..., d)
    t : array_like, broadcastable to the batch shape
    guess : array_like, optional
        Warm start; defaults to ``xi = p``, exact for unit-mass kinetic energy.
    tol : float
        Residual tolerance on ``|L_xi - p|`` (Euclidean, per point).

    Raises
    ------
    ConjugateSolveError
        If the residual is still above ``tol`` after ``max_iter`` iterations.
    ConditionViolationError
        If the velocity Hessian is singular.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    xi = np.array(p if guess is None else np.broadcast_to(guess, p.shape), dtype=float)

    val, lx, lxi, hess = model(x, t, xi)
    f = lxi - p
    res = np.linalg.norm(f, axis=-1)
    iters = 0
    while np.max(res, initial=0.0) > tol:
        if iters >= max_iter:
            raise ConjugateSolveError(
                f"Legendre solve did not converge in {max_iter} iterations "
                f"(residual {np.max(res):.3e})", residual=float(np.max(res)))
        active = res > tol
        step = _newton_direction(hess, f)
        lam = np.ones(res.shape)
        # halve per point until the residual decreases
        for _ in range(_MAX_HALVINGS):
            trial = xi - np.where(active, lam, 0.0)[..., None] * step
            tval, tlx, tlxi, thess = model(x, t, trial)
            tf = tlxi - p
            tres = np.linalg.norm(tf, axis=-1)
            worse = active & ~(tres < res)
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
        xi, val, lx, lxi, hess, f = trial, tval, tlx, tlxi, thess, tf
        new_res = tres
        iters += 1
        if np.all(new_res[active] >= res[active]) and np.max(new_res) > tol:
            raise ConjugateSolveError(
                f"Legendre solve stalled at residual {np.max(new_res):.3e}", residual=float(np.max(new_res)))
        res = new_res

    H = np.sum(p * xi, axis=-1) - val
    return ConjugateResult(xi=xi, H=np.asarray(H), dH_dp=xi, dH_dx=-np.asarray(lx),
                           newton_iters=iters, residual=float(np.max(res, initial=0.0)))


def hamiltonian(model, x, t, p, guess=None, tol=DEFAULT_TOL):
    """``H(x, t, p)`` only."""
    return conjugate_velocity(model, x, t, p, guess=guess, tol=tol).H


def roundtrip_residual(model, x, t, xi, tol=DEFAULT_TOL):
    """``|xi(x, t, L_xi(x, t, xi)) - xi|``, the max over a batch.

    The starting guess is the default ``p``, not ``xi``, so the solve is real work.
    """
    xi = np.asarray(xi, dtype=float)
    p = model(x, t, xi)[2]
    back = conjugate_velocity(model, x, t, p, tol=tol)
    return float(np.max(np.linalg.norm(back.xi - xi, axis=-1), initial=0.0))
