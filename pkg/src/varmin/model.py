"""Lagrangian models, terminal costs and sampled checks of the standing assumptions.

A model is a vectorised evaluator ``(x, t, xi) -> (L, L_x, L_xi, L_xixi)``.
Arrays carry the state dimension ``d`` on the last axis (the Hessian on the
last two) and broadcast over any leading batch axes, so a whole grid of
nodes is evaluated in one call.

Catalog
-------
``free_particle``         ``L = m/2 |xi|^2``; params ``mass`` (default 1).
``anisotropic_quadratic`` ``L = 1/2 sum_i m_i xi_i^2``; params ``masses``
                          (scalar or length-d list, default 1) or ``mass``.
``harmonic_oscillator``   ``L = 1/2 |xi|^2 - omega^2/2 |x|^2``; params ``omega``.
``mechanical``            ``L = 1/2 |xi|^2 - V(x)`` with a bounded smooth ``V``;
                          params ``potential`` (``cos`` or ``gaussian``),
                          ``amplitude`` (default 1), ``wavenumber`` (cos, default 1),
                          ``width`` (gaussian, default 1).

The harmonic oscillator potential is unbounded below, so global uniform
superlinearity fails for it; its ``b_a`` is declared on the kinetic part
only (``superlinearity_kind == "kinetic"``) and the condition checker tests
the kinetic part for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CatalogLookupError, ModelDefinitionError, ModelEvaluationError

SUPERLINEARITY_KINDS = ("exact", "kinetic", "estimated")
CATALOG = ("free_particle", "harmonic_oscillator", "anisotropic_quadratic", "mechanical")
TERMINAL_CATALOG = ("zero", "quadratic", "linear")

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class LagrangianModel:
    """Black-box Lagrangian ``L(x, t, xi)`` with derivative information.

    Parameters
    ----------
    dim : int
        State dimension ``d``.
    func : callable
        ``func(x, t, xi) -> (L, L_x, L_xi, L_xixi)``, vectorised over leading axes.
    second : callable, optional
        ``second(x, t, xi) -> (L_xx, L_xxi)`` where ``L_xxi[..., i, j]`` is
        ``d^2 L / dx_i dxi_j``. Finite differences of ``func`` are used when absent.
    superlinearity : callable, optional
        ``a -> b_a`` with ``L >= a|xi| + b_a``.
    superlinearity_kind : str
        ``"exact"`` (global bound), ``"kinetic"`` (bound holds for ``kinetic`` only)
        or ``"estimated"`` (sampled, approximate).
    kinetic : callable, optional
        ``kinetic(x, t, xi) -> value``, the part of ``L`` the bound refers to
        when ``superlinearity_kind == "kinetic"``.
    hessian_floor : float
        Known lower bound on the eigenvalues of ``L_xixi`` (0 when unknown).
    """

    dim: int
    func: Callable
    second: Optional[Callable] = None
    superlinearity: Optional[Callable[[float], float]] = None
    superlinearity_kind: str = "estimated"
    kinetic: Optional[Callable] = None
    hessian_floor: float = 0.0
    time_independent: bool = False
    name: str = "user"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ModelDefinitionError(f"dimension must be >= 1, got {self.dim}")
        if self.superlinearity_kind not in SUPERLINEARITY_KINDS:
            raise ModelDefinitionError(f"unknown superlinearity kind {self.superlinearity_kind!r}")

    def __call__(self, x, t, xi):
        return self.func(np.asarray(x, dtype=float), np.asarray(t, dtype=float),
                         np.asarray(xi, dtype=float))

    def value(self, x, t, xi):
        return self(x, t, xi)[0]

    def mixed(self, x, t, xi, step=1e-6):
        """Return ``(L_xx, L_xxi)``; central differences of ``L_x`` if no closed form."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        xi = np.asarray(xi, dtype=float)
        if self.second is not None:
            return self.second(x, t, xi)
        d = self.dim
        shape = np.broadcast_shapes(x.shape, xi.shape)
        lxx = np.empty(shape + (d,), dtype=float)
        lxxi = np.empty(shape + (d,), dtype=float)
        eye = np.eye(d)
        for j in range(d):
            e = step * eye[j]
            lxx[..., :, j] = (self(x + e, t, xi)[1] - self(x - e, t, xi)[1]) / (2 * step)
            lxxi[..., :, j] = (self(x, t, xi + e)[1] - self(x, t, xi - e)[1]) / (2 * step)
        lxx = 0.5 * (lxx + np.swapaxes(lxx, -1, -2))
        return lxx, lxxi

    def b(self, a):
        """Return ``(b_a, exact)`` for the superlinearity bound ``L >= a|xi| + b_a``."""
        if self.superlinearity is None:
            raise ModelDefinitionError(
                f"model {self.name!r} declares no superlinearity map; "
                "use estimate_superlinearity() first")
        return float(self.superlinearity(float(a))), self.superlinearity_kind == "exact"

    def superlinear_part(self, x, t, xi):
        if self.superlinearity_kind == "kinetic" and self.kinetic is not None:
            return self.kinetic(np.asarray(x, dtype=float), np.asarray(t, dtype=float),
                                np.asarray(xi, dtype=float))
        return self.value(x, t, xi)


@dataclass(frozen=True)
class TerminalCost:
    """Terminal cost ``w`` with ``w(x) >= -alpha|x| + beta``.

    ``hess`` is optional; the solver finite-differences ``grad`` without it.
    """

    value: Callable
    grad: Callable
    alpha: float = 0.0
    beta: float = 0.0
    hess: Optional[Callable] = None
    name: str = "user"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 0:
            raise ModelDefinitionError("terminal cost alpha must be >= 0")

    def hessian(self, x, step=1e-6):
        x = np.asarray(x, dtype=float)
        if self.hess is not None:
            return np.asarray(self.hess(x), dtype=float)
        d = x.shape[-1]
        out = np.empty((d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = step
            out[:, j] = (np.asarray(self.grad(x + e)) - np.asarray(self.grad(x - e))) / (2 * step)
        return 0.5 * (out + out.T)


def eval_lagrangian(model, x, t, xi):
    """Evaluate ``(L, L_x, L_xi, L_xixi)`` at one point with validation.

    Raises
    ------
    ModelEvaluationError
        If any returned quantity is non-finite.
    ModelDefinitionError
        If the velocity Hessian is not symmetric.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    t = float(t)
    if x.shape != (model.dim,) or xi.shape != (model.dim,):
        raise ModelEvaluationError(f"expected points of dimension {model.dim}", point=(x, t, xi))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi)) and np.isfinite(t)):
        raise ModelEvaluationError("non-finite input", point=(x, t, xi))
    val, lx, lxi, lxixi = model(x, t, xi)
    val = float(val)
    lx, lxi, lxixi = (np.asarray(a, dtype=float) for a in (lx, lxi, lxixi))
    if not (np.isfinite(val) and np.all(np.isfinite(lx)) and np.all(np.isfinite(lxi))
            and np.all(np.isfinite(lxixi))):
        raise ModelEvaluationError(
            f"model {model.name!r} returned non-finite output at x={x}, t={t}, xi={xi}",
            point=(x, t, xi))
    _check_symmetric(lxixi, model.name)
    return val, lx, lxi, lxixi


def _check_symmetric(hess, name):
    asym = np.max(np.abs(hess - np.swapaxes(hess, -1, -2))) if hess.size else 0.0
    scale = max(1.0, float(np.max(np.abs(hess)))) if hess.size else 1.0
    if asym > SYMMETRY_TOL * scale:
        raise ModelDefinitionError(f"velocity Hessian of {name!r} is not symmetric (|H - H^T| = {asym:.3e})")


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def _quadratic_kinetic_model(dim, masses, potential, name, params, kind, sup_v, floor):
    """``L = 1/2 sum m_i xi_i^2 - V(x)`` with ``potential(x) -> (V, grad V, hess V)``."""
    masses = np.broadcast_to(np.asarray(masses, dtype=float), (dim,)).copy()
    mass_matrix = np.diag(masses)
    m_min = float(masses.min())

    def func(x, t, xi):
        v, dv, _ = potential(x)
        kin = 0.5 * np.sum(masses * xi * xi, axis=-1)
        val = kin - v
        shape = np.broadcast_shapes(x.shape, xi.shape)
        if np.ndim(t):
            val = np.broadcast_to(val, np.broadcast_shapes(np.shape(val), np.shape(t)))
        lx = -dv if dv.shape == shape else np.broadcast_to(-dv, shape)
        lxi = masses * xi
        if lxi.shape != shape:
            lxi = np.broadcast_to(lxi, shape)
        # read-only views; callers never write into model outputs
        hess = np.broadcast_to(mass_matrix, shape + (dim,))
        return val, lx, lxi, hess

    def second(x, t, xi):
        _, _, d2v = potential(x)
        shape = np.broadcast_shapes(x.shape, xi.shape)
        lxx = np.broadcast_to(-d2v, shape + (dim,)).copy()
        return lxx, np.zeros(shape + (dim,))

    def kinetic(x, t, xi):
        return 0.5 * np.sum(masses * xi * xi, axis=-1) + 0.0 * t

    def superlinearity(a):
        return -a * a / (2.0 * m_min) - sup_v

    return LagrangianModel(dim=dim, func=func, second=second, superlinearity=superlinearity,
                           superlinearity_kind=kind, kinetic=kinetic, hessian_floor=floor,
                           time_independent=True, name=name, params=dict(params))


def _zero_potential(dim):
    def potential(x):
        return (np.zeros(x.shape[:-1]), np.zeros(x.shape), np.zeros(x.shape + (dim,)))
    return potential


def _positive(params, key, default):
    val = float(params.get(key, default))
    if not np.isfinite(val) or val <= 0:
        raise CatalogLookupError(f"parameter {key!r} must be a positive number, got {val}")
    return val


def catalog_lookup(name, params=None, dim=1):
    """Build a catalog model by name.

    Raises
    ------
    CatalogLookupError
        For unknown names, ``dim < 1`` or invalid parameters.
    """
    params = dict(params or {})
    try:
        dim = int(dim)
    except (TypeError, ValueError):
        raise CatalogLookupError(f"dimension must be an integer, got {dim!r}") from None
    if dim < 1:
        raise CatalogLookupError(f"dimension must be >= 1, got {dim}")

    if name == "free_particle":
        m = _positive(params, "mass", 1.0)
        return _quadratic_kinetic_model(dim, m, _zero_potential(dim), name, params,
                                        "exact", 0.0, m)

    if name == "anisotropic_quadratic":
        raw = params.get("masses", params.get("mass", 1.0))
        masses = np.atleast_1d(np.asarray(raw, dtype=float))
        if masses.size == 1:
            masses = np.full(dim, float(masses[0]))
        if masses.shape != (dim,) or not np.all(np.isfinite(masses)) or np.any(masses <= 0):
            raise CatalogLookupError(f"'masses' must be {dim} positive numbers, got {raw!r}")
        return _quadratic_kinetic_model(dim, masses, _zero_potential(dim), name, params,
                                        "exact", 0.0, float(masses.min()))

    if name == "harmonic_oscillator":
        omega = _positive(params, "omega", 1.0)
        w2 = omega * omega

        def potential(x):
            return (0.5 * w2 * np.sum(x * x, axis=-1), w2 * x,
                    np.broadcast_to(w2 * np.eye(dim), x.shape + (dim,)))
        return _quadratic_kinetic_model(dim, 1.0, potential, name, params,
                                        "kinetic", 0.0, 1.0)

    if name == "mechanical":
        kind = params.get("potential", "cos")
        amp = float(params.get("amplitude", 1.0))
        if not np.isfinite(amp):
            raise CatalogLookupError("'amplitude' must be finite")
        if kind == "cos":
            k = float(params.get("wavenumber", 1.0))

            def potential(x):
                c = np.cos(k * x)
                hess = np.zeros(x.shape + (dim,))
                idx = np.arange(dim)
                hess[..., idx, idx] = -amp * k * k * c
                return amp * np.sum(c, axis=-1), -amp * k * np.sin(k * x), hess
            sup_v = abs(amp) * dim
        elif kind == "gaussian":
            s2 = _positive(params, "width", 1.0) ** 2

            def potential(x):
                g = amp * np.exp(-0.5 * np.sum(x * x, axis=-1) / s2)
                grad = -g[..., None] * x / s2
                hess = g[..., None, None] * (x[..., :, None] * x[..., None, :] / (s2 * s2)
                                             - np.eye(dim) / s2)
                return g, grad, hess
            sup_v = max(amp, 0.0)
        else:
            raise CatalogLookupError(f"unknown mechanical potential {kind!r}; use 'cos' or 'gaussian'")
        return _quadratic_kinetic_model(dim, 1.0, potential, name, params,
                                        "exact", sup_v, 1.0)

    raise CatalogLookupError(f"unknown model {name!r}; catalog: {', '.join(CATALOG)}")


def terminal_cost_lookup(name, params=None, dim=1):
    """Build a terminal cost: ``zero``, ``quadratic`` (``c/2 |x - center|^2``) or ``linear`` (``c . x``)."""
    params = dict(params or {})
    if name == "zero":
        return TerminalCost(value=lambda x: 0.0, grad=lambda x: np.zeros(dim),
                            hess=lambda x: np.zeros((dim, dim)), alpha=0.0, beta=0.0,
                            name=name, params=params)
    if name == "quadratic":
        c = float(params.get("weight", 1.0))
        if c < 0:
            raise CatalogLookupError("quadratic terminal cost needs weight >= 0")
        center = np.broadcast_to(np.asarray(params.get("center", 0.0), dtype=float), (dim,)).copy()
        return TerminalCost(value=lambda x: 0.5 * c * float(np.sum((np.asarray(x) - center) ** 2)),
                            grad=lambda x: c * (np.asarray(x, dtype=float) - center),
                            hess=lambda x: c * np.eye(dim), alpha=0.0, beta=0.0,
                            name=name, params=params)
    if name == "linear":
        coef = np.broadcast_to(np.asarray(params.get("coefficients", 1.0), dtype=float), (dim,)).copy()
        return TerminalCost(value=lambda x: float(coef @ np.asarray(x, dtype=float)),
                            grad=lambda x: coef.copy(), hess=lambda x: np.zeros((dim, dim)),
                            alpha=float(np.linalg.norm(coef)), beta=0.0, name=name, params=params)
    raise CatalogLookupError(f"unknown terminal cost {name!r}; catalog: {', '.join(TERMINAL_CATALOG)}")


# ---------------------------------------------------------------------------
# Sampled checks
# ---------------------------------------------------------------------------

@dataclass
class ConditionResult:
    passed: bool
    worst_violation: float
    min_value: float
    witness: Optional[tuple] = None

    def to_dict(self):
        wit = None
        if self.witness is not None:
            wit = [np.asarray(w, dtype=float).tolist() for w in self.witness]
        return {"passed": bool(self.passed), "worst_violation": float(self.worst_violation),
                "min_value": float(self.min_value), "witness": wit}


@dataclass
class ConditionReport:
    """Per-condition outcome of :func:`check_conditions`."""

    conditions: dict
    n_samples: int
    superlinearity_kind: str

    @property
    def passed(self):
        return all(c.passed for c in self.conditions.values())

    @property
    def min_eigenvalue(self):
        return self.conditions["convexity"].min_value

    def to_dict(self):
        return {"passed": self.passed, "n_samples": self.n_samples,
                "superlinearity_kind": self.superlinearity_kind,
                "conditions": {k: v.to_dict() for k, v in self.conditions.items()}}


def _box_bounds(box, dim):
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (2 * dim + 1, 1))
    if box.shape != (2 * dim + 1, 2):
        raise ValueError(f"box must be one interval or {2 * dim + 1} intervals over (x, t, xi)")
    if np.any(box[:, 1] <= box[:, 0]) or not np.all(np.isfinite(box)):
        raise ValueError("box intervals must be finite and nondegenerate")
    return box


def sample_box(box, dim, n_samples, rng):
    """Uniform samples ``(x, t, xi)`` from a box over ``R^d x R x R^d``."""
    box = _box_bounds(box, dim)
    u = rng.uniform(box[:, 0], box[:, 1], size=(n_samples, 2 * dim + 1))
    return u[:, :dim], u[:, dim], u[:, dim + 1:]


def _slack_result(slack, points):
    i = int(np.argmin(slack))
    worst = float(slack[i])
    passed = worst >= 0.0
    return ConditionResult(passed=passed, worst_violation=0.0 if passed else -worst,
                           min_value=worst, witness=tuple(p[i] for p in points))


def check_conditions(model, w=None, box=(-1.0, 1.0), n_samples=100, a_values=(0.0, 1.0, 2.0), seed=0):
    """Check convexity in velocity, superlinearity and the terminal-cost growth bound.

    Samples ``n_samples`` points uniformly from ``box`` (one interval applied to
    every coordinate, or ``2d+1`` intervals ordered ``x, t, xi``).

    Raises
    ------
    ModelDefinitionError
        If a sampled velocity Hessian is asymmetric beyond 1e-12.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x, t, xi = sample_box(box, model.dim, n_samples, rng)
    val, lx, lxi, hess = model(x, t, xi)
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(hess))):
        bad = int(np.flatnonzero(~np.isfinite(np.asarray(val)) | ~np.all(np.isfinite(hess), axis=(-1, -2)))[0])
        raise ModelEvaluationError("non-finite model output while checking conditions",
                                   point=(x[bad], t[bad], xi[bad]))
    _check_symmetric(hess, model.name)
    eig = np.linalg.eigvalsh(0.5 * (hess + np.swapaxes(hess, -1, -2)))[:, 0]
    i = int(np.argmin(eig))
    conds = {"convexity": ConditionResult(passed=bool(eig[i] > 0.0),
                                          worst_violation=max(0.0, -float(eig[i])),
                                          min_value=float(eig[i]), witness=(x[i], t[i], xi[i]))}

    if model.superlinearity is not None:
        part = np.asarray(model.superlinear_part(x, t, xi), dtype=float)
        speed = np.linalg.norm(xi, axis=-1)
        for a in a_values:
            b_a, _ = model.b(a)
            conds[f"superlinearity[a={a:g}]"] = _slack_result(part - a * speed - b_a, (x, t, xi))

    if w is not None:
        wx = np.array([float(w.value(p)) for p in x])
        slack = wx + w.alpha * np.linalg.norm(x, axis=-1) - w.beta
        res = _slack_result(slack, (x,))
        conds["terminal_growth"] = res
    return ConditionReport(conditions=conds, n_samples=int(n_samples),
                           superlinearity_kind=model.superlinearity_kind)


def estimate_superlinearity(model, box=(-5.0, 5.0), n_samples=1000, seed=0):
    """Return a copy of ``model`` whose ``b_a`` is the sampled ``min(L - a|xi|)``.

    The estimate is only valid on the sampled box and is flagged ``"estimated"``.
    """
    rng = np.random.default_rng(seed)
    x, t, xi = sample_box(box, model.dim, n_samples, rng)
    val = np.asarray(model.value(x, t, xi), dtype=float)
    speed = np.linalg.norm(xi, axis=-1)

    def superlinearity(a):
        return float(np.min(val - a * speed))

    return LagrangianModel(dim=model.dim, func=model.func, second=model.second,
                           superlinearity=superlinearity, superlinearity_kind="estimated",
                           hessian_floor=model.hessian_floor,
                           time_independent=model.time_independent,
                           name=model.name, params=dict(model.params))


def check_derivatives(model, box=(-5.0, 5.0), n_samples=100, rel_tol=1e-6, step=1e-6, seed=0):
    """Compare the model's derivatives with central finite differences.

    Returns the worst scaled discrepancy ``|analytic - fd| / max(1, |analytic|)``
    over ``L_x``, ``L_xi``, ``L_xixi``, ``L_xx`` and ``L_xxi``, and whether it is
    within ``rel_tol``.
    """
    rng = np.random.default_rng(seed)
    x, t, xi = sample_box(box, model.dim, n_samples, rng)
    d = model.dim
    _, lx, lxi, lxixi = model(x, t, xi)
    lxx, lxxi = model.mixed(x, t, xi)
    worst = 0.0
    eye = np.eye(d)

    def scaled(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))

    for j in range(d):
        e = step * eye[j]
        fx = model(x + e, t, xi)
        bx = model(x - e, t, xi)
        fv = model(x, t, xi + e)
        bv = model(x, t, xi - e)
        worst = max(worst, scaled(lx[:, j], (fx[0] - bx[0]) / (2 * step)))
        worst = max(worst, scaled(lxi[:, j], (fv[0] - bv[0]) / (2 * step)))
        worst = max(worst, scaled(lxixi[:, :, j], (fv[2] - bv[2]) / (2 * step)))
        worst = max(worst, scaled(lxx[:, :, j], (fx[1] - bx[1]) / (2 * step)))
        worst = max(worst, scaled(lxxi[:, :, j], (fv[1] - bv[1]) / (2 * step)))
    return worst, worst <= rel_tol
