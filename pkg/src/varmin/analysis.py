"""Continuous-side tools: Euler-Cauchy polygons, refinement studies and oracles.

The reference Hamiltonian flow (classical RK4) and the quadrature routines
are oracles for checking discrete solutions; the minimiser never calls them.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .discrete import discrete_hamilton_residual
from .errors import CompletenessError, ConditionViolationError, ConjugateSolveError, ContractError
from .legendre import conjugate_velocity
from .solve import SolveOptions, initial_guess, minimize_discrete

EXACT_TOL = 1e-10
FIRST_ORDER_BAND = (0.8, 1.2)
ESCAPE_NORM = 1e100


def worker_count(default=None):
    """Threads allowed for independent work, from ``VARMIN_THREADS`` (0 = auto)."""
    raw = os.environ.get("VARMIN_THREADS", "").strip()
    n = default if default is not None else 0
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


@dataclass(frozen=True)
class SampledCurve:
    """Curve samples at strictly increasing times covering ``[0, t]``.

    ``values`` has shape ``(n, d)``; ``derivs`` (same shape) is optional.
    """

    s: np.ndarray
    values: np.ndarray
    derivs: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if s.ndim != 1 or s.size < 2 or vals.shape[0] != s.size:
            raise ContractError("curve needs >= 2 samples with matching values")
        if not np.all(np.diff(s) > 0):
            raise ContractError("sample times must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "values", vals)
        if self.derivs is not None:
            der = np.asarray(self.derivs, dtype=float)
            if der.ndim == 1:
                der = der[:, None]
            if der.shape != vals.shape:
                raise ContractError("derivative samples must match values")
            object.__setattr__(self, "derivs", der)

    @property
    def t(self):
        return float(self.s[-1])

    @property
    def dim(self):
        return self.values.shape[1]

    def is_uniform(self, rtol=1e-9):
        ds = np.diff(self.s)
        return bool(np.allclose(ds, ds[0], rtol=rtol, atol=0.0))

    def at(self, s):
        """Piecewise-linear interpolation of the values."""
        s = np.asarray(s, dtype=float)
        return np.stack([np.interp(s, self.s, self.values[:, j]) for j in range(self.dim)], axis=-1)


@dataclass(frozen=True)
class PhasePolygon:
    """Piecewise-linear interpolant of the position nodes ``y_0..y_K`` and the
    momentum nodes ``z_0..z_{K-1}`` (``z`` at ``t_K`` repeats ``z_{K-1}``)."""

    tk: np.ndarray
    y: np.ndarray
    z: np.ndarray

    @property
    def t(self):
        return float(self.tk[-1])

    @property
    def K(self):
        return self.tk.size - 1

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ys = np.stack([np.interp(s, self.tk, self.y[:, j]) for j in range(self.y.shape[1])], axis=-1)
        zs = np.stack([np.interp(s, self.tk, self.z[:, j]) for j in range(self.z.shape[1])], axis=-1)
        return ys, zs

    @property
    def lipschitz_constant(self):
        h = np.diff(self.tk)[:, None]
        dy = np.linalg.norm(np.diff(self.y, axis=0) / h, axis=-1)
        dz = np.linalg.norm(np.diff(self.z, axis=0) / h, axis=-1)
        return float(max(dy.max(initial=0.0), dz.max(initial=0.0)))

    def position_curve(self):
        """Nodes ``t_0..t_{K-1}`` with their forward slopes as derivatives.

        ``t_K`` carries no forward slope and is left out rather than padded.
        """
        slopes = np.diff(self.y, axis=0) / np.diff(self.tk)[:, None]
        return SampledCurve(self.tk[:-1], self.y[:-1], slopes)


def polygonal_interpolant(path, momenta):
    """Euler-Cauchy polygon through ``(y_k, z_k)``."""
    K = path.K
    if momenta.z.shape != (K, path.dim):
        raise ContractError(f"expected {K} momentum nodes of dimension {path.dim}, got {momenta.z.shape}")
    z = np.vstack([momenta.z, momenta.z[-1:]])
    return PhasePolygon(path.grid.nodes, np.array(path.nodes), z)


def polygon_distance(a, b, n_probe=1025):
    """Max over probes and both node sets of ``max(|dy|, |dz|)``."""
    if a.t != b.t:
        raise ContractError(f"horizon mismatch: {a.t} vs {b.t}")
    probes = np.unique(np.concatenate([np.linspace(0.0, a.t, max(int(n_probe), 2)), a.tk, b.tk]))
    ya, za = a(probes)
    yb, zb = b(probes)
    dy = np.linalg.norm(ya - yb, axis=-1)
    dz = np.linalg.norm(za - zb, axis=-1)
    return float(max(dy.max(), dz.max()))


# ---------------------------------------------------------------------------
# Reference flow
# ---------------------------------------------------------------------------

def _vector_field(model, s, x, p, guess):
    with np.errstate(over="ignore", invalid="ignore"):
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise CompletenessError(f"flow blew up near s = {float(s):.6g}")
        try:
            conj = conjugate_velocity(model, x, s, p, guess=guess)
        except (ConditionViolationError, ConjugateSolveError):
            # a legitimate failure at moderate states propagates; at huge states
            # it is overflow inside the model and means the flow has escaped
            if max(np.max(np.abs(x)), np.max(np.abs(p))) > ESCAPE_NORM:
                raise CompletenessError(f"flow blew up near s = {float(s):.6g}") from None
            raise
    if not (np.all(np.isfinite(conj.xi)) and np.all(np.isfinite(conj.dH_dx))):
        raise CompletenessError(f"flow blew up near s = {float(s):.6g}")
    return conj.xi, -conj.dH_dx


def reference_flow(model, x0, p0, t0, t1, steps):
    """Integrate ``gamma' = H_p``, ``p' = -H_x`` from ``(x0, p0)`` at ``t0`` to ``t1``.

    Classical fourth-order Runge-Kutta with ``steps`` equal steps; ``t1 < t0``
    integrates backwards. Returns ``(gamma, p)`` as :class:`SampledCurve` in
    increasing time order, with derivatives from the vector field.

    Raises
    ------
    CompletenessError
        If the state becomes non-finite.
    """
    if int(steps) != steps or steps < 1:
        raise ContractError(f"steps must be a positive integer, got {steps}")
    if t1 == t0:
        raise ContractError("t1 must differ from t0")
    steps = int(steps)
    dt = (t1 - t0) / steps
    d = model.dim
    xs = np.empty((steps + 1, d))
    ps = np.empty((steps + 1, d))
    vs = np.empty((steps + 1, d))
    fs = np.empty((steps + 1, d))
    xs[0] = np.asarray(x0, dtype=float)
    ps[0] = np.asarray(p0, dtype=float)
    times = t0 + dt * np.arange(steps + 1)
    times[-1] = t1
    xi = ps[0]
    for n in range(steps):
        s, x, p = times[n], xs[n], ps[n]
        k1x, k1p = _vector_field(model, s, x, p, xi)
        vs[n], fs[n] = k1x, k1p
        k2x, k2p = _vector_field(model, s + dt / 2, x + dt / 2 * k1x, p + dt / 2 * k1p, k1x)
        k3x, k3p = _vector_field(model, s + dt / 2, x + dt / 2 * k2x, p + dt / 2 * k2p, k2x)
        k4x, k4p = _vector_field(model, s + dt, x + dt * k3x, p + dt * k3p, k3x)
        xs[n + 1] = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        ps[n + 1] = p + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        xi = k4x
        if not (np.all(np.isfinite(xs[n + 1])) and np.all(np.isfinite(ps[n + 1]))):
            raise CompletenessError(f"flow blew up near s = {times[n + 1]:.6g}")
    vs[-1], fs[-1] = _vector_field(model, times[-1], xs[-1], ps[-1], xi)
    if dt < 0:
        times, xs, ps, vs, fs = times[::-1], xs[::-1], ps[::-1], vs[::-1], fs[::-1]
    return SampledCurve(times, xs, vs), SampledCurve(times, ps, fs)


def anchored_flow(model, t, anchor_time, x, p, n_intervals):
    """Flow through ``(x, p)`` at ``anchor_time`` sampled on ``n_intervals`` uniform
    intervals of ``[0, t]``; ``anchor_time`` must be (close to) a sample time."""
    s = np.linspace(0.0, t, n_intervals + 1)
    i = int(round(anchor_time / t * n_intervals))
    parts_g, parts_p = [], []
    if i > 0:
        g, q = reference_flow(model, x, p, anchor_time, 0.0, i)
        parts_g.append(g.values[:-1]), parts_p.append(q.values[:-1])
    parts_g.append(np.atleast_2d(np.asarray(x, dtype=float)))
    parts_p.append(np.atleast_2d(np.asarray(p, dtype=float)))
    if i < n_intervals:
        g, q = reference_flow(model, x, p, anchor_time, t, n_intervals - i)
        parts_g.append(g.values[1:]), parts_p.append(q.values[1:])
    return SampledCurve(s, np.vstack(parts_g)), SampledCurve(s, np.vstack(parts_p))


# ---------------------------------------------------------------------------
# Quadrature and residuals
# ---------------------------------------------------------------------------

def simpson(f, dx):
    """Composite Simpson on uniform samples (leading axis).

    Returns ``(value, trapezoid_tail)``; with an odd number of intervals the
    last one falls back to the trapezoid rule and ``trapezoid_tail`` is True.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0] - 1
    if n < 1:
        return 0.0, False
    tail = False
    if n % 2 == 1:
        tail = True
        extra = 0.5 * dx * (f[-2] + f[-1])
        f = f[:-1]
        n -= 1
    else:
        extra = 0.0
    if n == 0:
        return float(extra), tail
    val = dx / 3.0 * (f[0] + f[-1] + 4.0 * np.sum(f[1:-1:2], axis=0) + 2.0 * np.sum(f[2:-1:2], axis=0))
    return float(val + extra), tail


def continuous_action(problem, curve, return_info=False):
    """Simpson quadrature of ``L`` along ``curve`` plus ``w(gamma(0))`` for Bolza.

    With ``return_info=True`` also returns a dict with the half-sampling
    Richardson error estimate and whether a trapezoid tail was used.
    """
    if curve.derivs is None:
        raise ContractError("continuous_action needs derivative samples")
    if not curve.is_uniform():
        raise ContractError("continuous_action needs uniform samples")
    integrand = np.asarray(problem.model.value(curve.values, curve.s, curve.derivs), dtype=float)
    dx = (curve.s[-1] - curve.s[0]) / (curve.s.size - 1)
    val, tail = simpson(integrand, dx)
    n = curve.s.size - 1
    err = float("nan")
    if n % 4 == 0:
        coarse, _ = simpson(integrand[::2], 2 * dx)
        err = abs(val - coarse) / 15.0
    total = val
    if problem.is_bolza:
        total += float(problem.terminal.value(curve.values[0]))
    if return_info:
        return total, {"error_estimate": err, "trapezoid_tail": tail}
    return total


_GAUSS_CACHE = {}


def polyline_action(problem, curve, order=4):
    """Action of the piecewise-linear interpolant of the samples.

    Each segment has constant velocity, so Gauss-Legendre of ``order`` nodes on
    each segment integrates it without kink error. Derivative samples are ignored.
    """
    if order not in _GAUSS_CACHE:
        _GAUSS_CACHE[order] = np.polynomial.legendre.leggauss(order)
    nodes, weights = _GAUSS_CACHE[order]
    s0, s1 = curve.s[:-1], curve.s[1:]
    ds = s1 - s0
    v0, v1 = curve.values[:-1], curve.values[1:]
    vel = (v1 - v0) / ds[:, None]
    total = 0.0
    for u, wgt in zip(nodes, weights):
        lam = 0.5 * (u + 1.0)
        s = s0 + lam * ds
        x = v0 + lam * (v1 - v0)
        total += float(np.sum(0.5 * wgt * ds * np.asarray(problem.model.value(x, s, vel))))
    if problem.is_bolza:
        total += float(problem.terminal.value(curve.values[0]))
    return total


def el_residual(model, curve):
    """Max over interior samples of ``|D_s L_xi - L_x|`` (central differences)."""
    if curve.derivs is None:
        raise ContractError("el_residual needs derivative samples")
    if curve.s.size < 3:
        raise ContractError("el_residual needs at least 3 samples")
    _, lx, lxi, _ = model(curve.values, curve.s, curve.derivs)
    lx = np.asarray(lx, dtype=float)
    lxi = np.asarray(lxi, dtype=float)
    ds = (curve.s[2:] - curve.s[:-2])[:, None]
    res = (lxi[2:] - lxi[:-2]) / ds - lx[1:-1]
    return float(np.max(np.linalg.norm(res, axis=-1)))


def du_bois_reymond_spread(model, curve):
    """Oscillation of ``L_xi - int_0^s L_x`` along the curve (zero on extremals)."""
    if curve.derivs is None:
        raise ContractError("needs derivative samples")
    _, lx, lxi, _ = model(curve.values, curve.s, curve.derivs)
    lx = np.asarray(lx, dtype=float)
    ds = np.diff(curve.s)[:, None]
    integral = np.vstack([np.zeros((1, lx.shape[1])), np.cumsum(0.5 * ds * (lx[1:] + lx[:-1]), axis=0)])
    q = np.asarray(lxi, dtype=float) - integral
    return float(np.max(np.linalg.norm(q - q.mean(axis=0), axis=-1)))


# ---------------------------------------------------------------------------
# Refinement study
# ---------------------------------------------------------------------------

@dataclass
class LevelRecord:
    K: int
    h: float
    action: float
    grad_norm: float
    iterations: int
    converged: bool
    hamilton_residual: float
    el_residual: float
    polygon_action: float
    distance_to_next: Optional[float] = None
    distance_to_oracle: Optional[float] = None


@dataclass
class ConvergenceReport:
    """Per-level records and observed orders of a refinement study.

    ``orders[j] = log2(d_j / d_{j+1})`` for successive polygon distances
    ``d_j = dist(P_j, P_{j+1})``; ``oracle_orders`` and ``el_orders`` are
    the same for distances to the reference flow and EL residuals.
    """

    levels: list
    orders: list
    oracle_orders: list
    el_orders: list
    verdict: str
    anchor: Optional[dict] = None
    truncated: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"verdict": self.verdict, "truncated": self.truncated,
                "orders": self.orders, "oracle_orders": self.oracle_orders,
                "el_orders": self.el_orders, "anchor": self.anchor,
                "levels": [asdict(r) for r in self.levels], "notes": list(self.notes)}

    def table(self):
        """Plain-text aligned table of the per-level records."""
        head = ["K", "h", "action", "grad_norm", "hamilton_res", "el_res",
                "dist_next", "order", "dist_oracle"]
        rows = []
        for j, r in enumerate(self.levels):
            order = self.orders[j] if j < len(self.orders) else None
            rows.append([str(r.K), f"{r.h:.6e}", f"{r.action:.12f}", f"{r.grad_norm:.3e}",
                         f"{r.hamilton_residual:.3e}", f"{r.el_residual:.3e}",
                         "-" if r.distance_to_next is None else f"{r.distance_to_next:.6e}",
                         "-" if order is None else f"{order:.4f}",
                         "-" if r.distance_to_oracle is None else f"{r.distance_to_oracle:.6e}"])
        widths = [max(len(head[i]), *(len(row[i]) for row in rows)) for i in range(len(head))]
        lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def _log2_ratios(values):
    out = []
    for a, b in zip(values[:-1], values[1:]):
        if a is None or b is None or a <= 0 or b <= 0:
            out.append(None)
        else:
            out.append(math.log2(a / b))
    return out


def _solve_level(problem, K, opts, strategy):
    return minimize_discrete(problem, K, initial_guess(problem, K, strategy), opts)


def refine_study(problem, K0, levels, opts=None, strategy="straight_line", oracle=True,
                 oracle_substeps=16, n_probe=1025, workers=None):
    """Solve at ``K = K0 * 2**j``, ``j < levels``, and measure convergence.

    The oracle is the reference flow launched from the finest level's state
    ``(y_k*, t_k*, z_k*)`` with step ``h_finest / oracle_substeps``.

    Verdict: ``"exact"`` when all successive distances are below 1e-10,
    ``"first_order"`` when the last observed order lies in [0.8, 1.2],
    ``"order_collapse"`` otherwise and ``"inconclusive"`` if a level fails.
    """
    if int(K0) != K0 or K0 < 2:
        raise ContractError(f"K0 must be an integer >= 2, got {K0}")
    if int(levels) != levels or levels < 2:
        raise ContractError(f"levels must be an integer >= 2, got {levels}")
    opts = opts or SolveOptions()
    Ks = [int(K0) * 2 ** j for j in range(int(levels))]
    n_workers = min(worker_count(workers), len(Ks))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda K: _solve_level(problem, K, opts, strategy), Ks))
    else:
        results = [_solve_level(problem, K, opts, strategy) for K in Ks]

    notes = []
    truncated = False
    good = []
    for res in results:
        if not res.converged:
            truncated = True
            notes.append(f"level K={res.path.K} did not converge (|g| = {res.grad_norm:.3e})")
            break
        good.append(res)

    model = problem.model
    polys = [polygonal_interpolant(r.path, r.momenta) for r in good]
    records = []
    for r, poly in zip(good, polys):
        records.append(LevelRecord(
            K=r.path.K, h=r.path.grid.h, action=r.action, grad_norm=r.grad_norm,
            iterations=r.iterations, converged=r.converged,
            hamilton_residual=discrete_hamilton_residual(model, r.path, r.momenta),
            el_residual=el_residual(model, poly.position_curve()),
            polygon_action=polyline_action(problem, SampledCurve(poly.tk, poly.y))))
    for j in range(len(polys) - 1):
        records[j].distance_to_next = polygon_distance(polys[j], polys[j + 1], n_probe)

    anchor = None
    if oracle and good:
        fin = good[-1]
        k = int(np.argmin(np.linalg.norm(fin.path.slopes, axis=-1)))
        tk = fin.path.grid.nodes[k]
        anchor = {"k_star": k, "t": float(tk), "x": fin.path.nodes[k].tolist(),
                  "p": fin.momenta.z[k].tolist()}
        n_int = fin.path.K * oracle_substeps
        gam, mom = anchored_flow(model, problem.t, tk, fin.path.nodes[k], fin.momenta.z[k], n_int)
        for rec, poly in zip(records, polys):
            dy = np.linalg.norm(poly.y - gam.at(poly.tk), axis=-1)
            dz = np.linalg.norm(poly.z - mom.at(poly.tk), axis=-1)
            rec.distance_to_oracle = float(max(dy.max(), dz.max()))

    dists = [r.distance_to_next for r in records[:-1]]
    orders = _log2_ratios(dists)
    oracle_orders = _log2_ratios([r.distance_to_oracle for r in records]) if oracle else []
    el_orders = _log2_ratios([r.el_residual for r in records])

    if truncated or len(records) < 2:
        verdict = "inconclusive"
    elif all(d <= EXACT_TOL for d in dists):
        verdict = "exact"
    elif orders and orders[-1] is not None and FIRST_ORDER_BAND[0] <= orders[-1] <= FIRST_ORDER_BAND[1]:
        verdict = "first_order"
    elif not orders:
        verdict = "inconclusive"
    else:
        verdict = "order_collapse"
    return ConvergenceReport(levels=records, orders=orders, oracle_orders=oracle_orders,
                             el_orders=el_orders, verdict=verdict, anchor=anchor,
                             truncated=truncated, notes=notes)
