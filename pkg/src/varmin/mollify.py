"""Mollification of Lipschitz curves with end-point correction.

The curve is extended past ``[0, t]``, convolved with the standard bump
``exp(-1/(1 - (s/eps)^2))`` on its own sample grid, and corrected by the
affine term

    g_eps(s) = g~(s) + (x - g~(t)) s/t + (left - g~(0)) (t - s)/t

so that both end values are restored exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (
    SampledCurve,
    continuous_action,
    du_bois_reymond_spread,
    polyline_action,
)
from .errors import ContractError

EXTENSIONS = ("linear", "constant")
MIN_KERNEL_SAMPLES = 2


def bump_weights(eps, ds):
    """Normalised samples of the standard bump of radius ``eps`` at spacing ``ds``."""
    n = int(np.floor(eps / ds))
    if n < MIN_KERNEL_SAMPLES:
        raise ContractError(f"eps = {eps:g} resolves fewer than {MIN_KERNEL_SAMPLES} samples at spacing {ds:g}")
    u = np.arange(-n, n + 1) * ds / eps
    w = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return w / w.sum()


def mollify_curve(curve, eps, left=None, right=None, extension="linear"):
    """Smooth ``curve`` at scale ``eps`` keeping its end values.

    Parameters
    ----------
    curve : SampledCurve
        Uniform samples on ``[0, t]``.
    eps : float
        Mollifier radius, ``0 < eps < t/4``.
    left : array_like, optional
        Prescribed value at ``s = 0`` (two-point problems); ``curve(0)`` if omitted.
    right : array_like, optional
        Prescribed value at ``s = t``; ``curve(t)`` if omitted.
    extension : {"linear", "constant"}
        How the curve continues outside ``[0, t]`` before convolution. ``"constant"``
        holds the end values; ``"linear"`` continues the first and last sample
        segments, which keeps affine curves fixed. Both keep the Lipschitz constant.

    Returns
    -------
    SampledCurve
        Same sample times, with derivatives from second-order differences.
    """
    if extension not in EXTENSIONS:
        raise ContractError(f"extension must be one of {EXTENSIONS}")
    if not curve.is_uniform():
        raise ContractError("mollify_curve needs uniform samples")
    s = curve.s
    t = s[-1] - s[0]
    if not (eps > 0 and eps < t / 4):
        raise ContractError(f"eps must lie in (0, t/4) = (0, {t / 4:g}), got {eps}")
    ds = t / (s.size - 1)
    w = bump_weights(eps, ds)
    n = (w.size - 1) // 2

    y = curve.values
    left_val = y[0] if left is None else np.broadcast_to(np.asarray(left, dtype=float), y[0].shape)
    right_val = y[-1] if right is None else np.broadcast_to(np.asarray(right, dtype=float), y[0].shape)
    steps = np.arange(1, n + 1)[:, None]
    if extension == "constant":
        head = np.repeat(left_val[None, :], n, axis=0)
        tail = np.repeat(right_val[None, :], n, axis=0)
    else:
        head = (y[0] - steps[::-1] * (y[1] - y[0]))
        tail = (y[-1] + steps * (y[-1] - y[-2]))
    padded = np.vstack([head, y, tail])
    smooth = np.stack([np.convolve(padded[:, j], w, mode="valid") for j in range(y.shape[1])], axis=-1)

    frac = ((s - s[0]) / t)[:, None]
    out = smooth + (right_val - smooth[-1]) * frac + (left_val - smooth[0]) * (1.0 - frac)
    out[0] = smooth[0] + (left_val - smooth[0])
    out[-1] = smooth[-1] + (right_val - smooth[-1])
    derivs = np.gradient(out, ds, axis=0, edge_order=2)
    return SampledCurve(s, out, derivs)


@dataclass
class MollificationTable:
    """Rows ``{eps, action, difference, dominated, ...}`` of :func:`mollification_study`."""

    rows: list
    raw_action: float
    minimizer_action: float

    @property
    def all_dominated(self):
        return all(r["dominated"] for r in self.rows)

    def differences_decreasing(self, slack=1e-10):
        d = [abs(r["difference"]) for r in self.rows]
        return all(b <= a + slack for a, b in zip(d[:-1], d[1:]))

    def to_dict(self):
        return {"raw_action": self.raw_action, "minimizer_action": self.minimizer_action,
                "all_dominated": self.all_dominated,
                "differences_decreasing": self.differences_decreasing(), "rows": self.rows}

    def table(self):
        head = ["eps", "action", "difference", "dominated", "endpoint_err", "dbr_spread"]
        rows = [[f"{r['eps']:.6e}", f"{r['action']:.12f}", f"{r['difference']:.6e}",
                 str(r["dominated"]), f"{r['endpoint_error']:.2e}", f"{r['dbr_spread']:.3e}"]
                for r in self.rows]
        widths = [max(len(head[i]), *(len(row[i]) for row in rows)) for i in range(len(head))]
        lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows]
        lines.append(f"raw action: {self.raw_action:.12f}  minimizer action: {self.minimizer_action:.12f}")
        return "\n".join(lines)


def mollification_study(problem, lipschitz_curve, eps_list, minimizer_action, extension="linear",
                        slack=1e-12):
    """Act on mollified copies of a Lipschitz curve for decreasing ``eps``.

    The raw curve's action is that of its piecewise-linear interpolant
    (:func:`polyline_action`); mollified actions use Simpson quadrature. A row
    is ``dominated`` when ``minimizer_action <= action + slack``. ``dbr_spread``
    measures how far ``L_xi - int L_x`` is from constant along the smoothed
    curve (zero exactly on extremals).
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list[:-1], eps_list[1:])):
        raise ContractError("eps_list must be strictly decreasing")
    left = None if problem.is_bolza else problem.x_tilde
    right = problem.x
    raw = polyline_action(problem, lipschitz_curve)
    rows = []
    for eps in eps_list:
        sm = mollify_curve(lipschitz_curve, eps, left=left, right=right, extension=extension)
        act = continuous_action(problem, sm)
        end_err = float(np.max(np.abs(sm.values[-1] - right)))
        if left is not None:
            end_err = max(end_err, float(np.max(np.abs(sm.values[0] - left))))
        else:
            end_err = max(end_err, float(np.max(np.abs(sm.values[0] - lipschitz_curve.values[0]))))
        rows.append({"eps": eps, "action": act, "difference": act - raw,
                     "dominated": bool(minimizer_action <= act + slack),
                     "endpoint_error": end_err,
                     "dbr_spread": du_bois_reymond_spread(problem.model, sm)})
    return MollificationTable(rows=rows, raw_action=raw, minimizer_action=float(minimizer_action))
