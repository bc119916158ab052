"""Problem definitions: two fixed end points, or the Bolza problem with a free left end."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError
from .model import LagrangianModel, TerminalCost

KINDS = ("two_point", "bolza")


@dataclass(frozen=True)
class Problem:
    """Minimise the action over curves on ``[0, t]`` ending at ``x``.

    ``kind == "two_point"`` also fixes ``gamma(0) = x_tilde``; ``kind == "bolza"``
    leaves ``gamma(0)`` free and adds ``w(gamma(0))``.
    """

    model: LagrangianModel
    kind: str
    t: float
    x: np.ndarray
    x_tilde: Optional[np.ndarray] = None
    terminal: Optional[TerminalCost] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"problem kind must be one of {KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.t) and self.t > 0):
            raise ContractError(f"horizon must be positive, got {self.t}")
        d = self.model.dim
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", _point(self.x, d, "x"))
        if self.kind == "two_point":
            if self.x_tilde is None:
                raise ContractError("two-point problem needs x_tilde")
            if self.terminal is not None:
                raise ContractError("two-point problem takes no terminal cost")
            object.__setattr__(self, "x_tilde", _point(self.x_tilde, d, "x_tilde"))
        else:
            if self.terminal is None:
                raise ContractError("Bolza problem needs a terminal cost")
            if self.x_tilde is not None:
                raise ContractError("Bolza problem has a free left end point")

    @classmethod
    def two_point(cls, model, x_tilde, x, t):
        return cls(model=model, kind="two_point", t=t, x=x, x_tilde=x_tilde)

    @classmethod
    def bolza(cls, model, x, t, terminal):
        return cls(model=model, kind="bolza", t=t, x=x, terminal=terminal)

    @property
    def dim(self):
        return self.model.dim

    @property
    def is_bolza(self):
        return self.kind == "bolza"

    def n_free(self, K):
        """Number of free nodes for ``K`` intervals."""
        return K if self.is_bolza else K - 1


def _point(v, d, name):
    arr = np.atleast_1d(np.array(v, dtype=float))
    if arr.shape != (d,):
        raise ContractError(f"{name} must have dimension {d}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr
