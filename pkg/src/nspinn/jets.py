"""Output jets: (u, v, p) bundled with their input derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# channel layout of a jet stack, shape (C, N, width)
VAL, DX, DY, DT, DXX, DYY = range(6)
CHANNELS_FOR_ORDER = {0: 1, 1: 4, 2: 6}
U, V, P = range(3)


@dataclass(frozen=True, eq=False)
class OutputJet:
    """Values and derivatives of (u, v, p) at N points.

    ``stack`` has shape ``(C, N, 3)`` with channels value, d/dx, d/dy, d/dt,
    d2/dx2, d2/dy2 (C = 1, 4 or 6 depending on the derivative order kept).
    """

    stack: np.ndarray

    @classmethod
    def from_fields(cls, u, v, p, du=None, dv=None, dp=None, d2u=None, d2v=None):
        """Build a jet from per-field arrays; missing derivatives are zero.

        ``du`` etc. have shape (N, 3) ordered (x, y, t); ``d2u``/``d2v`` have
        shape (N, 2) ordered (xx, yy).
        """
        u, v, p = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (u, v, p))
        n = np.broadcast_shapes(u.shape, v.shape, p.shape)[0]
        stack = np.zeros((6, n, 3))
        for comp, val in ((U, u), (V, v), (P, p)):
            stack[VAL, :, comp] = val
        for comp, grad in ((U, du), (V, dv), (P, dp)):
            if grad is not None:
                stack[DX:DT + 1, :, comp] = np.atleast_2d(np.asarray(grad, dtype=float)).T
        for comp, hess in ((U, d2u), (V, d2v)):
            if hess is not None:
                stack[DXX:DYY + 1, :, comp] = np.atleast_2d(np.asarray(hess, dtype=float)).T
        return cls(stack)

    @property
    def order(self) -> int:
        return {1: 0, 4: 1, 6: 2}[self.stack.shape[0]]

    def __len__(self):
        return self.stack.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.stack[VAL]

    u = property(lambda self: self.stack[VAL, :, U])
    v = property(lambda self: self.stack[VAL, :, V])
    p = property(lambda self: self.stack[VAL, :, P])
    du = property(lambda self: self.stack[DX:DT + 1, :, U].T)
    dv = property(lambda self: self.stack[DX:DT + 1, :, V].T)
    dp = property(lambda self: self.stack[DX:DT + 1, :, P].T)
    d2u = property(lambda self: self.stack[DXX:DYY + 1, :, U].T)
    d2v = property(lambda self: self.stack[DXX:DYY + 1, :, V].T)

    def take(self, index) -> "OutputJet":
        return OutputJet(self.stack[:, index])

    def velocity_gradient(self) -> np.ndarray:
        """(N, 2, 2) tensor with ``[i, j] = d u_i / d x_j``."""
        g = np.empty((len(self), 2, 2), dtype=self.stack.dtype)
        g[:, 0, 0] = self.stack[DX, :, U]
        g[:, 0, 1] = self.stack[DY, :, U]
        g[:, 1, 0] = self.stack[DX, :, V]
        g[:, 1, 1] = self.stack[DY, :, V]
        return g
