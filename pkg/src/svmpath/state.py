from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PathState:
    """Solution at one point of the path.

    ``yf`` caches the margins ``y_i f_i = (Q alpha)_i + y_i alpha0`` and is
    advanced incrementally; ``c`` caches ``c0 + theta d``.
    """

    theta: float
    alpha0: float
    alpha: np.ndarray
    c: np.ndarray
    yf: np.ndarray

    def copy(self) -> PathState:
        return PathState(self.theta, self.alpha0, self.alpha.copy(), self.c.copy(), self.yf.copy())

    def recompute_yf(self, q: np.ndarray, y: np.ndarray) -> np.ndarray:
        return q @ self.alpha + y * self.alpha0

    @classmethod
    def from_alpha(cls, theta: float, alpha0: float, alpha: np.ndarray, c: np.ndarray, q: np.ndarray,
                   y: np.ndarray) -> PathState:
        alpha = np.asarray(alpha, dtype=float).copy()
        return cls(theta, float(alpha0), alpha, np.asarray(c, dtype=float).copy(), q @ alpha + y * alpha0)
