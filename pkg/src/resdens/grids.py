"""Uniform parameter grids and Riemann-sum integration grids."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Arithmetic grid ``start + step * j`` for ``0 <= j < count``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not (self.step > 0 and np.isfinite(self.step)):
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"grid count must be a positive integer, got {self.count}")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "step", float(self.step))

    def value(self, j: int) -> float:
        return self.start + self.step * j

    def values(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    def __len__(self) -> int:
        return self.count

    def index_of(self, v: float, tol: float = 1e-9) -> int | None:
        j = int(round((v - self.start) / self.step))
        if 0 <= j < self.count and abs(self.value(j) - v) <= tol * max(1.0, abs(v)):
            return j
        return None

    @classmethod
    def symmetric(cls, half_width: float, step: float) -> "GridSpec":
        """Grid over ``[-A, A]`` with the given step (``A/step`` must be integral)."""
        count = int(round(2 * half_width / step)) + 1
        if abs((count - 1) * step - 2 * half_width) > 1e-9 * max(1.0, half_width):
            raise ValueError(f"step {step} does not divide [-{half_width}, {half_width}]")
        return cls(-half_width, step, count)

    @classmethod
    def over(cls, lo: float, hi: float, step: float) -> "GridSpec":
        count = int(round((hi - lo) / step)) + 1
        return cls(lo, step, count)

    def to_dict(self) -> dict:
        return {"start": self.start, "step": self.step, "count": self.count}


@dataclass(frozen=True, eq=False)
class IntegrationGrid:
    """Tensor-product rectangle rule on per-axis breakpoints ``x_0 < ... < x_p``.

    Each axis contributes the nodes ``x_1..x_p`` with widths ``x_j - x_{j-1}``,
    i.e. the rule ``sum_j phi(x_j) (x_j - x_{j-1})``.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.axes)
        if not axes:
            raise ValueError("an integration grid needs at least one axis")
        for a in axes:
            if a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("each axis needs at least two strictly increasing breakpoints")
        object.__setattr__(self, "axes", axes)

    @property
    def d(self) -> int:
        return len(self.axes)

    @classmethod
    def uniform(cls, lower=-1.0, upper=1.0, p: int = 100, d: int = 1) -> "IntegrationGrid":
        j = np.arange(p + 1)
        axis = lower + (upper - lower) * j / p
        return cls(tuple(axis for _ in range(d)))

    @cached_property
    def nodes(self) -> np.ndarray:
        """``(J, d)`` array of evaluation nodes."""
        per_axis = [a[1:] for a in self.axes]
        if self.d == 1:
            return per_axis[0][:, None]
        return np.array(list(product(*per_axis)), dtype=float)

    @cached_property
    def weights(self) -> np.ndarray:
        per_axis = [np.diff(a) for a in self.axes]
        if self.d == 1:
            return per_axis[0]
        return np.array([np.prod(w) for w in product(*per_axis)], dtype=float)


def as_integration_grid(grid, d: int = 1) -> IntegrationGrid:
    if isinstance(grid, IntegrationGrid):
        return grid
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 2 and pts.shape[1] == 1:
        pts = pts[:, 0]
    if pts.ndim != 1 or d != 1:
        raise ValueError("plain point lists are accepted only for d = 1; use IntegrationGrid")
    return IntegrationGrid((pts,))
