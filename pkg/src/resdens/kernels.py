"""Compactly supported smoothing kernels and their numerical functionals.

Only the two kernels of the simulation design are available: the
Epanechnikov kernel ``3/4 (1 - u^2)`` and the biweight kernel
``15/16 (1 - u^2)^2``, both supported on ``[-1, 1]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch


class KernelKind(enum.IntEnum):
    # The integer values are the kernel ids understood by the compiled core.
    EPANECHNIKOV = 0
    BIWEIGHT = 1


@dataclass(frozen=True)
class Kernel:
    kind: KernelKind
    support_halfwidth: float = 1.0

    @property
    def name(self) -> str:
        return self.kind.name.lower()

    @property
    def kid(self) -> int:
        return int(self.kind)

    def __call__(self, u):
        """Vectorised evaluation; returns an array shaped like ``u``."""
        u = np.abs(np.asarray(u, dtype=float))
        t = 1.0 - u * u
        if self.kind is KernelKind.EPANECHNIKOV:
            val = 0.75 * t
        else:
            val = 0.9375 * t * t
        return np.where(u > 1.0, 0.0, val)

    def __repr__(self) -> str:
        return f"Kernel({self.name})"


EPANECHNIKOV = Kernel(KernelKind.EPANECHNIKOV)
BIWEIGHT = Kernel(KernelKind.BIWEIGHT)

_BY_NAME = {k.name: k for k in (EPANECHNIKOV, BIWEIGHT)}


def get_kernel(name: str | Kernel) -> Kernel:
    if isinstance(name, Kernel):
        return name
    try:
        return _BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; expected one of {sorted(_BY_NAME)}"
        ) from None


def evaluate(kernel: Kernel, u: float) -> float:
    """Exact kernel value at scalar ``u``; zero outside ``[-1, 1]``."""
    u = abs(float(u))
    if u > kernel.support_halfwidth:
        return 0.0
    t = 1.0 - u * u
    if kernel.kind is KernelKind.EPANECHNIKOV:
        return 0.75 * t
    return 0.9375 * t * t


@dataclass(frozen=True)
class ProductKernel:
    """``d``-variate kernel built as a product of one base kernel per axis."""

    base: Kernel
    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")

    def __call__(self, u):
        """Evaluate on an array whose last axis has length ``dim``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"expected last axis of length {self.dim}, got {u.shape[-1]}"
            )
        return np.prod(self.base(u), axis=-1)


def evaluate_product(pk: ProductKernel, u) -> float:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1 or u.shape[0] != pk.dim:
        raise DimensionMismatch(f"expected a {pk.dim}-vector, got shape {u.shape}")
    if pk.dim == 1:
        return evaluate(pk.base, u[0])
    out = 1.0
    for ui in u:
        v = evaluate(pk.base, ui)
        if v == 0.0:
            return 0.0
        out *= v
    return out


_FUNCTIONAL_POWERS = {
    # which -> (power of u, power of K)
    "mass": (0, 1),
    "second_moment": (2, 1),
    "l2_norm": (0, 2),
}

SIMPSON_PANELS = 100_000


@lru_cache(maxsize=None)
def kernel_functional(kernel: Kernel, which: str) -> float:
    """Composite Simpson quadrature of ``int K``, ``int u^2 K`` or ``int K^2``.

    Integrates over the exact support with ``SIMPSON_PANELS`` panels; the
    result is cached per (kernel, which).
    """
    try:
        pu, pk = _FUNCTIONAL_POWERS[which]
    except KeyError:
        raise ValueError(
            f"which must be one of {sorted(_FUNCTIONAL_POWERS)}, got {which!r}"
        ) from None
    a = kernel.support_halfwidth
    u = np.linspace(-a, a, SIMPSON_PANELS + 1)
    f = u**pu * kernel(u) ** pk
    h = 2 * a / SIMPSON_PANELS
    return float(h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum()))
