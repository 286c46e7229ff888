"""Robust loss kernels applied to inter-node residuals.

Every kernel is concave on ``s >= 0`` with ``rho(0) = 0`` and a slope in
``[0, 1]`` that equals 1 at the origin, which is what the majorization in
:mod:`mmpgo.surrogate` relies on.
"""

from dataclasses import dataclass

import numpy as np


class KernelDomainError(ValueError):
    pass


def _check_domain(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise KernelDomainError("loss kernels are defined for s >= 0 only")
    return s


class LossKernel:
    """Base class. Subclasses implement ``_value`` and ``_slope``."""

    name = "base"

    def value(self, s):
        s = _check_domain(s)
        out = self._value(s)
        return float(out) if out.ndim == 0 else out

    def slope(self, s):
        s = _check_domain(s)
        out = self._slope(s)
        return float(out) if out.ndim == 0 else out

    def spec(self):
        """Round-trippable token, e.g. ``"welsch:1"``."""
        raise NotImplementedError

    @property
    def is_trivial(self):
        return False


@dataclass(frozen=True)
class Trivial(LossKernel):
    name = "trivial"

    def _value(self, s):
        return s.copy()

    def _slope(self, s):
        return np.ones_like(s)

    def spec(self):
        return "trivial"

    @property
    def is_trivial(self):
        return True


@dataclass(frozen=True)
class Huber(LossKernel):
    a: float = 1.0
    name = "huber"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"Huber parameter must be positive, got {self.a}")

    def _value(self, s):
        a = self.a
        return np.where(s <= a, s, 2.0 * np.sqrt(a * s) - a)

    def _slope(self, s):
        # breakpoint s == a takes the left branch; both branches give 1 there
        a = self.a
        return np.where(s <= a, 1.0, np.sqrt(a / np.maximum(s, a)))

    def spec(self):
        return f"huber:{self.a:g}"


@dataclass(frozen=True)
class Welsch(LossKernel):
    a: float = 1.0
    name = "welsch"

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"Welsch parameter must be positive, got {self.a}")

    def _value(self, s):
        return self.a - self.a * np.exp(-s / self.a)

    def _slope(self, s):
        return np.exp(-s / self.a)

    def spec(self):
        return f"welsch:{self.a:g}"


def parse_kernel(token):
    """Parse ``trivial``, ``huber:<a>`` or ``welsch:<a>``.

    >>> parse_kernel("welsch:2")
    Welsch(a=2.0)
    """
    if isinstance(token, LossKernel):
        return token
    name, _, arg = str(token).strip().lower().partition(":")
    if name == "trivial":
        if arg:
            raise ValueError("the trivial kernel takes no parameter")
        return Trivial()
    if name in ("huber", "welsch"):
        if not arg:
            raise ValueError(f"kernel '{name}' needs a parameter, e.g. {name}:1")
        try:
            a = float(arg)
        except ValueError:
            raise ValueError(f"bad kernel parameter {arg!r}") from None
        return Huber(a) if name == "huber" else Welsch(a)
    raise ValueError(f"unknown kernel {token!r}; expected trivial | huber:<a> | welsch:<a>")


def kernel_value(kernel, s):
    return kernel.value(s)


def kernel_slope(kernel, s):
    return kernel.slope(s)
