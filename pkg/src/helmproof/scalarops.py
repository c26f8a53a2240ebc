"""Scalar arithmetic helpers with the package's fixed edge-case rules.

Both the tree-walking evaluator and the generated fast paths call these,
so a value computed either way is bit-identical. The rules that are not
plain IEEE arithmetic:

* ``sgn(0) == 0``.
* ``wrap_angle`` maps into the half-open interval (-pi, pi].
* ``acos_checked`` tolerates tiny floating-point overshoot beyond [-1, 1]
  (up to 1e-9, clamped) and snaps inputs within 1e-13 of an endpoint to
  the exact endpoint value. Without the snap, rounding noise in a dot
  product near +/-1 is amplified to ~1e-8 by the infinite slope of acos,
  which swamps fourth-order integrator error in near-collinear states.
* ``ang`` takes the vector components x-first: ang([0, 1]) == 0, so a
  zero heading points along +y and headings grow clockwise.
"""

import math

ACOS_CLAMP = 1e-9
ACOS_SNAP = 1e-13
TAU = 2.0 * math.pi

from .errors import DivByZeroError, DomainError


def sgn(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def wrap_angle(x):
    r = math.remainder(x, TAU)
    if r <= -math.pi:
        r += TAU
    return r


def acos_checked(x):
    if x > 1.0:
        if x > 1.0 + ACOS_CLAMP:
            raise DomainError(f"acos of {x!r}")
        x = 1.0
    elif x < -1.0:
        if x < -1.0 - ACOS_CLAMP:
            raise DomainError(f"acos of {x!r}")
        x = -1.0
    if x >= 1.0 - ACOS_SNAP:
        return 0.0
    if x <= -1.0 + ACOS_SNAP:
        return math.pi
    return math.acos(x)


def sqrt_checked(x):
    if x < 0.0:
        raise DomainError(f"sqrt of {x!r}")
    return math.sqrt(x)


def log_checked(x):
    if x <= 0.0:
        raise DomainError(f"log of {x!r}")
    return math.log(x)


def div_checked(n, d):
    if d == 0.0:
        raise DivByZeroError("division by zero")
    return n / d


def ang(x, y):
    return math.atan2(x, y)
