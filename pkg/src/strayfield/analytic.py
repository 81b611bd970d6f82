"""Analytic reference energies: sphere, rectangular prism (ballistic
demagnetizing factors), and the zero-energy azimuthal torus.

The closed-form prism factor follows Aharoni's expressions; because the long
formula is easy to mistranscribe it is cross-checked in the test suite
against an independent quadrature oracle (`demag_factor_quadrature`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

__all__ = [
    "ReferenceResult",
    "sphere_reference",
    "aharoni_demag_factor",
    "demag_factor_quadrature",
    "prism_reference",
    "torus_reference",
]


@dataclass(frozen=True)
class ReferenceResult:
    geometry: str
    magnetization: str
    e_d_over_kd: float
    demag_factor: float | None = None


def sphere_reference() -> ReferenceResult:
    """Uniformly magnetized sphere: N = 1/3, e_d/K_d = 1/3."""
    return ReferenceResult("sphere", "uniform", 1.0 / 3.0, 1.0 / 3.0)


def torus_reference() -> ReferenceResult:
    """Azimuthally magnetized torus: no volume or surface charges, e_d = 0."""
    return ReferenceResult("torus", "azimuthal", 0.0, None)


def _aharoni_nz(a: float, b: float, c: float) -> float:
    """Ballistic demagnetizing factor of a prism with edge lengths (a, b, c),
    magnetized along the third axis (Aharoni's closed form; scale invariant)."""
    r = math.sqrt(a * a + b * b + c * c)
    r_ab = math.sqrt(a * a + b * b)
    r_ac = math.sqrt(a * a + c * c)
    r_bc = math.sqrt(b * b + c * c)

    def safe_log(num: float, den: float) -> float:
        if num <= 0.0 or den <= 0.0:
            raise ValueError("logarithm argument out of range in demag factor")
        return math.log(num / den)

    t = 0.0
    t += (b * b - c * c) / (2.0 * b * c) * safe_log(r - a, r + a)
    t += (a * a - c * c) / (2.0 * a * c) * safe_log(r - b, r + b)
    t += (b / (2.0 * c)) * safe_log(r_ab + a, r_ab - a)
    t += (a / (2.0 * c)) * safe_log(r_ab + b, r_ab - b)
    t += (c / (2.0 * a)) * safe_log(r_bc - b, r_bc + b)
    t += (c / (2.0 * b)) * safe_log(r_ac - a, r_ac + a)
    t += 2.0 * math.atan2(a * b, c * r)
    t += (a ** 3 + b ** 3 - 2.0 * c ** 3) / (3.0 * a * b * c)
    t += (a * a + b * b - 2.0 * c * c) / (3.0 * a * b * c) * r
    t += (c / (a * b)) * (r_ac + r_bc)
    t -= (r_ab ** 3 + r_bc ** 3 + r_ac ** 3) / (3.0 * a * b * c)
    return t / math.pi


def aharoni_demag_factor(a: float, b: float, c: float) -> float:
    """Ballistic demagnetizing factor of the a x b x c prism along the first
    axis."""
    if min(a, b, c) <= 0.0:
        raise ValueError("prism dimensions must be positive")
    return _aharoni_nz(b, c, a)


def demag_factor_quadrature(a: float, b: float, c: float, epsabs: float = 1e-12) -> float:
    """Independent oracle for the same factor.

    The magnetostatic self/mutual energy of the two uniformly charged end
    faces reduces (after the analytic inner integral) to one-dimensional
    adaptive quadratures; no part of the closed form above is reused.
    """
    if min(a, b, c) <= 0.0:
        raise ValueError("prism dimensions must be positive")
    # magnetized along the first axis: charged faces are b x c rectangles
    # separated by a.
    B, C, gap = b, c, a

    def inner(v: float, z: float) -> float:
        q2 = v * v + z * z
        q = math.sqrt(q2)
        if q == 0.0:
            return float("inf")
        return B * math.asinh(B / q) - (math.sqrt(B * B + q2) - q)

    def j(z: float) -> float:
        val, _ = quad(lambda v: (C - v) * inner(v, z), 0.0, C,
                      epsabs=epsabs, epsrel=1e-12, limit=400)
        return val

    volume = a * b * c
    return 2.0 / (math.pi * volume) * (j(0.0) - j(gap))


def prism_reference(a: float, b: float, c: float, axis: int) -> ReferenceResult:
    """Uniform magnetization along one prism axis: e_d/K_d = N_axis."""
    dims = [a, b, c]
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0, 1 or 2")
    ordered = [dims[axis]] + [dims[(axis + 1) % 3], dims[(axis + 2) % 3]]
    n = aharoni_demag_factor(*ordered)
    return ReferenceResult("prism", f"uniform-{'xyz'[axis]}", n, n)
