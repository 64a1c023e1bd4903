"""Growth-rate functionals over mixing strategies.

The lap-averaged net specific growth rate for a start-of-lap state C(0) is

    mu_bar = (<Gamma, C(0)> + <1, Z>) / (N T),

in 1/s. Since <1, Z> does not depend on the device, ranking devices at
their periodic regimes only needs the inner product

    J(P) = <Gamma, C*(P)>,

with C*(P) the fixed point of the lap recursion. Its first-order
approximation J_approx(P) = <Gamma, P V> drops the lap-to-lap memory and is
what the sorting solver optimizes exactly.

Comparison ratios between strategies:

    r1 = (mu(P_max) - mu(identity)) / mu(identity)
    r2 = (mu(P_max) - mu(P_min)) / mu(P_min)
    r3 = (mu(identity) - mu(P_min)) / mu(identity)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kinetics import LapCoefficients
from .lap_dynamics import LapState, Permutation, fixed_point

# Two objective values within this window are treated as tied; double
# precision noise floor for inner products at N <= 12.
_TIE_REL = 1e-12


def tie_tolerance(a: float, b: float) -> float:
    """Width of the tie window for comparing objective values a and b."""
    return _TIE_REL * max(1.0, abs(a), abs(b))


def is_tie(a: float, b: float) -> bool:
    return abs(a - b) <= tie_tolerance(a, b)


@dataclass(frozen=True)
class ObjectiveValue:
    """A strategy's objective J and the growth rate mu_bar it implies at the
    periodic regime; mu_bar = (J + sum(Z)) / (N T)."""

    J: float
    mu_bar: float


def mu_bar_from_state(C0: LapState, coeffs: LapCoefficients, N: int | None = None,
                      T: float | None = None) -> float:
    """Lap-averaged growth rate (<Gamma, C0> + <1, Z>) / (N T), in 1/s.

    N and T default to the coefficient set's own layer count and lap
    duration; passing different values is rejected rather than silently
    rescaling.
    """
    n = C0.C.size
    if coeffs.D.size != n:
        raise ValueError(f"dimension mismatch: state has {n} layers, "
                         f"coefficients have {coeffs.D.size}")
    if N is not None and N != n:
        raise ValueError(f"N={N!r} does not match the {n}-layer state")
    if T is not None and T != coeffs.T:
        raise ValueError(f"T={T!r} does not match the coefficient lap duration {coeffs.T!r}")
    return (float(coeffs.Gamma @ C0.C) + float(coeffs.Z.sum())) / (n * coeffs.T)


def J(P: Permutation, coeffs: LapCoefficients) -> float:
    """Objective <Gamma, C*(P)> at the periodic regime, via the O(N) cycle
    solve. Always <= 0, since Gamma <= 0 and C* >= 0."""
    return float(coeffs.Gamma @ fixed_point(P, coeffs).C)


def J_approx(P: Permutation, coeffs: LapCoefficients) -> float:
    """First-order objective <Gamma, P V> = sum_j Gamma_(sigma(j)) V_j."""
    if coeffs.D.size != len(P):
        raise ValueError(f"dimension mismatch: permutation has {len(P)} layers, "
                         f"coefficients have {coeffs.D.size}")
    return float(coeffs.Gamma[P.sigma] @ coeffs.V)


def evaluate_strategy(P: Permutation, coeffs: LapCoefficients) -> ObjectiveValue:
    """J and mu_bar for one device at its periodic regime."""
    j = J(P, coeffs)
    n = coeffs.D.size
    return ObjectiveValue(J=j, mu_bar=(j + float(coeffs.Z.sum())) / (n * coeffs.T))


def ratios(coeffs: LapCoefficients, P_max: Permutation,
           P_min: Permutation) -> tuple[float, float, float]:
    """Comparison ratios (r1, r2, r3) between best, worst, and no mixing.

    Each strategy is evaluated at its own periodic regime. Denominators
    within 1e-15 of zero (relative to the largest growth rate in play) make
    the affected ratio nan, with a warning; negative denominators flip the
    sign convention and are reported raw, also with a warning.
    """
    mu_max = evaluate_strategy(P_max, coeffs).mu_bar
    mu_min = evaluate_strategy(P_min, coeffs).mu_bar
    mu_id = evaluate_strategy(Permutation.identity(coeffs.D.size), coeffs).mu_bar
    scale = max(abs(mu_max), abs(mu_min), abs(mu_id))
    if scale == 0.0:
        return (0.0, 0.0, 0.0)

    def _ratio(num: float, den: float, label: str) -> float:
        if abs(den) < 1e-15 * scale:
            warnings.warn(f"ratio {label} undefined: denominator {den:.3e} is "
                          f"within 1e-15 of zero", stacklevel=3)
            return float("nan")
        if den < 0.0:
            warnings.warn(f"ratio {label} has a negative denominator "
                          f"({den:.3e}); sign convention inverts, raw value "
                          f"reported", stacklevel=3)
        return num / den + 0.0  # normalize -0.0

    r1 = _ratio(mu_max - mu_id, mu_id, "r1")
    r2 = _ratio(mu_max - mu_min, mu_min, "r2")
    r3 = _ratio(mu_id - mu_min, mu_id, "r3")
    return (r1, r2, r3)
