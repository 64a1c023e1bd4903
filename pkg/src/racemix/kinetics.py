"""Han photosystem kinetics, light attenuation, and per-lap closed forms.

A photosystem is open (A), closed (B), or inhibited (C), with A + B + C = 1.
Under constant light I the slow inhibited fraction obeys a single linear ODE

    dC/dt = -alpha(I) C + beta(I),

and the net specific growth rate is mu(C, I) = -gamma(I) C + zeta(I), in 1/s.
The pond is cut into N horizontal layers of equal thickness; layer n sits at
depth z_n = -(n - 1/2) h / N and sees the Beer-Lambert intensity
I_n = I_s exp(epsilon z_n), where epsilon is fixed by the fraction q of
surface light that reaches the bottom.

Over one lap of duration T the layer-n solution is affine,
C_n(T) = D_n C_n(0) + V_n, and the time integral of mu over the lap is
Gamma_n C_n(0) + Z_n. This module computes those four coefficient vectors
and provides a full three-state integrator used as a reference oracle.

Layers are numbered 1..N from the surface down in documentation and in all
serialized output; arrays in code are 0-based, so index n-1 holds layer n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# Largest magnitude passed to exp(); exp(-745) already underflows to 0.0,
# so clamping changes nothing except avoiding overflow in intermediates
# when alpha*T is astronomically large.
_EXP_ARG_MAX = 745.0


class InvariantViolation(ArithmeticError):
    """A numerical invariant that should hold by construction was violated."""


@dataclass(frozen=True)
class HanParams:
    """Constants of the Han photosystem model plus respiration.

    k_r:   repair rate of inhibited photosystems (1/s)
    k_d:   damage probability per closed-state excitation (dimensionless)
    tau:   turnover time of the electron chain (s)
    sigma: specific photon absorption cross-section (m^2/umol)
    k:     photosynthetic activity to growth conversion (dimensionless)
    R:     respiration rate (1/s)
    """

    k_r: float
    k_d: float
    tau: float
    sigma: float
    k: float
    R: float

    def __post_init__(self) -> None:
        for name in ("k_r", "k_d", "tau", "sigma", "k", "R"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise ValueError(f"HanParams.{name} must be finite and > 0, got {value!r}")


# Common laboratory calibration; used as the CLI default parameter set.
DEFAULT_PARAMS = HanParams(
    k_r=6.8e-3,
    k_d=2.99e-4,
    tau=0.25,
    sigma=0.047,
    k=8.7e-6,
    R=1.389e-7,
)


@dataclass(frozen=True, eq=False)
class LightField:
    """Discretized light environment of the pond.

    Built by :func:`build_light_field`; do not construct directly. `epsilon`
    is the extinction coefficient (1/m) and `I` the per-layer intensities in
    umol/(m^2 s), surface layer first.
    """

    I_s: float
    q: float
    h: float
    N: int
    epsilon: float
    I: np.ndarray


@dataclass(frozen=True, eq=False)
class LapCoefficients:
    """Per-lap affine and growth coefficients for every layer.

    For lap duration T and layer intensity I_n:

      D_n     = exp(-alpha_n T)                      decay factor, in (0, 1)
      V_n     = (beta_n/alpha_n) (1 - exp(-alpha_n T))   forced response
      Gamma_n = (gamma_n/alpha_n) (exp(-alpha_n T) - 1)  growth weight, <= 0
      Z_n     = (gamma_n beta_n/alpha_n^2) (1 - exp(-alpha_n T))
                - (gamma_n beta_n/alpha_n) T + zeta_n T  growth offset

    `alpha_T` stores alpha_n * T; multi-lap solvers need sums of these in the
    log domain to evaluate 1 - prod(D) without cancellation.
    """

    T: float
    D: np.ndarray
    V: np.ndarray
    Gamma: np.ndarray
    Z: np.ndarray
    alpha_T: np.ndarray


def _check_intensity(I):
    arr = np.asarray(I, dtype=np.float64)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"light intensity must be finite and >= 0, got {I!r}")
    # hand scalars back as floats so the rate functions stay scalar-in scalar-out
    return float(arr) if arr.ndim == 0 else arr


def rate_beta(I, p: HanParams):
    """Forcing rate beta(I) = k_d tau (sigma I)^2 / (tau sigma I + 1), in 1/s."""
    arr = _check_intensity(I)
    sI = p.sigma * arr
    out = p.k_d * p.tau * sI * sI / (p.tau * sI + 1.0)
    return out if isinstance(out, np.ndarray) else float(out)


def rate_alpha(I, p: HanParams):
    """Relaxation rate alpha(I) = beta(I) + k_r, in 1/s.

    Computed as beta + k_r so the identity alpha - beta = k_r is exact in
    floating point.
    """
    out = rate_beta(I, p) + p.k_r
    return out if isinstance(out, np.ndarray) else float(out)


def rate_gamma(I, p: HanParams):
    """Growth weight gamma(I) = k sigma I / (tau sigma I + 1), in 1/s."""
    arr = _check_intensity(I)
    sI = p.sigma * arr
    out = p.k * sI / (p.tau * sI + 1.0)
    return out if isinstance(out, np.ndarray) else float(out)


def rate_zeta(I, p: HanParams):
    """Net growth offset zeta(I) = gamma(I) - R, in 1/s. Exact: gamma - R."""
    out = rate_gamma(I, p) - p.R
    return out if isinstance(out, np.ndarray) else float(out)


def build_light_field(I_s: float, q: float, h: float, N: int) -> LightField:
    """Build the Beer-Lambert light field on the N-layer depth grid.

    Args:
        I_s: surface photon flux density, umol/(m^2 s), >= 0.
        q: fraction of I_s transmitted to the pond bottom, in (0, 1].
        h: pond depth in m, > 0.
        N: number of layers, >= 1.

    Returns:
        LightField with epsilon = ln(1/q)/h and I_n = I_s exp(epsilon z_n)
        evaluated at the layer midpoints z_n = -(n - 1/2) h / N.

    Raises:
        ValueError: on any argument outside its domain.
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ValueError(f"N must be an integer >= 1, got {N!r}")
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must be in (0, 1], got {q!r}")
    if not (h > 0.0 and math.isfinite(h)):
        raise ValueError(f"h must be finite and > 0, got {h!r}")
    if not (I_s >= 0.0 and math.isfinite(I_s)):
        raise ValueError(f"I_s must be finite and >= 0, got {I_s!r}")
    epsilon = math.log(1.0 / q) / h
    z = -(np.arange(1, N + 1, dtype=np.float64) - 0.5) * h / N
    I = I_s * np.exp(epsilon * z)
    return LightField(I_s=float(I_s), q=float(q), h=float(h), N=int(N), epsilon=epsilon, I=I)


def _phi(x: np.ndarray) -> np.ndarray:
    # phi(x) = (1 - exp(-x)) - x. The direct form cancels near 0, so switch
    # to the series -x^2/2 + x^3/6 - x^4/24 + x^5/120 below 1e-3 (next term
    # is ~x^3/60 relative, < 2e-11 at the crossover).
    x = np.asarray(x, dtype=np.float64)
    series = -0.5 * x * x * (1.0 - x / 3.0 + x * x / 12.0 - x * x * x / 60.0)
    direct = -np.expm1(-np.minimum(x, _EXP_ARG_MAX)) - x
    return np.where(np.abs(x) < 1e-3, series, direct)


def lap_coefficients(lf: LightField, p: HanParams, T: float) -> LapCoefficients:
    """Closed-form per-lap coefficient vectors D, V, Gamma, Z.

    Args:
        lf: light field from :func:`build_light_field`.
        p: Han-model constants.
        T: lap duration in s, > 0.

    Returns:
        LapCoefficients over lf's layers. All four vectors are evaluated with
        expm1 so short laps do not lose precision to cancellation; exp
        arguments are clamped so extreme alpha*T underflows D to 0 instead of
        overflowing intermediates.
    """
    if not (T > 0.0 and math.isfinite(T)):
        raise ValueError(f"lap duration T must be finite and > 0, got {T!r}")
    alpha = rate_alpha(lf.I, p)
    beta = rate_beta(lf.I, p)
    gamma = rate_gamma(lf.I, p)
    zeta = rate_zeta(lf.I, p)
    aT = alpha * T
    aT_safe = np.minimum(aT, _EXP_ARG_MAX)
    em1 = np.expm1(-aT_safe)          # exp(-aT) - 1, in (-1, 0)
    D = em1 + 1.0
    V = (beta / alpha) * (-em1)
    Gamma = (gamma / alpha) * em1
    Z = (gamma * beta / (alpha * alpha)) * _phi(aT) + zeta * T
    return LapCoefficients(T=float(T), D=D, V=V, Gamma=Gamma, Z=Z, alpha_T=aT)


@njit(cache=True, nogil=True)
def _rk4_three_state(A0, B0, C0, sI, k_d, k_r, inv_tau, T, steps):
    dt = T / steps
    a, b, c = A0, B0, C0
    for _ in range(steps):
        # classical RK4 on the linear three-state system
        ka1 = -sI * a + inv_tau * b
        kb1 = sI * a - inv_tau * b + k_r * c - k_d * sI * b
        kc1 = -k_r * c + k_d * sI * b

        a2 = a + 0.5 * dt * ka1
        b2 = b + 0.5 * dt * kb1
        c2 = c + 0.5 * dt * kc1
        ka2 = -sI * a2 + inv_tau * b2
        kb2 = sI * a2 - inv_tau * b2 + k_r * c2 - k_d * sI * b2
        kc2 = -k_r * c2 + k_d * sI * b2

        a3 = a + 0.5 * dt * ka2
        b3 = b + 0.5 * dt * kb2
        c3 = c + 0.5 * dt * kc2
        ka3 = -sI * a3 + inv_tau * b3
        kb3 = sI * a3 - inv_tau * b3 + k_r * c3 - k_d * sI * b3
        kc3 = -k_r * c3 + k_d * sI * b3

        a4 = a + dt * ka3
        b4 = b + dt * kb3
        c4 = c + dt * kc3
        ka4 = -sI * a4 + inv_tau * b4
        kb4 = sI * a4 - inv_tau * b4 + k_r * c4 - k_d * sI * b4
        kc4 = -k_r * c4 + k_d * sI * b4

        a += dt * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4) / 6.0
        b += dt * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4) / 6.0
        c += dt * (kc1 + 2.0 * kc2 + 2.0 * kc3 + kc4) / 6.0
    return a, b, c


def quasi_steady_split(C0: float, I: float, p: HanParams) -> tuple[float, float]:
    """Split the non-inhibited fraction 1 - C0 into (A0, B0) at quasi-steady
    balance for intensity I.

    The open/closed exchange relaxes on the fast time scale tau, so after a
    brief transient B/A = tau sigma I regardless of C. Starting the full
    integrator from this split makes it comparable to the reduced one-state
    model, which assumes that balance holds at all times.
    """
    arr = float(_check_intensity(I))
    w = p.tau * p.sigma * arr
    A0 = (1.0 - C0) / (1.0 + w)
    return A0, (1.0 - C0) * w / (1.0 + w)


def integrate_full_han(A0: float, B0: float, C0: float, I: float, p: HanParams,
                       T: float) -> tuple[float, float, float]:
    """Integrate the full three-state system for time T under constant light.

    Fixed-step RK4; the step count doubles until two consecutive runs agree
    on C(T) to 1e-10, which makes the result a deterministic reference for
    the reduced closed form.

    Args:
        A0, B0, C0: initial open/closed/inhibited fractions, >= 0, summing
            to 1 within 1e-12.
        I: constant light intensity, >= 0.
        p: Han-model constants.
        T: duration in s, >= 0.

    Returns:
        (A, B, C) at time T. The sum is preserved by the scheme; a drift
        beyond 1e-9 raises InvariantViolation.
    """
    if min(A0, B0, C0) < 0.0 or abs((A0 + B0 + C0) - 1.0) > 1e-12:
        raise ValueError(
            f"initial state must be nonnegative and sum to 1 within 1e-12, "
            f"got A0={A0!r} B0={B0!r} C0={C0!r}")
    sI = p.sigma * float(_check_intensity(I))
    if not (T >= 0.0 and math.isfinite(T)):
        raise ValueError(f"duration T must be finite and >= 0, got {T!r}")
    if T == 0.0:
        return A0, B0, C0
    # resolve the fastest rate in the system with ~10 steps per time constant
    fastest = sI + 1.0 / p.tau + p.k_d * sI + p.k_r
    steps = max(16, int(math.ceil(T * fastest * 0.5)))
    prev = _rk4_three_state(A0, B0, C0, sI, p.k_d, p.k_r, 1.0 / p.tau, T, steps)
    for _ in range(40):
        steps *= 2
        cur = _rk4_three_state(A0, B0, C0, sI, p.k_d, p.k_r, 1.0 / p.tau, T, steps)
        if abs(cur[2] - prev[2]) < 1e-10:
            break
        prev = cur
    else:
        raise InvariantViolation("three-state integrator failed to converge in step halving")
    if abs(sum(cur) - 1.0) > 1e-9:
        raise InvariantViolation(f"A+B+C drifted from 1 by {abs(sum(cur) - 1.0):.3e}")
    return cur
