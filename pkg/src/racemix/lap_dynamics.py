"""Mixing permutations and the lap-to-lap affine recursion.

At the end of each lap the mixing device relocates the entire content of
layer n into layer sigma(n). With the per-lap closed form of
:mod:`racemix.kinetics`, the start-of-lap inhibition state follows

    C_(k+1)(0) = P (D C_k(0) + V),

an affine contraction whose unique fixed point is the periodic regime the
pond settles into. The fixed point is computed in O(N) by unrolling the
recursion around each cycle of sigma, which is what makes exhaustive search
over all N! devices feasible; a dense solve would cost O(N^3) per device.

Permutations are 0-based in code. All text forms (one-line notation, matrix
blocks) are 1-based, layer 1 at the surface, matching how device layouts are
usually written down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinetics import InvariantViolation, LapCoefficients

# Slack around the [0,1] box for arithmetic roundoff. The affine map has
# margin 1 - (D_n c + V_n) >= (k_r/alpha_n)(1 - D_n), around 1e-9 or more in
# every physical regime, so a breach past this slack means a real bug.
_BOX_SLACK = 1e-12

_FIXED_POINT_RESIDUAL_TOL = 1e-13
_PERIODICITY_TOL = 1e-10


class Permutation:
    """A bijection sigma of the N layers; sigma[n] receives layer n's content.

    Construct from a 0-based target sequence, or via :meth:`identity`,
    :meth:`reversal`, or :meth:`from_one_line` (1-based text form).
    """

    __slots__ = ("_sigma",)

    def __init__(self, targets) -> None:
        raw = np.asarray(targets)
        if raw.dtype.kind not in "iu":
            if raw.dtype.kind != "f" or not np.all(raw == np.floor(raw)):
                raise ValueError(f"permutation targets must be integers: {targets!r}")
        sigma = raw.astype(np.int64)
        n = sigma.size
        if n == 0:
            raise ValueError("permutation must have at least one element")
        seen = np.zeros(n, dtype=bool)
        for t in sigma:
            if t < 0 or t >= n or seen[t]:
                raise ValueError(f"not a bijection on 0..{n - 1}: {targets!r}")
            seen[t] = True
        sigma.flags.writeable = False
        self._sigma = sigma

    @classmethod
    def identity(cls, N: int) -> "Permutation":
        return cls(np.arange(N))

    @classmethod
    def reversal(cls, N: int) -> "Permutation":
        """The full anti-diagonal device: layer n goes to layer N+1-n."""
        return cls(np.arange(N)[::-1])

    @classmethod
    def from_one_line(cls, text: str) -> "Permutation":
        """Parse 1-based one-line notation, e.g. "2 4 6 8 10 11 9 7 5 3 1"."""
        try:
            values = [int(tok) for tok in text.replace(",", " ").split()]
        except ValueError as exc:
            raise ValueError(f"cannot parse one-line notation {text!r}") from exc
        if not values:
            raise ValueError("empty one-line notation")
        return cls([v - 1 for v in values])

    @property
    def sigma(self) -> np.ndarray:
        """Read-only 0-based target array."""
        return self._sigma

    def __len__(self) -> int:
        return int(self._sigma.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return self._sigma.size == other._sigma.size and bool(
            np.all(self._sigma == other._sigma))

    def __hash__(self) -> int:
        return hash(self._sigma.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.one_line()!r})"

    def one_line(self) -> str:
        """1-based one-line notation, space separated."""
        return " ".join(str(int(t) + 1) for t in self._sigma)

    def matrix_text(self) -> str:
        """N lines of space-separated 0/1: row i has a 1 in column j iff
        sigma(j) = i, so printed blocks diff textually against written
        device layouts."""
        n = self._sigma.size
        rows = []
        for i in range(n):
            rows.append(" ".join("1" if self._sigma[j] == i else "0" for j in range(n)))
        return "\n".join(rows)

    def is_identity(self) -> bool:
        return bool(np.all(self._sigma == np.arange(self._sigma.size)))

    def cycles(self) -> list[list[int]]:
        """Cycle decomposition as lists of 0-based indices, each starting at
        its smallest element, cycles ordered by that element."""
        n = self._sigma.size
        seen = np.zeros(n, dtype=bool)
        out = []
        for start in range(n):
            if seen[start]:
                continue
            cyc = []
            j = start
            while not seen[j]:
                seen[j] = True
                cyc.append(j)
                j = int(self._sigma[j])
            out.append(cyc)
        return out

    def order(self) -> int:
        """Smallest K >= 1 with sigma^K = identity (lcm of cycle lengths)."""
        return math.lcm(*(len(c) for c in self.cycles()))


@dataclass(frozen=True, eq=False)
class LapState:
    """Start-of-lap inhibited fractions C_n, one per layer, each in [0, 1].

    A hair of slack (1e-12) past the box is tolerated for roundoff; anything
    further is rejected.
    """

    C: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.C, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("LapState.C must be a nonempty 1-d vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("LapState.C must be finite")
        if np.any(arr < -_BOX_SLACK) or np.any(arr > 1.0 + _BOX_SLACK):
            raise ValueError(
                f"inhibited fractions must lie in [0, 1], got range "
                f"[{arr.min():.17g}, {arr.max():.17g}]")
        object.__setattr__(self, "C", arr)


def _require_same_n(P: Permutation, coeffs: LapCoefficients, *states: LapState) -> int:
    n = len(P)
    if coeffs.D.size != n:
        raise ValueError(f"dimension mismatch: permutation has {n} layers, "
                         f"coefficients have {coeffs.D.size}")
    for st in states:
        if st.C.size != n:
            raise ValueError(f"dimension mismatch: state has {st.C.size} layers, "
                             f"expected {n}")
    return n


def apply_lap(P: Permutation, coeffs: LapCoefficients, C: LapState) -> LapState:
    """One lap: evolve every layer for time T, then relocate by P.

    Returns the next start-of-lap state. The affine image must stay inside
    the unit box; a breach beyond roundoff slack raises InvariantViolation
    rather than clamping, since it would mean the coefficients are not of
    the modelled form.
    """
    _require_same_n(P, coeffs, C)
    evolved = coeffs.D * C.C + coeffs.V
    if np.any(evolved < -_BOX_SLACK) or np.any(evolved > 1.0 + _BOX_SLACK):
        raise InvariantViolation(
            f"lap image left the unit box: range "
            f"[{evolved.min():.17g}, {evolved.max():.17g}]")
    out = np.empty_like(evolved)
    out[P.sigma] = evolved
    return LapState(out)


def fixed_point(P: Permutation, coeffs: LapCoefficients) -> LapState:
    """The unique periodic state C* = P (D C* + V), by cycle decomposition.

    Unrolling the relation C*_(sigma(n)) = D_n C*_n + V_n around a cycle
    (n1, n2, ..., nL) of sigma telescopes to

        C*_(n1) (1 - prod_j D_(nj)) = V_(nL) + D_(nL) V_(n(L-1)) + ...

    and 1 - prod D is evaluated as -expm1(-sum alpha_n T) so short laps keep
    full precision. O(N) total.

    Raises:
        ValueError: if any D_n >= 1 (the loss of strict contraction breaks
            uniqueness, and cannot arise from positive rates and T > 0).
        InvariantViolation: if the residual check against the defining
            relation fails.
    """
    n = _require_same_n(P, coeffs)
    if np.any(coeffs.D >= 1.0):
        raise ValueError("fixed point requires every decay factor D_n < 1")
    sigma = P.sigma
    d, v, aT = coeffs.D, coeffs.V, coeffs.alpha_T
    c = np.empty(n, dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for start in range(n):
        if seen[start]:
            continue
        forcing = 0.0
        a_sum = 0.0
        j = start
        while True:
            seen[j] = True
            forcing = forcing * d[j] + v[j]
            a_sum += aT[j]
            j = int(sigma[j])
            if j == start:
                break
        c_start = forcing / -np.expm1(-a_sum)
        j = start
        value = c_start
        while True:
            c[j] = value
            value = d[j] * value + v[j]
            j = int(sigma[j])
            if j == start:
                break
    state = LapState(c)
    residual = float(np.max(np.abs(apply_lap(P, coeffs, state).C - c)))
    if residual > _FIXED_POINT_RESIDUAL_TOL:
        raise InvariantViolation(
            f"fixed point residual {residual:.3e} exceeds {_FIXED_POINT_RESIDUAL_TOL}")
    return state


def simulate_laps(P: Permutation, coeffs: LapCoefficients, C0: LapState,
                  K: int) -> list[LapState]:
    """States (C^0, C^1, ..., C^K) under K repeated laps."""
    if K < 0:
        raise ValueError(f"lap count K must be >= 0, got {K!r}")
    _require_same_n(P, coeffs, C0)
    states = [C0]
    for _ in range(K):
        states.append(apply_lap(P, coeffs, states[-1]))
    return states


@dataclass(frozen=True)
class PeriodicityReport:
    """Outcome of a K-lap periodicity probe.

    periodic: the state returned to its start after K laps (within tol).
    constant: the state never left its start at any intermediate lap.
    For a strict contraction the two must agree: any KT-periodic evolution
    is already T-periodic, i.e. sits at the fixed point.
    """

    periodic: bool
    constant: bool
    return_deviation: float
    max_step_deviation: float
    tol: float

    def __bool__(self) -> bool:
        return self.periodic


def check_periodicity(P: Permutation, coeffs: LapCoefficients, C0: LapState,
                      K: int, tol: float = _PERIODICITY_TOL) -> PeriodicityReport:
    """Probe whether C0 is K-lap periodic, reporting the deviations seen.

    Any K >= 1 is accepted; order(sigma) is the natural witness for a state
    at the fixed point, but the contraction argument holds for every K.
    """
    if K < 1:
        raise ValueError(f"periodicity probe needs K >= 1, got {K!r}")
    states = simulate_laps(P, coeffs, C0, K)
    devs = [float(np.max(np.abs(s.C - C0.C))) for s in states[1:]]
    return PeriodicityReport(
        periodic=devs[-1] < tol,
        constant=max(devs) < tol,
        return_deviation=devs[-1],
        max_step_deviation=max(devs),
        tol=tol,
    )
