"""Exhaustive and closed-form solvers for the best mixing device.

The exhaustive search walks all N! permutations in lexicographic order,
evaluating J(P) through the O(N) cycle solve in a compiled kernel
(~1e7 permutations/s per core). The walk is split into a fixed set of
rank-range chunks that depends only on N; chunk results are merged strictly
in chunk order with the same tie rule at every level, so the outcome is
byte-identical for any worker count, and an interrupted search can resume
from a checkpoint of completed chunks.

The sorting solver maximizes the first-order objective J_approx exactly by
the rearrangement pairing: rank-r element of Gamma with rank-r element of V.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass

import numpy as np
from numba import njit

from .kinetics import LapCoefficients
from .lap_dynamics import Permutation
from .objective import J_approx, J as eval_J, is_tie, tie_tolerance

# 12! ~ 4.8e8 evaluations is the practical single-machine ceiling.
SEARCH_N_CAP = 12


class SearchCapError(RuntimeError):
    """Requested an exhaustive search beyond the N cap."""


@njit(cache=True, nogil=True)
def _lex_less(a, b):
    for i in range(a.size):
        if a[i] != b[i]:
            return a[i] < b[i]
    return False


@njit(cache=True, nogil=True)
def _scan_chunk(sig, count, d, v, g, aT, best_sig, worst_sig):
    """Evaluate `count` permutations starting at `sig` (advanced in place in
    lexicographic order). Returns (J_best, ties_best, J_worst, ties_worst);
    the lexicographically smallest tied permutations are written to
    best_sig / worst_sig."""
    n = sig.size
    visited = np.zeros(n, dtype=np.uint8)
    best = -np.inf
    worst = np.inf
    ties_b = np.int64(0)
    ties_w = np.int64(0)
    for it in range(count):
        for i in range(n):
            visited[i] = 0
        Jval = 0.0
        for start in range(n):
            if visited[start]:
                continue
            forcing = 0.0
            a_sum = 0.0
            j = start
            while True:
                visited[j] = 1
                forcing = forcing * d[j] + v[j]
                a_sum += aT[j]
                j = sig[j]
                if j == start:
                    break
            c = forcing / -np.expm1(-a_sum)
            j = start
            while True:
                Jval += g[j] * c
                c = d[j] * c + v[j]
                j = sig[j]
                if j == start:
                    break

        if it == 0:
            # seed both extrema from the chunk's first permutation; the
            # +-inf sentinels would make the tie window infinitely wide
            best = Jval
            worst = Jval
            ties_b = 1
            ties_w = 1
            for i in range(n):
                best_sig[i] = sig[i]
                worst_sig[i] = sig[i]
        else:
            m = abs(Jval)
            if abs(best) > m:
                m = abs(best)
            if m < 1.0:
                m = 1.0
            if Jval - best > 1e-12 * m:
                best = Jval
                ties_b = 1
                for i in range(n):
                    best_sig[i] = sig[i]
            elif best - Jval <= 1e-12 * m:
                if Jval > best:
                    best = Jval
                ties_b += 1
                if _lex_less(sig, best_sig):
                    for i in range(n):
                        best_sig[i] = sig[i]

            m = abs(Jval)
            if abs(worst) > m:
                m = abs(worst)
            if m < 1.0:
                m = 1.0
            if worst - Jval > 1e-12 * m:
                worst = Jval
                ties_w = 1
                for i in range(n):
                    worst_sig[i] = sig[i]
            elif Jval - worst <= 1e-12 * m:
                if Jval < worst:
                    worst = Jval
                ties_w += 1
                if _lex_less(sig, worst_sig):
                    for i in range(n):
                        worst_sig[i] = sig[i]

        # advance to the lexicographic successor
        i = n - 2
        while i >= 0 and sig[i] >= sig[i + 1]:
            i -= 1
        if i < 0:
            break  # end of S_N; chunks never overrun, this is a guard
        k = n - 1
        while sig[k] <= sig[i]:
            k -= 1
        sig[i], sig[k] = sig[k], sig[i]
        lo = i + 1
        hi = n - 1
        while lo < hi:
            sig[lo], sig[hi] = sig[hi], sig[lo]
            lo += 1
            hi -= 1
    return best, ties_b, worst, ties_w


def _perm_at_rank(n: int, rank: int) -> np.ndarray:
    """The permutation at `rank` in lexicographic order (factorial base)."""
    avail = list(range(n))
    out = np.empty(n, dtype=np.int64)
    f = math.factorial(n - 1)
    for i in range(n):
        idx, rank = divmod(rank, f)
        out[i] = avail.pop(idx)
        if n - 1 - i > 0:
            f //= n - 1 - i
    return out


def _chunk_plan(n: int) -> list[tuple[int, int]]:
    """Fixed (start_rank, count) chunks partitioning all n! ranks.

    A function of n alone, never of the worker count: N(N-1) chunks of
    (N-2)! each for N >= 4, one chunk otherwise. Fixed chunking is what
    makes the reduction order, and therefore the report, worker-invariant.
    """
    total = math.factorial(n)
    if n < 4:
        return [(0, total)]
    size = math.factorial(n - 2)
    return [(r, size) for r in range(0, total, size)]


@dataclass(frozen=True)
class SearchReport:
    """Outcome of a complete search over S_N.

    P_best / P_worst maximize / minimize J; among tied candidates the
    lexicographically smallest one-line form is reported, with ties counted
    against the window |dJ| <= 1e-12 max(1, |J|) around the running optimum
    (exact for exact ties; a drifting window can slightly overcount
    near-ties, see module docs). P_approx is the sorting solver's device.
    Growth rates are at each device's own periodic regime, in 1/s.
    """

    P_best: Permutation
    P_worst: Permutation
    P_approx: Permutation
    J_best: float
    J_worst: float
    mu_best: float
    mu_worst: float
    mu_identity: float
    ties_best: int
    evaluated: int
    best_is_identity: bool
    best_matches_approx: bool

    def to_text(self) -> str:
        """Canonical key=value serialization; byte-stable for identical
        searches regardless of worker count."""
        lines = [
            f"N={len(self.P_best)}",
            f"evaluated={self.evaluated}",
            f"P_best={self.P_best.one_line()}",
            f"P_worst={self.P_worst.one_line()}",
            f"P_approx={self.P_approx.one_line()}",
            f"J_best={self.J_best:.17g}",
            f"J_worst={self.J_worst:.17g}",
            f"mu_best={self.mu_best:.17g}",
            f"mu_worst={self.mu_worst:.17g}",
            f"mu_identity={self.mu_identity:.17g}",
            f"ties_best={self.ties_best}",
            f"best_is_identity={'true' if self.best_is_identity else 'false'}",
            f"best_matches_approx={'true' if self.best_matches_approx else 'false'}",
        ]
        return "\n".join(lines) + "\n"


def sorting_solver(coeffs: LapCoefficients) -> Permutation:
    """Exact argmax of J_approx by the rearrangement pairing.

    Sort Gamma and V ascending (stable, so equal values keep index order)
    and send the layer holding the rank-r V to the layer holding the rank-r
    Gamma. Any other pairing can be improved by a transposition, so the
    result maximizes <Gamma, P V> over all of S_N.
    """
    v_order = np.argsort(coeffs.V, kind="stable")
    g_order = np.argsort(coeffs.Gamma, kind="stable")
    sigma = np.empty(coeffs.V.size, dtype=np.int64)
    sigma[v_order] = g_order
    return Permutation(sigma)


class _Extrema:
    """Running reduction state; merge applies the kernel's tie rule."""

    __slots__ = ("best", "ties_b", "best_sig", "worst", "ties_w", "worst_sig")

    def __init__(self) -> None:
        self.best = -math.inf
        self.ties_b = 0
        self.best_sig: np.ndarray | None = None
        self.worst = math.inf
        self.ties_w = 0
        self.worst_sig: np.ndarray | None = None

    def merge(self, best, ties_b, best_sig, worst, ties_w, worst_sig) -> None:
        if best - self.best > tie_tolerance(best, self.best if self.best_sig is not None else 0.0):
            self.best, self.ties_b, self.best_sig = best, int(ties_b), best_sig.copy()
        elif self.best_sig is not None and is_tie(best, self.best):
            self.best = max(self.best, best)
            self.ties_b += int(ties_b)
            if tuple(best_sig) < tuple(self.best_sig):
                self.best_sig = best_sig.copy()
        if self.worst - worst > tie_tolerance(worst, self.worst if self.worst_sig is not None else 0.0):
            self.worst, self.ties_w, self.worst_sig = worst, int(ties_w), worst_sig.copy()
        elif self.worst_sig is not None and is_tie(worst, self.worst):
            self.worst = min(self.worst, worst)
            self.ties_w += int(ties_w)
            if tuple(worst_sig) < tuple(self.worst_sig):
                self.worst_sig = worst_sig.copy()


def _coeff_fingerprint(coeffs: LapCoefficients) -> str:
    digest = hashlib.sha256()
    digest.update(np.float64(coeffs.T).tobytes())
    for vec in (coeffs.D, coeffs.V, coeffs.Gamma, coeffs.alpha_T):
        digest.update(np.ascontiguousarray(vec).tobytes())
    return digest.hexdigest()[:16]


def _write_checkpoint(path: str, fingerprint: str, n: int, chunks_done: int,
                      evaluated: int, state: _Extrema) -> None:
    lines = [
        f"fingerprint={fingerprint}",
        f"N={n}",
        f"chunks_done={chunks_done}",
        f"evaluated={evaluated}",
    ]
    if state.best_sig is not None:
        lines += [
            f"best={state.best:.17g}",
            f"best_sig={' '.join(str(x + 1) for x in state.best_sig)}",
            f"ties_best={state.ties_b}",
            f"worst={state.worst:.17g}",
            f"worst_sig={' '.join(str(x + 1) for x in state.worst_sig)}",
            f"ties_worst={state.ties_w}",
        ]
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _read_checkpoint(path: str, fingerprint: str, n: int) -> tuple[int, int, _Extrema] | None:
    if not os.path.exists(path):
        return None
    fields: dict[str, str] = {}
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, _, value = line.partition("=")
                fields[key] = value
    if fields.get("fingerprint") != fingerprint or fields.get("N") != str(n):
        raise ValueError(
            f"checkpoint {path!r} belongs to a different search "
            f"(fingerprint mismatch); remove it or point elsewhere")
    state = _Extrema()
    chunks_done = int(fields["chunks_done"])
    evaluated = int(fields["evaluated"])
    if "best" in fields:
        state.best = float(fields["best"])
        state.best_sig = np.array([int(t) - 1 for t in fields["best_sig"].split()],
                                  dtype=np.int64)
        state.ties_b = int(fields["ties_best"])
        state.worst = float(fields["worst"])
        state.worst_sig = np.array([int(t) - 1 for t in fields["worst_sig"].split()],
                                   dtype=np.int64)
        state.ties_w = int(fields["ties_worst"])
    return chunks_done, evaluated, state


def partitioned_search(coeffs: LapCoefficients, N: int, workers: int = 1,
                       checkpoint: str | None = None,
                       progress=None) -> SearchReport:
    """Exhaustive argmax/argmin of J over S_N, chunked and worker-invariant.

    Args:
        coeffs: lap coefficients for the N layers.
        N: layer count; must match coeffs and be <= 12.
        workers: thread count. The kernel releases the GIL, so threads scale
            on multicore hosts; the report is byte-identical regardless.
        checkpoint: optional path for resumable progress, plain key=value
            text holding the completed-chunk prefix and running extrema.
        progress: optional writable text stream for permutations/s and ETA.

    Returns:
        SearchReport; `evaluated` equals N! on completion.
    """
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ValueError(f"N must be an integer >= 1, got {N!r}")
    if N > SEARCH_N_CAP:
        raise SearchCapError(
            f"exhaustive search is capped at N={SEARCH_N_CAP} ({SEARCH_N_CAP}! "
            f"evaluations); for larger N use sorting_solver on the first-order "
            f"objective")
    if coeffs.D.size != N:
        raise ValueError(f"N={N} does not match the {coeffs.D.size}-layer coefficients")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers!r}")

    plan = _chunk_plan(N)
    total = math.factorial(N)
    fingerprint = _coeff_fingerprint(coeffs)
    state = _Extrema()
    first_chunk = 0
    evaluated = 0
    if checkpoint is not None:
        resumed = _read_checkpoint(checkpoint, fingerprint, N)
        if resumed is not None:
            first_chunk, evaluated, state = resumed

    d = np.ascontiguousarray(coeffs.D)
    v = np.ascontiguousarray(coeffs.V)
    g = np.ascontiguousarray(coeffs.Gamma)
    aT = np.ascontiguousarray(coeffs.alpha_T)

    def run_chunk(index: int):
        start_rank, count = plan[index]
        sig = _perm_at_rank(N, start_rank)
        best_sig = np.zeros(N, dtype=np.int64)
        worst_sig = np.zeros(N, dtype=np.int64)
        best, ties_b, worst, ties_w = _scan_chunk(sig, count, d, v, g, aT,
                                                  best_sig, worst_sig)
        return best, ties_b, best_sig, worst, ties_w, worst_sig

    t0 = time.monotonic()
    last_report = t0
    done_since_start = 0
    if first_chunk < len(plan):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending = {pool.submit(run_chunk, c): c for c in range(first_chunk, len(plan))}
            finished: dict[int, tuple] = {}
            next_to_merge = first_chunk
            while pending or next_to_merge < len(plan):
                if pending:
                    done, _ = wait(pending, return_when=FIRST_COMPLETED)
                    for fut in done:
                        finished[pending.pop(fut)] = fut.result()
                # merge strictly in chunk order so the reduction is
                # worker-invariant and the checkpoint prefix is contiguous
                while next_to_merge in finished:
                    state.merge(*finished.pop(next_to_merge))
                    evaluated += plan[next_to_merge][1]
                    done_since_start += plan[next_to_merge][1]
                    next_to_merge += 1
                    if checkpoint is not None:
                        _write_checkpoint(checkpoint, fingerprint, N,
                                          next_to_merge, evaluated, state)
                now = time.monotonic()
                if progress is not None and (now - last_report > 0.5
                                             or next_to_merge == len(plan)):
                    rate = done_since_start / max(now - t0, 1e-9)
                    remaining = total - evaluated
                    eta = remaining / max(rate, 1e-9)
                    progress.write(f"scanned {evaluated}/{total} permutations "
                                   f"({rate:,.0f}/s, ETA {eta:,.1f}s)\n")
                    last_report = now

    assert state.best_sig is not None and state.worst_sig is not None
    P_best = Permutation(state.best_sig)
    P_worst = Permutation(state.worst_sig)
    P_approx = sorting_solver(coeffs)
    z_sum = float(coeffs.Z.sum())
    nt = N * coeffs.T
    j_id = eval_J(Permutation.identity(N), coeffs)
    return SearchReport(
        P_best=P_best,
        P_worst=P_worst,
        P_approx=P_approx,
        J_best=state.best,
        J_worst=state.worst,
        mu_best=(state.best + z_sum) / nt,
        mu_worst=(state.worst + z_sum) / nt,
        mu_identity=(j_id + z_sum) / nt,
        ties_best=state.ties_b,
        evaluated=evaluated,
        best_is_identity=P_best.is_identity(),
        best_matches_approx=P_best == P_approx,
    )


def exhaustive_search(coeffs: LapCoefficients, N: int) -> SearchReport:
    """Single-threaded exhaustive search; same chunked path as
    partitioned_search, so results are identical by construction."""
    return partitioned_search(coeffs, N, workers=1)


def spot_check(report: SearchReport, coeffs: LapCoefficients, samples: int = 1000,
               seed: int = 0) -> bool:
    """Sampled optimality certificate: no random device beats the reported
    extrema beyond the tie window. Cheap (O(samples * N))."""
    rng = np.random.default_rng(seed)
    n = len(report.P_best)
    for _ in range(samples):
        j = eval_J(Permutation(rng.permutation(n)), coeffs)
        if j - report.J_best > tie_tolerance(j, report.J_best):
            return False
        if report.J_worst - j > tie_tolerance(j, report.J_worst):
            return False
    return True
