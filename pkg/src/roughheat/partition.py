"""Right-to-left point removal on a uniform partition.

The scheme's residual telescoping works over a specific coarsening schedule of
{0, 1, ..., N}: sweep the inner points from right to left removing every
second one, possibly pick up a single leftover next to 0, and repeat on the
surviving points until only the endpoints are left.  This module simulates
that schedule, keeps the neighbor bookkeeping needed by the weighted residual
sums, and provides the closed-form/recurrence cross-checks.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RemovalTrace",
    "run_removal",
    "a_sequence",
    "closed_form_neighbors",
    "closed_form_table",
    "verify_bounds",
    "weighted_sum",
    "BoundsReport",
]


@dataclass
class RemovalTrace:
    """Full record of the removal schedule on {0, ..., N}.

    Arrays are indexed by removal time m = 1..N-1 (position m-1).
    ``removed[m-1]`` is the point taken at time m, ``right_neighbor`` /
    ``left_neighbor`` the surviving neighbors at that moment (0 and N count
    as permanent survivors), ``sweep[m-1]`` the sweep number r >= 1 the
    removal belongs to, and ``counts[r]`` the total number of points removed
    by the end of sweep r (counts[0] = 0).
    """

    N: int
    removed: np.ndarray
    right_neighbor: np.ndarray
    left_neighbor: np.ndarray
    sweep: np.ndarray
    counts: np.ndarray

    @property
    def M(self) -> int:
        return len(self.counts) - 1


def run_removal(N: int) -> RemovalTrace:
    """Simulate the removal schedule literally and return its trace."""
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ValueError(f"need an integer N >= 2, got {N!r}")
    N = int(N)

    # doubly linked list over 0..N; plain lists keep the inner loop cheap
    nxt = list(range(1, N + 2))
    prv = list(range(-1, N + 1))

    removed: list[int] = []
    kplus: list[int] = []
    kminus: list[int] = []
    sweep_of: list[int] = []
    counts = [0]

    r = 0
    while prv[N] != 0:
        r += 1
        # sweep right to left: remove the rightmost inner point, skip one
        # survivor, remove the next, and so on
        p = prv[N]
        last = None
        while p != 0:
            left, right = prv[p], nxt[p]
            removed.append(p)
            kminus.append(left)
            kplus.append(right)
            sweep_of.append(r)
            nxt[left] = right
            prv[right] = left
            last = p
            if left == 0:
                break
            p = prv[left]
        # leftover clause: if exactly one inner point survives strictly
        # between 0 and the point we just removed, take it as well
        w = prv[last] if last is not None else 0
        if last is not None and 0 < w < last and prv[w] == 0:
            removed.append(w)
            kminus.append(prv[w])
            kplus.append(nxt[w])
            sweep_of.append(r)
            nxt[prv[w]] = nxt[w]
            prv[nxt[w]] = prv[w]
        counts.append(len(removed))

    return RemovalTrace(
        N=N,
        removed=np.asarray(removed, dtype=np.int64),
        right_neighbor=np.asarray(kplus, dtype=np.int64),
        left_neighbor=np.asarray(kminus, dtype=np.int64),
        sweep=np.asarray(sweep_of, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
    )


def a_sequence(N: int) -> list[int]:
    """Removal counts A_1..A_M from the recurrence A_{r+1} = A_r + floor((N - A_r + 1)/2)."""
    if N < 2:
        raise ValueError(f"need N >= 2, got {N!r}")
    counts = []
    a = 0
    while a < N - 1:
        a = a + (N - a + 1) // 2
        counts.append(a)
    return counts


def closed_form_neighbors(N: int, r: int, m: int, counts) -> tuple[int, int, int]:
    """Closed-form (k_m, k_m^+, k_m^-) for removal time m during sweep r.

    ``counts`` is the A_1..A_M sequence (as from :func:`a_sequence`).  The
    generic lattice formulas hold for every removal except the last one of a
    sweep, which always takes the leftmost surviving point, so its true left
    neighbor is 0 regardless of what the lattice formula would say.
    """
    a_prev = 0 if r == 1 else counts[r - 2]
    a_cur = counts[r - 1]
    if not (a_prev < m <= a_cur):
        raise ValueError(f"removal time {m} not in sweep {r} of N={N}")

    step = 1 << r
    half = 1 << (r - 1)
    d = m - a_prev

    if m == a_cur and (N - a_prev) % 2 == 1:
        # leftover removal next to 0: inherits the right neighbor of the
        # removal just before it
        k = N - step * (d - 1)
        k_plus = N - step * (d - 1) + step
        k_minus = 0
    else:
        k_minus = N - step * d
        k_plus = k_minus + step
        k = k_minus + half
        if m == a_cur:
            # final sweep removal strips the leftmost lattice point; the
            # formula's k_minus has already been removed (or is <= 0)
            k_minus = 0
    return k, k_plus, k_minus


def closed_form_table(N: int, counts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized closed forms: (k, k^+, k^-) arrays over all m = 1..N-1.

    Same formulas as :func:`closed_form_neighbors`, one sweep at a time, so
    whole-trace cross-checks stay cheap for N in the thousands.
    """
    k = np.empty(N - 1, dtype=np.int64)
    kp = np.empty(N - 1, dtype=np.int64)
    km = np.empty(N - 1, dtype=np.int64)
    a_prev = 0
    for r, a_cur in enumerate(counts, start=1):
        step = 1 << r
        d = np.arange(1, a_cur - a_prev + 1, dtype=np.int64)
        base_minus = N - step * d
        sl = slice(a_prev, a_cur)
        km[sl] = base_minus
        kp[sl] = base_minus + step
        k[sl] = base_minus + (step >> 1)
        if (N - a_prev) % 2 == 1:
            k[a_cur - 1] = N - step * (d[-1] - 1)
            kp[a_cur - 1] = k[a_cur - 1] + step
        km[a_cur - 1] = 0  # last removal of a sweep takes the leftmost point
        a_prev = a_cur
    return k, kp, km


@dataclass
class BoundsReport:
    N: int
    M: int
    counts: list[int]
    count_slack: list[float]   # A_r - N(1 - 2^{-r}), expected in [0, 1]
    increment_slack: list[float]  # A_r - A_{r-1} - N/2^r, expected in [-1, 1]
    ok: bool
    violations: list[tuple[int, int, str]]  # (N, r, description)


def verify_bounds(N: int) -> BoundsReport:
    """Check the count-sequence bounds for a single N."""
    counts = a_sequence(N)
    M = len(counts)
    violations = []
    count_slack = []
    increment_slack = []
    prev = 0
    for r, a in enumerate(counts, start=1):
        slack = a - N * (1.0 - 0.5**r)
        count_slack.append(slack)
        if not (-1e-12 <= slack <= 1.0 + 1e-12):
            violations.append((N, r, f"count slack {slack} outside [0, 1]"))
        inc = a - prev - N * 0.5**r
        increment_slack.append(inc)
        if abs(inc) > 1.0 + 1e-12:
            violations.append((N, r, f"increment slack {inc} outside [-1, 1]"))
        prev = a
    if not 2 ** (M - 1) <= N <= 2 ** (M + 1):
        violations.append((N, M, f"N outside [2^{M-1}, 2^{M+1}]"))
    return BoundsReport(
        N=N,
        M=M,
        counts=counts,
        count_slack=count_slack,
        increment_slack=increment_slack,
        ok=not violations,
        violations=violations,
    )


def weighted_sum(N: int, kappa: float, mu: float, gamma_prime: float) -> float:
    """Neighbor-weighted sum over the removal trace.

    sum_{r=1}^{M-1} [ |1 - k^-_{A_{r-1}+1}/N|^kappa
                      + N^{-mu} sum_{m=A_{r-1}+2}^{A_r}
                            |1 - k_m^+/N|^{-gamma'} (k_m^+ - k_m^-)^mu ]

    The inner sum skips any removal whose right neighbor is N itself (only
    the first removal of a sweep touches N, and the sum starts after it).
    """
    if mu <= 1.0:
        raise ValueError(f"mu must exceed 1, got {mu}")
    if not 0.0 < gamma_prime < 1.0:
        raise ValueError(f"gamma' must lie in (0,1), got {gamma_prime}")
    if kappa <= 0.0:
        raise ValueError(f"kappa must be positive, got {kappa}")

    trace = run_removal(N)
    counts = trace.counts
    M = trace.M
    kp = trace.right_neighbor
    km = trace.left_neighbor

    total = 0.0
    for r in range(1, M):
        a_prev = int(counts[r - 1])
        a_cur = int(counts[r])
        first_km = km[a_prev]  # left neighbor at removal time A_{r-1}+1
        total += abs(1.0 - first_km / N) ** kappa
        ms = np.arange(a_prev + 2, a_cur + 1)
        if ms.size:
            kpv = kp[ms - 1].astype(np.float64)
            kmv = km[ms - 1].astype(np.float64)
            keep = kpv < N
            kpv, kmv = kpv[keep], kmv[keep]
            total += float(
                np.sum(np.abs(1.0 - kpv / N) ** (-gamma_prime) * (kpv - kmv) ** mu)
            ) / N**mu
    return float(total)
