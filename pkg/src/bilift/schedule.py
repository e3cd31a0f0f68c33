"""Lifting parameter schedules and their derived interpolation coefficients.

A schedule of depth r carries three vectors indexed 0..r+1: the nesting
exponents m (m[0]=1, m[r+1]=0) and the non-increasing weight chains p and q
that split the two Gaussian variance budgets across levels.  The derived
coefficients a, b, c are the per-level noise amplitudes

    a[k] = sqrt(p[k-1] q[k-1] - p[k] q[k])
    b[k] = sqrt(p[k-1] - p[k])
    c[k] = sqrt(q[k-1] - q[k])          for k = 1..r+1,

so the squares telescope: sum a^2 = p[0] q[0], sum b^2 = p[0], sum c^2 = q[0].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MERGE_TOL = 1e-12  # exponents are user-supplied exact values, not estimates


@dataclass(frozen=True)
class LiftingSchedule:
    """Depth r with exponent vector m and weight chains p, q (length r+2 each)."""

    r: int
    m: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __init__(self, r: int, m, p, q):
        object.__setattr__(self, "r", int(r))
        for name, vec in (("m", m), ("p", p), ("q", q)):
            arr = np.asarray(vec, dtype=np.float64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def replace(self, **kwargs) -> "LiftingSchedule":
        fields = {"r": self.r, "m": self.m, "p": self.p, "q": self.q}
        fields.update(kwargs)
        return LiftingSchedule(**fields)

    def with_entry(self, name: str, k: int, value: float) -> "LiftingSchedule":
        vec = np.array(getattr(self, name), dtype=np.float64)
        vec[k] = value
        return self.replace(**{name: vec})


@dataclass(frozen=True)
class DerivedCoefficients:
    """Per-level noise amplitudes a, b, c, each indexed 1..r+1 (length r+1)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = field(default=())


def validate(schedule: LiftingSchedule) -> ValidationReport:
    """Check every schedule invariant; violations are data, not exceptions."""
    bad: list[str] = []
    r = schedule.r
    if r < 1:
        bad.append(f"r must be a positive integer, got {r}")
        return ValidationReport(False, tuple(bad))
    for name in ("m", "p", "q"):
        vec = getattr(schedule, name)
        if vec.shape != (r + 2,):
            bad.append(f"{name} must have length r+2={r + 2}, got {vec.shape}")
    if bad:
        return ValidationReport(False, tuple(bad))
    if not np.all(np.isfinite(schedule.m)) or not np.all(np.isfinite(schedule.p)) or not np.all(np.isfinite(schedule.q)):
        bad.append("non-finite entry in m, p, or q")
        return ValidationReport(False, tuple(bad))
    if schedule.m[0] != 1.0:
        bad.append(f"m[0] = 1 required, got {schedule.m[0]}")
    if schedule.m[r + 1] != 0.0:
        bad.append(f"m[r+1] = 0 required, got {schedule.m[r + 1]}")
    for k in range(1, r + 1):
        if not schedule.m[k] > 0.0:
            bad.append(f"m[{k}] > 0 required")
    for name in ("p", "q"):
        vec = getattr(schedule, name)
        if vec[0] > 1.0:
            bad.append(f"{name}[0] <= 1 required, got {vec[0]}")
        if vec[r + 1] != 0.0:
            bad.append(f"{name}[r+1] = 0 required, got {vec[r + 1]}")
        for k in range(1, r + 2):
            if vec[k] > vec[k - 1]:
                bad.append(f"{name} non-increasing at k={k}")
        if vec[r] < 0.0:
            bad.append(f"{name}[r] >= 0 required")
    return ValidationReport(not bad, tuple(bad))


def require_valid(schedule: LiftingSchedule) -> None:
    report = validate(schedule)
    if not report.ok:
        raise ValueError("invalid lifting schedule: " + "; ".join(report.violations))


def derived_coefficients(schedule: LiftingSchedule) -> DerivedCoefficients:
    """Compute a, b, c; radicands are nonnegative for any valid schedule."""
    require_valid(schedule)
    p, q = schedule.p, schedule.q
    pq = p * q
    a2 = pq[:-1] - pq[1:]
    b2 = p[:-1] - p[1:]
    c2 = q[:-1] - q[1:]
    # Guard tiny negative rounding from the products; true negatives are
    # impossible once the chains validate.
    a = np.sqrt(np.maximum(a2, 0.0))
    b = np.sqrt(np.maximum(b2, 0.0))
    c = np.sqrt(np.maximum(c2, 0.0))
    return DerivedCoefficients(a=a, b=b, c=c)


def collapse_equivalent(schedule: LiftingSchedule) -> LiftingSchedule:
    """Merge levels whose exponent ratio is one.

    Whenever m[k] = m[k-1] (1 <= k <= r) the level-k expectation has exponent
    one and the two adjacent levels combine into a single Gaussian block; the
    interior boundary entry of p and q drops out and the merged amplitudes add
    in quadrature.  The depth never drops below 1.
    """
    require_valid(schedule)
    cur = schedule
    while cur.r > 1:
        k_hit = None
        for k in range(1, cur.r + 1):
            if abs(cur.m[k] - cur.m[k - 1]) <= MERGE_TOL:
                k_hit = k
                break
        if k_hit is None:
            break
        drop = max(k_hit - 1, 1)
        keep = [i for i in range(cur.r + 2) if i != drop]
        cur = LiftingSchedule(
            r=cur.r - 1,
            m=cur.m[keep],
            p=cur.p[keep],
            q=cur.q[keep],
        )
    return cur
