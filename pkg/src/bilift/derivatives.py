"""Analytic parameter derivatives and the common-random-number FD oracle.

The derivative of the lifted functional with respect to a level weight is a
reweighted overlap average:

    d psi / d p_k1 = sign(s) s beta / (2 sqrt(n)) * [
        -(1-t) (m_k1 - m_{k1+1}) < |x_i1||x_p1| y_p2^T y_i2 >_{split k1}
        - t q_k1 (m_k1 - m_{k1+1}) < |x_i1||x_p1||y_i2||y_p2| >_{split k1} ]

with the q-version mirroring the two overlap roles, and the time derivative
decomposes over splits 0..r plus two boundary terms that vanish identically
when p[0] = q[0] = 1.  The shifted functional's parameter derivatives carry
an overall (1-t)(m_k1 - m_{k1+1}) factor, so they vanish per draw at t = 1
or when adjacent exponents coincide.

Finite differences evaluate both points on the same draw tree (identical
noise), so the paired per-draw differences carry the error bar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import measures
from .ensemble import ConfigurationSets
from .estimator import (
    PSI,
    PSI1,
    PSI_S,
    Estimate,
    EvalSettings,
    Evaluator,
    Request,
    pair_y_request,
    replica_request,
    single_request,
)
from .schedule import LiftingSchedule

ANALYTIC_PAIRS = {("psi", "p"), ("psi", "q"), ("psi", "t"), ("psi1", "p"), ("psi1", "q")}


@dataclass(frozen=True)
class DerivativeRequest:
    """Which derivative to take and how."""

    target: str            # psi | psi1 | psi_s
    variable: str          # p | q | t | m
    k1: int | None = None  # level index for p/q/m
    method: str = "analytic"
    fd_step: float | None = None

    def __post_init__(self):
        if self.target not in ("psi", "psi1", "psi_s"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.variable not in ("p", "q", "t", "m"):
            raise ValueError(f"unknown variable {self.variable!r}")
        if self.method == "analytic" and (self.target, self.variable) not in ANALYTIC_PAIRS:
            raise ValueError(
                f"no analytic formula for d{self.target}/d{self.variable}; use finite differences")


def _check_k1(schedule: LiftingSchedule, k1: int) -> None:
    if not 1 <= k1 <= schedule.r:
        raise ValueError(f"level index k1 must lie in 1..{schedule.r}, got {k1}")


def _prefactor(settings: EvalSettings, n: int) -> float:
    return float(np.sign(settings.s) * settings.s * settings.beta / (2.0 * np.sqrt(n)))


def dpsi_dp(sets: ConfigurationSets, schedule: LiftingSchedule, settings: EvalSettings,
            k1: int, threads: int = 1) -> Estimate:
    """Analytic derivative in the x-side weight at level k1."""
    _check_k1(schedule, k1)
    ev = Evaluator(sets, schedule, settings, threads=threads)
    r_yd = replica_request(k1, measures.y_overlap_x_norms)
    r_np = replica_request(k1, measures.norm_product)
    draws = ev.per_draw([r_yd, r_np])
    dm = schedule.m[k1] - schedule.m[k1 + 1]
    t = settings.t
    q_k1 = schedule.q[k1]
    per_draw = _prefactor(settings, sets.n) * (
        -(1.0 - t) * dm * draws[r_yd] - t * q_k1 * dm * draws[r_np])
    return Estimate.from_draws(per_draw)


def dpsi_dq(sets: ConfigurationSets, schedule: LiftingSchedule, settings: EvalSettings,
            k1: int, threads: int = 1) -> Estimate:
    """Analytic derivative in the y-side weight at level k1 (mirror of dpsi_dp)."""
    _check_k1(schedule, k1)
    ev = Evaluator(sets, schedule, settings, threads=threads)
    r_xd = replica_request(k1, measures.x_overlap_y_norms)
    r_np = replica_request(k1, measures.norm_product)
    draws = ev.per_draw([r_xd, r_np])
    dm = schedule.m[k1] - schedule.m[k1 + 1]
    t = settings.t
    p_k1 = schedule.p[k1]
    per_draw = _prefactor(settings, sets.n) * (
        -(1.0 - t) * dm * draws[r_xd] - t * p_k1 * dm * draws[r_np])
    return Estimate.from_draws(per_draw)


def dpsi_dt_per_draw(ev: Evaluator) -> np.ndarray:
    """Per-draw values of the analytic time derivative."""
    sets, schedule, settings = ev.sets, ev.schedule, ev.settings
    r = schedule.r
    m, p, q = schedule.m, schedule.p, schedule.q
    s = settings.s
    reqs: list[Request] = []
    by_split = {}
    for k1 in range(1, r + 2):
        split = k1 - 1
        rs = {
            "np": replica_request(split, measures.norm_product),
            "xd": replica_request(split, measures.x_overlap_y_norms),
            "yd": replica_request(split, measures.y_overlap_x_norms),
            "dd": replica_request(split, measures.overlap_product),
        }
        by_split[split] = rs
        reqs.extend(rs.values())
    p0, q0 = p[0], q[0]
    boundary = (p0 != 1.0) or (q0 != 1.0)
    if boundary:
        r01 = single_request(measures.single_norm_sq)
        r02 = pair_y_request(measures.boundary_two_column(q0))
        reqs.extend([r01, r02])
    draws = ev.per_draw(reqs)
    total = np.zeros(ev.tree.n_outer)
    for k1 in range(1, r + 2):
        split = k1 - 1
        rs = by_split[split]
        dm = m[k1 - 1] - m[k1]
        bracket = (
            p[k1 - 1] * q[k1 - 1] * draws[rs["np"]]
            - p[k1 - 1] * draws[rs["yd"]]
            - q[k1 - 1] * draws[rs["xd"]]
            + draws[rs["dd"]]
        )
        total += -s * dm * bracket
    if boundary:
        # The second boundary bracket enters with orientation
        # (y_p2^T y_i2 - q0 |y_i2||y_p2|): this is the sign that reproduces the
        # exactly solvable one-pair case for every s and matches the FD oracle;
        # the opposite orientation is off by 2(1-s)(1-p0)(1-q0) there.
        total += (1.0 - p0) * (1.0 - q0) * draws[r01]
        total -= (s - 1.0) * (1.0 - p0) * draws[r02]
    return float(np.sign(s) * settings.beta / (2.0 * np.sqrt(sets.n))) * total


def dpsi_dt(sets: ConfigurationSets, schedule: LiftingSchedule, settings: EvalSettings,
            threads: int = 1) -> Estimate:
    """Analytic time derivative: split terms plus the p0/q0 boundary terms."""
    ev = Evaluator(sets, schedule, settings, threads=threads)
    return Estimate.from_draws(dpsi_dt_per_draw(ev))


def _dpsi1_bracket(ev: Evaluator, k1: int, variable: str) -> np.ndarray:
    sets, schedule = ev.sets, ev.schedule
    if variable == "p":
        r_a = replica_request(k1, measures.norm_product)
        r_b = replica_request(k1, measures.y_overlap_x_norms)
        coef = schedule.q[k1]
    else:
        r_a = replica_request(k1, measures.norm_product)
        r_b = replica_request(k1, measures.x_overlap_y_norms)
        coef = schedule.p[k1]
    draws = ev.per_draw([r_a, r_b])
    return coef * draws[r_a] - draws[r_b]


def dpsi1_dp(sets: ConfigurationSets, schedule: LiftingSchedule, settings: EvalSettings,
             k1: int, threads: int = 1) -> Estimate:
    """Derivative of the shifted functional; vanishes identically at t = 1."""
    _check_k1(schedule, k1)
    ev = Evaluator(sets, schedule, settings, threads=threads)
    dm = schedule.m[k1] - schedule.m[k1 + 1]
    per_draw = (1.0 - settings.t) * dm * _prefactor(settings, sets.n) * _dpsi1_bracket(ev, k1, "p")
    return Estimate.from_draws(per_draw)


def dpsi1_dq(sets: ConfigurationSets, schedule: LiftingSchedule, settings: EvalSettings,
             k1: int, threads: int = 1) -> Estimate:
    _check_k1(schedule, k1)
    ev = Evaluator(sets, schedule, settings, threads=threads)
    dm = schedule.m[k1] - schedule.m[k1 + 1]
    per_draw = (1.0 - settings.t) * dm * _prefactor(settings, sets.n) * _dpsi1_bracket(ev, k1, "q")
    return Estimate.from_draws(per_draw)


# --------------------------------------------------------------------------- #
# finite differences
# --------------------------------------------------------------------------- #

_TARGET_REQUEST = {"psi": PSI, "psi1": PSI1, "psi_s": PSI_S}


def default_fd_step(schedule: LiftingSchedule, variable: str, k1: int | None) -> float:
    """1e-3 of the variable's feasible range."""
    if variable == "t":
        return 1e-3
    if variable == "m":
        return 1e-3 * max(float(schedule.m[k1]), 1.0)
    vec = getattr(schedule, variable)
    span = float(vec[k1 - 1] - vec[k1 + 1])
    if span <= 0.0:
        raise ValueError(
            f"{variable}[{k1}] is pinned between equal neighbors; no feasible step")
    return 1e-3 * span


def _perturbed(schedule: LiftingSchedule, settings: EvalSettings, variable: str,
               k1: int | None, delta: float):
    if variable == "t":
        t = settings.t + delta
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t+{delta} leaves [0, 1]")
        return schedule, settings.replace(t=t)
    if variable == "m":
        value = schedule.m[k1] + delta
        if value <= 0.0:
            raise ValueError(f"m[{k1}]{delta:+g} must stay positive")
        return schedule.with_entry("m", k1, value), settings
    vec = getattr(schedule, variable)
    value = vec[k1] + delta
    if value > vec[k1 - 1]:
        raise ValueError(f"{variable} chain violated at k={k1}: {variable}[{k1}]{delta:+g} > {variable}[{k1 - 1}]")
    if value < vec[k1 + 1]:
        raise ValueError(f"{variable} chain violated at k={k1 + 1}: {variable}[{k1}]{delta:+g} < {variable}[{k1 + 1}]")
    return schedule.with_entry(variable, k1, value), settings


def finite_difference(target: str, variable: str, sets: ConfigurationSets,
                      schedule: LiftingSchedule, settings: EvalSettings,
                      step: float | None = None, k1: int | None = None,
                      threads: int = 1) -> Estimate:
    """Central difference under common random numbers.

    At a t boundary the difference is one-sided and the estimate is flagged.
    The step must keep the perturbed variable inside its feasible box; the
    violated chain constraint is named otherwise.
    """
    if variable in ("p", "q", "m") and k1 is None:
        raise ValueError("p/q/m derivatives need a level index k1")
    if k1 is not None and variable != "t":
        _check_k1(schedule, k1)
    req = _TARGET_REQUEST[target]
    h = float(step) if step is not None else default_fd_step(schedule, variable, k1)
    if h <= 0.0:
        raise ValueError("fd step must be positive")
    note = None
    if variable == "t" and (settings.t - h < 0.0 or settings.t + h > 1.0):
        # one-sided difference at the boundary of the interpolation interval
        if settings.t - h < 0.0:
            lo_sched, lo_set = schedule, settings
            hi_sched, hi_set = _perturbed(schedule, settings, "t", None, +h)
            note = "forward-difference at t boundary"
        else:
            lo_sched, lo_set = _perturbed(schedule, settings, "t", None, -h)
            hi_sched, hi_set = schedule, settings
            note = "backward-difference at t boundary"
        denom = h
    else:
        hi_sched, hi_set = _perturbed(schedule, settings, variable, k1, +h)
        lo_sched, lo_set = _perturbed(schedule, settings, variable, k1, -h)
        denom = 2.0 * h
    hi = Evaluator(sets, hi_sched, hi_set, threads=threads).per_draw([req])[req]
    lo = Evaluator(sets, lo_sched, lo_set, threads=threads).per_draw([req])[req]
    return Estimate.from_draws((hi - lo) / denom, note=note)


def derivative(request: DerivativeRequest, sets: ConfigurationSets,
               schedule: LiftingSchedule, settings: EvalSettings,
               threads: int = 1) -> Estimate:
    """Dispatch a derivative request to the analytic formula or the FD oracle."""
    if request.method == "finite-difference":
        return finite_difference(request.target, request.variable, sets, schedule,
                                 settings, step=request.fd_step, k1=request.k1,
                                 threads=threads)
    table = {
        ("psi", "p"): lambda: dpsi_dp(sets, schedule, settings, request.k1, threads),
        ("psi", "q"): lambda: dpsi_dq(sets, schedule, settings, request.k1, threads),
        ("psi", "t"): lambda: dpsi_dt(sets, schedule, settings, threads),
        ("psi1", "p"): lambda: dpsi1_dp(sets, schedule, settings, request.k1, threads),
        ("psi1", "q"): lambda: dpsi1_dq(sets, schedule, settings, request.k1, threads),
    }
    return table[(request.target, request.variable)]()
