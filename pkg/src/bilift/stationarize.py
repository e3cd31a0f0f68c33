"""Solve the stationarity system along the interpolating path.

At each interior level k1 the stationarity conditions set the two bracket
residuals to zero,

    R_p[k1] = < |x||x'| ( q_k1 |y||y'| - y'^T y ) >_{split k1}  = 0
    R_q[k1] = < |y||y'| ( p_k1 |x||x'| - x'^T x ) >_{split k1}  = 0,

plus, in the complete frame, the FD gradient of the shifted functional in
each exponent m_k1.  The raw brackets (without their (1-t)(m_k1 - m_{k1+1})
prefactors) serve as residuals so t -> 1 or merged levels cannot satisfy an
equation spuriously; at exactly t = 1 the p/q equations vanish identically
and only the exponent equations remain.

The solver is a block scheme: damped fixed-point sweeps on (p, q) with a
monotone-box projection after each step, then safeguarded secant steps on m
driving the FD gradients to zero.  Every residual evaluation reuses one
frozen draw tree (common random numbers), so iterates move on a fixed,
reproducible landscape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import measures
from .derivatives import finite_difference
from .ensemble import ConfigurationSets, is_unit_norm
from .estimator import PSI1, PSI_S, Estimate, EvalSettings, Evaluator, replica_request
from .schedule import LiftingSchedule, require_valid, validate
from .util import mean_and_stderr, project_nonincreasing


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-3
    max_iter: int = 200
    damping: float = 0.5
    starts: int = 3
    m_min: float = 0.02
    m_max: float = 1.0
    fd_step: float = 1e-3
    threads: int = 1


@dataclass(frozen=True)
class StationaryPoint:
    t: float
    schedule: LiftingSchedule
    residuals: dict
    iterations: int
    converged: bool

    def max_residual(self) -> float:
        worst = 0.0
        for ests in self.residuals.values():
            for est in ests:
                worst = max(worst, abs(est.value))
        return worst


@dataclass(frozen=True)
class PathScan:
    ts: tuple[float, ...]
    points: tuple[StationaryPoint, ...]
    psi1: tuple[Estimate, ...]
    max_deviation: Estimate
    diagnostics: tuple
    warm_start: tuple[str, ...]
    jump_flags: tuple[bool, ...]


def _within(est: Estimate, tol: float) -> bool:
    return abs(est.value) <= max(tol, 2.0 * est.std_error)


def _pq_residual_draws(ev: Evaluator):
    """Per-draw residual arrays and bracket means for every interior level."""
    sched = ev.schedule
    r = sched.r
    reqs = []
    per_level = {}
    for k1 in range(1, r + 1):
        rs = {
            "np": replica_request(k1, measures.norm_product),
            "yd": replica_request(k1, measures.y_overlap_x_norms),
            "xd": replica_request(k1, measures.x_overlap_y_norms),
        }
        per_level[k1] = rs
        reqs.extend(rs.values())
    draws = ev.per_draw(reqs)
    res_p, res_q, targets = {}, {}, {}
    for k1 in range(1, r + 1):
        rs = per_level[k1]
        np_d, yd_d, xd_d = draws[rs["np"]], draws[rs["yd"]], draws[rs["xd"]]
        res_p[k1] = sched.q[k1] * np_d - yd_d
        res_q[k1] = sched.p[k1] * np_d - xd_d
        np_mean = max(mean_and_stderr(np_d)[0], 1e-300)
        targets[k1] = (
            mean_and_stderr(xd_d)[0] / np_mean,   # p target: scaled x-overlap average
            mean_and_stderr(yd_d)[0] / np_mean,   # q target
        )
    return res_p, res_q, targets


def _m_residuals(sets, sched, settings, opts) -> dict[int, Estimate]:
    out = {}
    for k1 in range(1, sched.r + 1):
        step = opts.fd_step * max(float(sched.m[k1]), 1.0)
        step = min(step, 0.49 * float(sched.m[k1]))  # keep m positive on both sides
        out[k1] = finite_difference("psi1", "m", sets, sched, settings,
                                    step=step, k1=k1, threads=opts.threads)
    return out


def _solve_single(sets, settings, init: LiftingSchedule, opts: SolverOptions,
                  solve_m: bool) -> StationaryPoint:
    require_valid(init)
    sched = init
    t = settings.t
    r = sched.r
    iterations = 0
    m_history: dict[int, tuple[float, float]] = {}
    pq_vacuous = (t == 1.0)

    def pq_sweeps(sched, budget):
        nonlocal iterations
        res_p = res_q = None
        for _ in range(budget):
            ev = Evaluator(sets, sched, settings, threads=opts.threads)
            res_p_d, res_q_d, targets = _pq_residual_draws(ev)
            res_p = {k: Estimate.from_draws(v) for k, v in res_p_d.items()}
            res_q = {k: Estimate.from_draws(v) for k, v in res_q_d.items()}
            iterations += 1
            if all(_within(res_p[k], opts.tol) and _within(res_q[k], opts.tol)
                   for k in range(1, r + 1)):
                break
            p_new = np.array(sched.p)
            q_new = np.array(sched.q)
            for k in range(1, r + 1):
                p_t, q_t = targets[k]
                p_new[k] = sched.p[k] + opts.damping * (p_t - sched.p[k])
                q_new[k] = sched.q[k] + opts.damping * (q_t - sched.q[k])
            p_new[1:r + 1] = project_nonincreasing(p_new[1:r + 1], upper=float(sched.p[0]))
            q_new[1:r + 1] = project_nonincreasing(q_new[1:r + 1], upper=float(sched.q[0]))
            sched = sched.replace(p=p_new, q=q_new)
            assert validate(sched).ok
        return sched, res_p, res_q

    res_p = res_q = None
    res_m: dict[int, Estimate] | None = None
    outer_budget = 12 if solve_m else 1
    m_step = {k1: 0.2 for k1 in range(1, r + 1)}
    for _ in range(outer_budget):
        if not pq_vacuous:
            sched, res_p, res_q = pq_sweeps(sched, max(1, opts.max_iter - iterations))
        if not solve_m:
            break
        res_m = _m_residuals(sets, sched, settings, opts)
        iterations += 1
        if all(_within(g, opts.tol) for g in res_m.values()):
            break
        if iterations >= opts.max_iter or max(m_step.values()) < 1e-3:
            break
        # derivative-free shrinking scan: the FD-gradient landscape is frozen
        # (common random numbers), so the argmin of |g| is a deterministic
        # target whether or not an interior root exists
        m_new = np.array(sched.m)
        for k1, est in res_m.items():
            if abs(est.value) <= max(opts.tol, 2.0 * est.std_error):
                m_step[k1] *= 0.5
                continue
            cur = float(sched.m[k1])
            cands = {cur: abs(est.value)}
            for delta in (+m_step[k1], -m_step[k1]):
                m_try = float(np.clip(cur + delta, opts.m_min, opts.m_max))
                if m_try in cands:
                    continue
                trial = sched.replace(m=_with_m(sched.m, k1, m_try))
                g_try = _m_residuals(sets, trial, settings, opts)[k1]
                cands[m_try] = abs(g_try.value)
            best = min(cands, key=cands.get)
            if best == cur:
                m_step[k1] *= 0.5
            m_new[k1] = best
        sched = sched.replace(m=m_new)

    if pq_vacuous:
        zero = Estimate(0.0, 0.0, settings.n_outer, note="vacuous at t=1")
        res_p = {k: zero for k in range(1, r + 1)}
        res_q = {k: zero for k in range(1, r + 1)}
    elif res_p is None:
        sched, res_p, res_q = pq_sweeps(sched, 1)
    if solve_m and res_m is None:
        res_m = _m_residuals(sets, sched, settings, opts)

    residuals = {
        "p": tuple(res_p[k] for k in range(1, r + 1)),
        "q": tuple(res_q[k] for k in range(1, r + 1)),
    }
    converged = all(_within(e, opts.tol) for fam in residuals.values() for e in fam)
    if solve_m:
        residuals["m"] = tuple(res_m[k] for k in range(1, r + 1))
        converged = converged and all(_within(e, opts.tol) for e in residuals["m"])
    return StationaryPoint(t=t, schedule=sched, residuals=residuals,
                           iterations=iterations, converged=converged)


def _random_feasible(r: int, rng: np.random.Generator, p0: float, q0: float) -> LiftingSchedule:
    p = np.sort(rng.uniform(0.0, p0, size=r))[::-1]
    q = np.sort(rng.uniform(0.0, q0, size=r))[::-1]
    m = rng.uniform(0.3, 1.0, size=r)
    return LiftingSchedule(
        r=r,
        m=np.concatenate([[1.0], m, [0.0]]),
        p=np.concatenate([[p0], p, [0.0]]),
        q=np.concatenate([[q0], q, [0.0]]),
    )


def _candidate_starts(sets, settings, init, opts, solve_m):
    yield init, "init"
    rng = np.random.default_rng(settings.seed ^ 0x5F5E1)
    for i in range(opts.starts):
        yield _random_feasible(init.r, rng, float(init.p[0]), float(init.q[0])), f"random-{i}"
    if settings.t > 0.0:
        anchor_opts = SolverOptions(
            tol=opts.tol, max_iter=min(opts.max_iter, 60), damping=opts.damping,
            starts=0, m_min=opts.m_min, m_max=opts.m_max, fd_step=opts.fd_step,
            threads=opts.threads)
        anchor = _solve_single(sets, settings.replace(t=0.0), init, anchor_opts, solve_m)
        yield anchor.schedule, "t0-anchor"


def solve_complete_frame(sets: ConfigurationSets, settings: EvalSettings,
                         init: LiftingSchedule,
                         opts: SolverOptions = SolverOptions()) -> StationaryPoint:
    """Drive all three equation families (p, q, and FD m gradients) to zero."""
    return _multi_start(sets, settings, init, opts, solve_m=True)


def solve_modulo_m(sets: ConfigurationSets, settings: EvalSettings,
                   init: LiftingSchedule,
                   opts: SolverOptions = SolverOptions()) -> StationaryPoint:
    """Solve only the p and q families at the fixed exponent vector of ``init``."""
    return _multi_start(sets, settings, init, opts, solve_m=False)


def _multi_start(sets, settings, init, opts, solve_m):
    best: StationaryPoint | None = None
    for start, _label in _candidate_starts(sets, settings, init, opts, solve_m):
        point = _solve_single(sets, settings, start, opts, solve_m)
        if best is None or point.max_residual() < best.max_residual():
            best = point
        if best.converged and best.max_residual() <= opts.tol:
            break
    return best


# --------------------------------------------------------------------------- #
# scans and identities
# --------------------------------------------------------------------------- #

def concentration_diagnostics(sets, settings, sched, threads=1) -> tuple[Estimate, ...]:
    """Per-level overlap-product concentration values at a candidate point:
    s (m_k1 - m_{k1+1}) < p_k1 q_k1 |x||x'||y||y'| - (x'^T x)(y'^T y) >_{split k1}."""
    ev = Evaluator(sets, sched, settings, threads=threads)
    out = []
    for k1 in range(1, sched.r + 1):
        r_np = replica_request(k1, measures.norm_product)
        r_dd = replica_request(k1, measures.overlap_product)
        draws = ev.per_draw([r_np, r_dd])
        dm = sched.m[k1] - sched.m[k1 + 1]
        per = settings.s * dm * (sched.p[k1] * sched.q[k1] * draws[r_np] - draws[r_dd])
        out.append(Estimate.from_draws(per))
    return tuple(out)


def path_scan(sets: ConfigurationSets, settings: EvalSettings, t_grid,
              init: LiftingSchedule, opts: SolverOptions = SolverOptions(),
              frame: str = "complete", jump_threshold: float = 0.25) -> PathScan:
    """Stationarize along an increasing t grid with warm starts.

    The shifted functional is evaluated at every solved point under common
    random numbers, and the largest pairwise deviation across the grid is
    reported with a paired error bar (a finite-size diagnostic, not an
    assertion).
    """
    ts = tuple(float(t) for t in t_grid)
    if any(not 0.0 <= t <= 1.0 for t in ts) or list(ts) != sorted(set(ts)):
        raise ValueError("t grid must be strictly increasing within [0, 1]")
    solve = solve_complete_frame if frame == "complete" else solve_modulo_m
    points: list[StationaryPoint] = []
    psi1_draws: list[np.ndarray] = []
    warm: list[str] = []
    jumps: list[bool] = []
    diagnostics = []
    prev: StationaryPoint | None = None
    for t in ts:
        settings_t = settings.replace(t=t)
        start = prev.schedule if prev is not None else init
        warm.append("previous-t" if prev is not None else "init")
        point = solve(sets, settings_t, start, opts)
        points.append(point)
        ev = Evaluator(sets, point.schedule, settings_t, threads=opts.threads)
        psi1_draws.append(ev.per_draw([PSI1])[PSI1])
        diagnostics.append(concentration_diagnostics(sets, settings_t, point.schedule,
                                                     threads=opts.threads))
        if prev is not None:
            jump = max(
                float(np.max(np.abs(point.schedule.p - prev.schedule.p))),
                float(np.max(np.abs(point.schedule.q - prev.schedule.q))),
                float(np.max(np.abs(point.schedule.m - prev.schedule.m))),
            )
            jumps.append(jump > jump_threshold)
        prev = point
    psi1_ests = tuple(Estimate.from_draws(d) for d in psi1_draws)
    dev_val, dev_se, pair = 0.0, 0.0, None
    for i in range(len(ts)):
        for j in range(i + 1, len(ts)):
            diff = psi1_draws[i] - psi1_draws[j]
            mv, se = mean_and_stderr(diff)
            if abs(mv) >= dev_val:
                dev_val, dev_se, pair = abs(mv), se, (i, j)
    deviation = Estimate(dev_val, dev_se, settings.n_outer,
                         note=f"max pairwise psi1 deviation at grid pair {pair}")
    return PathScan(ts=ts, points=tuple(points), psi1=psi1_ests,
                    max_deviation=deviation, diagnostics=tuple(diagnostics),
                    warm_start=tuple(warm), jump_flags=tuple(jumps))


@dataclass(frozen=True)
class IdentityReport:
    lhs: Estimate                 # coupled-end value at its stationary point
    rhs: Estimate                 # decoupled-end value plus the telescoped correction
    difference: Estimate          # paired per-draw difference (finite-n gap, reported)
    point_t1: StationaryPoint
    point_t0: StationaryPoint
    correction: float


def sfl_identity_check(sets: ConfigurationSets, settings: EvalSettings,
                       init: LiftingSchedule,
                       opts: SolverOptions = SolverOptions()) -> IdentityReport:
    """Compare the two ends of the stationarized path through the scalar-free
    functional; requires unit-norm sets."""
    ux, uy = is_unit_norm(sets)
    if not (ux and uy):
        raise ValueError("identity check requires unit-norm sets on both sides")
    point1 = solve_complete_frame(sets, settings.replace(t=1.0), init, opts)
    point0 = solve_complete_frame(sets, settings.replace(t=0.0), init, opts)
    s, beta = settings.s, settings.beta
    sched0 = point0.schedule
    pq = sched0.p * sched0.q
    corr = float(-np.sign(s) * s * beta / (2.0 * np.sqrt(sets.n))
                 * np.dot(pq[:-1] - pq[1:], sched0.m[1:]))
    ev1 = Evaluator(sets, point1.schedule, settings.replace(t=1.0), threads=opts.threads)
    ev0 = Evaluator(sets, sched0, settings.replace(t=0.0), threads=opts.threads)
    lhs_draws = ev1.per_draw([PSI_S])[PSI_S]
    rhs_draws = ev0.per_draw([PSI_S])[PSI_S] + corr
    return IdentityReport(
        lhs=Estimate.from_draws(lhs_draws),
        rhs=Estimate.from_draws(rhs_draws),
        difference=Estimate.from_draws(lhs_draws - rhs_draws),
        point_t1=point1,
        point_t0=point0,
        correction=corr,
    )


# --------------------------------------------------------------------------- #
# brute-force lattice oracle (used to cross-check the solver)
# --------------------------------------------------------------------------- #

def grid_search_complete_frame(sets, settings, grid_p, grid_q, grid_m,
                               p0: float = 1.0, q0: float = 1.0,
                               fd_step: float = 1e-3, threads: int = 1):
    """Exhaustive depth-1 lattice search minimizing the max |residual|.

    Slow by design: evaluates the three stationarity residuals at every
    (p1, q1, m1) lattice point on the same frozen draw tree the solver uses.
    Returns (best_point_tuple, best_max_residual).
    """
    best = None
    best_val = np.inf
    for m1 in grid_m:
        for p1 in grid_p:
            for q1 in grid_q:
                sched = LiftingSchedule(r=1, m=[1.0, m1, 0.0],
                                        p=[p0, p1, 0.0], q=[q0, q1, 0.0])
                ev = Evaluator(sets, sched, settings, threads=threads)
                res_p_d, res_q_d, _ = _pq_residual_draws(ev)
                rp = mean_and_stderr(res_p_d[1])[0]
                rq = mean_and_stderr(res_q_d[1])[0]
                step = min(fd_step, 0.49 * m1)
                gm = finite_difference("psi1", "m", sets, sched, settings,
                                       step=step, k1=1, threads=threads).value
                val = max(abs(rp), abs(rq), abs(gm))
                if val < best_val:
                    best_val = val
                    best = (float(p1), float(q1), float(m1))
    return best, best_val
