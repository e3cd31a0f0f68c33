"""Nested-expectation estimators for the lifted free-energy functionals.

The interpolating functional is an outer expectation over the coupling
matrix G and the top noise block, of a depth-r ladder of inner expectations

    zeta_0 = Z,   zeta_k = E_k[ zeta_{k-1} ^ (m_k / m_{k-1}) ],

with per-draw value log(zeta_r) / (beta |s| sqrt(n) m_r).  Inner levels are
re-sampled independently for every outer-level sample (full nesting), all
ladder arithmetic stays in the log domain, and every Gaussian coordinate is
keyed to (seed, draw, level, sample) so evaluations at different lifting
parameters share identical noise.

Per-draw reweighted averages share the same sample tree: the level-k weights
w = zeta_{k-1}^{m_k/m_{k-1}} / (N_k zeta_k) are normalized within each
sibling group, prefix-marginal probability matrices are accumulated level by
level, and every overlap bracket reduces to bilinear forms in those
marginals.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .ensemble import ConfigurationSets
from .measures import (
    ARITY_PAIR_Y,
    ARITY_REPLICA,
    ARITY_SINGLE,
    OverlapFunctional,
    norm_product,
)
from .randomness import COMP_G, COMP_H, COMP_U2, COMP_U4, normal_block
from .schedule import DerivedCoefficients, LiftingSchedule, derived_coefficients, require_valid
from .util import logsumexp, mean_and_stderr

MODE_MC = "monte-carlo"
MODE_GH = "gauss-hermite"

_CHUNK_ELEMS = 4_000_000  # cap on chunk * paths * lx * ly; fixed so chunking never depends on threads


class BudgetError(RuntimeError):
    """Total nested sample product exceeds the configured cap."""


@dataclass(frozen=True)
class EvalSettings:
    """Evaluation point and sampling plan.

    ``samples`` is indexed by level: samples[0] is the innermost level 1,
    samples[r-1] is level r, and samples[r] (the last entry) is the number of
    outer (G, top-block) replications.  In Gauss-Hermite mode the inner
    entries are nodes per surviving Gaussian dimension.
    """

    t: float
    beta: float
    s: float
    samples: tuple[int, ...]
    seed: int
    mode: str = MODE_MC
    budget: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(int(v) for v in self.samples))
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.s == 0.0:
            raise ValueError("s must be nonzero")
        if self.mode not in (MODE_MC, MODE_GH):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if any(v < 2 for v in self.samples):
            raise ValueError("every per-level sample count must be >= 2")

    def replace(self, **kw) -> "EvalSettings":
        data = dict(
            t=self.t, beta=self.beta, s=self.s, samples=self.samples,
            seed=self.seed, mode=self.mode, budget=self.budget,
        )
        data.update(kw)
        return EvalSettings(**data)

    @property
    def n_outer(self) -> int:
        return self.samples[-1]


@dataclass(frozen=True)
class Estimate:
    """A numerical value with its standard error and sample accounting."""

    value: float
    std_error: float
    n_outer: int
    note: str | None = None

    @staticmethod
    def from_draws(values: np.ndarray, note: str | None = None) -> "Estimate":
        mean, se = mean_and_stderr(values)
        return Estimate(value=mean, std_error=se, n_outer=int(np.asarray(values).shape[0]), note=note)


# --------------------------------------------------------------------------- #
# zeta ladder
# --------------------------------------------------------------------------- #

def zeta_ladder(
    log_z: np.ndarray,
    schedule: LiftingSchedule,
    log_weights: Sequence[np.ndarray | float] | None = None,
) -> np.ndarray:
    """Reduce a nested array of log Z samples to log zeta_r.

    ``log_z`` carries the level axes last, outermost level first: shape
    (..., N_r, ..., N_1).  Level k is averaged with exponent m[k]/m[k-1] in
    the log domain; ``log_weights`` optionally replaces the default
    -log(N_k) of a plain average (entries indexed by level 1..r, each a
    scalar or a length-N_k vector, summing to one in the linear domain).
    """
    require_valid(schedule)
    lz = np.asarray(log_z, dtype=np.float64)
    r = schedule.r
    if lz.ndim < r:
        raise ValueError(f"log_z needs at least r={r} level axes")
    m = schedule.m
    for k in range(1, r + 1):
        ratio = m[k] / m[k - 1]
        if log_weights is not None and log_weights[k - 1] is not None:
            lw = np.asarray(log_weights[k - 1], dtype=np.float64)
        else:
            lw = -np.log(lz.shape[-1])
        lz = logsumexp(ratio * lz + lw, axis=-1)
    return lz


# --------------------------------------------------------------------------- #
# draw trees
# --------------------------------------------------------------------------- #

class DrawTree:
    """Projected Gaussian draws for one (sets, depth, shape, seed) tuple.

    Only the projections that enter the exponent matrix are stored: the
    cross matrix y^T G x, and per level the scalar u4, the ly-vector Y u2,
    and the lx-vector X h.  Arrays are broadcast-ready against
    (n_outer, s_r, ..., s_1); deterministic levels carry a leading 1.
    """

    def __init__(self, sets, r, inner_shape, n_outer, seed,
                 u4, yu2, xh, xgy, log_weights):
        self.sets = sets
        self.r = r
        self.inner_shape = tuple(inner_shape)   # (s_r, ..., s_1)
        self.n_outer = n_outer
        self.seed = seed
        self.u4 = u4        # level k -> array, leading dim n_outer or 1
        self.yu2 = yu2
        self.xh = xh
        self.xgy = xgy      # (n_outer, lx, ly)
        self.log_weights = log_weights  # level k -> scalar or (s_k,) vector
        self.paths = int(np.prod(self.inner_shape)) if self.inner_shape else 1


def _level_shape(inner_shape: tuple[int, ...], r: int, k: int) -> tuple[int, ...]:
    # nodes of level k span the ancestor axes (s_r .. s_k)
    return inner_shape[: r - k + 1]


def build_mc_tree(sets: ConfigurationSets, r: int, inner_counts: Sequence[int],
                  n_outer: int, seed: int) -> DrawTree:
    """Fully nested Monte Carlo tree: independent inner samples per branch."""
    inner_shape = tuple(reversed([int(c) for c in inner_counts]))  # (N_r,...,N_1)
    lx, ly, n, m = sets.lx, sets.ly, sets.n, sets.m
    xgy = np.empty((n_outer, lx, ly))
    u4: dict[int, np.ndarray] = {}
    yu2: dict[int, np.ndarray] = {}
    xh: dict[int, np.ndarray] = {}
    bufs = {k: ([], [], []) for k in range(1, r + 2)}
    for o in range(n_outer):
        g = normal_block(seed, o, 0, COMP_G, m * n).reshape(m, n)
        xgy[o] = sets.x @ g.T @ sets.y.T
        for k in range(1, r + 2):
            shape = _level_shape(inner_shape, r, k)
            cnt = int(np.prod(shape)) if shape else 1
            b4 = normal_block(seed, o, k, COMP_U4, cnt).reshape(shape)
            b2 = normal_block(seed, o, k, COMP_U2, cnt * m).reshape(shape + (m,))
            bh = normal_block(seed, o, k, COMP_H, cnt * n).reshape(shape + (n,))
            bufs[k][0].append(b4)
            bufs[k][1].append(b2 @ sets.y.T)
            bufs[k][2].append(bh @ sets.x.T)
    for k in range(1, r + 2):
        shape = _level_shape(inner_shape, r, k)
        pad = (1,) * (r - len(shape))  # trailing broadcast axes for levels below k
        u4[k] = np.stack(bufs[k][0]).reshape((n_outer,) + shape + pad)
        yu2[k] = np.stack(bufs[k][1]).reshape((n_outer,) + shape + pad + (ly,))
        xh[k] = np.stack(bufs[k][2]).reshape((n_outer,) + shape + pad + (lx,))
    log_weights = {k: float(-np.log(inner_shape[r - k])) for k in range(1, r + 1)}
    return DrawTree(sets, r, inner_shape, n_outer, seed, u4, yu2, xh, xgy, log_weights)


def gh_surviving_dims(coeffs: DerivedCoefficients, t: float, k: int, n: int, m: int) -> int:
    dims = 0
    if t > 0.0 and coeffs.a[k - 1] != 0.0:
        dims += 1
    if t < 1.0 and coeffs.b[k - 1] != 0.0:
        dims += m
    if t < 1.0 and coeffs.c[k - 1] != 0.0:
        dims += n
    return dims


def build_gh_tree(sets: ConfigurationSets, schedule: LiftingSchedule,
                  coeffs: DerivedCoefficients, settings: EvalSettings) -> DrawTree:
    """Tensor Gauss-Hermite nodes at the inner levels, Monte Carlo outside.

    Allowed only when every inner level has at most 3 surviving Gaussian
    coordinates after zero-coefficient elimination.
    """
    r = schedule.r
    n, m, lx, ly = sets.n, sets.m, sets.lx, sets.ly
    n_outer = settings.samples[-1]
    seed = settings.seed
    t = settings.t
    node_counts = []
    level_tables = {}
    for k in range(1, r + 1):
        dims = gh_surviving_dims(coeffs, t, k, n, m)
        if dims > 3:
            raise ValueError(
                f"gauss-hermite mode needs <= 3 surviving coordinates at level {k}, got {dims}")
        npts = settings.samples[k - 1]
        if dims == 0:
            nodes = np.zeros((1, 0))
            logw = np.zeros(1)
        else:
            x1, w1 = hermegauss(npts)
            w1 = w1 / np.sqrt(2.0 * np.pi)
            grids = np.meshgrid(*([x1] * dims), indexing="ij")
            nodes = np.stack([g.ravel() for g in grids], axis=-1)  # (npts**dims, dims)
            wgrids = np.meshgrid(*([w1] * dims), indexing="ij")
            logw = np.log(np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1))
        cnt = nodes.shape[0]
        u4v = np.zeros(cnt)
        u2v = np.zeros((cnt, m))
        hv = np.zeros((cnt, n))
        col = 0
        if t > 0.0 and coeffs.a[k - 1] != 0.0:
            u4v = nodes[:, col]
            col += 1
        if t < 1.0 and coeffs.b[k - 1] != 0.0:
            u2v = nodes[:, col:col + m]
            col += m
        if t < 1.0 and coeffs.c[k - 1] != 0.0:
            hv = nodes[:, col:col + n]
            col += n
        node_counts.append(cnt)
        level_tables[k] = (u4v, u2v @ sets.y.T, hv @ sets.x.T, logw)
    inner_shape = tuple(reversed(node_counts))  # (cnt_r, ..., cnt_1)
    u4: dict[int, np.ndarray] = {}
    yu2: dict[int, np.ndarray] = {}
    xh: dict[int, np.ndarray] = {}
    log_weights: dict[int, Any] = {}
    for k in range(1, r + 1):
        u4v, yu2v, xhv, logw = level_tables[k]
        cnt = u4v.shape[0]
        axis_pos = r - k  # position of level k's axis within inner_shape
        shape = (1,) * axis_pos + (cnt,) + (1,) * (r - 1 - axis_pos)
        u4[k] = u4v.reshape((1,) + shape)
        yu2[k] = yu2v.reshape((1,) + shape + (ly,))
        xh[k] = xhv.reshape((1,) + shape + (lx,))
        log_weights[k] = logw
    # outer level r+1 and G stay Monte Carlo
    xgy = np.empty((n_outer, lx, ly))
    top4 = np.empty(n_outer)
    top2 = np.empty((n_outer, ly))
    toph = np.empty((n_outer, lx))
    for o in range(n_outer):
        g = normal_block(seed, o, 0, COMP_G, m * n).reshape(m, n)
        xgy[o] = sets.x @ g.T @ sets.y.T
        top4[o] = normal_block(seed, o, r + 1, COMP_U4, 1)[0]
        top2[o] = normal_block(seed, o, r + 1, COMP_U2, m) @ sets.y.T
        toph[o] = normal_block(seed, o, r + 1, COMP_H, n) @ sets.x.T
    pad = (1,) * r
    u4[r + 1] = top4.reshape((n_outer,) + pad)
    yu2[r + 1] = top2.reshape((n_outer,) + pad + (ly,))
    xh[r + 1] = toph.reshape((n_outer,) + pad + (lx,))
    return DrawTree(sets, r, inner_shape, n_outer, seed, u4, yu2, xh, xgy, log_weights)


_tree_cache: dict[tuple, DrawTree] = {}
_tree_cache_lock = threading.Lock()
_TREE_CACHE_MAX = 8


def _get_mc_tree(sets, r, inner_counts, n_outer, seed) -> DrawTree:
    key = (sets.token, r, tuple(inner_counts), n_outer, seed)
    with _tree_cache_lock:
        tree = _tree_cache.get(key)
    if tree is not None:
        return tree
    tree = build_mc_tree(sets, r, inner_counts, n_outer, seed)
    with _tree_cache_lock:
        if len(_tree_cache) >= _TREE_CACHE_MAX:
            _tree_cache.pop(next(iter(_tree_cache)))
        _tree_cache[key] = tree
    return tree


# --------------------------------------------------------------------------- #
# request tokens
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Request:
    kind: str                                  # psi | psi_s | psi1 | replica | single | pair_y | logz
    split: int | None = None                   # replica split level k1 (0..r)
    func: OverlapFunctional | None = None

    def label(self) -> str:
        if self.func is not None:
            suffix = f":{self.func.name}"
        else:
            suffix = ""
        if self.split is not None:
            return f"{self.kind}[{self.split}]{suffix}"
        return f"{self.kind}{suffix}"


PSI = Request("psi")
PSI_S = Request("psi_s")
PSI1 = Request("psi1")
LOGZ = Request("logz")


def replica_request(k1: int, func: OverlapFunctional) -> Request:
    return Request("replica", split=k1, func=func)


def single_request(func: OverlapFunctional) -> Request:
    return Request("single", func=func)


def pair_y_request(func: OverlapFunctional) -> Request:
    return Request("pair_y", func=func)


# --------------------------------------------------------------------------- #
# evaluator
# --------------------------------------------------------------------------- #

class Evaluator:
    """Per-draw evaluation engine bound to (sets, schedule, settings).

    Draw trees are cached by (sets, seed, shape), so evaluators at perturbed
    parameters reuse identical noise; results are bit-reproducible for any
    thread count because chunk boundaries depend only on shapes and the
    outer reduction runs over the index-ordered per-draw array.
    """

    def __init__(self, sets: ConfigurationSets, schedule: LiftingSchedule,
                 settings: EvalSettings, threads: int = 1):
        require_valid(schedule)
        self.sets = sets
        self.schedule = schedule
        self.settings = settings
        self.threads = max(1, int(threads))
        self.coeffs = derived_coefficients(schedule)
        r = schedule.r
        if len(settings.samples) != r + 1:
            raise ValueError(
                f"settings.samples must have r+1={r + 1} entries (levels 1..r then outer), "
                f"got {len(settings.samples)}")
        if settings.mode == MODE_GH:
            self.tree = build_gh_tree(sets, schedule, self.coeffs, settings)
        else:
            self.tree = _get_mc_tree(sets, r, settings.samples[:-1], settings.samples[-1], settings.seed)
        total = self.tree.n_outer * self.tree.paths
        if total > settings.budget:
            raise BudgetError(
                f"nested sample product {total} exceeds budget {settings.budget}")
        self._chunk = max(1, _CHUNK_ELEMS // max(1, self.tree.paths * sets.lx * sets.ly))

    # -- assembly ----------------------------------------------------------- #

    def _slice_level(self, arr: np.ndarray, sl: slice) -> np.ndarray:
        return arr if arr.shape[0] == 1 else arr[sl]

    def _exponent_terms(self, sl: slice, with_scalar: bool):
        """Structured d0 chunk: (C, s_r..s_1, lx, ly)."""
        sets, tree = self.sets, self.tree
        t = self.settings.t
        st, s1 = np.sqrt(t), np.sqrt(1.0 - t)
        xn, yn = sets.tables.xnorm, sets.tables.ynorm
        r = tree.r
        rev = tree.inner_shape
        csize = len(range(*sl.indices(tree.n_outer)))
        full = (csize,) + rev + (sets.lx, sets.ly)
        d0 = np.zeros(full)
        if st != 0.0:
            d0 += st * tree.xgy[sl].reshape((csize,) + (1,) * r + (sets.lx, sets.ly))
            if with_scalar:
                agg4 = None
                for k in range(1, r + 2):
                    a = self.coeffs.a[k - 1]
                    if a == 0.0:
                        continue
                    piece = a * self._slice_level(tree.u4[k], sl)
                    agg4 = piece if agg4 is None else agg4 + piece
                if agg4 is not None:
                    d0 += st * agg4[..., None, None] * np.outer(xn, yn)
        if s1 != 0.0:
            aggy = None
            for k in range(1, r + 2):
                b = self.coeffs.b[k - 1]
                if b == 0.0:
                    continue
                piece = b * self._slice_level(tree.yu2[k], sl)
                aggy = piece if aggy is None else aggy + piece
            if aggy is not None:
                d0 += s1 * xn[:, None] * aggy[..., None, :]
            aggh = None
            for k in range(1, r + 2):
                c = self.coeffs.c[k - 1]
                if c == 0.0:
                    continue
                piece = c * self._slice_level(tree.xh[k], sl)
                aggh = piece if aggh is None else aggh + piece
            if aggh is not None:
                d0 += s1 * aggh[..., :, None] * yn[None, :]
        return d0.reshape(csize, tree.paths, sets.lx, sets.ly)

    def _ladder(self, log_z_flat: np.ndarray):
        """Log ladder over flattened inner axes; returns (log zeta_r, per-level log Phi weights)."""
        m = self.schedule.m
        r = self.schedule.r
        rev = self.tree.inner_shape
        csize = log_z_flat.shape[0]
        cur = log_z_flat
        phis = []
        for k in range(1, r + 1):
            sk = rev[r - k]
            ratio = m[k] / m[k - 1]
            lw = self.tree.log_weights[k]
            lw = np.asarray(lw, dtype=np.float64)
            shaped = cur.reshape(csize, -1, sk)
            tmp = ratio * shaped + lw
            red = logsumexp(tmp, axis=-1)
            phis.append(tmp - red[..., None])
            cur = red
        return cur[:, 0], phis

    # -- per-draw evaluation ------------------------------------------------ #

    def per_draw(self, requests: Sequence[Request]) -> dict[Request, np.ndarray]:
        requests = list(dict.fromkeys(requests))
        n_outer = self.tree.n_outer
        out: dict[Request, np.ndarray] = {}
        for req in requests:
            if req.kind == "logz":
                out[req] = np.empty((n_outer, self.tree.paths))
            else:
                out[req] = np.empty(n_outer)
        starts = list(range(0, n_outer, self._chunk))
        slices = [slice(s, min(s + self._chunk, n_outer)) for s in starts]
        if self.threads == 1 or len(slices) == 1:
            for sl in slices:
                self._eval_chunk(sl, requests, out)
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(lambda sl: self._eval_chunk(sl, requests, out), slices))
        return out

    def _eval_chunk(self, sl: slice, requests: Sequence[Request],
                    out: dict[Request, np.ndarray]) -> None:
        sets = self.sets
        st = self.settings
        r = self.schedule.r
        m = self.schedule.m
        p, q = self.schedule.p, self.schedule.q
        beta, s = st.beta, st.s
        prefac = 1.0 / (beta * abs(s) * np.sqrt(sets.n) * m[r])

        kinds = {req.kind for req in requests}
        need_psi = "psi" in kinds or "psi1" in kinds
        need_psis = "psi_s" in kinds
        need_logz = "logz" in kinds
        bracket_reqs = [req for req in requests if req.kind in ("replica", "single", "pair_y")]
        psi1_req = "psi1" in kinds
        need_measures = bool(bracket_reqs) or psi1_req

        d0 = self._exponent_terms(sl, with_scalar=True)
        bd0 = beta * d0
        log_c = logsumexp(bd0, axis=-1)                # (C, F, lx)
        log_z = logsumexp(s * log_c, axis=-1)          # (C, F)
        if need_logz:
            out[LOGZ][sl] = log_z
        lz_final, phis = self._ladder(log_z)
        psi_draw = lz_final * prefac
        if need_psi:
            if PSI in out:
                out[PSI][sl] = psi_draw

        if need_psis:
            if st.t > 0.0 and np.any(self.coeffs.a != 0.0):
                d0s = self._exponent_terms(sl, with_scalar=False)
                bzs = beta * d0s
                lcs = logsumexp(bzs, axis=-1)
                lzs = logsumexp(s * lcs, axis=-1)
                lzs_final, _ = self._ladder(lzs)
            else:
                lzs_final = lz_final
            out[PSI_S][sl] = lzs_final * prefac

        if not need_measures:
            return

        csize = d0.shape[0]
        gamma = np.exp(bd0 + (s - 1.0) * log_c[..., None] - log_z[..., None, None])

        # prefix marginals M[k1]: replicas independent through levels <= k1
        marg = [gamma]
        cur = gamma
        rev = self.tree.inner_shape
        for k in range(1, r + 1):
            sk = rev[r - k]
            w = np.exp(phis[k - 1])                    # (C, F_{k+1}, sk)
            shaped = cur.reshape(csize, -1, sk, sets.lx, sets.ly)
            cur = np.einsum("cfkij,cfk->cfij", shaped, w)
            marg.append(cur)
        # outer weights per split
        ow: dict[int, np.ndarray] = {r: np.ones((csize, 1))}
        for k1 in range(r - 1, -1, -1):
            w = np.exp(phis[k1])                       # level k1+1: (C, F_{k1+2}, s_{k1+1})
            ow[k1] = (ow[k1 + 1][..., None] * w).reshape(csize, -1)

        rho = cond = None
        for req in bracket_reqs:
            func = req.func
            if req.kind == "replica":
                gx, hy = func.tables(sets)
                mm = marg[req.split]
                tmp = np.einsum("ip,cfij->cfpj", gx, mm)
                tmp = np.einsum("cfpj,jq->cfpq", tmp, hy)
                v = np.einsum("cfpq,cfpq->cf", tmp, mm)
                out[req][sl] = np.einsum("cf,cf->c", ow[req.split], v)
            elif req.kind == "single":
                (f2,) = func.tables(sets)
                v = np.einsum("cfij,ij->cf", gamma, f2)
                out[req][sl] = np.einsum("cf,cf->c", ow[0], v)
            else:  # pair_y
                w_x, hmat = func.tables(sets)
                if rho is None:
                    rho = np.exp(s * log_c - log_z[..., None])
                    cond = np.exp(bd0 - log_c[..., None])
                tmp = np.einsum("cfij,jk->cfik", cond, hmat)
                vi = np.einsum("cfik,cfik->cfi", tmp, cond)
                v = np.einsum("cfi,cfi,i->cf", vi, rho, w_x)
                out[req][sl] = np.einsum("cf,cf->c", ow[0], v)

        if psi1_req:
            np_split = np.empty((r + 1, csize))
            gx, hy = norm_product.tables(sets)
            for k1 in range(r + 1):
                mm = marg[k1]
                tmp = np.einsum("ip,cfij->cfpj", gx, mm)
                tmp = np.einsum("cfpj,jq->cfpq", tmp, hy)
                v = np.einsum("cfpq,cfpq->cf", tmp, mm)
                np_split[k1] = np.einsum("cf,cf->c", ow[k1], v)
            corr = np.zeros(csize)
            for k in range(1, r + 2):
                term = p[k - 1] * q[k - 1] * np_split[k - 1]
                if k <= r and p[k] * q[k] != 0.0:
                    term = term - p[k] * q[k] * np_split[k]
                corr += m[k] * term
            sign = np.sign(s)
            out[PSI1][sl] = psi_draw - sign * s * beta / (2.0 * np.sqrt(sets.n)) * corr

    # -- public estimates ---------------------------------------------------- #

    def psi(self) -> Estimate:
        return Estimate.from_draws(self.per_draw([PSI])[PSI])

    def psi1(self) -> Estimate:
        return Estimate.from_draws(self.per_draw([PSI1])[PSI1])

    def psi_s(self) -> Estimate:
        return Estimate.from_draws(self.per_draw([PSI_S])[PSI_S])

    def gamma_single_average(self, func: OverlapFunctional) -> Estimate:
        if func.arity == ARITY_SINGLE:
            req = single_request(func)
        elif func.arity == ARITY_PAIR_Y:
            req = pair_y_request(func)
        else:
            raise ValueError("functional arity does not match a single-replica measure")
        return Estimate.from_draws(self.per_draw([req])[req])

    def gamma_replica_average(self, func: OverlapFunctional, k1: int) -> Estimate:
        if func.arity != ARITY_REPLICA:
            raise ValueError("replica averages need a two-replica functional")
        if not 0 <= k1 <= self.schedule.r:
            raise ValueError(f"split level k1 must lie in 0..{self.schedule.r}")
        req = replica_request(k1, func)
        return Estimate.from_draws(self.per_draw([req])[req])


# --------------------------------------------------------------------------- #
# module-level operations
# --------------------------------------------------------------------------- #

def eval_psi(sets, schedule, settings, threads: int = 1) -> Estimate:
    """Monte Carlo estimate of the interpolating free-energy functional."""
    return Evaluator(sets, schedule, settings, threads=threads).psi()


def eval_psi1(sets, schedule, settings, threads: int = 1) -> Estimate:
    """The functional shifted by the telescoping norm-product correction."""
    return Evaluator(sets, schedule, settings, threads=threads).psi1()


def eval_psi_s(sets, schedule, settings, threads: int = 1) -> Estimate:
    """Variant without the coupled scalar noise term in the exponent."""
    return Evaluator(sets, schedule, settings, threads=threads).psi_s()


def gamma_single_average(sets, schedule, settings, func, threads: int = 1) -> Estimate:
    return Evaluator(sets, schedule, settings, threads=threads).gamma_single_average(func)


def gamma_replica_average(sets, schedule, settings, func, k1: int, threads: int = 1) -> Estimate:
    return Evaluator(sets, schedule, settings, threads=threads).gamma_replica_average(func, k1)


def closed_form_single_pair(schedule: LiftingSchedule, settings: EvalSettings,
                            sets: ConfigurationSets, scalar_noise: bool = True) -> float:
    """Exact value when each side holds a single configuration.

    With one pair the partition value is lognormal level by level, so the
    nested ladder integrates in closed form: each inner level k contributes
    sign(s) s beta m_k sigma_k^2 / (2 sqrt(n)) with

        sigma_k^2 = |x|^2 |y|^2 (t a_k^2 + (1 - t)(b_k^2 + c_k^2));

    the coupling matrix and the top-level block enter only linearly and
    vanish under the outer expectation.  ``scalar_noise=False`` drops the
    t a_k^2 part (the variant without the coupled scalar noise).
    """
    if sets.lx * sets.ly != 1:
        raise ValueError("closed form requires exactly one configuration per side")
    require_valid(schedule)
    coeffs = derived_coefficients(schedule)
    xn = float(sets.tables.xnorm[0])
    yn = float(sets.tables.ynorm[0])
    t, beta, s = settings.t, settings.beta, settings.s
    var = (1.0 - t) * (coeffs.b ** 2 + coeffs.c ** 2)
    if scalar_noise:
        var = var + t * coeffs.a ** 2
    var = var * (xn * yn) ** 2
    total = float(np.dot(schedule.m[1:schedule.r + 1], var[:schedule.r]))
    return float(np.sign(s) * s * beta * total / (2.0 * np.sqrt(sets.n)))
