"""Interpolated exponent matrix, log-domain partition structures, base measure.

All partition arithmetic stays in the log domain with max subtraction so
beta * |d0| up to ~1e4 never overflows; the exponentiated per-cell weights
are only materialized as normalized probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import ConfigurationSets
from .randomness import COMP_G, COMP_H, COMP_U2, COMP_U4, normal_block
from .schedule import DerivedCoefficients
from .util import logsumexp


@dataclass(frozen=True)
class GaussianEnvironment:
    """One joint draw of G and the per-level blocks {u4[k], u2[k], h[k]}.

    Level arrays are indexed 0..r (level k stored at index k-1).  A given
    (seed, index) pair always regenerates bit-identical values.
    """

    g: np.ndarray            # (m, n)
    u4: np.ndarray           # (r+1,)
    u2: np.ndarray           # (r+1, m)
    h: np.ndarray            # (r+1, n)
    seed: int
    index: int

    @property
    def r(self) -> int:
        return self.u4.shape[0] - 1


def sample_environment(n: int, m: int, r: int, seed: int, index: int) -> GaussianEnvironment:
    """Deterministic draw via disjoint counter subspaces per (level, component)."""
    if r < 1:
        raise ValueError("lifting depth r must be >= 1")
    g = normal_block(seed, index, 0, COMP_G, m * n).reshape(m, n)
    u4 = np.empty(r + 1)
    u2 = np.empty((r + 1, m))
    h = np.empty((r + 1, n))
    for k in range(1, r + 2):
        u4[k - 1] = normal_block(seed, index, k, COMP_U4, 1)[0]
        u2[k - 1] = normal_block(seed, index, k, COMP_U2, m)
        h[k - 1] = normal_block(seed, index, k, COMP_H, n)
    return GaussianEnvironment(g=g, u4=u4, u2=u2, h=h, seed=seed, index=index)


def d0_matrix(
    sets: ConfigurationSets,
    coeffs: DerivedCoefficients,
    env: GaussianEnvironment,
    t: float,
) -> np.ndarray:
    """The lx-by-ly exponent matrix blending the coupled and decoupled fields.

    d0[i1,i2] = sqrt(t) y_i2^T G x_i1
              + sqrt(1-t) |x_i1| y_i2^T (sum_k b_k u2[k])
              + sqrt(t)   |x_i1| |y_i2| (sum_k a_k u4[k])
              + sqrt(1-t) |y_i2| (sum_k c_k h[k])^T x_i1

    The aggregated noise vectors are formed once and reused for all cells.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("interpolation time t must lie in [0, 1]")
    if env.g.shape != (sets.m, sets.n):
        raise ValueError(f"environment G has shape {env.g.shape}, sets need ({sets.m}, {sets.n})")
    if env.u2.shape[1] != sets.m or env.h.shape[1] != sets.n:
        raise ValueError("environment vector blocks do not match the set dimensions")
    if coeffs.a.shape[0] != env.u4.shape[0]:
        raise ValueError("coefficient depth does not match the environment depth")
    xn = sets.tables.xnorm
    yn = sets.tables.ynorm
    st, s1 = np.sqrt(t), np.sqrt(1.0 - t)
    agg_u4 = float(coeffs.a @ env.u4)
    agg_u2 = coeffs.b @ env.u2          # (m,)
    agg_h = coeffs.c @ env.h            # (n,)
    d0 = np.zeros((sets.lx, sets.ly))
    if st != 0.0:
        d0 += st * (sets.x @ env.g.T @ sets.y.T)
        d0 += st * agg_u4 * np.outer(xn, yn)
    if s1 != 0.0:
        d0 += s1 * np.outer(xn, sets.y @ agg_u2)
        d0 += s1 * np.outer(sets.x @ agg_h, yn)
    return d0


@dataclass(frozen=True)
class LogPartitionState:
    d0: np.ndarray     # (lx, ly)
    log_c: np.ndarray  # (lx,) log of the inner sums
    log_z: float
    beta: float
    s: float


def log_partition(d0: np.ndarray, beta: float, s: float) -> LogPartitionState:
    """log C[i1] = LSE_{i2} beta*d0[i1,i2]; log Z = LSE_{i1} s*log C[i1]."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if s == 0.0:
        raise ValueError("s must be nonzero")
    d0 = np.asarray(d0, dtype=np.float64)
    log_c = logsumexp(beta * d0, axis=-1)
    log_z = float(logsumexp(s * log_c, axis=-1))
    return LogPartitionState(d0=d0, log_c=log_c, log_z=log_z, beta=beta, s=s)


def gamma0(state: LogPartitionState, s: float | None = None) -> np.ndarray:
    """Base probability matrix over (i1, i2); sums to 1 up to rounding."""
    if s is None:
        s = state.s
    expo = (s - 1.0) * state.log_c[:, None] - state.log_z + state.beta * state.d0
    return np.exp(expo)
