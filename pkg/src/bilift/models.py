"""Bilinear ground-state model families and their brute-force oracles.

Each family fixes the two configuration sets and the sign of s:

* hopfield-positive / hopfield-negative: scaled sign vectors against unit
  sphere samples; the beta -> infinity value is E max_x |Gx|_2 / sqrt(n)
  (resp. the min).
* little-positive / little-negative: scaled sign vectors on both sides;
  the sphere maximization becomes E max_x |Gx|_1 / sqrt(nm).
* spherical-perceptron / binary-perceptron: s = -1 min-max against the
  positive-orthant part of the sphere, E min_x |max(Gx, 0)|_2 / sqrt(n).

Continuous sets enter the lifted functional only through finite samples;
the analytic sphere and orthant maximizations live in the oracles.  Proxies
evaluate the scalar-noise-free functional at the coupled end over a beta
ladder and extrapolate linearly in 1/beta; for the min-max families
(s = -1) the functional converges to minus the ground-state value, so the
proxy reports sign(s) times the extrapolated limit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .ensemble import ConfigurationSets, build_sets
from .estimator import PSI_S, Estimate, EvalSettings, Evaluator
from .randomness import COMP_G, normal_block
from .schedule import LiftingSchedule
from .util import mean_and_stderr

FAMILIES = (
    "hopfield-positive",
    "hopfield-negative",
    "little-positive",
    "little-negative",
    "spherical-perceptron",
    "binary-perceptron",
)

HYPERCUBE_CAP = 14          # full enumeration of sign vectors up to 2^14 rows
SPHERICAL_ORACLE_CAP = 3    # angular grid search only in up to 3 dimensions


@dataclass(frozen=True)
class ModelSpec:
    family: str
    n: int
    m: int
    samples: int = 64     # finite samples per continuous (sphere/orthant) side
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions must be positive")
        if self.samples < 1:
            raise ValueError("need at least one sample row")

    @property
    def s(self) -> float:
        return 1.0 if self.family.endswith("positive") else -1.0


def _hypercube_rows(dim: int) -> np.ndarray:
    if dim > HYPERCUBE_CAP:
        raise ValueError(f"hypercube enumeration capped at {HYPERCUBE_CAP} dimensions, got {dim}")
    rows = np.array(list(itertools.product((-1.0, 1.0), repeat=dim)))
    return rows / np.sqrt(dim)


def _sphere_rows(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    # antithetic pairs: guarantees sign coverage and halves variance
    half = (count + 1) // 2
    g = rng.standard_normal((half, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rows = np.empty((2 * half, dim))
    rows[0::2] = g
    rows[1::2] = -g
    return rows[:count]


def _orthant_rows(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    g = np.abs(rng.standard_normal((count, dim)))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g


def generate_sets(spec: ModelSpec) -> ConfigurationSets:
    """Build the family's configuration sets; every generated row is unit norm."""
    rng = np.random.default_rng(spec.seed)
    family = spec.family
    if family.startswith("hopfield"):
        x = _hypercube_rows(spec.n)
        y = _sphere_rows(spec.m, spec.samples, rng)
    elif family.startswith("little"):
        x = _hypercube_rows(spec.n)
        y = _hypercube_rows(spec.m)
    elif family == "spherical-perceptron":
        x = _sphere_rows(spec.n, spec.samples, rng)
        y = _orthant_rows(spec.m, spec.samples, rng)
    else:  # binary-perceptron
        x = _hypercube_rows(spec.n)
        y = _orthant_rows(spec.m, spec.samples, rng)
    return build_sets(x, y)


def default_beta_ladder(n: int) -> tuple[float, ...]:
    return tuple(b * np.sqrt(n) for b in (2.0, 4.0, 8.0, 16.0, 32.0))


def ground_state_proxy(spec: ModelSpec, schedule: LiftingSchedule,
                       settings: EvalSettings, beta_ladder=None,
                       threads: int = 1) -> Estimate:
    """Coupled-end free-energy limit, extrapolated linearly in 1/beta.

    All ladder points share one set of coupling draws (common random
    numbers); the extrapolated intercept is a fixed linear combination of
    the ladder values, so its error bar comes from per-draw intercepts.
    """
    sets = generate_sets(spec)
    ladder = tuple(beta_ladder) if beta_ladder is not None else default_beta_ladder(spec.n)
    if len(ladder) < 2:
        raise ValueError("beta ladder needs at least two rungs")
    per_draw = []
    for beta in ladder:
        st = settings.replace(t=1.0, beta=float(beta), s=spec.s)
        ev = Evaluator(sets, schedule, st, threads=threads)
        per_draw.append(ev.per_draw([PSI_S])[PSI_S])
    design = np.stack([np.ones(len(ladder)), 1.0 / np.asarray(ladder)], axis=1)
    # intercept weights: first row of the least-squares pseudo-inverse
    coef = np.linalg.pinv(design)[0]
    intercept_draws = np.tensordot(coef, np.stack(per_draw), axes=1)
    est = Estimate.from_draws(np.sign(spec.s) * intercept_draws,
                              note=f"beta ladder {tuple(round(b, 3) for b in ladder)}")
    return est


def _orthant_max(v: np.ndarray) -> float:
    """max of y^T v over the closed positive-orthant part of the unit sphere.

    Equals |max(v, 0)|_2 whenever v has a positive part (optimum along the
    normalized positive part); for elementwise nonpositive v the optimum sits
    at the vertex of the least negative coordinate, giving max_i v_i.
    """
    pos = np.maximum(v, 0.0)
    norm = float(np.linalg.norm(pos))
    return norm if norm > 0.0 else float(np.max(v))


def _spherical_min(g: np.ndarray, n: int) -> float:
    """min over the unit sphere x of the orthant maximization, grid plus polish."""

    def objective_unit(x):
        return _orthant_max(g @ x)

    if n == 1:
        return min(objective_unit(np.array([1.0])), objective_unit(np.array([-1.0])))
    if n == 2:
        thetas = np.linspace(0.0, 2.0 * np.pi, 721)
        cands = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    else:
        k = np.arange(2000)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * k
        z = 1.0 - 2.0 * (k + 0.5) / 2000
        rad = np.sqrt(1.0 - z ** 2)
        cands = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
    proj = cands @ g.T
    pos_norm = np.linalg.norm(np.maximum(proj, 0.0), axis=1)
    vals = np.where(pos_norm > 0.0, pos_norm, proj.max(axis=1))
    x0 = cands[int(np.argmin(vals))]

    def objective_raw(x):
        nx = np.linalg.norm(x)
        if nx == 0.0:
            return np.inf
        return objective_unit(x / nx)

    res = minimize(objective_raw, x0, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 400})
    return float(min(np.min(vals), res.fun))


def brute_force_oracle(spec: ModelSpec, n_mc_outer: int, seed: int | None = None,
                       threads: int = 1) -> Estimate:
    """Monte Carlo over the coupling matrix of the exact inner optimization."""
    family = spec.family
    n, m = spec.n, spec.m
    seed = spec.seed if seed is None else seed
    if family.startswith(("hopfield", "little", "binary")):
        x = _hypercube_rows(n)
    elif n > SPHERICAL_ORACLE_CAP:
        raise ValueError(
            f"spherical oracle restricted to n <= {SPHERICAL_ORACLE_CAP}, got {n}")
    else:
        x = None
    vals = np.empty(n_mc_outer)
    for o in range(n_mc_outer):
        g = normal_block(seed, o, 0, COMP_G, m * n).reshape(m, n)
        if family.startswith("hopfield"):
            norms = np.linalg.norm(x @ g.T, axis=1)
            v = norms.max() if spec.s > 0 else norms.min()
            vals[o] = v / np.sqrt(n)
        elif family.startswith("little"):
            l1 = np.abs(x @ g.T).sum(axis=1) / np.sqrt(m)
            v = l1.max() if spec.s > 0 else l1.min()
            vals[o] = v / np.sqrt(n)
        elif family == "binary-perceptron":
            proj = x @ g.T
            pos_norm = np.linalg.norm(np.maximum(proj, 0.0), axis=1)
            inner = np.where(pos_norm > 0.0, pos_norm, proj.max(axis=1))
            vals[o] = inner.min() / np.sqrt(n)
        else:
            vals[o] = _spherical_min(g, n) / np.sqrt(n)
    return Estimate.from_draws(vals)
