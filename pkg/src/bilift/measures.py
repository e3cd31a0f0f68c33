"""Reweighted averages of overlap functionals under the level measures.

The base weight gamma0 is pushed through the per-level mass-preserving
reweighting operators to form three families of averages:

* single-replica averages of f(i1, i2),
* same-row two-column averages of f(i1, i2, p2) (one i1 marginal, two
  conditional column factors),
* two-replica averages of f(i1, i2, p1, p2) with a split level k1: the two
  replicas use independent inner weights through levels <= k1 and share all
  samples and weights above.

Replica functionals are restricted to products g(i1, p1) * h(i2, p2) where g
and h are either norm outer-products or overlap tables; every bracket used by
the derivative formulas has this form, and it keeps the reductions bilinear
(nothing is ever materialized over the replica product space).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ensemble import ConfigurationSets

ARITY_SINGLE = "single"       # f(i1, i2)
ARITY_PAIR_Y = "pair_y"       # f(i1, i2, p2)
ARITY_REPLICA = "replica"     # f(i1, i2, p1, p2)


@dataclass(frozen=True)
class OverlapFunctional:
    """Named functional of replica indices, evaluated from overlap tables."""

    name: str
    arity: str
    _tables: Callable[[ConfigurationSets], tuple[np.ndarray, ...]]

    def tables(self, sets: ConfigurationSets) -> tuple[np.ndarray, ...]:
        """Dense tables: (F,) for single, (w, H) for pair_y, (Gx, Hy) for replica."""
        return self._tables(sets)

    def bound(self, sets: ConfigurationSets) -> float:
        """Cauchy-Schwarz bound max |f| over index tuples."""
        tabs = self.tables(sets)
        if self.arity == ARITY_SINGLE:
            return float(np.max(np.abs(tabs[0])))
        if self.arity == ARITY_PAIR_Y:
            w, h = tabs
            return float(np.max(np.abs(w)) * np.max(np.abs(h)))
        gx, hy = tabs
        return float(np.max(np.abs(gx)) * np.max(np.abs(hy)))


def _norm_outer_x(sets):
    xn = sets.tables.xnorm
    return np.outer(xn, xn)


def _norm_outer_y(sets):
    yn = sets.tables.ynorm
    return np.outer(yn, yn)


norm_product = OverlapFunctional(
    "norm_product", ARITY_REPLICA,
    lambda sets: (_norm_outer_x(sets), _norm_outer_y(sets)),
)

x_overlap_y_norms = OverlapFunctional(
    "x_overlap_y_norms", ARITY_REPLICA,
    lambda sets: (sets.tables.xdot, _norm_outer_y(sets)),
)

y_overlap_x_norms = OverlapFunctional(
    "y_overlap_x_norms", ARITY_REPLICA,
    lambda sets: (_norm_outer_x(sets), sets.tables.ydot),
)

overlap_product = OverlapFunctional(
    "overlap_product", ARITY_REPLICA,
    lambda sets: (sets.tables.xdot, sets.tables.ydot),
)

replica_one = OverlapFunctional(
    "one", ARITY_REPLICA,
    lambda sets: (np.ones((sets.lx, sets.lx)), np.ones((sets.ly, sets.ly))),
)

single_norm_sq = OverlapFunctional(
    "single_norm_sq", ARITY_SINGLE,
    lambda sets: (np.outer(sets.tables.xnorm ** 2, sets.tables.ynorm ** 2),),
)

single_one = OverlapFunctional(
    "one", ARITY_SINGLE,
    lambda sets: (np.ones((sets.lx, sets.ly)),),
)

xsq_y_overlap = OverlapFunctional(
    "xsq_y_overlap", ARITY_PAIR_Y,
    lambda sets: (sets.tables.xnorm ** 2, sets.tables.ydot),
)

xsq_y_norms = OverlapFunctional(
    "xsq_y_norms", ARITY_PAIR_Y,
    lambda sets: (sets.tables.xnorm ** 2, _norm_outer_y(sets)),
)

pair_y_one = OverlapFunctional(
    "one", ARITY_PAIR_Y,
    lambda sets: (np.ones(sets.lx), np.ones((sets.ly, sets.ly))),
)


def pair_y_functional(name: str, x_weight_of, y_table_of) -> OverlapFunctional:
    """Custom f(i1,i2,p2) = x_weight[i1] * y_table[i2,p2]."""
    return OverlapFunctional(name, ARITY_PAIR_Y, lambda sets: (x_weight_of(sets), y_table_of(sets)))


def replica_functional(name: str, gx_of, hy_of) -> OverlapFunctional:
    """Custom f(i1,i2,p1,p2) = gx[i1,p1] * hy[i2,p2]."""
    return OverlapFunctional(name, ARITY_REPLICA, lambda sets: (gx_of(sets), hy_of(sets)))


def boundary_two_column(q0: float) -> OverlapFunctional:
    """|x|^2 (q0 |y_i2||y_p2| - y_p2^T y_i2), the two-column boundary bracket."""
    return pair_y_functional(
        f"xsq_(q0*ynorms-ydot)[q0={q0}]",
        lambda sets: sets.tables.xnorm ** 2,
        lambda sets: q0 * _norm_outer_y(sets) - sets.tables.ydot,
    )


SHIPPED = {
    f.name: f
    for f in (
        norm_product,
        x_overlap_y_norms,
        y_overlap_x_norms,
        overlap_product,
        single_norm_sq,
        xsq_y_overlap,
        xsq_y_norms,
    )
}
