"""Finite configuration sets with cached norms and overlap tables.

Every formula in the package consumes the sets only through row norms,
pairwise inner products within each side, and the cross matrix y^T G x, so
both are precomputed once at build time.  The two sides may have different
cardinalities; no formula couples the two index ranges.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True)
class OverlapTables:
    xnorm: np.ndarray  # (lx,)
    ynorm: np.ndarray  # (ly,)
    xdot: np.ndarray   # (lx, lx), symmetric, diag = xnorm**2
    ydot: np.ndarray   # (ly, ly)


@dataclass(frozen=True)
class ConfigurationSets:
    x: np.ndarray        # (lx, n)
    y: np.ndarray        # (ly, m)
    tables: OverlapTables
    token: int           # identity used to key cached draw trees

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def lx(self) -> int:
        return self.x.shape[0]

    @property
    def ly(self) -> int:
        return self.y.shape[0]


_token_counter = itertools.count(1)


def build_sets(x_rows, y_rows) -> ConfigurationSets:
    """Validate the rows and cache the overlap geometry."""
    x = np.atleast_2d(np.asarray(x_rows, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y_rows, dtype=np.float64))
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("set rows must form a 2-d matrix per side")
    if x.shape[0] < 1 or y.shape[0] < 1 or x.shape[1] < 1 or y.shape[1] < 1:
        raise ValueError("both sides need at least one row and one column")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ValueError("set rows must be finite")
    tables = OverlapTables(
        xnorm=np.linalg.norm(x, axis=1),
        ynorm=np.linalg.norm(y, axis=1),
        xdot=x @ x.T,
        ydot=y @ y.T,
    )
    for arr in (tables.xnorm, tables.ynorm, tables.xdot, tables.ydot, x, y):
        arr.setflags(write=False)
    return ConfigurationSets(x=x, y=y, tables=tables, token=next(_token_counter))


def is_unit_norm(sets: ConfigurationSets) -> tuple[bool, bool]:
    """Per-side check that every row norm is within 1e-9 of 1."""
    return (
        bool(np.all(np.abs(sets.tables.xnorm - 1.0) <= UNIT_NORM_TOL)),
        bool(np.all(np.abs(sets.tables.ynorm - 1.0) <= UNIT_NORM_TOL)),
    )


def load_matrix(path) -> np.ndarray:
    """Plain numeric text matrix: one row per line, whitespace-separated."""
    arr = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return arr


def load_sets(x_path, y_path) -> ConfigurationSets:
    return build_sets(load_matrix(x_path), load_matrix(y_path))
