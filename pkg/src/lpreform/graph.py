"""Lossless bipartite-graph view of an LP with normalized node/edge features.

Constraint nodes carry [rhs_norm, ub_cons_norm, lb_cons_norm], variable nodes
carry [lb_var_norm, ub_var_norm, obj_norm], and each stored nonzero A_ij
becomes one edge with feature A_ij normalized by the norm of row i. All
normalizations are per-row or permutation-invariant global statistics, so
relabeling variables permutes the variable feature rows exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .lp import RowSense, _freeze, _row_interval

log = logging.getLogger(__name__)

CONS_FEATURE_NAMES = ("rhs_norm", "ub_cons_norm", "lb_cons_norm")
VAR_FEATURE_NAMES = ("lb_var_norm", "ub_var_norm", "obj_norm")


@dataclass(frozen=True)
class BipartiteGraph:
    """Edges are stored column-major (by variable, then by row), mirroring the
    instance's CSC layout, so the edge order is canonical."""

    cons_feats: np.ndarray  # (m, 3)
    var_feats: np.ndarray  # (n, 3)
    edge_rows: np.ndarray  # (nnz,)
    edge_cols: np.ndarray  # (nnz,)
    edge_feats: np.ndarray  # (nnz,)

    def __post_init__(self):
        for name in ("cons_feats", "var_feats", "edge_feats"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))
        for name in ("edge_rows", "edge_cols"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.int64)))

    @property
    def num_cons(self):
        return self.cons_feats.shape[0]

    @property
    def num_vars(self):
        return self.var_feats.shape[0]

    @property
    def num_edges(self):
        return self.edge_rows.shape[0]


def _bound_scale(values):
    """Divisor keeping finite bounds strictly inside (-1, 1): max finite
    magnitude plus one (1.0 when no bound is finite)."""
    finite = values[np.isfinite(values)]
    return float(np.abs(finite).max()) + 1.0 if finite.size else 1.0


def _normalize_bounds(values, scale):
    out = np.empty(values.shape[0])
    finite = np.isfinite(values)
    out[finite] = values[finite] / scale
    out[~finite] = np.sign(values[~finite])
    return out


def featurize(lp, row_norm="l2"):
    """Build the bipartite graph of ``lp``.

    ``row_norm`` selects the per-constraint normalization of rhs and edge
    coefficients: "l2" (default) or "max" (max absolute row entry).
    """
    if row_norm not in ("l2", "max"):
        raise ValueError(f"unknown row_norm {row_norm!r}")
    m, n = lp.num_rows, lp.num_cols
    coo = lp.matrix.tocoo()
    # tocoo on sorted CSC yields data in column-major order already
    order = np.lexsort((coo.row, coo.col))
    rows = coo.row.astype(np.int64)[order]
    cols = coo.col.astype(np.int64)[order]
    vals = coo.data[order]

    if row_norm == "l2":
        norms = np.sqrt(np.bincount(rows, weights=vals * vals, minlength=m))
    else:
        norms = np.zeros(m)
        np.maximum.at(norms, rows, np.abs(vals))
    empty_rows = norms == 0.0
    if m and empty_rows.any():
        log.warning("%d constraint rows have no nonzeros; rhs left unscaled", int(empty_rows.sum()))
        norms = np.where(empty_rows, 1.0, norms)

    row_lo = np.empty(m)
    row_hi = np.empty(m)
    for i in range(m):
        row_lo[i], row_hi[i] = _row_interval(
            RowSense(int(lp.row_sense[i])), float(lp.rhs[i]), float(lp.row_range[i])
        )
    cons_feats = np.column_stack(
        [
            lp.rhs / norms,
            _normalize_bounds(row_hi, _bound_scale(row_hi)),
            _normalize_bounds(row_lo, _bound_scale(row_lo)),
        ]
    ).reshape(m, 3)

    obj_scale = float(np.abs(lp.objective).max(initial=0.0)) or 1.0
    var_feats = np.column_stack(
        [
            _normalize_bounds(lp.col_lower, _bound_scale(lp.col_lower)),
            _normalize_bounds(lp.col_upper, _bound_scale(lp.col_upper)),
            lp.objective / obj_scale,
        ]
    ).reshape(n, 3)

    return BipartiteGraph(
        cons_feats=cons_feats,
        var_feats=var_feats,
        edge_rows=rows,
        edge_cols=cols,
        edge_feats=vals / norms[rows] if rows.size else np.zeros(0),
    )


def graph_stats(g):
    """(number of constraints, number of variables, number of nonzeros)."""
    return g.num_cons, g.num_vars, g.num_edges
