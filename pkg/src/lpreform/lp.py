"""Core LP data model: instances, column permutations, standard form, images.

An :class:`LpInstance` stores a sparse column-major LP

    min c'x  s.t.  A x {<=,>=,=} b,  l <= x <= u

with stable row/column identities. All operations here are pure; instances
are treated as immutable after construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    DimensionMismatchError,
    EmptyClusterError,
    InvalidPermutationError,
)

#: Values with magnitude at or above this threshold are treated as infinite
#: on input (common solver convention).
INFINITY_THRESHOLD = 1e30


class RowSense(enum.IntEnum):
    LE = 0
    GE = 1
    EQ = 2

    @property
    def mps_char(self):
        return "LGE"[self.value]

    @staticmethod
    def from_mps_char(ch):
        try:
            return {"L": RowSense.LE, "G": RowSense.GE, "E": RowSense.EQ}[ch]
        except KeyError:
            raise ValueError(f"unknown row sense {ch!r}") from None


class PermSource(enum.Enum):
    IDENTITY = "identity"
    SAMPLED = "sampled"
    ORACLE = "oracle"
    MANUAL = "manual"


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LpInstance:
    """A sparse LP in row-sense form.

    `matrix` is CSC with no stored zeros and strictly increasing row indices
    per column. `row_range` holds the signed RANGES value per row (0 where
    absent): an L row with range r means b - |r| <= ax <= b, a G row means
    b <= ax <= b + |r|, an E row means the interval between b and b + r.
    """

    name: str
    objective: np.ndarray
    matrix: sp.csc_matrix
    rhs: np.ndarray
    row_sense: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray
    col_names: tuple
    row_names: tuple
    row_range: np.ndarray = None

    def __post_init__(self):
        m, n = self.matrix.shape
        mat = sp.csc_matrix(self.matrix, dtype=np.float64)
        mat.eliminate_zeros()
        mat.sort_indices()
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "objective", _freeze(np.asarray(self.objective, dtype=np.float64)))
        object.__setattr__(self, "rhs", _freeze(np.asarray(self.rhs, dtype=np.float64)))
        object.__setattr__(self, "row_sense", _freeze(np.asarray(self.row_sense, dtype=np.int8)))
        object.__setattr__(self, "col_lower", _freeze(np.asarray(self.col_lower, dtype=np.float64)))
        object.__setattr__(self, "col_upper", _freeze(np.asarray(self.col_upper, dtype=np.float64)))
        object.__setattr__(self, "col_names", tuple(self.col_names))
        object.__setattr__(self, "row_names", tuple(self.row_names))
        rng = self.row_range
        if rng is None:
            rng = np.zeros(m)
        object.__setattr__(self, "row_range", _freeze(np.asarray(rng, dtype=np.float64)))
        self._check(m, n)

    def _check(self, m, n):
        if self.objective.shape != (n,):
            raise DimensionMismatchError(f"objective has length {self.objective.shape}, expected {n}")
        if self.rhs.shape != (m,) or self.row_sense.shape != (m,) or self.row_range.shape != (m,):
            raise DimensionMismatchError("row data does not match matrix row count")
        if self.col_lower.shape != (n,) or self.col_upper.shape != (n,):
            raise DimensionMismatchError("bound vectors do not match column count")
        if len(self.col_names) != n or len(self.row_names) != m:
            raise DimensionMismatchError("name lists do not match dimensions")
        bad = self.col_lower > self.col_upper
        if bad.any():
            j = int(np.argmax(bad))
            raise ValueError(f"column {self.col_names[j]!r} has lower bound above upper bound")

    @property
    def num_rows(self):
        return self.matrix.shape[0]

    @property
    def num_cols(self):
        return self.matrix.shape[1]

    @property
    def nnz(self):
        return self.matrix.nnz

    def with_name(self, name):
        return replace(self, name=name)

    def equal_to(self, other, rtol=1e-11, atol=1e-14):
        """Structural + numeric equality within tolerance (names exact)."""
        if (self.num_rows, self.num_cols) != (other.num_rows, other.num_cols):
            return False
        if self.col_names != other.col_names or self.row_names != other.row_names:
            return False
        if not np.array_equal(self.row_sense, other.row_sense):
            return False
        a, b = self.matrix, other.matrix
        if not (np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)):
            return False

        def close(u, v):
            uf, vf = np.isfinite(u), np.isfinite(v)
            if not np.array_equal(uf, vf):
                return False
            if not np.array_equal(u[~uf], v[~vf]):
                return False
            return np.allclose(u[uf], v[vf], rtol=rtol, atol=atol)

        return (
            close(a.data, b.data)
            and close(self.objective, other.objective)
            and close(self.rhs, other.rhs)
            and close(self.col_lower, other.col_lower)
            and close(self.col_upper, other.col_upper)
            and close(self.row_range, other.row_range)
        )


@dataclass(frozen=True)
class ColumnPermutation:
    """A bijection on column indices; `perm[j]` is the source column of output column j."""

    perm: np.ndarray
    source: PermSource = PermSource.MANUAL

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        n = perm.shape[0]
        counts = np.bincount(perm, minlength=n) if n else np.zeros(0, dtype=np.int64)
        if perm.ndim != 1 or counts.shape[0] != n or (counts != 1).any():
            raise InvalidPermutationError("perm is not a bijection on {0..n-1}")
        object.__setattr__(self, "perm", _freeze(perm))

    @staticmethod
    def identity(n):
        return ColumnPermutation(np.arange(n, dtype=np.int64), PermSource.IDENTITY)

    @property
    def n(self):
        return self.perm.shape[0]

    @property
    def is_identity(self):
        return bool(np.array_equal(self.perm, np.arange(self.n)))

    def inverse(self):
        return ColumnPermutation(np.argsort(self.perm, kind="stable"), self.source)

    def permute_vector(self, values):
        """Reorder per-column data into the permuted column order."""
        values = np.asarray(values)
        if values.shape[0] != self.n:
            raise DimensionMismatchError("vector length does not match permutation")
        return values[self.perm]

    def unpermute_vector(self, values):
        """Map a vector indexed by permuted columns back to original indexing."""
        values = np.asarray(values)
        if values.shape[0] != self.n:
            raise DimensionMismatchError("vector length does not match permutation")
        out = np.empty_like(values)
        out[self.perm] = values
        return out

    def __eq__(self, other):
        return isinstance(other, ColumnPermutation) and np.array_equal(self.perm, other.perm)

    def __hash__(self):
        return hash(self.perm.tobytes())


def compose(p, q):
    """Permutation equivalent to applying ``q`` to an instance and then ``p``.

    Satisfies apply(compose(p, q)) == apply(p) after apply(q).
    """
    if p.n != q.n:
        raise DimensionMismatchError("permutations act on different column counts")
    return ColumnPermutation(q.perm[p.perm], PermSource.MANUAL)


def apply_permutation(lp, p):
    """Return a copy of ``lp`` whose column j is column ``p.perm[j]`` of the input.

    Rows are untouched; the column data (objective, bounds, names, matrix
    columns) move together, so the result is the same LP up to relabeling.
    """
    if p.n != lp.num_cols:
        raise DimensionMismatchError(
            f"permutation length {p.n} does not match column count {lp.num_cols}"
        )
    perm = p.perm
    return LpInstance(
        name=lp.name,
        objective=lp.objective[perm],
        matrix=lp.matrix[:, perm],
        rhs=lp.rhs,
        row_sense=lp.row_sense,
        col_lower=lp.col_lower[perm],
        col_upper=lp.col_upper[perm],
        col_names=tuple(lp.col_names[j] for j in perm),
        row_names=lp.row_names,
        row_range=lp.row_range,
    )


@dataclass(frozen=True)
class ClusterSplit:
    """Disjoint, covering partition of columns into k ordered clusters.

    `members[j]` lists the columns of cluster j in ascending (original)
    order; `assignment[i]` is the cluster id of column i.
    """

    k: int
    assignment: np.ndarray
    members: tuple

    def __post_init__(self):
        assignment = _freeze(np.asarray(self.assignment, dtype=np.int64))
        members = tuple(_freeze(np.asarray(m, dtype=np.int64)) for m in self.members)
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "members", members)
        if len(members) != self.k:
            raise ValueError("member list count differs from k")
        n = assignment.shape[0]
        seen = np.zeros(n, dtype=bool)
        for j, mem in enumerate(members):
            if mem.size == 0:
                raise EmptyClusterError(f"cluster {j} is empty")
            if (np.diff(mem) <= 0).any():
                raise ValueError(f"cluster {j} members are not in ascending original order")
            if seen[mem].any():
                raise ValueError("clusters overlap")
            seen[mem] = True
            if (assignment[mem] != j).any():
                raise ValueError("assignment disagrees with member lists")
        if not seen.all():
            raise ValueError("clusters do not cover all columns")

    @property
    def n(self):
        return self.assignment.shape[0]

    @staticmethod
    def from_members(members, n):
        members = tuple(np.asarray(m, dtype=np.int64) for m in members)
        assignment = np.full(n, -1, dtype=np.int64)
        for j, mem in enumerate(members):
            assignment[mem] = j
        return ClusterSplit(k=len(members), assignment=assignment, members=members)


def expand_cluster_permutation(split, cluster_perm, source=PermSource.MANUAL):
    """Expand a permutation of clusters to the column level.

    Columns of cluster ``cluster_perm[0]`` come first, keeping their original
    internal order, then the columns of ``cluster_perm[1]``, and so on.
    """
    cluster_perm = np.asarray(cluster_perm, dtype=np.int64)
    k = split.k
    counts = np.bincount(cluster_perm, minlength=k) if cluster_perm.size else np.zeros(k, int)
    if cluster_perm.shape != (k,) or (counts != 1).any():
        raise InvalidPermutationError("cluster_perm is not a bijection on {0..k-1}")
    parts = [split.members[c] for c in cluster_perm]
    return ColumnPermutation(np.concatenate(parts) if parts else np.zeros(0, np.int64), source)


# ---------------------------------------------------------------------------
# Standard form


@dataclass(frozen=True)
class StandardFormLp:
    """Equality-form LP: min c'x s.t. A x = b, l <= x <= u.

    Original columns keep their positions; one slack/surplus column per
    inequality (or ranged) row is appended after them. `origin_col[j]` is the
    original column index or -1 for slacks; `slack_row[j]` is the row served
    by slack column j or -1 for structural columns.
    """

    name: str
    objective: np.ndarray
    matrix: sp.csc_matrix
    rhs: np.ndarray
    col_lower: np.ndarray
    col_upper: np.ndarray
    col_names: tuple
    row_names: tuple
    slack_range: tuple
    origin_col: np.ndarray
    slack_row: np.ndarray

    def __post_init__(self):
        mat = sp.csc_matrix(self.matrix, dtype=np.float64)
        mat.sort_indices()
        object.__setattr__(self, "matrix", mat)
        for name in ("objective", "rhs", "col_lower", "col_upper"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))
        object.__setattr__(self, "origin_col", _freeze(np.asarray(self.origin_col, dtype=np.int64)))
        object.__setattr__(self, "slack_row", _freeze(np.asarray(self.slack_row, dtype=np.int64)))

    @property
    def num_rows(self):
        return self.matrix.shape[0]

    @property
    def num_cols(self):
        return self.matrix.shape[1]

    @property
    def num_structural(self):
        return self.slack_range[0]

    def slack_for_row(self):
        """Map row index -> slack column index, -1 where the row has none."""
        out = np.full(self.num_rows, -1, dtype=np.int64)
        for j in range(*self.slack_range):
            out[self.slack_row[j]] = j
        return out


def _row_interval(sense, b, rng):
    """Closed activity interval [lo, hi] encoded by sense + rhs + range."""
    if sense == RowSense.LE:
        hi = b
        lo = b - abs(rng) if rng != 0.0 else -math.inf
    elif sense == RowSense.GE:
        lo = b
        hi = b + abs(rng) if rng != 0.0 else math.inf
    else:
        if rng == 0.0:
            lo = hi = b
        elif rng > 0.0:
            lo, hi = b, b + rng
        else:
            lo, hi = b + rng, b
    return lo, hi


def to_standard_form(lp):
    """Augment inequality/ranged rows with slack columns; all rows become EQ.

    An L row gains +1 slack in [0, span], a G row gains a -1 surplus in
    [0, span] (span infinite unless the row is ranged). E rows without a
    range get no slack. The objective is extended with zeros.
    """
    m, n = lp.num_rows, lp.num_cols
    slack_cols = []
    slack_rows = []
    slack_signs = []
    slack_upper = []
    new_rhs = np.array(lp.rhs)
    for i in range(m):
        sense = RowSense(int(lp.row_sense[i]))
        rng = float(lp.row_range[i])
        lo, hi = _row_interval(sense, float(lp.rhs[i]), rng)
        if lo == hi:
            new_rhs[i] = lo
            continue
        if math.isfinite(hi):
            # ax + s = hi, s in [0, hi - lo]
            slack_signs.append(1.0)
            new_rhs[i] = hi
            slack_upper.append(hi - lo)
        else:
            # ax - s = lo, s in [0, hi - lo] (= inf)
            slack_signs.append(-1.0)
            new_rhs[i] = lo
            slack_upper.append(math.inf)
        slack_rows.append(i)
        slack_cols.append(len(slack_cols))

    s = len(slack_rows)
    if s:
        slack_mat = sp.csc_matrix(
            (np.array(slack_signs), (np.array(slack_rows), np.arange(s))), shape=(m, s)
        )
        full = sp.hstack([lp.matrix, slack_mat], format="csc")
    else:
        full = lp.matrix.copy()
    slack_names = tuple(f"slk_{lp.row_names[i]}" for i in slack_rows)
    return StandardFormLp(
        name=lp.name,
        objective=np.concatenate([lp.objective, np.zeros(s)]),
        matrix=full,
        rhs=new_rhs,
        col_lower=np.concatenate([lp.col_lower, np.zeros(s)]),
        col_upper=np.concatenate([lp.col_upper, np.array(slack_upper)]),
        col_names=lp.col_names + slack_names,
        row_names=lp.row_names,
        slack_range=(n, n + s),
        origin_col=np.concatenate([np.arange(n), np.full(s, -1)]),
        slack_row=np.concatenate([np.full(n, -1), np.array(slack_rows, dtype=np.int64)]),
    )


# ---------------------------------------------------------------------------
# Sparsity image


def emit_sparsity_image(lp, path, max_dim=256, ascii_format=False):
    """Write the sparsity pattern of A as a portable graymap (P5, or P2).

    The pattern is max-pooled onto at most max_dim x max_dim cells: a cell is
    black iff any stored nonzero falls inside it.
    """
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    m, n = lp.num_rows, lp.num_cols
    height = min(m, max_dim) if m else 1
    width = min(n, max_dim) if n else 1
    dark = np.zeros((height, width), dtype=bool)
    if lp.nnz:
        coo = lp.matrix.tocoo()
        r = (coo.row.astype(np.int64) * height) // m
        c = (coo.col.astype(np.int64) * width) // n
        dark[r, c] = True
    pixels = np.where(dark, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        if ascii_format:
            fh.write(f"P2\n{width} {height}\n255\n".encode("ascii"))
            for row in pixels:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode("ascii"))
        else:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
