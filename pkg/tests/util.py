"""Shared test helpers: the vertex-enumeration oracle and small instance
builders. The oracle is deliberately independent of the package's simplex
path: it enumerates candidate active sets by brute force and checks raw
feasibility, so it cannot share bugs with the pivoting code."""

import itertools
import math

import numpy as np
import scipy.sparse as sp

from lpreform.lp import LpInstance, RowSense, _row_interval


def make_lp(objective, rows, senses, rhs, lower=None, upper=None, name="test",
            row_range=None):
    """Dense row-wise LP constructor for tests."""
    A = np.atleast_2d(np.asarray(rows, dtype=float))
    m, n = A.shape if A.size else (0, len(objective))
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, math.inf) if upper is None else np.asarray(upper, dtype=float)
    sense_map = {"<=": RowSense.LE, ">=": RowSense.GE, "=": RowSense.EQ}
    sense = np.array([int(sense_map[s]) if isinstance(s, str) else int(s) for s in senses],
                     dtype=np.int8)
    return LpInstance(
        name=name,
        objective=np.asarray(objective, dtype=float),
        matrix=sp.csc_matrix(A) if A.size else sp.csc_matrix((m, n)),
        rhs=np.asarray(rhs, dtype=float),
        row_sense=sense,
        col_lower=lower,
        col_upper=upper,
        col_names=tuple(f"x{j}" for j in range(n)),
        row_names=tuple(f"r{i}" for i in range(m)),
        row_range=row_range,
    )


def vertex_enumeration_optimum(lp, tol=1e-7):
    """Minimum objective over all vertices of the feasible polytope.

    Enumerates every square active subsystem: f variables off their bounds,
    f constraint rows active, the remaining variables at one of their finite
    bounds. Requires a bounded feasible region with at least one vertex
    (true for the box-bounded instances the tests build).

    Returns (objective, x) for the best feasible point found.
    """
    A = lp.matrix.toarray()
    m, n = lp.num_rows, lp.num_cols
    c = lp.objective
    lo, hi = lp.col_lower, lp.col_upper
    intervals = [
        _row_interval(RowSense(int(lp.row_sense[i])), float(lp.rhs[i]), float(lp.row_range[i]))
        for i in range(m)
    ]
    row_lo = np.array([iv[0] for iv in intervals])
    row_hi = np.array([iv[1] for iv in intervals])
    row_scale = 1.0 + np.abs(lp.rhs)

    must_be_free = [j for j in range(n) if not (math.isfinite(lo[j]) or math.isfinite(hi[j]))]
    best_obj = math.inf
    best_x = None

    for f in range(0, min(n, m) + 1):
        for F in itertools.combinations(range(n), f):
            if any(j not in F for j in must_be_free):
                continue
            notF = [j for j in range(n) if j not in F]
            options = []
            feasible_combo = True
            for j in notF:
                opts = []
                if math.isfinite(lo[j]):
                    opts.append(lo[j])
                if math.isfinite(hi[j]) and hi[j] != lo[j]:
                    opts.append(hi[j])
                if not opts:
                    feasible_combo = False
                    break
                options.append(opts)
            if not feasible_combo:
                continue
            assignments = np.array(list(itertools.product(*options))) if notF else np.zeros((1, 0))
            for S in itertools.combinations(range(m), f):
                S = list(S)
                M = A[np.ix_(S, F)] if f else np.zeros((0, 0))
                if f and abs(np.linalg.det(M)) < 1e-12:
                    continue
                # a row can be active at either finite side of its interval
                row_opts = []
                for i in S:
                    opts = []
                    if math.isfinite(row_hi[i]):
                        opts.append(row_hi[i])
                    if math.isfinite(row_lo[i]) and row_lo[i] != row_hi[i]:
                        opts.append(row_lo[i])
                    row_opts.append(opts)
                for b_act in itertools.product(*row_opts) if f else [()]:
                    if f:
                        rhs_sys = np.array(b_act)[None, :] - assignments @ A[np.ix_(S, notF)].T
                        xF = np.linalg.solve(M, rhs_sys.T).T
                    else:
                        xF = np.zeros((assignments.shape[0], 0))
                    x_full = np.zeros((assignments.shape[0], n))
                    if notF:
                        x_full[:, notF] = assignments
                    if f:
                        x_full[:, list(F)] = xF
                    # feasibility filter
                    ok = np.ones(assignments.shape[0], dtype=bool)
                    ok &= (x_full >= lo[None, :] - tol).all(axis=1)
                    ok &= (x_full <= hi[None, :] + tol).all(axis=1)
                    act = x_full @ A.T
                    for i in range(m):
                        sc = tol * row_scale[i]
                        if math.isfinite(row_lo[i]):
                            ok &= act[:, i] >= row_lo[i] - sc
                        if math.isfinite(row_hi[i]):
                            ok &= act[:, i] <= row_hi[i] + sc
                    if not ok.any():
                        continue
                    objs = x_full[ok] @ c
                    idx = int(np.argmin(objs))
                    if objs[idx] < best_obj:
                        best_obj = float(objs[idx])
                        best_x = x_full[ok][idx]
    if best_x is None:
        raise AssertionError("oracle found no feasible vertex")
    return best_obj, best_x


def random_box_lp(rng, n=None, m=None, with_eq=False):
    """Random bounded-feasible LP for oracle comparisons.

    Box bounds keep the polytope compact; the rhs is set from a strictly
    interior point so feasibility is guaranteed by construction.
    """
    n = n or int(rng.integers(3, 8))
    m = m or int(rng.integers(2, 6))
    A = np.round(rng.uniform(-2, 2, size=(m, n)), 3)
    A[rng.uniform(size=(m, n)) < 0.25] = 0.0
    for i in range(m):
        if not A[i].any():
            A[i, int(rng.integers(0, n))] = 1.0
    lo = np.zeros(n)
    hi = np.round(rng.uniform(1.0, 3.0, size=n), 3)
    x0 = lo + rng.uniform(0.2, 0.8, size=n) * (hi - lo)
    act = A @ x0
    senses = []
    rhs = []
    for i in range(m):
        if with_eq and i == 0:
            senses.append("=")
            rhs.append(act[i])
        elif rng.uniform() < 0.5:
            senses.append("<=")
            rhs.append(act[i] + abs(rng.uniform(0.1, 1.0)))
        else:
            senses.append(">=")
            rhs.append(act[i] - abs(rng.uniform(0.1, 1.0)))
    c = np.round(rng.uniform(-1, 1, size=n), 3)
    return make_lp(c, A, senses, rhs, lower=lo, upper=hi, name="rand")


def beale_cycling_lp():
    """Beale's classic example that cycles under naive most-negative pricing."""
    A = [
        [0.25, -60.0, -0.04, 9.0],
        [0.5, -90.0, -0.02, 3.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
    c = [-0.75, 150.0, -0.02, 6.0]
    return make_lp(c, A, ["<=", "<=", "<="], [0.0, 0.0, 1.0])
