"""Core LP model: permutations as a group action, standard form, images."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import lpreform as lr
from lpreform.exceptions import (
    DimensionMismatchError,
    InvalidPermutationError,
)
from lpreform.lp import ClusterSplit, PermSource, compose

from .util import make_lp, random_box_lp, vertex_enumeration_optimum


def small_lp():
    return make_lp(
        objective=[1.0, 2.0, -1.0],
        rows=[[1.0, 1.0, 0.0], [0.0, 2.0, -1.0]],
        senses=["<=", ">="],
        rhs=[4.0, 1.0],
        upper=[5.0, 5.0, 5.0],
    )


def test_instance_invariants_enforced():
    lp = small_lp()
    assert lp.num_rows == 2 and lp.num_cols == 3 and lp.nnz == 4
    # stored zeros are dropped
    lp2 = make_lp([0.0, 0.0], [[1.0, 0.0], [0.0, 2.0]], ["<=", "<="], [1.0, 1.0])
    assert lp2.nnz == 2
    with pytest.raises(ValueError):
        make_lp([0.0], [[1.0]], ["<="], [1.0], lower=[2.0], upper=[1.0])
    with pytest.raises(DimensionMismatchError):
        make_lp([0.0, 1.0, 2.0], [[1.0, 1.0]], ["<="], [1.0])


def test_identity_permutation_is_noop():
    lp = small_lp()
    out = lr.apply_permutation(lp, lr.ColumnPermutation.identity(3))
    assert out.equal_to(lp)


def test_permutation_rejects_non_bijection():
    with pytest.raises(InvalidPermutationError):
        lr.ColumnPermutation(np.array([0, 0, 2]))
    with pytest.raises(DimensionMismatchError):
        lr.apply_permutation(small_lp(), lr.ColumnPermutation(np.array([1, 0])))


@given(st.integers(min_value=1, max_value=9), st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None)
def test_permutation_group_action(n, pyrandom):
    rng = np.random.default_rng(pyrandom.randrange(2**32))
    lp = random_box_lp(rng, n=n, m=3)
    p = lr.ColumnPermutation(rng.permutation(n))
    q = lr.ColumnPermutation(rng.permutation(n))
    via_compose = lr.apply_permutation(lp, compose(p, q))
    sequential = lr.apply_permutation(lr.apply_permutation(lp, q), p)
    assert via_compose.equal_to(sequential)
    # inverse undoes
    back = lr.apply_permutation(lr.apply_permutation(lp, p), p.inverse())
    assert back.equal_to(lp)
    # column contents (rows, values, bounds) travel with the relabeling
    out = lr.apply_permutation(lp, p)
    for j in range(n):
        src = p.perm[j]
        assert np.allclose(out.matrix[:, j].toarray(), lp.matrix[:, src].toarray())
        assert out.objective[j] == lp.objective[src]
        assert out.col_names[j] == lp.col_names[src]
    assert out.nnz == lp.nnz


def test_vector_round_trip_through_permutation():
    rng = np.random.default_rng(5)
    p = lr.ColumnPermutation(rng.permutation(7))
    v = rng.normal(size=7)
    assert np.array_equal(p.unpermute_vector(p.permute_vector(v)), v)


def test_permuted_optimum_matches_original():
    # [DERIVED] via the built-in solver on random instances
    rng = np.random.default_rng(123)
    for trial in range(20):
        lp = random_box_lp(rng)
        base, _ = lr.solve(lp)
        perm = lr.ColumnPermutation(rng.permutation(lp.num_cols))
        permuted, pm = lr.solve(lr.apply_permutation(lp, perm))
        assert pm.status == lr.SolveStatus.OPTIMAL
        assert abs(base.objective - permuted.objective) <= 1e-6


# ---------------------------------------------------------------------------
# standard form


def test_standard_form_le_row_gains_slack():
    lp = make_lp([1.0, 1.0], [[1.0, 1.0]], ["<="], [4.0])
    std = lr.to_standard_form(lp)
    assert std.slack_range == (2, 3)
    assert std.num_cols == 3
    assert std.matrix[0, 2] == 1.0
    assert std.col_lower[2] == 0.0 and std.col_upper[2] == math.inf
    assert np.array_equal(std.objective, [1.0, 1.0, 0.0])


def test_standard_form_ge_row_gains_surplus():
    lp = make_lp([1.0, -1.0], [[1.0, -1.0]], [">="], [1.0])
    std = lr.to_standard_form(lp)
    assert std.matrix[0, 2] == -1.0
    assert std.rhs[0] == 1.0


def test_standard_form_eq_rows_unchanged():
    lp = make_lp([1.0, 1.0], [[1.0, 2.0], [2.0, 1.0]], ["=", "="], [3.0, 3.0])
    std = lr.to_standard_form(lp)
    assert std.slack_range == (2, 2)
    assert std.num_cols == 2
    assert (std.matrix != lp.matrix).nnz == 0


def test_standard_form_ranged_row_bounded_slack():
    lp = make_lp([1.0], [[2.0]], ["<="], [6.0], row_range=[4.0])
    std = lr.to_standard_form(lp)
    # 2 <= 2x <= 6 encoded as 2x + s = 6, s in [0, 4]
    assert std.rhs[0] == 6.0
    assert std.col_upper[1] == 4.0


def test_standard_form_preserves_feasibility_projection():
    rng = np.random.default_rng(7)
    for _ in range(10):
        lp = random_box_lp(rng)
        std = lr.to_standard_form(lp)
        sol, met = lr.solve(lp)
        assert met.status == lr.SolveStatus.OPTIMAL
        x_std = sol.x
        # standard-form point satisfies equalities; its structural prefix is
        # feasible for the original rows
        assert np.max(np.abs(std.matrix @ x_std - std.rhs)) <= 1e-7
        x_orig = x_std[: lp.num_cols]
        act = lp.matrix @ x_orig
        for i in range(lp.num_rows):
            if lp.row_sense[i] == int(lr.RowSense.LE):
                assert act[i] <= lp.rhs[i] + 1e-7
            elif lp.row_sense[i] == int(lr.RowSense.GE):
                assert act[i] >= lp.rhs[i] - 1e-7
            else:
                assert abs(act[i] - lp.rhs[i]) <= 1e-7


# ---------------------------------------------------------------------------
# cluster permutation expansion


def split_of(members, n):
    return ClusterSplit.from_members([np.array(m) for m in members], n)


def test_expand_identity_cluster_order():
    split = split_of([[0, 1], [2]], 3)
    p = lr.expand_cluster_permutation(split, [0, 1])
    assert p.is_identity


def test_expand_cluster_permutation_by_definition():
    split = split_of([[0, 1], [2]], 3)
    p = lr.expand_cluster_permutation(split, [1, 0])
    assert list(p.perm) == [2, 0, 1]


def test_expand_rejects_bad_cluster_perm():
    split = split_of([[0, 1], [2]], 3)
    with pytest.raises(InvalidPermutationError):
        lr.expand_cluster_permutation(split, [0, 0])


@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=10**6))
@settings(max_examples=50, deadline=None)
def test_expand_preserves_within_cluster_order(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    # random disjoint covering split with ascending members
    assignment = rng.integers(0, k, size=n)
    for j in range(k):  # ensure non-empty
        if not (assignment == j).any():
            assignment[rng.integers(0, n)] = j
    ids = sorted(set(assignment.tolist()))
    k_eff = len(ids)
    members = [np.flatnonzero(assignment == c) for c in ids]
    split = split_of(members, n)
    cluster_perm = rng.permutation(k_eff)
    p = lr.expand_cluster_permutation(split, cluster_perm)
    # within each cluster the original relative order is intact
    pos = {int(col): i for i, col in enumerate(p.perm)}
    for mem in split.members:
        positions = [pos[int(c)] for c in mem]
        assert positions == sorted(positions)
    # faithfulness: concatenation reproduces the column permutation
    concat = np.concatenate([split.members[c] for c in cluster_perm])
    assert np.array_equal(p.perm, concat)


# ---------------------------------------------------------------------------
# sparsity images


def read_pgm(path):
    data = open(path, "rb").read()
    assert data.startswith(b"P5")
    header, rest = data.split(b"255\n", 1)
    dims = header.split()[1:3]
    w, h = int(dims[0]), int(dims[1])
    pixels = np.frombuffer(rest, dtype=np.uint8).reshape(h, w)
    return pixels


def test_sparsity_image_diagonal(tmp_path):
    lp = make_lp([0.0] * 3, np.eye(3), ["<="] * 3, [1.0] * 3)
    path = tmp_path / "diag.pgm"
    lr.emit_sparsity_image(lp, path, max_dim=3)
    pixels = read_pgm(path)
    assert pixels.shape == (3, 3)
    assert (pixels == 0).sum() == 3
    assert all(pixels[i, i] == 0 for i in range(3))


def test_sparsity_image_dense(tmp_path):
    lp = make_lp([0.0, 0.0], np.ones((2, 2)), ["<="] * 2, [1.0] * 2)
    path = tmp_path / "dense.pgm"
    lr.emit_sparsity_image(lp, path, max_dim=2)
    assert (read_pgm(path) == 0).all()


def test_sparsity_image_changes_under_permutation(tmp_path):
    # structured instance: lower-triangular pattern
    n = 6
    A = np.tril(np.ones((n, n)))
    lp = make_lp([0.0] * n, A, ["<="] * n, [1.0] * n)
    p1 = tmp_path / "orig.pgm"
    p2 = tmp_path / "perm.pgm"
    lr.emit_sparsity_image(lp, p1, max_dim=n)
    perm = lr.ColumnPermutation(np.array([5, 4, 3, 2, 1, 0]))
    lr.emit_sparsity_image(lr.apply_permutation(lp, perm), p2, max_dim=n)
    assert (read_pgm(p1) != read_pgm(p2)).any()


def test_sparsity_image_ascii_variant(tmp_path):
    lp = make_lp([0.0] * 3, np.eye(3), ["<="] * 3, [1.0] * 3)
    path = tmp_path / "diag.pgm"
    lr.emit_sparsity_image(lp, path, max_dim=3, ascii_format=True)
    text = open(path).read()
    assert text.startswith("P2\n3 3\n255\n")
    assert text.count("0") == 3
