"""Bipartite representation: feature values, equivariance, losslessness."""

import math

import numpy as np

import lpreform as lr
from lpreform.graph import featurize, graph_stats

from .util import make_lp, random_box_lp


def test_edge_and_rhs_normalization():
    # row (3, 4) with b = 10: L2 norm 5 -> edges (0.6, 0.8), rhs_norm 2.0
    lp = make_lp([0.0, 0.0], [[3.0, 4.0]], ["<="], [10.0])
    g = featurize(lp)
    assert np.allclose(sorted(g.edge_feats), [0.6, 0.8])
    assert g.cons_feats[0, 0] == 2.0


def test_max_row_norm_switch():
    lp = make_lp([0.0, 0.0], [[3.0, 4.0]], ["<="], [10.0])
    g = featurize(lp, row_norm="max")
    assert np.allclose(sorted(g.edge_feats), [0.75, 1.0])
    assert g.cons_feats[0, 0] == 2.5


def test_all_free_variables_map_to_unit_interval_ends():
    lp = make_lp([1.0, 1.0], [[1.0, 1.0]], ["="], [0.0],
                 lower=[-math.inf] * 2, upper=[math.inf] * 2)
    g = featurize(lp)
    assert np.array_equal(g.var_feats[:, 0], [-1.0, -1.0])  # lb feature
    assert np.array_equal(g.var_feats[:, 1], [1.0, 1.0])  # ub feature


def test_finite_bounds_stay_inside_open_interval():
    lp = make_lp([0.0, 0.0], [[1.0, 1.0]], ["<="], [1.0],
                 lower=[0.0, -3.0], upper=[2.0, math.inf])
    g = featurize(lp)
    assert np.all(np.abs(g.var_feats[np.isfinite(g.var_feats)]) <= 1.0)
    # finite entries strictly inside (-1, 1)
    assert abs(g.var_feats[0, 0]) < 1.0 and abs(g.var_feats[1, 0]) < 1.0
    assert abs(g.var_feats[0, 1]) < 1.0
    assert g.var_feats[1, 1] == 1.0  # infinite upper maps to exactly +1


def test_objective_feature_scaled_by_max():
    lp = make_lp([2.0, -4.0], [[1.0, 1.0]], ["<="], [1.0])
    g = featurize(lp)
    assert np.allclose(g.var_feats[:, 2], [0.5, -1.0])


def test_constraint_bound_features_follow_sense():
    lp = make_lp([0.0] * 2, [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                 ["<=", ">=", "="], [2.0, 3.0, 4.0])
    g = featurize(lp)
    ub, lb = g.cons_feats[:, 1], g.cons_feats[:, 2]
    assert ub[1] == 1.0  # GE row upper bound is +inf
    assert lb[0] == -1.0  # LE row lower bound is -inf
    assert abs(ub[0]) < 1.0 and abs(lb[1]) < 1.0
    assert ub[2] != 1.0 and lb[2] != -1.0  # EQ row has both sides finite


def test_empty_rows_warned_and_unscaled(caplog):
    lp = make_lp([0.0], np.zeros((0, 1)), [], [])
    lp2 = lr.LpInstance(
        name="zrow",
        objective=[0.0],
        matrix=np.zeros((1, 1)),
        rhs=[7.0],
        row_sense=[0],
        col_lower=[0.0],
        col_upper=[1.0],
        col_names=("x",),
        row_names=("r",),
    )
    with caplog.at_level("WARNING"):
        g = featurize(lp2)
    assert "no nonzeros" in caplog.text
    assert g.cons_feats[0, 0] == 7.0
    assert graph_stats(featurize(lp)) == (0, 1, 0)


def test_losslessness_of_structure():
    rng = np.random.default_rng(3)
    lp = random_box_lp(rng, n=6, m=4)
    g = featurize(lp)
    dense = lp.matrix.toarray()
    edges = set(zip(g.edge_rows.tolist(), g.edge_cols.tolist()))
    expected = {(i, j) for i in range(4) for j in range(6) if dense[i, j] != 0.0}
    assert edges == expected
    assert len(edges) == g.num_edges  # no duplicates


def test_graph_stats_match_instance_dims():
    rng = np.random.default_rng(8)
    for _ in range(10):
        lp = random_box_lp(rng)
        g = featurize(lp)
        assert graph_stats(g) == (lp.num_rows, lp.num_cols, lp.nnz)


def test_empty_lp_stats():
    lp = make_lp([], np.zeros((0, 0)), [], [])
    assert graph_stats(featurize(lp)) == (0, 0, 0)


def test_variable_relabeling_equivariance_exact():
    rng = np.random.default_rng(17)
    for _ in range(8):
        lp = random_box_lp(rng)
        n = lp.num_cols
        perm = lr.ColumnPermutation(rng.permutation(n))
        g0 = featurize(lp)
        g1 = featurize(lr.apply_permutation(lp, perm))
        # variable features permute rows exactly (g1 row j == g0 row perm[j])
        assert np.array_equal(g1.var_feats, g0.var_feats[perm.perm])
        assert np.array_equal(g1.cons_feats, g0.cons_feats)
        # edges are re-indexed but identical as a set, features bitwise equal
        remapped = {
            (int(r), int(perm.perm[c]), float(f))
            for r, c, f in zip(g1.edge_rows, g1.edge_cols, g1.edge_feats)
        }
        original = {
            (int(r), int(c), float(f))
            for r, c, f in zip(g0.edge_rows, g0.edge_cols, g0.edge_feats)
        }
        assert remapped == original


def test_all_features_finite():
    rng = np.random.default_rng(23)
    for _ in range(5):
        lp = random_box_lp(rng)
        g = featurize(lp)
        assert np.isfinite(g.cons_feats).all()
        assert np.isfinite(g.var_feats).all()
        assert np.isfinite(g.edge_feats).all()


def test_paper_scale_bip_stats():
    from lpreform.datagen import ScenarioSpec, build_instance

    lp = build_instance(ScenarioSpec.paper_scale_bip(instance_count=1, seed=3), 0)
    assert graph_stats(featurize(lp)) == (195, 1083, 7440)
