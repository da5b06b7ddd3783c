"""MPS reader/writer: parsing rules, relaxation of integrality, round-trips."""

import math
from pathlib import Path

import numpy as np
import pytest

import lpreform as lr
from lpreform.exceptions import ParseError, UnsupportedFeatureError
from lpreform.mps import read_mps, write_mps

from .util import make_lp, random_box_lp

DATA = Path(__file__).parent / "data"


def test_minimal_file():
    lp = read_mps(DATA / "minimal.mps")
    assert lp.name == "minimal"
    assert (lp.num_rows, lp.num_cols, lp.nnz) == (1, 2, 2)
    assert list(lp.rhs) == [4.0]
    assert list(lp.objective) == [1.0, 2.0]
    assert lp.row_sense[0] == int(lr.RowSense.LE)
    assert lp.col_names == ("x", "y")


def test_integer_markers_relaxed_to_declared_bounds(caplog):
    with caplog.at_level("WARNING"):
        lp = read_mps(DATA / "integer_markers.mps")
    assert "relaxed" in caplog.text
    j = lp.col_names.index("x")
    assert lp.col_lower[j] == 0.0
    assert lp.col_upper[j] == 6.0  # declared bound survives relaxation
    # continuous neighbours untouched
    assert lp.col_upper[lp.col_names.index("y")] == math.inf


def test_ranged_rows_expand_and_round_trip(tmp_path):
    lp = read_mps(DATA / "ranged.mps")
    assert list(lp.row_range) == [4.0, 3.0, -2.0]
    std = lr.to_standard_form(lp)
    # every ranged row becomes an equality with a bounded slack
    assert std.slack_range[1] - std.slack_range[0] == 3
    spans = std.col_upper[std.slack_range[0] :]
    assert sorted(spans) == [2.0, 3.0, 4.0]
    # write/read round-trip is exact
    out = tmp_path / "ranged_out.mps"
    write_mps(lp, out)
    again = read_mps(out)
    assert again.equal_to(lp)


def test_free_variable_gets_fr_entry(tmp_path):
    lp = make_lp([1.0], np.zeros((0, 1)), [], [], lower=[-math.inf], upper=[math.inf])
    path = tmp_path / "free.mps"
    write_mps(lp, path)
    text = path.read_text()
    assert " FR " in text
    again = read_mps(path)
    assert again.col_lower[0] == -math.inf and again.col_upper[0] == math.inf


def test_empty_objective_round_trip(tmp_path):
    lp = make_lp([0.0, 0.0], [[1.0, 1.0]], ["<="], [2.0])
    path = tmp_path / "zeroobj.mps"
    write_mps(lp, path)
    again = read_mps(path)
    assert np.array_equal(again.objective, [0.0, 0.0])
    assert again.equal_to(lp)


def test_round_trip_idempotent_over_corpus(tmp_path):
    # read ∘ write ∘ read == read on every corpus file; second-generation
    # writes are byte-identical (the 12-digit rendering is a fixed point)
    corpus = sorted(DATA.glob("*.mps"))
    assert corpus
    for path in corpus:
        first = read_mps(path)
        out1 = tmp_path / f"{path.stem}_1.mps"
        write_mps(first, out1)
        second = read_mps(out1)
        assert second.equal_to(first), path.name
        out2 = tmp_path / f"{path.stem}_2.mps"
        write_mps(second, out2)
        assert out1.read_bytes() == out2.read_bytes(), path.name


def test_round_trip_random_instances(tmp_path):
    rng = np.random.default_rng(99)
    for trial in range(10):
        lp = random_box_lp(rng, with_eq=(trial % 3 == 0)).with_name(f"rt{trial}")
        path = tmp_path / f"rt{trial}.mps"
        write_mps(lp, path)
        again = read_mps(path)
        assert again.equal_to(lp)


def test_infinity_threshold_on_input(tmp_path):
    path = tmp_path / "inf.mps"
    path.write_text(
        "NAME inf\nROWS\n N obj\n L r\nCOLUMNS\n    x obj 1 r 1\n"
        "RHS\n    RHS r 5\nBOUNDS\n UP BND x 1e31\nENDATA\n"
    )
    lp = read_mps(path)
    assert lp.col_upper[0] == math.inf


def test_objsense_maximize_negates(tmp_path, caplog):
    path = tmp_path / "max.mps"
    path.write_text(
        "NAME mx\nOBJSENSE\n    MAX\nROWS\n N obj\n L r\nCOLUMNS\n"
        "    x obj 2 r 1\nRHS\n    RHS r 5\nENDATA\n"
    )
    with caplog.at_level("WARNING"):
        lp = read_mps(path)
    assert lp.objective[0] == -2.0
    assert "negated" in caplog.text


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "bad.mps"
    path.write_text("NAME bad\nROWS\n Z r1\nENDATA\n")
    with pytest.raises(ParseError) as err:
        read_mps(path)
    assert err.value.line_no == 3


def test_malformed_columns_pairs(tmp_path):
    path = tmp_path / "bad2.mps"
    path.write_text("NAME b\nROWS\n N obj\n L r\nCOLUMNS\n    x r\nENDATA\n")
    with pytest.raises(ParseError):
        read_mps(path)


def test_unknown_row_in_columns(tmp_path):
    path = tmp_path / "bad3.mps"
    path.write_text("NAME b\nROWS\n N obj\n L r\nCOLUMNS\n    x nope 1\nENDATA\n")
    with pytest.raises(ParseError):
        read_mps(path)


def test_sos_section_rejected(tmp_path):
    path = tmp_path / "sos.mps"
    path.write_text("NAME s\nROWS\n N obj\nCOLUMNS\nSOS\nENDATA\n")
    with pytest.raises(UnsupportedFeatureError):
        read_mps(path)


def test_bv_bound_relaxed(tmp_path, caplog):
    path = tmp_path / "bv.mps"
    path.write_text(
        "NAME b\nROWS\n N obj\n L r\nCOLUMNS\n    x obj 1 r 1\n"
        "RHS\n    RHS r 5\nBOUNDS\n BV BND x\nENDATA\n"
    )
    with caplog.at_level("WARNING"):
        lp = read_mps(path)
    assert lp.col_lower[0] == 0.0 and lp.col_upper[0] == 1.0
    assert "relaxed" in caplog.text


def test_writer_rejects_whitespace_names(tmp_path):
    lp = make_lp([1.0], [[1.0]], ["<="], [1.0])
    bad = lr.LpInstance(
        name="x",
        objective=lp.objective,
        matrix=lp.matrix,
        rhs=lp.rhs,
        row_sense=lp.row_sense,
        col_lower=lp.col_lower,
        col_upper=lp.col_upper,
        col_names=("a b",),
        row_names=("r0",),
    )
    with pytest.raises(ValueError):
        write_mps(bad, tmp_path / "bad.mps")


def test_twelve_digit_rendering(tmp_path):
    # 12 significant digits: relative error at most half an ulp of digit 12
    lp = make_lp([1.0 / 3.0], [[2.0 / 7.0]], ["<="], [1e-7])
    path = tmp_path / "digits.mps"
    write_mps(lp, path)
    again = read_mps(path)
    rel = 5e-12
    assert abs(again.objective[0] - lp.objective[0]) <= rel * abs(lp.objective[0])
    assert abs(again.matrix[0, 0] - lp.matrix[0, 0]) <= rel * abs(lp.matrix[0, 0])
    assert abs(again.rhs[0] - lp.rhs[0]) <= rel * abs(lp.rhs[0])
