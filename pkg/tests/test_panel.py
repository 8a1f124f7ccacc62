"""Panel ingestion, indexing and cell statistics."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntdid.dgp import DgpSpec, generate
from ntdid.errors import (DuplicateUnitAge, InvalidWindow, MissingColumn,
                          ParseError)
from ntdid.panel import (NEVER, build_pretrend_slice, build_two_by_two,
                         cell_mean, load_panel, scan_malformed_rows,
                         write_panel)

HEADER = "unit_id,cluster_id,gender,treat_age,age,year,earnings"


def csv_of(rows):
    return io.StringIO(HEADER + "\n" + "\n".join(rows) + "\n")


def small_panel():
    return load_panel(csv_of([
        "u1,u1,f,26,25,1999,100",
        "u1,u1,f,26,28,2002,120",
        "u2,u2,m,26,25,1999,200",
        "u2,u2,m,26,28,2002,260",
    ]))


def test_load_small_csv_builds_index():
    data = small_panel()
    assert data.n_rows == 4
    assert len(data.index) == 4
    assert cell_mean(data, "f", 26, 25).mean == 100


def test_duplicate_unit_age_rejected():
    with pytest.raises(DuplicateUnitAge):
        load_panel(csv_of([
            "u1,u1,f,26,25,1999,100",
            "u1,u1,f,26,25,1999,120",
        ]))


def test_missing_column():
    bad = io.StringIO("unit_id,gender,age,year\nu1,f,25,1999\n")
    with pytest.raises(MissingColumn):
        load_panel(bad)


def test_parse_error_identifies_row_and_column():
    with pytest.raises(ParseError) as exc:
        load_panel(csv_of(["u1,u1,f,26,twenty,1999,100"]))
    assert exc.value.column == "age"


def test_round_trip(tmp_path):
    spec = DgpSpec(treat_ages=(25, 26), units_per_group=25, noise_sd=0.1,
                   seed=3)
    data, _ = generate(spec)
    path = tmp_path / "panel.csv"
    write_panel(data, path)
    again = load_panel(path)
    assert again.n_rows == data.n_rows
    np.testing.assert_allclose(np.sort(again.earnings),
                               np.sort(data.earnings), rtol=0, atol=1e-9)
    # cell statistics identical
    for (g, d, a) in data.index:
        c1 = cell_mean(data, g, d, a)
        c2 = cell_mean(again, g, d, a)
        assert c1.count == c2.count
        assert c1.mean == pytest.approx(c2.mean, abs=1e-9)


def test_cell_mean_arithmetic():
    data = small_panel()
    c = cell_mean(data, "m", 26, 28)
    assert (c.count, c.mean) == (1, 260)


def test_empty_cell_sentinel():
    data = small_panel()
    c = cell_mean(data, "f", 30, 28)
    assert c.count == 0 and c.is_empty
    assert np.isnan(c.mean)


def test_cell_mean_matches_brute_force():
    spec = DgpSpec(treat_ages=(25, 27, 29), units_per_group=40, noise_sd=0.3,
                   seed=7)
    data, _ = generate(spec)
    for g_code, g in ((0, "f"), (1, "m")):
        for d in spec.treat_ages:
            for a in spec.ages:
                mask = ((data.gender_code == g_code) & (data.treat_age == d)
                        & (data.age == a))
                c = cell_mean(data, g, d, a)
                assert c.count == int(mask.sum())
                if c.count:
                    assert c.mean == pytest.approx(data.earnings[mask].mean(),
                                                   rel=1e-12)


def test_partition_property():
    spec = DgpSpec(treat_ages=(25, 26, 27), units_per_group=30, seed=5)
    data, _ = generate(spec)
    total = sum(cell_mean(data, g, d, a).count
                for (g, d, a) in data.index)
    assert total == data.n_rows


def test_permutation_invariance():
    rows = ["u1,u1,f,26,25,1999,100", "u2,u2,f,26,25,1999,300",
            "u3,u3,f,26,25,1999,200"]
    a = load_panel(csv_of(rows))
    b = load_panel(csv_of(rows[::-1]))
    assert cell_mean(a, "f", 26, 25).mean == cell_mean(b, "f", 26, 25).mean


def test_two_by_two_windows():
    spec = DgpSpec(treat_ages=tuple(range(25, 34)), units_per_group=5, seed=1)
    data, _ = generate(spec)
    sl = build_two_by_two(data, 26, 31)
    assert (sl.dprime, sl.b) == (32, 25)
    sl = build_two_by_two(data, 30, 30)
    assert (sl.dprime, sl.b) == (31, 29)
    sl = build_two_by_two(data, 26, 28, control_offset=2)
    assert (sl.dprime, sl.b) == (30, 25)
    # defaults satisfy dprime = a+1, b = d-1 everywhere
    for d in (25, 27, 29):
        for a in range(d, 32):
            sl = build_two_by_two(data, d, a)
            assert sl.dprime == a + 1 and sl.b == d - 1


def test_invalid_window():
    data = small_panel()
    with pytest.raises(InvalidWindow):
        build_two_by_two(data, 26, 28, baseline_gap=0)
    with pytest.raises(InvalidWindow):
        build_two_by_two(data, 26, 28, control_offset=-1)
    with pytest.raises(InvalidWindow):
        build_pretrend_slice(data, 26, 27, 26)  # pre-period age must be < b


def test_schema_mapping():
    src = io.StringIO("id,sex,dage,alter,jahr,inc\nu1,f,26,25,1999,100\n")
    schema = {"unit_id": "id", "gender": "sex", "treat_age": "dage",
              "age": "alter", "year": "jahr", "earnings": "inc"}
    data = load_panel(src, schema=schema)
    assert data.n_rows == 1
    assert cell_mean(data, "f", 26, 25).mean == 100


def test_never_treated_excluded_from_slices():
    data = load_panel(csv_of([
        "u1,u1,f,26,25,1999,100",
        "u1,u1,f,26,28,2002,120",
        "u9,u9,f,,25,1999,999",
        "u9,u9,f,,28,2002,999",
    ]))
    assert data.n_rows == 4
    assert NEVER not in data.treatment_groups()
    sl = build_two_by_two(data, 26, 28)
    assert all(data.treat_age[data.treat_age != NEVER] == 26)
    assert sl.cell("f", 26, 28).count == 1  # the never row is not pooled in


def test_malformed_scan_reports_rows():
    src = csv_of([
        "u1,u1,f,26,25,1999,100",
        "u2,u2,x,26,25,1999,100",
        "u3,u3,f,26,25,1999,oops",
    ])
    report = scan_malformed_rows(src)
    assert len(report) == 2
    columns = {r["column"] for r in report}
    assert columns == {"gender", "earnings"}


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=1e6,
                          allow_nan=False), min_size=1, max_size=20))
def test_cell_mean_equals_numpy_mean(values):
    rows = [f"u{i},u{i},f,26,25,1999,{v!r}" for i, v in enumerate(values)]
    data = load_panel(csv_of(rows))
    c = cell_mean(data, "f", 26, 25)
    assert c.count == len(values)
    assert c.mean == pytest.approx(float(np.mean(values)), rel=1e-12,
                                   abs=1e-12)
