import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvpb.errors import MvpbError, PreconditionError
from mvpb.tables import Table, config_hash, emit, from_csv, parse, to_csv

META = {"config_hash": "abc", "r0": 2.6, "mu": 3.36, "kappa0": 0.18, "kappa1": 0.45, "nu_convention": "hemisphere", "basis": {"n_max": 16, "l_max": 6}}


def sample() -> Table:
    t = Table(["eps", "t", "error", "data"], metadata=META)
    t.append([0.1, 1.0, 1.25e-3, "generic"])
    t.append({"eps": 0.05, "t": 1.0, "error": float("nan"), "data": "well_prepared"})
    return t


def test_empty_table_is_header_only(tmp_path):
    p = emit(Table(["a", "b"], metadata={"k": 1}), tmp_path / "e.csv")
    lines = p.read_text().splitlines()
    assert lines[-1] == "a,b"
    assert parse(p).rows == []


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_round_trip(tmp_path, suffix):
    t = sample()
    assert parse(emit(t, tmp_path / f"t{suffix}")) == t


def test_metadata_header_present():
    text = to_csv(sample())
    for key in ("config_hash", "r0", "mu", "kappa0", "kappa1", "nu_convention", "basis"):
        assert f"# {key}=" in text


def test_hash_tracks_config():
    a = {"collision": {"n_max": 16, "l_max": 6}}
    b = {"collision": {"n_max": 12, "l_max": 6}}
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash({"collision": {"l_max": 6, "n_max": 16}})


def test_row_width_checked():
    with pytest.raises(PreconditionError):
        Table(["a", "b"]).append([1])


def test_not_a_table():
    with pytest.raises(PreconditionError):
        from_csv("a,b\n1,2\n")


def test_write_failure_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(MvpbError, match="file"):
        emit(sample(), blocker / "sub" / "t.csv")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(rows=st.lists(st.tuples(finite, finite, st.integers(-(2**40), 2**40)), max_size=8))
def test_floats_survive_csv_exactly(rows):
    t = Table(["x", "y", "n"], [list(r) for r in rows], {"seed": 1})
    back = from_csv(to_csv(t))
    for a, b in zip(t.rows, back.rows):
        assert a[2] == b[2]
        for u, v in zip(a[:2], b[:2]):
            assert float(v) == u or (math.isnan(u) and math.isnan(v))


def test_plain_csv_needs_lenient_mode():
    text = "x,y\n1,2.5\n2,5.0\n"
    with pytest.raises(PreconditionError):
        from_csv(text)
    t = from_csv(text, strict=False)
    assert t.columns == ["x", "y"] and t.column("y") == [2.5, 5.0] and t.metadata == {}
    with pytest.raises(PreconditionError):
        from_csv("", strict=False)
