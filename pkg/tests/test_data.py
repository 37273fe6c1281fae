import numpy as np
import pytest
from hypothesis import given, strategies as st

from epijoint.config import Calendar
from epijoint.data import (ObservationError, ObservationSet, load_chain, load_observations,
                           save_chain, write_observations)
from epijoint.sampler import ChainRecord


def weekly_csv(path, rows):
    path.write_text("week,y_h,y_ic\n" + "".join(f"{i},{a},{b}\n" for i, (a, b) in enumerate(rows)))
    return path


def test_zero_series(tmp_path):
    p = weekly_csv(tmp_path / "w.csv", [(0, 0)] * 33)
    obs = load_observations({"weekly": p}, Calendar.from_weeks(33))
    assert obs.n_weeks == 33 and not obs.y_h.any() and not obs.y_ic.any()


def test_negative_count_names_row(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("week,y_h,y_ic\n0,1,0\n1,-3,0\n2,0,0\n")
    with pytest.raises(ObservationError, match="row 3"):
        load_observations({"weekly": p}, Calendar.from_weeks(3))


def test_length_mismatch(tmp_path):
    p = weekly_csv(tmp_path / "w.csv", [(0, 0)] * 4)
    with pytest.raises(ObservationError, match="calendar"):
        load_observations({"weekly": p}, Calendar.from_weeks(5))


def test_bad_header(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("wk,h,ic\n0,0,0\n")
    with pytest.raises(ObservationError, match="header"):
        load_observations({"weekly": p}, Calendar.from_weeks(1))


def test_positivity_exceeds_tested():
    with pytest.raises(ObservationError, match="exceed"):
        ObservationSet([0], [0], virology=[[0, 5, 6]])


@given(st.integers(1, 6).flatmap(lambda T: st.tuples(
    st.lists(st.integers(0, 10**6), min_size=T, max_size=T),
    st.lists(st.integers(0, 10**6), min_size=T, max_size=T),
    st.lists(st.integers(0, 500), min_size=7 * T, max_size=7 * T),
    st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=T, max_size=T))))
def test_round_trip(tmp_path_factory, arrays):
    yh, yic, yg, vir = arrays
    T = len(yh)
    virology = [[t, n + k, k] for t, (n, k) in enumerate(vir)]
    obs = ObservationSet(yh, yic, yg, virology)
    d = tmp_path_factory.mktemp("obs")
    paths = write_observations(obs, d)
    assert load_observations(paths, Calendar.from_weeks(T)) == obs


def _rec(i, beta):
    return ChainRecord(i, {"beta": beta}, -10.5 - i, "exact_independent", 1, 0.0, -1.0,
                       i % 2 == 0, i < 3)


def test_chain_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [_rec(i, float(v)) for i, v in enumerate(rng.random(1000))]
    path = tmp_path / "c.jsonl"
    save_chain(recs, path)
    assert len(path.read_text().splitlines()) == 1000
    back = load_chain(path)
    assert [r.iteration for r in back] == list(range(1000))
    assert [r.params["beta"] for r in back] == [r.params["beta"] for r in recs]
    assert back == recs


def test_single_record_and_neg_inf(tmp_path):
    r = ChainRecord(0, {"a": 1 / 3}, float("-inf"), "mc_joint_icu_first", 5, 0.0, 0.0,
                    False, True)
    save_chain([r], tmp_path / "c.jsonl")
    assert load_chain(tmp_path / "c.jsonl") == [r]


def test_empty_chain_rejected(tmp_path):
    with pytest.raises(ValueError):
        save_chain([], tmp_path / "c.jsonl")
