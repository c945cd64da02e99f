import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sharpot.exceptions import InvalidInputError
from sharpot.io import (
    FileFormatError,
    emit_svg_bars,
    emit_svg_panels,
    load_model,
    read_histogram,
    read_histograms,
    read_matrix,
    save_model,
    write_histogram,
    write_matrix,
    write_records,
)
from sharpot.learning import SinkhornRegressor, gaussian_histogram_task

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("suffix", [".csv", ".json"])
def test_histogram_round_trip(tmp_path, rng, suffix):
    h = rng.dirichlet(np.ones(9))
    path = tmp_path / f"h{suffix}"
    write_histogram(path, h)
    np.testing.assert_allclose(read_histogram(path), h, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
def test_csv_matrix_round_trip(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("m") / "m.csv"
    write_matrix(path, A)
    # 12 significant digits: half a unit in the last place
    np.testing.assert_allclose(read_matrix(path), A, rtol=5e-12, atol=0)


def test_json_matrix_is_exact(tmp_path, rng):
    A = rng.uniform(size=(3, 4))
    write_matrix(tmp_path / "m.json", A)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.json"), A)


def test_json_flat_entries(tmp_path):
    (tmp_path / "m.json").write_text('{"entries": [0, 1, 2, 3, 4, 5], "n": 2, "m": 3}')
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.json"), [[0, 1, 2], [3, 4, 5]])


def test_csv_rows_are_histograms(tmp_path):
    (tmp_path / "h.csv").write_text("0.5,0.5\n\n0.25,0.75\n")
    np.testing.assert_array_equal(read_histograms(tmp_path / "h.csv"), [[0.5, 0.5], [0.25, 0.75]])


@pytest.mark.parametrize(
    "name, text",
    [
        ("ragged.csv", "1,2\n3\n"),
        ("words.csv", "1,two\n"),
        ("empty.csv", "\n\n"),
        ("list.json", "[1, 2]"),
        ("broken.json", "{"),
        ("nothing.json", '{"n": 2}'),
        ("shape.json", '{"entries": [1, 2, 3], "n": 2, "m": 2}'),
    ],
)
def test_bad_files(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    with pytest.raises(FileFormatError):
        read_matrix(path)


def test_two_rows_is_not_one_histogram(tmp_path):
    (tmp_path / "h.csv").write_text("0.5,0.5\n0.5,0.5\n")
    with pytest.raises(FileFormatError):
        read_histogram(tmp_path / "h.csv")


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        read_matrix(tmp_path / "absent.csv")


def test_records(tmp_path):
    write_records(tmp_path / "r.csv", ["lambda", "gap", "iterations"], [(1.0, 0.5, 3), (2.0, float("nan"), -1)])
    assert (tmp_path / "r.csv").read_text() == "lambda,gap,iterations\n1,0.5,3\n2,nan,-1\n"


class TestModelFile:
    def test_round_trip_predictions(self, tmp_path):
        X, Y = gaussian_histogram_task(5, n_bins=6, seed=0)
        est = SinkhornRegressor(sigma=0.1, gamma=0.05, max_iter=20).fit(X, Y)
        save_model(tmp_path / "model.bin", est)
        loaded = load_model(tmp_path / "model.bin")
        assert loaded.get_params()["sigma"] == 0.1 and loaded.lam == est.lam
        np.testing.assert_array_equal(loaded.outputs_, est.outputs_)
        np.testing.assert_array_equal(loaded.scores(X), est.scores(X))
        np.testing.assert_array_equal(loaded.predict(X[:2]), est.predict(X[:2]))

    def test_magic_checked(self, tmp_path):
        (tmp_path / "model.bin").write_bytes(b"not a model")
        with pytest.raises(FileFormatError):
            load_model(tmp_path / "model.bin")

    def test_truncated(self, tmp_path):
        X, Y = gaussian_histogram_task(3, n_bins=4, seed=0)
        save_model(tmp_path / "model.bin", SinkhornRegressor().fit(X, Y))
        data = (tmp_path / "model.bin").read_bytes()
        (tmp_path / "cut.bin").write_bytes(data[:-8])
        with pytest.raises(FileFormatError):
            load_model(tmp_path / "cut.bin")


class TestSvg:
    def test_deterministic(self, tmp_path, rng):
        H = rng.dirichlet(np.ones(7), size=3)
        emit_svg_bars(H, ["a", "b", "c"], tmp_path / "1.svg", title="t")
        emit_svg_bars(H, ["a", "b", "c"], tmp_path / "2.svg", title="t")
        assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()

    def test_canvas_and_escaping(self, tmp_path):
        emit_svg_bars([[0.5, 0.5]], ["<x & y>"], tmp_path / "p.svg")
        text = (tmp_path / "p.svg").read_text()
        assert 'width="800" height="400"' in text
        assert "&lt;x &amp; y&gt;" in text

    def test_uniform_bars_equal(self, tmp_path):
        emit_svg_bars([np.full(5, 0.2)], ["u"], tmp_path / "u.svg")
        heights = re.findall(r'<rect x="[\d.]+" y="[\d.]+" width="[\d.]+" height="([\d.]+)" fill="#1f77b4"/>', (tmp_path / "u.svg").read_text())
        bars = heights[:5]
        assert len(set(bars)) == 1 and float(bars[0]) > 0

    def test_empty_list_writes_nothing(self, tmp_path):
        with pytest.raises(InvalidInputError):
            emit_svg_bars([], [], tmp_path / "e.svg")
        assert not (tmp_path / "e.svg").exists()

    def test_label_count(self, tmp_path):
        with pytest.raises(InvalidInputError):
            emit_svg_bars([[1.0]], ["a", "b"], tmp_path / "e.svg")
        assert not (tmp_path / "e.svg").exists()

    def test_panels(self, tmp_path):
        emit_svg_panels([("left", [[1.0, 0.0]], ["a"]), ("right", [[0.0, 1.0]], None)], tmp_path / "p.svg")
        text = (tmp_path / "p.svg").read_text()
        assert ">left<" in text and ">right<" in text
        with pytest.raises(InvalidInputError):
            emit_svg_panels([], tmp_path / "none.svg")
