import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cemf.core import FactorModel, Hyperparams, InteractionMatrix, confidence, read_triplets
from cemf.errors import ParameterError, ParseError
from cemf.io import load_model, save_model


@pytest.mark.parametrize("r, alpha, expected", [(0, 40, 1.0), (1, 40, 41.0), (3, 2, 7.0)])
def test_confidence_examples(r, alpha, expected):
    assert confidence(r, alpha) == expected


@given(
    st.floats(0, 1e6, allow_nan=False),
    st.floats(0, 1e6, allow_nan=False),
    st.floats(0, 1e3, allow_nan=False),
)
def test_confidence_monotone(r1, r2, alpha):
    lo, hi = sorted((r1, r2))
    assert confidence(lo, alpha) <= confidence(hi, alpha)


def test_confidence_vectorized():
    np.testing.assert_array_equal(confidence(np.array([0.0, 1.0, 2.0]), 3.0), [1.0, 4.0, 7.0])


class TestInteractionMatrix:
    def test_views(self):
        m = InteractionMatrix.from_triplets([0, 0, 2], [1, 3, 0], [2.0, 1.0, 5.0], 3, 4)
        assert m.shape == (3, 4) and m.nnz == 3
        np.testing.assert_array_equal(m.user_items(0), [1, 3])
        np.testing.assert_array_equal(m.user_items(1), [])
        np.testing.assert_array_equal(m.item_users(0), [2])
        np.testing.assert_array_equal(m.item_counts(0), [5.0])
        assert m.preference().toarray().tolist() == [[0, 1, 0, 1], [0, 0, 0, 0], [1, 0, 0, 0]]
        np.testing.assert_array_equal(m.items_per_user(), [2, 0, 1])

    @pytest.mark.parametrize(
        "users, items, values",
        [
            ([0, 0], [1, 1], [1.0, 2.0]),  # duplicate pair
            ([3], [0], [1.0]),  # user out of range
            ([0], [-1], [1.0]),
            ([0], [0], [0.0]),  # zero is implicit, never stored
            ([0], [0], [-2.0]),
        ],
    )
    def test_invalid(self, users, items, values):
        with pytest.raises(ParameterError):
            InteractionMatrix.from_triplets(users, items, values, 3, 3)

    def test_sparsity(self):
        m = InteractionMatrix.from_triplets([0], [0], [1.0], 2, 2)
        assert m.sparsity() == pytest.approx(75.0)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 8),
    st.integers(1, 8),
    st.data(),
)
def test_triplet_round_trip(tmp_path_factory, n, m, data):
    cells = data.draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, m - 1)), max_size=n * m))
    cells = sorted(cells)
    values = data.draw(st.lists(st.integers(1, 10**9), min_size=len(cells), max_size=len(cells)))
    mat = InteractionMatrix.from_triplets(
        [c[0] for c in cells], [c[1] for c in cells], values, n, m
    )
    path = tmp_path_factory.mktemp("rt") / "m.tsv"
    mat.write(path)
    back = read_triplets(path)
    assert back == mat
    assert back.csr.data.tobytes() == mat.csr.data.tobytes()


def test_triplet_format(tmp_path):
    mat = InteractionMatrix.from_triplets([1, 0], [0, 2], [3.0, 0.5], 2, 3)
    path = tmp_path / "m.tsv"
    mat.write(path)
    assert path.read_text() == "2 3 2\n0\t2\t0.5\n1\t0\t3\n"


@pytest.mark.parametrize(
    "text, line",
    [("2 2\n", 1), ("2 2 1\n0\t1\n", 2), ("2 2 1\n0\tx\t1\n", 2), ("2 2 2\n0\t1\t1\n", None)],
)
def test_read_errors(tmp_path, text, line):
    path = tmp_path / "bad.tsv"
    path.write_text(text)
    with pytest.raises(ParseError) as exc:
        read_triplets(path)
    assert exc.value.line == line


class TestHyperparams:
    @pytest.mark.parametrize(
        "kw", [{"d": 0}, {"k": 0}, {"n_iterations": 0}, {"alpha": -1}, {"lam": -0.1}, {"init_scale": -1}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ParameterError):
            Hyperparams(**kw)

    def test_dict_round_trip(self):
        hp = Hyperparams(d=7, alpha=40.0, lam=0.01, k=2, n_iterations=3, init_scale=0.1, seed=9)
        d = hp.to_dict()
        assert d["lambda"] == 0.01 and "lam" not in d
        assert Hyperparams.from_dict(d) == hp


def test_model_save_load(tmp_path, rng):
    model = FactorModel(rng.normal(size=(3, 5)), rng.normal(size=(3, 4)), Hyperparams(d=3), [{"total": 1.0}], "cemf")
    save_model(model, tmp_path / "m")
    raw = np.fromfile(tmp_path / "m" / "X.f64", dtype="<f8")
    # column-major: the first d values are user 0's vector
    np.testing.assert_array_equal(raw[:3], model.X[:, 0])
    back = load_model(tmp_path / "m")
    np.testing.assert_array_equal(back.X, model.X)
    np.testing.assert_array_equal(back.Y, model.Y)
    assert back.hyperparams == model.hyperparams
    assert back.mode == "cemf" and back.loss_trace == [{"total": 1.0}]
