import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from decorradj.population import (
    DataError,
    FinitePopulation,
    FunctionClassSpec,
    NormedVector,
    ResidualSet,
    ate,
    bin_index,
    has_potentials,
    inner_n,
    load_observed_csv,
    load_potentials_csv,
    min_norm_lstsq,
    norm_n,
    observe,
    oracle_projection,
    residuals,
    write_csv,
)


def test_normalized_norms():
    assert norm_n([3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert inner_n([1, 2], [3, 4]) == 5.5
    assert NormedVector.of([2, 2]).norm_n == 2.0


def test_population_is_read_only_and_validated():
    X = np.arange(6.0).reshape(3, 2)
    pop = FinitePopulation(X, [1, 2, 3], [0, 0, 0])
    X[0, 0] = 99
    assert pop.X[0, 0] == 0  # defensive copy
    with pytest.raises(ValueError):
        pop.y1[0] = 5
    assert (pop.n, pop.d) == (3, 2)
    assert FinitePopulation([1, 2], [1, 2], [0, 0]).d == 1
    with pytest.raises(DataError):
        FinitePopulation(X, [1, 2], [0, 0, 0])
    with pytest.raises(DataError):
        FinitePopulation(X, [1, np.nan, 3], [0, 0, 0])


def test_ate_and_observe():
    pop = FinitePopulation(np.ones((4, 1)), [1, 2, 3, 4], [0, 1, 0, 1])
    assert ate(pop) == 2.0
    np.testing.assert_array_equal(observe(pop, np.array([1, 0, 1, 0])), [1, 1, 3, 1])
    with pytest.raises(DataError):
        observe(pop, np.array([1, 0]))
    r = residuals(pop, np.ones(4), np.zeros(4))
    np.testing.assert_array_equal(r.delta1, [0, 1, 2, 3])
    with pytest.raises(DataError):
        ResidualSet([1.0], [1.0, 2.0])


@settings(max_examples=40)
@given(
    arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 6)), elements=st.floats(-5, 5)),
    st.integers(0, 10_000),
)
def test_min_norm_lstsq_matches_pinv(X, seed):
    y = np.random.default_rng(seed).normal(size=X.shape[0])
    b = min_norm_lstsq(X, y)
    ref = np.linalg.pinv(X) @ y
    scale = 1 + np.abs(ref).max()
    # the cutoff conventions of the two routines may differ on near-singular spectra
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] > 0 and (s[-1] / s[0] > 1e-8 or s[-1] == 0):
        np.testing.assert_allclose(X @ b, X @ ref, atol=1e-8 * scale * (1 + np.abs(X).max()))


def test_min_norm_on_rank_deficient_design():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    b = min_norm_lstsq(X, np.array([2.0, 4.0, 6.0]))
    np.testing.assert_allclose(b, [1.0, 1.0], atol=1e-12)
    assert np.all(min_norm_lstsq(np.zeros((3, 2)), np.ones(3)) == 0)


def test_bin_index_edges():
    np.testing.assert_array_equal(bin_index([0.0, 0.2499, 0.25, 0.999, 1.0], 4), [0, 0, 1, 3, 3])
    with pytest.raises(DataError):
        bin_index([1.2], 4)


def test_regressogram_projection_matches_loop():
    rng = np.random.default_rng(5)
    x = rng.random(50)
    y1 = rng.normal(size=50)
    pop = FinitePopulation(x, y1, np.zeros(50))
    f1, f0 = oracle_projection(pop, FunctionClassSpec("regressogram", bins=7))
    for i in range(50):
        b = min(int(x[i] * 7), 6)
        members = [j for j in range(50) if min(int(x[j] * 7), 6) == b]
        assert f1[i] == pytest.approx(np.mean(y1[members]), abs=1e-12)
    assert np.all(f0 == 0)


def test_linear_and_custom_projection():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20, 3))
    y1 = rng.normal(size=20)
    pop = FinitePopulation(X, y1, 2 * y1)
    f1, f0 = oracle_projection(pop, FunctionClassSpec("linear"))
    assert np.abs(X.T @ (y1 - f1)).max() < 1e-10
    np.testing.assert_allclose(f0, 2 * f1, atol=1e-12)
    g1, _ = oracle_projection(pop, FunctionClassSpec("custom", projector=lambda v: 0 * v))
    assert np.all(g1 == 0)
    with pytest.raises(ValueError):
        oracle_projection(pop, FunctionClassSpec("custom"))
    with pytest.raises(ValueError):
        oracle_projection(pop, FunctionClassSpec("spline"))


def test_csv_roundtrip_is_exact(tmp_path):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(15, 3))
    y, t = rng.normal(size=15), (rng.random(15) < 0.5).astype(int)
    y1, y0 = rng.normal(size=15), rng.normal(size=15)
    path = tmp_path / "d.csv"
    write_csv(path, X, {"y": y, "t": t, "y1": y1, "y0": y0})
    obs = load_observed_csv(path)
    assert np.array_equal(obs.X, X) and np.array_equal(obs.y, y) and np.array_equal(obs.t, t)
    pop = load_potentials_csv(path)
    assert np.array_equal(pop.y1, y1) and np.array_equal(pop.y0, y0)
    assert has_potentials(path)
    assert obs.n == 15


@pytest.mark.parametrize(
    "text",
    [
        "",
        "x1,y,t\n",
        "x1,y\n1,2\n",
        "x1,y,t\n1,2,0.5\n",
        "x1,y,t\n1,abc,1\n",
        "x1,y,t\n1,2\n",
        "x2,y,t\n1,2,1\n",
        "x1,y,t\n1,inf,1\n",
    ],
)
def test_malformed_observed_csv(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError):
        load_observed_csv(p)


def test_potentials_require_both_columns(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("x1,y1\n1,2\n")
    assert not has_potentials(p)
    with pytest.raises(DataError):
        load_potentials_csv(p)
