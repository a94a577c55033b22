import numpy as np
import pytest

from pixelscope.components import ICAParams, fit_ica, fit_pca, whiten
from pixelscope.datamatrix import DataMatrix
from pixelscope.errors import ValidationError


def amari_index(w, a):
    """Permutation/scale-invariant recovery error of unmixing w vs mixing a;
    0 means perfect separation."""
    p = np.abs(w @ a)
    k = p.shape[0]
    rows = (p / p.max(axis=1, keepdims=True)).sum(axis=1) - 1
    cols = (p / p.max(axis=0, keepdims=True)).sum(axis=0) - 1
    return (rows.sum() + cols.sum()) / (2 * k * (k - 1))


def mixed_sources(rng, n, dist, mixing):
    k = mixing.shape[0]
    if dist == "uniform":
        s = rng.uniform(-np.sqrt(3), np.sqrt(3), size=(n, k))
    else:
        s = rng.laplace(size=(n, k))
    x = s @ mixing.T
    return DataMatrix(data=x, shape=(1, mixing.shape[0], 1)), s


def test_two_uniform_sources_recovered():
    rng = np.random.default_rng(0)
    a = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    dm, _ = mixed_sources(rng, 20_000, "uniform", a)
    basis = fit_ica(dm, ICAParams(k=2, pre_pca_k=2, seed=0))
    assert basis.converged
    assert amari_index(basis.unmixing, a) < 0.05


def test_laplace_sources_across_seeds():
    a = np.array([[0.9, 0.3, 0.1], [0.2, 1.0, -0.4], [-0.3, 0.2, 0.8]])
    good = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        dm, _ = mixed_sources(rng, 20_000, "laplace", a)
        basis = fit_ica(dm, ICAParams(k=3, pre_pca_k=3, seed=seed))
        w = basis.unmixing_whitened
        assert np.abs(w @ w.T - np.eye(3)).max() <= 1e-4
        if amari_index(basis.unmixing, a) < 0.05:
            good += 1
    assert good >= 18


def test_already_independent_whitened_converges_immediately():
    rng = np.random.default_rng(1)
    dm, _ = mixed_sources(rng, 5000, "uniform", np.eye(2))
    basis = fit_ica(dm, ICAParams(k=2, pre_pca_k=2, seed=3, tol=1e-2))
    assert basis.converged
    assert basis.n_iter <= 10


def test_ica_ordering_and_normalization():
    rng = np.random.default_rng(2)
    a = np.array([[3.0, 0.2], [0.1, 1.0]])
    dm, _ = mixed_sources(rng, 10_000, "laplace", a)
    basis = fit_ica(dm, ICAParams(k=2, pre_pca_k=2, seed=0))
    assert basis.kind == "ica"
    # explained variances descending; components unit norm and sign-oriented
    assert basis.eigenvalues[0] >= basis.eigenvalues[1]
    for v in basis.components:
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)
        assert v[np.argmax(np.abs(v))] > 0


def test_non_convergence_is_flagged_not_raised():
    rng = np.random.default_rng(3)
    a = np.array([[1.0, 0.3], [0.2, 1.0]])
    dm, _ = mixed_sources(rng, 500, "laplace", a)
    basis = fit_ica(dm, ICAParams(k=2, pre_pca_k=2, seed=0, max_iter=1, tol=1e-12))
    assert not basis.converged
    assert basis.n_iter == 1


def test_invalid_params():
    rng = np.random.default_rng(4)
    dm, _ = mixed_sources(rng, 1000, "uniform", np.eye(3))
    with pytest.raises(ValidationError):
        fit_ica(dm, ICAParams(k=4, pre_pca_k=3))
    with pytest.raises(ValidationError):
        fit_ica(dm, ICAParams(k=2, pre_pca_k=2, tol=-1))
    with pytest.raises(ValidationError):
        fit_ica(dm, ICAParams(k=2, pre_pca_k=2, max_iter=0))


def test_n_too_small_guard():
    rng = np.random.default_rng(5)
    dm, _ = mixed_sources(rng, 15, "uniform", np.eye(2))
    with pytest.raises(ValidationError, match="10"):
        fit_ica(dm, ICAParams(k=2, pre_pca_k=2))


def test_unmixing_recovers_sources_in_whitened_space():
    # sanity: sources recovered via the full-space unmixing are decorrelated
    rng = np.random.default_rng(6)
    a = np.array([[1.0, 0.6], [0.2, 0.9]])
    dm, _ = mixed_sources(rng, 20_000, "laplace", a)
    basis = fit_ica(dm, ICAParams(k=2, pre_pca_k=2, seed=1))
    s_hat = (dm.data - basis.mean) @ basis.unmixing.T
    corr = np.corrcoef(s_hat, rowvar=False)
    assert np.abs(corr - np.eye(2)).max() < 1e-2
