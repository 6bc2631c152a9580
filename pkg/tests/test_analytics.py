import csv

import numpy as np
import pytest

from kgsim.analytics import export_projection, pca_2d, power_iteration


def jacobi_eigh(a, sweeps=100):
    """Cyclic Jacobi rotations; returns eigenvalues descending and matching columns."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < 1e-15 * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta ** 2 + 1)) if theta else 1.0
                c = 1 / np.sqrt(t ** 2 + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = s, -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a)
    order = np.argsort(-vals)
    return vals[order], v[:, order]


def oracle_pca(x):
    xc = x - x.mean(axis=0)
    return jacobi_eigh(xc.T @ xc / (len(x) - 1))


def test_jacobi_oracle_self_check():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    vals, vecs = jacobi_eigh(m)
    np.testing.assert_allclose(vals, [3, 1], atol=1e-14)
    assert abs(vecs[0, 0]) == pytest.approx(1 / np.sqrt(2))


@pytest.mark.parametrize("seed", range(20))
def test_pca_matches_jacobi(seed):
    x = np.random.default_rng(seed).normal(size=(50, 10))
    proj = pca_2d(x)
    vals, vecs = oracle_pca(x)
    np.testing.assert_allclose(proj.explained_variance, vals[:2], atol=1e-8)
    for i in range(2):
        a, b = proj.components[:, i], vecs[:, i]
        assert min(np.abs(a - b).max(), np.abs(a + b).max()) <= 1e-6


def test_collinear_rows():
    proj = pca_2d(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]))
    assert proj.explained_variance[1] == pytest.approx(0, abs=1e-12)
    np.testing.assert_allclose(proj.components[:, 0], [1 / np.sqrt(2)] * 2, atol=1e-9)
    assert abs(proj.components[:, 0] @ proj.components[:, 1]) < 1e-12


def test_isotropic_cross_equal_variances():
    x = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    proj = pca_2d(x)
    assert proj.explained_variance[0] == pytest.approx(proj.explained_variance[1], rel=1e-9)


def test_variance_ordering_and_orthonormal():
    x = np.random.default_rng(1).normal(size=(30, 6)) * np.arange(1, 7)
    proj = pca_2d(x)
    assert proj.explained_variance[0] >= proj.explained_variance[1] >= 0
    np.testing.assert_allclose(proj.components.T @ proj.components, np.eye(2), atol=1e-9)
    np.testing.assert_allclose(proj.coordinates, (x - x.mean(0)) @ proj.components, atol=1e-12)


def test_rotation_invariance():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 5)) * [5, 3, 1, 0.5, 0.1]
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    a, b = pca_2d(x), pca_2d(x @ q)
    np.testing.assert_allclose(a.explained_variance, b.explained_variance, rtol=1e-8)
    # Coordinates agree up to a per-axis sign.
    for i in range(2):
        ca, cb = a.coordinates[:, i], b.coordinates[:, i]
        assert min(np.abs(ca - cb).max(), np.abs(ca + cb).max()) < 1e-6


def test_sign_pinned():
    proj = pca_2d(np.random.default_rng(3).normal(size=(20, 4)))
    for i in range(2):
        v = proj.components[:, i]
        assert v[np.argmax(np.abs(v))] > 0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        pca_2d(np.ones((2, 3)))
    with pytest.raises(ValueError):
        pca_2d(np.ones((5, 1)))
    with pytest.raises(ValueError):
        pca_2d(np.ones((5, 3)))
    bad = np.zeros((4, 2))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        pca_2d(bad)


def test_power_iteration_zero_matrix():
    lam, v = power_iteration(np.zeros((3, 3)))
    assert lam == 0 and np.linalg.norm(v) == pytest.approx(1)


def test_export_round_trip(tmp_path):
    x = np.random.default_rng(4).normal(size=(5, 3))
    proj = pca_2d(x)
    path = tmp_path / "p.csv"
    export_projection(proj, ["a", "b", "c", "d", "e"], {0: "drug", 2: "gene"}, path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["entity", "x", "y", "type"]
    assert [r["type"] for r in rows] == ["drug", "unknown", "gene", "unknown", "unknown"]
    got = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    np.testing.assert_allclose(got, proj.coordinates, atol=5e-7)
