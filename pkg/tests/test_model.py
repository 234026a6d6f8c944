import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gfmr.exceptions import RankDeficiencyError, ShapeMismatchError
from gfmr.model import (
    Dataset,
    Diagnostics,
    ProjectionOperator,
    TensorShape,
    gamma_from_theta,
    matricize,
    ols_fit,
    project_rowspace,
    vectorize,
)

from oracles import dense_projection_matrix, ols_gamma


class TestTensorShape:
    def test_basic(self):
        s = TensorShape((3, 4, 5))
        assert s.M == 60
        assert s.order == 3

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            TensorShape(())
        with pytest.raises(ValueError):
            TensorShape((3, 0))
        with pytest.raises(ValueError):
            TensorShape((-1,))


class TestVectorize:
    def test_first_axis_fastest(self):
        # column-major layout: entry (i,j) of a 2x3 image lands at i + 2j
        s = TensorShape((2, 3))
        t = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        v = vectorize(t, s)
        assert v.tolist() == [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]

    def test_roundtrip_3d(self, rng):
        s = TensorShape((2, 3, 4))
        t = rng.normal(size=s.dims)
        assert np.array_equal(matricize(vectorize(t, s), s), t)

    def test_shape_checks(self):
        s = TensorShape((2, 3))
        with pytest.raises(ShapeMismatchError):
            vectorize(np.zeros((3, 2)), s)
        with pytest.raises(ShapeMismatchError):
            matricize(np.zeros(5), s)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=3))
    def test_roundtrip_property(self, dims):
        s = TensorShape(tuple(dims))
        rng = np.random.default_rng(sum(dims))
        t = rng.normal(size=s.dims)
        back = matricize(vectorize(t, s), s)
        assert np.array_equal(back, t)


class TestDataset:
    def test_validation(self, rng):
        X = rng.normal(size=(5, 2))
        Y = rng.normal(size=(5, 6))
        d = Dataset(X=X, Y=Y, shape=TensorShape((6,)))
        assert d.n == 5 and d.p == 2
        with pytest.raises(ShapeMismatchError):
            Dataset(X=X, Y=rng.normal(size=(4, 6)), shape=TensorShape((6,)))
        with pytest.raises(ShapeMismatchError):
            Dataset(X=X, Y=Y, shape=TensorShape((7,)))
        with pytest.raises(ShapeMismatchError):
            Dataset(X=X[:, 0], Y=Y, shape=TensorShape((6,)))


class TestProjection:
    def test_matches_dense_kronecker(self, rng):
        n, p, M = 7, 3, 4
        X = rng.normal(size=(n, p))
        op = ProjectionOperator.from_design(X)
        theta = rng.normal(size=n * M)
        K = dense_projection_matrix(X, M)
        assert np.allclose(project_rowspace(op, theta), K @ theta, atol=1e-12)

    def test_idempotent(self, rng):
        X = rng.normal(size=(6, 2))
        op = ProjectionOperator.from_design(X)
        theta = rng.normal(size=6 * 5)
        once = project_rowspace(op, theta)
        assert np.allclose(project_rowspace(op, once), once, atol=1e-12)

    def test_fixes_fitted_means(self, rng):
        X = rng.normal(size=(6, 2))
        op = ProjectionOperator.from_design(X)
        Gamma = rng.normal(size=(2, 5))
        theta = (X @ Gamma).ravel()
        assert np.allclose(project_rowspace(op, theta), theta, atol=1e-12)

    def test_rank_deficiency_raises(self, rng):
        x = rng.normal(size=6)
        X = np.column_stack([x, 2.0 * x])
        with pytest.raises(RankDeficiencyError):
            ProjectionOperator.from_design(X)
        with pytest.raises(RankDeficiencyError):
            ProjectionOperator.from_design(rng.normal(size=(2, 3)))

    def test_length_check(self, rng):
        op = ProjectionOperator.from_design(rng.normal(size=(5, 2)))
        with pytest.raises(ShapeMismatchError):
            project_rowspace(op, np.zeros(12))

    def test_gamma_recovery(self, rng):
        n, p, M = 8, 3, 5
        X = rng.normal(size=(n, p))
        op = ProjectionOperator.from_design(X)
        Gamma = rng.normal(size=(p, M))
        theta = (X @ Gamma).ravel()
        assert np.allclose(gamma_from_theta(op, X, theta), Gamma, atol=1e-10)


class TestOls:
    def test_matches_normal_equations(self, rng):
        X = rng.normal(size=(9, 3))
        Y = rng.normal(size=(9, 4))
        from gfmr.model import Dataset

        data = Dataset(X=X, Y=Y, shape=TensorShape((4,)))
        res = ols_fit(data)
        assert np.allclose(res.Gamma, ols_gamma(X, Y), atol=1e-10)
        assert res.converged and res.iterations == 0
        assert np.allclose(res.theta, (X @ res.Gamma).ravel())

    def test_perfect_fit_recovers_exactly(self, rng):
        X = rng.normal(size=(6, 2))
        Gamma = rng.normal(size=(2, 3))
        data = Dataset(X=X, Y=X @ Gamma, shape=TensorShape((3,)))
        assert np.allclose(ols_fit(data).Gamma, Gamma, atol=1e-10)


class TestDiagnostics:
    def test_combined_is_elementwise_max(self):
        d = Diagnostics(
            rel_change=np.array([1.0, 0.1, 0.01]),
            feasibility=np.array([0.5, 0.2, 0.001]),
            objective=np.zeros(3),
        )
        assert d.combined().tolist() == [1.0, 0.2, 0.01]

    def test_empty(self):
        d = Diagnostics.empty()
        assert d.combined().size == 0
