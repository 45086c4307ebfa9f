import numpy as np
import pytest

from dimerge.align import AlignedTriple
from dimerge.errors import NumericError, ShapeError
from dimerge.geometry import (
    cross_alignment,
    decompose,
    direction_deviation,
    magnitude_deviation,
    residual_identity_terms,
    tensor_stats,
)
from dimerge.records import TensorRecord

import reference


def col(*values):
    return np.array(values, dtype=np.float64).reshape(-1, 1)


class TestDecompose:
    def test_three_four_five(self):
        dec = decompose(col(3.0, 4.0), epsilon=1e-15)
        assert dec.magnitudes[0] == pytest.approx(5.0)
        np.testing.assert_allclose(dec.directions[:, 0], [0.6, 0.8], atol=1e-12)

    def test_zero_column_gives_zero_direction(self):
        dec = decompose(col(0.0, 0.0), epsilon=1e-8)
        assert dec.magnitudes[0] == 0.0
        np.testing.assert_array_equal(dec.directions[:, 0], [0.0, 0.0])

    def test_uniform_column(self):
        dec = decompose(col(1.0, 1.0, 1.0, 1.0), epsilon=1e-15)
        assert dec.magnitudes[0] == pytest.approx(2.0)
        np.testing.assert_allclose(dec.directions[:, 0], [0.5] * 4, atol=1e-12)

    def test_reconstruction_bound(self, rng):
        # |m_j * D[:, j] - W[:, j]| <= eps * (1 + m_j) for every column
        eps = 1e-8
        for _ in range(20):
            W = rng.normal(size=(16, 9)) * 10.0 ** rng.integers(-6, 3)
            dec = decompose(W, epsilon=eps)
            recon = dec.directions * dec.magnitudes[None, :]
            gaps = np.sqrt(np.sum((recon - W) ** 2, axis=0))
            assert np.all(gaps <= eps * (1.0 + dec.magnitudes) + 1e-15)

    def test_direction_norms_near_unit_for_ordinary_columns(self, rng):
        # for column norms well above the stabilizer the directions are unit
        # up to stabilizer-scale relative error
        eps = 1e-8
        W = rng.normal(size=(32, 12)) + 0.5
        dec = decompose(W, epsilon=eps)
        norms = np.sqrt(np.einsum("ij,ij->j", dec.directions, dec.directions, dtype=np.float64))
        mags = dec.magnitudes
        assert np.all(mags > 0.1)
        assert np.all(norms <= 1.0 + 1e-12)
        assert np.all(norms >= 1.0 - 10.0 * eps / np.minimum(mags, 1.0))

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            decompose(np.array([[np.inf], [1.0]]))

    def test_rejects_non_2d(self):
        with pytest.raises(ShapeError):
            decompose(np.zeros(4))


class TestDeviations:
    def test_magnitude_gap(self):
        a = decompose(col(3.0, 4.0))
        b = decompose(col(0.0, 3.0))
        np.testing.assert_allclose(magnitude_deviation(a, b), [2.0], atol=1e-9)

    def test_identical_gives_zeros(self, rng):
        W = rng.normal(size=(6, 5))
        dec = decompose(W)
        np.testing.assert_array_equal(magnitude_deviation(dec, dec), np.zeros(5))
        np.testing.assert_allclose(direction_deviation(dec, dec), np.zeros(5), atol=1e-12)

    def test_columnwise_values(self):
        a = decompose(np.array([[0.1, 7.0], [0.0, 0.0]]))
        b = decompose(np.array([[0.4, 7.0], [0.0, 0.0]]))
        np.testing.assert_allclose(magnitude_deviation(a, b), [0.3, 0.0], atol=1e-9)

    def test_direction_deviation_extremes(self):
        parallel = direction_deviation(decompose(col(1.0, 1.0)), decompose(col(2.0, 2.0)))
        assert parallel[0] == pytest.approx(0.0, abs=1e-7)
        anti = direction_deviation(decompose(col(1.0, 0.0)), decompose(col(-1.0, 0.0)))
        assert anti[0] == pytest.approx(2.0, abs=1e-7)
        ortho = direction_deviation(decompose(col(1.0, 0.0)), decompose(col(0.0, 1.0)))
        assert ortho[0] == pytest.approx(1.0, abs=1e-7)

    def test_near_zero_column_convention(self):
        dev = direction_deviation(decompose(col(0.0, 0.0)), decompose(col(1.0, 0.0)))
        assert dev[0] == 1.0

    def test_positive_scaling_invariance(self, rng):
        # direction deviation ignores positive column scaling; magnitude
        # deviation scales as |c*m_k - m_N|
        W_k = rng.normal(size=(8, 6))
        W_n = rng.normal(size=(8, 6))
        for c in (0.5, 3.0):
            dd_scaled = direction_deviation(decompose(c * W_k, 1e-12), decompose(W_n, 1e-12))
            dd_plain = direction_deviation(decompose(W_k, 1e-12), decompose(W_n, 1e-12))
            np.testing.assert_allclose(dd_scaled, dd_plain, atol=1e-9)
            md = magnitude_deviation(decompose(c * W_k, 1e-12), decompose(W_n, 1e-12))
            expected = np.abs(c * decompose(W_k, 1e-12).magnitudes - decompose(W_n, 1e-12).magnitudes)
            np.testing.assert_allclose(md, expected, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            magnitude_deviation(decompose(np.zeros((2, 3))), decompose(np.zeros((2, 4))))


class TestCrossAlignment:
    def test_equal_residuals(self):
        d = col(1.0, 2.0)
        np.testing.assert_allclose(cross_alignment(d, d), [1.0])

    def test_opposed_residuals(self):
        d = col(1.0, 2.0)
        np.testing.assert_allclose(cross_alignment(d, -d), [-1.0])

    def test_zero_residual_convention(self):
        np.testing.assert_array_equal(cross_alignment(col(0.0, 0.0), col(1.0, 0.0)), [0.0])

    def test_symmetry_and_scale_invariance(self, rng):
        a = rng.normal(size=(10, 7))
        b = rng.normal(size=(10, 7))
        np.testing.assert_array_equal(cross_alignment(a, b), cross_alignment(b, a))
        scales = rng.uniform(0.1, 5.0, size=7)
        np.testing.assert_allclose(cross_alignment(a * scales, b), cross_alignment(a, b), atol=1e-12)

    def test_range(self, rng):
        a = rng.normal(size=(4, 50))
        b = rng.normal(size=(4, 50))
        cos = cross_alignment(a, b)
        assert np.all(cos >= -1.0) and np.all(cos <= 1.0)


class TestResidualIdentity:
    def test_equal_columns(self):
        lhs, rhs = residual_identity_terms(np.array([3.0, 4.0]), np.array([3.0, 4.0]))
        assert lhs == 0.0 and rhs == pytest.approx(0.0, abs=1e-15)

    def test_hand_example(self):
        # u=[0,2], v=[1,0]: direct distance 5; norm gap (2-1)^2 plus
        # angular 2*2*1*(1-0) gives 1+4=5
        lhs, rhs = residual_identity_terms(np.array([0.0, 2.0]), np.array([1.0, 0.0]))
        assert lhs == pytest.approx(5.0, abs=1e-12)
        assert rhs == pytest.approx(5.0, abs=1e-12)

    def test_zero_column_exactness(self):
        lhs, rhs = residual_identity_terms(np.zeros(3), np.array([1.0, 2.0, 2.0]))
        assert lhs == pytest.approx(9.0)
        assert rhs == pytest.approx(9.0)

    def test_randomized_identity_f64(self, rng):
        worst = 0.0
        for _ in range(1000):
            d = int(rng.integers(4, 513))
            u = rng.normal(size=d)
            v = rng.normal(size=d)
            lhs, rhs = residual_identity_terms(u, v)
            worst = max(worst, abs(lhs - rhs) / (1.0 + abs(lhs)))
        assert worst < 1e-10

    def test_matches_independent_recomputation(self, rng):
        for _ in range(50):
            u = rng.normal(size=16)
            v = rng.normal(size=16)
            lhs, rhs = residual_identity_terms(u, v)
            ref_lhs, ref_rhs = reference.residual_terms(u, v)
            assert lhs == pytest.approx(ref_lhs, rel=1e-12)
            assert rhs == pytest.approx(ref_rhs, rel=1e-12)


class TestTensorStats:
    def _triple(self, base, ml, mm):
        return AlignedTriple(
            "t",
            TensorRecord.from_array("t", np.asarray(base, dtype=np.float32)),
            TensorRecord.from_array("t", np.asarray(ml, dtype=np.float32)),
            TensorRecord.from_array("t", np.asarray(mm, dtype=np.float32)),
        )

    def test_all_equal(self, rng):
        W = rng.normal(size=(5, 4)) + 1.0
        stats = tensor_stats(self._triple(W, W, W))
        assert stats.residual_norm_ml == 0.0
        assert stats.residual_norm_mm == 0.0
        assert stats.mean_dir_dev_ml == pytest.approx(0.0, abs=1e-6)
        assert stats.mean_cross_cosine == 0.0  # zero residual columns report 0

    def test_one_sided_residual(self, rng):
        W = rng.normal(size=(4, 4))
        stats = tensor_stats(self._triple(W, W + 0.1 * np.eye(4), W))
        assert stats.residual_norm_mm == 0.0
        assert stats.residual_norm_ml == pytest.approx(0.2, rel=1e-5)

    def test_matches_brute_force_on_4x4(self, rng):
        base = rng.normal(size=(4, 4)).astype(np.float32)
        ml = (base + 0.2 * rng.normal(size=(4, 4))).astype(np.float32)
        mm = (base + 0.2 * rng.normal(size=(4, 4))).astype(np.float32)
        stats = tensor_stats(self._triple(base, ml, mm), epsilon=1e-8)

        b64, l64, m64 = base.astype(np.float64), ml.astype(np.float64), mm.astype(np.float64)
        exp_norm_ml = np.linalg.norm(l64 - b64)
        exp_norm_mm = np.linalg.norm(m64 - b64)
        dd_ml = np.mean([1.0 - reference.column_cosine(l64[:, j], b64[:, j]) for j in range(4)])
        dd_mm = np.mean([1.0 - reference.column_cosine(m64[:, j], b64[:, j]) for j in range(4)])
        cross = np.mean([
            reference.column_cosine((l64 - b64)[:, j], (m64 - b64)[:, j]) for j in range(4)
        ])
        assert stats.residual_norm_ml == pytest.approx(exp_norm_ml, rel=1e-6)
        assert stats.residual_norm_mm == pytest.approx(exp_norm_mm, rel=1e-6)
        assert stats.mean_dir_dev_ml == pytest.approx(dd_ml, abs=1e-6)
        assert stats.mean_dir_dev_mm == pytest.approx(dd_mm, abs=1e-6)
        assert stats.mean_cross_cosine == pytest.approx(cross, abs=1e-6)

    def test_1d_reports_without_direction_fields(self):
        stats = tensor_stats(self._triple([1.0, 2.0], [1.5, 2.0], [1.0, 2.5]))
        assert stats.mean_dir_dev_ml is None
        assert stats.residual_norm_ml == pytest.approx(0.5)
        assert -1.0 <= stats.mean_cross_cosine <= 1.0
