import numpy as np
import pytest

from kernelbundle.contour import Rectangle
from kernelbundle.errors import (
    InputError,
    NumericalError,
    RankGapError,
    ReductionInvalidError,
    ValidationError,
)
from kernelbundle.family import (
    PolyTerm,
    SigmaRegion,
    branching_chart,
    jordan_chart,
    matrix_polynomial_chart,
)
from kernelbundle.reduction import (
    BasePointData,
    Cluster,
    SchurEvaluator,
    base_point_data,
    kernel_cokernel,
    local_multiplicity,
    validate_neighborhood,
)


class TestKernelCokernel:
    def test_diagonal(self):
        K, Rperp = kernel_cokernel(np.diag([3.0, 2.0, 0.0]))
        assert np.allclose(K, np.array([[0.0], [0.0], [1.0]]))
        assert np.allclose(Rperp, np.array([[0.0], [0.0], [1.0]]))

    def test_rank_one(self):
        u = np.array([1.0, 1.0j]) / np.sqrt(2)
        v = np.array([1.0, -1.0]) / np.sqrt(2)
        M = np.outer(u, v.conj())
        K, Rperp = kernel_cokernel(M, rank_tol=1e-8)
        assert K.shape == (2, 1) and Rperp.shape == (2, 1)
        assert np.linalg.norm(M @ K) < 1e-14
        assert np.linalg.norm(Rperp.conj().T @ M) < 1e-14
        assert np.linalg.norm(K.conj().T @ K - np.eye(1)) < 1e-14
        # phase fixing: the dominant entry of each column is real positive
        assert K[np.argmax(np.abs(K[:, 0])), 0].imag == pytest.approx(0.0, abs=1e-15)

    def test_phase_deterministic(self):
        rng = np.random.default_rng(11)
        M = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        M[:, 0] = M[:, 1]  # force a kernel
        K1, R1 = kernel_cokernel(M, rank_tol=1e-8)
        K2, R2 = kernel_cokernel(M * np.exp(0.7j), rank_tol=1e-8)
        assert np.allclose(K1, K2, atol=1e-12)
        K3, R3 = kernel_cokernel(M, rank_tol=1e-8)
        assert np.array_equal(K1, K3) and np.array_equal(R1, R3)

    def test_rank_gap_guard(self):
        with pytest.raises(RankGapError) as info:
            kernel_cokernel(np.diag([1.0, 1e-10]), rank_tol=1e-10)
        assert info.value.singular_values is not None
        assert len(info.value.singular_values) == 2

    def test_scale_floor_recognizes_roundoff_zero(self):
        M = 1e-17 * np.eye(2)
        K, _ = kernel_cokernel(M)
        assert K.shape[1] == 0  # full rank relative to its own noise
        K, _ = kernel_cokernel(M, scale_floor=1.0)
        assert K.shape[1] == 2

    def test_zero_matrix(self):
        K, Rperp = kernel_cokernel(np.zeros((3, 3)))
        assert K.shape == (3, 3)
        assert np.allclose(K.conj().T @ K, np.eye(3))

    def test_square_only(self):
        with pytest.raises(InputError):
            kernel_cokernel(np.zeros((2, 3)))


class TestBasePoint:
    def test_jordan_cluster(self, jordan_pipeline):
        _, base, _, _ = jordan_pipeline
        assert len(base.clusters) == 1
        c = base.clusters[0]
        assert abs(c.center) < 1e-10
        assert c.multiplicity == 2
        assert c.kernel_dim == 1
        assert np.allclose(c.K, [[1.0], [0.0]], atol=1e-12)
        assert np.allclose(c.Rperp, [[0.0], [1.0]], atol=1e-12)
        assert base.total_multiplicity == 2

    def test_branching_full_kernel(self, branching_pipeline):
        _, base, _, _ = branching_pipeline
        c = base.clusters[0]
        assert c.multiplicity == 2 and c.kernel_dim == 2
        assert c.Kperp.shape == (2, 0)

    def test_scalar_sl_clusters(self, sl_scalar_pipeline):
        _, base, _, _ = sl_scalar_pipeline
        centers = sorted(c.center.imag for c in base.clusters)
        assert centers == pytest.approx([-np.sqrt(1.25), np.sqrt(1.25)], abs=1e-10)
        for c in base.clusters:
            assert c.multiplicity == 1 and c.kernel_dim == 1
            assert np.argmax(np.abs(c.K[:, 0])) == 0  # first sine mode

    def test_conjugate_swapped(self, jordan_pipeline):
        _, base, _, _ = jordan_pipeline
        sw = base.conjugate_swapped()
        c, cs = base.clusters[0], sw.clusters[0]
        assert cs.center == np.conj(c.center)
        assert np.array_equal(cs.K, c.Rperp)
        assert np.array_equal(cs.Rperp, c.K)

    def test_deterministic(self):
        chart = jordan_chart()
        a = base_point_data(chart, [0.0])
        b = base_point_data(chart, [0.0])
        assert a.clusters[0].center == b.clusters[0].center
        assert np.array_equal(a.clusters[0].K, b.clusters[0].K)

    def test_restricted_search(self, sl_scalar_chart):
        chart, _ = sl_scalar_chart
        base = base_point_data(chart, [0.0], search=Rectangle(-1.0, 1.0, 0.0, 1.58))
        assert len(base.clusters) == 1
        assert base.clusters[0].center.imag == pytest.approx(np.sqrt(1.25), abs=1e-10)

    def test_no_singular_points(self):
        terms = [PolyTerm(1, (0,), np.eye(2)), PolyTerm(0, (0,), 5.0 * np.eye(2))]
        chart = matrix_polynomial_chart(terms, SigmaRegion(-2, 2, -2, 2))
        with pytest.raises(ValidationError):
            base_point_data(chart, [0.0])

    def test_oversized_epsilon(self):
        with pytest.raises(ValidationError):
            base_point_data(branching_chart(), [0.0], epsilon=1.9)

    def test_to_dict(self, jordan_pipeline):
        _, base, _, _ = jordan_pipeline
        d = base.to_dict()
        assert d["clusters"][0]["multiplicity"] == 2
        assert d["clusters"][0]["kernel_dim"] == 1


class TestSchur:
    def test_jordan_closed_form(self, jordan_pipeline):
        chart, base, _, _ = jordan_pipeline
        ev = SchurEvaluator(chart, base, 0)
        for s in (0.3, -0.2 + 0.4j, 0.7j):
            got = ev.schur([0.0], s)
            assert got.shape == (1, 1)
            assert got[0, 0] == pytest.approx(-(s * s), abs=1e-12)
            assert ev.qdet([0.0], s) == pytest.approx(-(s * s), abs=1e-12)

    def test_full_kernel_reduces_to_family(self, branching_pipeline):
        chart, base, _, _ = branching_pipeline
        ev = SchurEvaluator(chart, base, 0)
        y, s = [0.15], 0.3 + 0.1j
        assert np.allclose(ev.schur(y, s), chart.eval(y, s), atol=1e-14)
        assert ev.qdet(y, s) == pytest.approx(s * s - 0.15 ** 2, abs=1e-13)

    def test_block_reconstruction(self, jordan_pipeline):
        chart, base, _, _ = jordan_pipeline
        ev = SchurEvaluator(chart, base, 0)
        c = base.clusters[0]
        y, s = [0.0], 0.2 - 0.3j
        p11, p12, p21, p22 = ev.blocks(y, s)
        rebuilt = (
            (c.Rperp @ p11 + c.R @ p21) @ c.K.conj().T
            + (c.Rperp @ p12 + c.R @ p22) @ c.Kperp.conj().T
        )
        assert np.allclose(rebuilt, chart.eval(y, s), atol=1e-12)

    def test_many_matches_single(self, sl_scalar_pipeline):
        chart, base, _, _ = sl_scalar_pipeline
        ev = SchurEvaluator(chart, base, 0)
        c = base.clusters[0]
        sigmas = c.center + 0.5 * c.radius * np.exp(1j * np.linspace(0, 6, 7))
        many = ev.schur_many([0.3], sigmas)
        dets = ev.qdet_many([0.3], sigmas)
        for k, s in enumerate(sigmas):
            assert np.allclose(many[k], ev.schur([0.3], s), atol=1e-13)
            assert dets[k] == pytest.approx(ev.qdet([0.3], s), abs=1e-12)
        q = ev.qdet_function([0.3])
        assert q(sigmas[0]) == pytest.approx(dets[0])
        assert np.allclose(q(sigmas), dets)

    def test_singular_complement_rejected(self):
        terms = [
            PolyTerm(1, (0,), np.diag([1.0, 1.0, 0.0])),
            PolyTerm(0, (0,), np.diag([0.0, 0.0, 1.0])),
        ]
        chart = matrix_polynomial_chart(terms, SigmaRegion(-2, 2, -2, 2))
        e = np.eye(3)
        cluster = Cluster(
            center=0.0, multiplicity=1, kernel_dim=1,
            K=e[:, :1], Kperp=e[:, 1:], Rperp=e[:, :1], R=e[:, 1:],
            radius=0.5,
        )
        base = BasePointData(chart, np.array([0.0]), [cluster])
        ev = SchurEvaluator(chart, base, 0)
        # p22 = diag(sigma, 1) is nearly singular close to sigma = 0
        with pytest.raises(ReductionInvalidError):
            ev.schur([0.0], 1e-14)
        with pytest.raises(ReductionInvalidError):
            ev.schur_many([0.0], np.array([0.5, 1e-14]))

    def test_cluster_index_range(self, jordan_pipeline):
        chart, base, _, _ = jordan_pipeline
        with pytest.raises(InputError):
            SchurEvaluator(chart, base, 1)

    def test_local_multiplicity(self, jordan_pipeline, sl_scalar_pipeline):
        chart, base, _, _ = jordan_pipeline
        assert local_multiplicity(SchurEvaluator(chart, base, 0), [0.0]) == 2
        chart, base, _, _ = sl_scalar_pipeline
        for s in range(len(base.clusters)):
            assert local_multiplicity(SchurEvaluator(chart, base, s), [0.4]) == 1


class TestNeighborhood:
    def test_branching_grid_passes(self, branching_pipeline):
        chart, base, _, _ = branching_pipeline
        report = validate_neighborhood(chart, base, [[-0.2], [0.0], [0.2]])
        assert report.passed
        names = [c.name for c in report.conditions]
        assert names == [
            "disjoint_discs_in_region",
            "complement_invertible_base",
            "complement_invertible_grid",
            "annulus_nonvanishing",
        ]

    def test_annulus_violation_detected(self, branching_pipeline):
        # at y = 0.6 the singular points +/- 0.6 sit inside the outer annulus
        chart, base, _, _ = branching_pipeline
        report = validate_neighborhood(chart, base, [[0.6]])
        assert not report.passed
        annulus = report.conditions[3]
        assert annulus.name == "annulus_nonvanishing"
        assert not annulus.passed

    def test_overlapping_discs_detected(self, branching_pipeline):
        chart, base, _, _ = branching_pipeline
        doubled = BasePointData(chart, base.y0, [base.clusters[0], base.clusters[0]])
        report = validate_neighborhood(chart, doubled, [[0.0]])
        assert not report.conditions[0].passed
        assert report.conditions[0].margin < 0

    def test_report_serialization(self, branching_pipeline):
        chart, base, _, _ = branching_pipeline
        d = validate_neighborhood(chart, base, [[0.0]]).to_dict()
        assert d["passed"] is True
        assert len(d["conditions"]) == 4
