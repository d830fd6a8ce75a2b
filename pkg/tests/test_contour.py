import numpy as np
import pytest

from kernelbundle.contour import (
    Circle,
    Rectangle,
    SampledFunction,
    cauchy_moment,
    count_zeros,
    count_zeros_rectangle,
    locate_zeros,
    refine_cluster,
    singular_part_eval,
    taylor_coefficient,
    winding_number,
)
from kernelbundle.errors import (
    InputError,
    RegionError,
    ResolutionError,
    ZeroOnContourError,
)


# f with a simple and a double pole at a = 0.2; the centered moments on any
# circle enclosing a are M_p = 3 a^p + (1 - 2i) p a^(p-1).
A = 0.2
C1 = 3.0
C2 = 1.0 - 2.0j


def rational(z):
    return C1 / (z - A) + C2 / (z - A) ** 2


class TestMoments:
    def test_rational_moments(self):
        f = SampledFunction.from_function(rational, Circle(0.0, 0.7, 128))
        assert cauchy_moment(f, 0) == pytest.approx(3.0, abs=1e-12)
        assert cauchy_moment(f, 1) == pytest.approx(1.6 - 2.0j, abs=1e-12)
        assert cauchy_moment(f, 2) == pytest.approx(0.52 - 0.8j, abs=1e-12)

    def test_node_count_insensitive(self):
        a = cauchy_moment(SampledFunction.from_function(rational, Circle(0.0, 0.7, 32)), 3)
        b = cauchy_moment(SampledFunction.from_function(rational, Circle(0.0, 0.7, 256)), 3)
        assert abs(a - b) < 1e-12

    def test_vector_values(self):
        f = SampledFunction.from_function(
            lambda z: np.stack([C1 / (z - A), C2 / (z - A) ** 2], axis=-1),
            Circle(0.0, 0.7, 128),
        )
        m1 = cauchy_moment(f, 1)
        assert m1.shape == (2,)
        assert np.allclose(m1, [C1 * A, C2], atol=1e-12)

    def test_entire_function_moments_vanish(self):
        f = SampledFunction.from_function(np.exp, Circle(0.0, 0.7, 128))
        assert abs(cauchy_moment(f, 0)) < 1e-13
        assert abs(cauchy_moment(f, 4)) < 1e-13

    def test_taylor_of_exp(self):
        f = SampledFunction.from_function(np.exp, Circle(0.3, 0.5, 128))
        import math

        for p in range(6):
            assert taylor_coefficient(f, p) == pytest.approx(
                np.exp(0.3) / math.factorial(p), rel=1e-12
            )

    def test_order_validation(self):
        f = SampledFunction.from_function(np.exp, Circle(0.0, 0.5, 32))
        with pytest.raises(InputError):
            cauchy_moment(f, -1)
        with pytest.raises(InputError):
            taylor_coefficient(f, -2)


class TestSingularPart:
    probes = np.array([0.8, 1.0 + 0.3j, -1.2j])

    def carrier(self, f, n=128):
        return SampledFunction.from_function(f, Circle(0.0, 0.5, n))

    def test_reproduces_rational(self):
        r = lambda z: 2.0 / (z - 0.1) + 0.5j / (z + 0.2) ** 2
        got = singular_part_eval(self.carrier(r), self.probes)
        assert np.allclose(got, r(self.probes), atol=1e-12)

    def test_annihilates_entire(self):
        got = singular_part_eval(self.carrier(np.exp), self.probes)
        assert np.max(np.abs(got)) < 1e-12

    def test_splits_off_singular_part(self):
        r = lambda z: 2.0 / (z - 0.1) + 0.5j / (z + 0.2) ** 2
        f = lambda z: r(z) + np.cos(z)
        got = singular_part_eval(self.carrier(f), self.probes)
        assert np.allclose(got, r(self.probes), atol=1e-12)

    def test_idempotent_across_carriers(self):
        r = lambda z: 2.0 / (z - 0.1) + 0.5j / (z + 0.2) ** 2
        first = self.carrier(lambda z: r(z) + np.sin(z))
        second = SampledFunction(
            Circle(0.0, 0.65, 96),
            singular_part_eval(first, Circle(0.0, 0.65, 96).nodes),
        )
        got = singular_part_eval(second, self.probes)
        assert np.allclose(got, r(self.probes), atol=1e-11)

    def test_rejects_interior_points(self):
        f = self.carrier(np.exp)
        with pytest.raises(RegionError):
            singular_part_eval(f, 0.3)
        with pytest.raises(RegionError):
            singular_part_eval(f, np.array([0.8, 0.1]))

    def test_matrix_values(self):
        r = lambda z: np.moveaxis(
            np.array([[1.0 / (z - 0.1), 0 * z], [0 * z, 2.0 / (z + 0.15)]]), -1, 0
        )
        f = SampledFunction.from_function(r, Circle(0.0, 0.5, 128))
        got = singular_part_eval(f, 0.9)
        assert got.shape == (2, 2)
        assert got[0, 0] == pytest.approx(1.0 / 0.8, abs=1e-12)
        assert got[1, 1] == pytest.approx(2.0 / 1.05, abs=1e-12)


class TestCounting:
    def q(self, z):
        return (z - 0.3) ** 2 * (z + 0.5j)

    def test_circle_counts(self):
        assert count_zeros(self.q, Circle(0.0, 1.0, 64)) == 3
        assert count_zeros(self.q, Circle(0.3, 0.2, 64)) == 2
        assert count_zeros(self.q, Circle(2.0, 0.5, 64)) == 0

    def test_rectangle_count(self):
        assert count_zeros_rectangle(self.q, Rectangle(-1.0, 1.0, -1.0, 1.0)) == 3

    def test_node_count_invariance(self):
        for n in (16, 64, 256):
            assert count_zeros(self.q, Circle(0.0, 1.0, n)) == 3

    def test_transcendental(self):
        assert count_zeros(np.sin, Circle(0.0, 1.0, 64)) == 1
        assert count_zeros(np.sin, Circle(0.0, 4.0, 64)) == 3

    def test_zero_on_contour_raises(self):
        with pytest.raises(ZeroOnContourError):
            count_zeros(lambda z: z - 1.0, Circle(0.0, 1.0, 64))

    def test_scalar_only(self):
        with pytest.raises(InputError):
            count_zeros(lambda z: np.stack([z, z], axis=-1), Circle(0.0, 1.0, 64))


class TestRefine:
    def test_pair_centroid(self):
        q = lambda z: (z - (0.1 + 0.1j)) * (z - (0.3 - 0.05j))
        got = refine_cluster(q, 0.0, 1.0, 2)
        assert got == pytest.approx(0.2 + 0.025j, abs=1e-12)

    def test_single_simple_zero(self):
        got = refine_cluster(lambda z: np.sin(z - 0.2), 0.1, 0.5, 1)
        assert got == pytest.approx(0.2, abs=1e-12)

    def test_wrong_count_raises(self):
        q = lambda z: (z - 0.1) * (z + 0.1)
        with pytest.raises(ResolutionError):
            refine_cluster(q, 0.0, 0.5, 3)

    def test_count_validation(self):
        with pytest.raises(InputError):
            refine_cluster(np.sin, 0.0, 0.5, 0)


class TestLocate:
    def test_simple_and_double(self):
        roots = [0.5, -0.3 + 0.4j, -0.3 + 0.4j]
        coeffs = np.poly(roots)
        q = lambda z: np.polyval(coeffs, z)
        report = locate_zeros(q, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.05)
        assert report.total_count == 3
        assert report.consistent
        assert not report.unresolved
        by_mult = {z.multiplicity: z.location for z in report.zeros}
        assert by_mult[1] == pytest.approx(0.5, abs=1e-9)
        assert by_mult[2] == pytest.approx(-0.3 + 0.4j, abs=1e-9)

    def test_double_zero_on_cut_lines(self):
        # A double zero at the origin sits on both midline cuts of the
        # symmetric box; the subdivision must not split it into two fake
        # simple zeros.
        report = locate_zeros(lambda z: z * z, Rectangle(-2.0, 2.0, -2.0, 2.0), 0.05)
        assert report.total_count == 2
        assert len(report.zeros) == 1
        assert report.zeros[0].multiplicity == 2
        assert abs(report.zeros[0].location) < 1e-8

    def test_near_pair_merges(self):
        q = lambda z: z * z - 1e-8
        report = locate_zeros(q, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.01)
        assert [z.multiplicity for z in report.zeros] == [2]
        assert abs(report.zeros[0].location) < 1e-6

    def test_against_polynomial_roots(self):
        roots = np.array(
            [0.62, -0.71, 0.33 + 0.4j, 0.33 - 0.4j, -0.2 + 0.62j, 0.05 - 0.3j]
        )
        coeffs = np.poly(roots)
        q = lambda z: np.polyval(coeffs, z)
        report = locate_zeros(q, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.05)
        assert report.total_count == 6
        assert not report.unresolved
        located = np.array([z.location for z in report.zeros])
        for r in roots:
            assert np.min(np.abs(located - r)) < 1e-9

    def test_empty_region(self):
        report = locate_zeros(lambda z: z - 5.0, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.05)
        assert report.total_count == 0
        assert report.zeros == [] and report.unresolved == []

    def test_report_serialization(self):
        report = locate_zeros(lambda z: z - 0.25j, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.05)
        d = report.to_dict()
        assert d["total_count"] == 1
        assert d["zeros"][0]["multiplicity"] == 1
        assert d["zeros"][0]["im"] == pytest.approx(0.25, abs=1e-10)

    def test_min_separation_validation(self):
        with pytest.raises(InputError):
            locate_zeros(np.sin, Rectangle(-1.0, 1.0, -1.0, 1.0), 0.0)


class TestGeometry:
    def test_circle_nodes(self):
        c = Circle(1.0 + 1.0j, 2.0, 16)
        assert len(c.nodes) == 16
        assert c.nodes[0] == pytest.approx(3.0 + 1.0j)
        assert np.allclose(np.abs(c.nodes - c.center), 2.0)

    def test_circle_validation(self):
        with pytest.raises(InputError):
            Circle(0.0, -1.0, 64)
        with pytest.raises(InputError):
            Circle(0.0, 1.0, 8)

    def test_rectangle_split_covers(self):
        r = Rectangle(0.0, 1.0, 0.0, 2.0)
        children = r.split(0.25, 0.75)
        assert len(children) == 4
        assert sum(c.width * c.height for c in children) == pytest.approx(2.0)
        assert children[0].re_max == pytest.approx(0.25)
        assert children[0].im_max == pytest.approx(1.5)

    def test_rectangle_validation(self):
        with pytest.raises(InputError):
            Rectangle(1.0, -1.0, 0.0, 1.0)

    def test_sample_shape_mismatch(self):
        with pytest.raises(InputError):
            SampledFunction(Circle(0.0, 1.0, 32), np.zeros(16, dtype=complex))

    def test_sample_nonfinite(self):
        vals = np.zeros(32, dtype=complex)
        vals[3] = np.nan
        with pytest.raises(InputError):
            SampledFunction(Circle(0.0, 1.0, 32), vals)
