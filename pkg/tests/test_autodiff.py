import math

import numpy as np
import pytest

from auxlab.autodiff import (
    GradientProgram,
    Layout,
    ParamVector,
    finite_diff_gradient,
    quadratic_program,
    vdot,
    vexp,
    vrelu,
)
from auxlab.errors import DimensionError, ExponentOverflow


def neuron_program():
    """value of a single exponential neuron a*exp(w*x + b) at fixed x."""
    x = 0.7
    layout = Layout([("a", 1), ("b", 1), ("w", 1)])

    def build(params):
        a = params.scalar("a")
        b = params.scalar("b")
        w = params.scalar("w")
        return a * vexp(w * x + b)

    return GradientProgram(layout, build, name="neuron"), x


def bump_hinge_program():
    """Cubed-hinge loss of the two-Gaussian curve, y = -1, x = 0."""
    layout = Layout([("theta", 1)])

    def build(params):
        th = params.scalar("theta")
        d1 = th - 0.2
        d2 = th - 0.8
        f = (vexp(d1 * d1 * -16.0) * -0.3 + vexp(d2 * d2 * -32.0) * -0.7 + 0.5) * 5.0
        return vrelu(f + 1.0) ** 3

    return GradientProgram(layout, build, name="bump-hinge")


def bump_hinge_closed_form(theta):
    f = 5.0 * (
        -0.3 * math.exp(-16.0 * (theta - 0.2) ** 2)
        - 0.7 * math.exp(-32.0 * (theta - 0.8) ** 2)
        + 0.5
    )
    return max(0.0, 1.0 + f) ** 3


class TestEvaluate:
    def test_quadratic_at_3_4(self):
        q = quadratic_program(2)
        assert q.evaluate([3.0, 4.0]) == 25.0

    def test_neuron_vanishes_at_a_zero(self):
        prog, _ = neuron_program()
        for b, w in [(0.0, 0.0), (3.0, -2.0), (-5.0, 1.5)]:
            assert prog.evaluate([0.0, b, w]) == 0.0

    def test_bump_hinge_at_0p2(self):
        prog = bump_hinge_program()
        got = prog.evaluate([0.2])
        assert got == pytest.approx(7.99958296806585, abs=1e-10)
        assert got == pytest.approx(bump_hinge_closed_form(0.2), abs=1e-12)

    def test_dimension_mismatch(self):
        q = quadratic_program(2)
        with pytest.raises(DimensionError):
            q.evaluate([1.0, 2.0, 3.0])


class TestGradient:
    def test_quadratic_gradient(self):
        q = quadratic_program(2)
        g = q.gradient([3.0, 4.0])
        assert np.allclose(g.values, [6.0, 8.0], atol=1e-14)

    def test_neuron_partials(self):
        prog, x = neuron_program()
        a, b, w = 0.8, 0.4, -0.3
        g = prog.gradient([a, b, w])
        e = math.exp(w * x + b)
        assert g.segment("a")[0] == pytest.approx(e, rel=1e-14)
        assert g.segment("b")[0] == pytest.approx(a * e, rel=1e-14)
        assert g.segment("w")[0] == pytest.approx(a * e * x, rel=1e-14)

    def test_gradient_layout_matches_input(self):
        prog, _ = neuron_program()
        g = prog.gradient([0.5, 0.1, 0.2])
        assert g.layout == prog.layout


class TestFiniteDiff:
    def test_quadratic(self):
        q = quadratic_program(2)
        fd = finite_diff_gradient(q, np.array([3.0, 4.0]), h=1e-5)
        assert np.allclose(fd.values, [6.0, 8.0], atol=1e-6)

    def test_neuron_da(self):
        layout = Layout([("a", 1)])

        def build(params):
            return params.scalar("a") * vexp(params.scalar("a") * 0.0)

        prog = GradientProgram(layout, build)
        fd = finite_diff_gradient(prog, np.array([1.0]), h=1e-5)
        assert fd.values[0] == pytest.approx(1.0, abs=1e-8)

    def test_bump_hinge_matches_reverse_mode(self):
        prog = bump_hinge_program()
        fd = finite_diff_gradient(prog, np.array([0.5]), h=1e-6)
        rev = prog.gradient([0.5])
        assert fd.values[0] == pytest.approx(rev.values[0], rel=1e-4)

    def test_rejects_nonpositive_h(self):
        q = quadratic_program(1)
        with pytest.raises(ValueError):
            finite_diff_gradient(q, np.array([1.0]), h=0.0)


class TestProperties:
    def test_fd_agreement_random_points(self):
        progs = [quadratic_program(3), neuron_program()[0], bump_hinge_program()]
        rng = np.random.default_rng(7)
        for prog in progs:
            for _ in range(25):
                p = rng.uniform(-2.0, 2.0, prog.dim)
                rev = prog.gradient(p).values
                fd = finite_diff_gradient(prog, p, h=1e-6).values
                err = np.abs(rev - fd)
                small = np.abs(rev) < 1e-3
                assert np.all(err[small] < 1e-7)
                if np.any(~small):
                    rel = err[~small] / np.abs(rev[~small])
                    assert np.all(rel < 1e-4)

    def test_gradient_linearity(self):
        layout = Layout([("theta", 2)])

        def build_q1(params):
            x = params.vector("theta")
            return vdot(x, x)

        def build_q2(params):
            return vexp(params.scalar("theta", 0) * 0.3) * params.scalar("theta", 1)

        q1 = GradientProgram(layout, build_q1)
        q2 = GradientProgram(layout, build_q2)
        alpha, beta = 0.7, -1.3

        def build_mix(params):
            return build_q1(params) * alpha + build_q2(params) * beta

        mix = GradientProgram(layout, build_mix)
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.uniform(-2, 2, 2)
            lhs = mix.gradient(p).values
            rhs = alpha * q1.gradient(p).values + beta * q2.gradient(p).values
            assert np.allclose(lhs, rhs, atol=1e-10)

    def test_purity_bit_identical(self):
        prog = bump_hinge_program()
        p = np.array([0.37])
        v1, g1 = prog.value_and_gradient(p)
        v2, g2 = prog.value_and_gradient(p)
        assert v1 == v2
        assert g1.tobytes() == g2.tobytes()


class TestClamp:
    def test_overflow_raises(self):
        prog, _ = neuron_program()
        with pytest.raises(ExponentOverflow):
            prog.evaluate([1.0, 501.0, 0.0])

    def test_below_clamp_is_fine(self):
        prog, _ = neuron_program()
        assert math.isfinite(prog.evaluate([1.0, 499.0, 0.0]))

    def test_env_override(self, monkeypatch):
        prog, _ = neuron_program()
        monkeypatch.setenv("AUXLAB_CLAMP", "10")
        with pytest.raises(ExponentOverflow):
            prog.evaluate([1.0, 11.0, 0.0])
        monkeypatch.delenv("AUXLAB_CLAMP")
        assert math.isfinite(prog.evaluate([1.0, 11.0, 0.0]))


class TestParamVector:
    def test_segments_cover_exactly(self):
        layout = Layout([("theta", 2), ("a", 1)])
        assert layout.dim == 3
        pv = ParamVector([1.0, 2.0, 3.0], layout)
        assert np.array_equal(pv.segment("theta"), [1.0, 2.0])
        assert np.array_equal(pv.segment("a"), [3.0])

    def test_rejects_nonfinite(self):
        layout = Layout([("theta", 1)])
        with pytest.raises(DimensionError):
            ParamVector([np.nan], layout)
        with pytest.raises(DimensionError):
            ParamVector([np.inf], layout)

    def test_rejects_duplicate_segment(self):
        with pytest.raises(DimensionError):
            Layout([("a", 1), ("a", 2)])

    def test_pack_matrix_column_major(self):
        w = np.array([[1.0, 3.0], [2.0, 4.0]])
        pv = ParamVector.pack([("W", w)])
        assert np.array_equal(pv.values, [1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(pv.matrix("W", 2, 2), w)

    def test_replace(self):
        pv = ParamVector.pack([("a", np.array([1.0])), ("b", np.array([2.0]))])
        pv2 = pv.replace("b", [5.0])
        assert pv2.segment("b")[0] == 5.0
        assert pv.segment("b")[0] == 2.0
