import math

import numpy as np
import pytest

from auxlab.augment import AuxParams, Reduction, original_objective
from auxlab.criteria import LossCriterion, loss_value
from auxlab.errors import UnknownFixture
from auxlab.fixtures import (
    EPS_LADDER,
    EXAMPLE_NAMES,
    InnerSolveConfig,
    _inner_min_scalar,
    a_nonzero_fixture,
    a_zero_fixture,
    bump_problem,
    frozen_basin_objective,
    get_example,
    golden_section,
    landscape_grid,
    named_dataset,
    run_example,
    stationary_theta,
)
from auxlab.models import bump_curve
from auxlab.oracles import grid_global_min, gradient_factorization


class TestStationaryTheta:
    def test_root_of_derivative(self):
        t = stationary_theta()
        assert abs(bump_curve().curve_derivative(t)) < 1e-12
        assert 0.19 < t < 0.21

    def test_basin_loss_value(self):
        t = stationary_theta()
        f = bump_curve().curve_value(t)
        assert (1 + f) ** 3 == pytest.approx(7.9996, abs=1e-4)


class TestAnalyticExamples:
    def test_registry_has_five(self):
        assert len(EXAMPLE_NAMES) == 5

    def test_unknown_name(self):
        with pytest.raises(UnknownFixture):
            get_example("nonexistent")
        with pytest.raises(UnknownFixture):
            run_example("nonexistent")

    @pytest.mark.parametrize("name", EXAMPLE_NAMES)
    def test_general_equals_closed_form(self, name):
        rep = run_example(name, EPS_LADDER, lam=0.01)
        assert rep.agreement_ok
        assert rep.max_disagreement <= 1e-10

    @pytest.mark.parametrize("name", EXAMPLE_NAMES)
    def test_limit_approached_monotonically(self, name):
        rep = run_example(name, EPS_LADDER, lam=0.01)
        assert rep.monotone_ok
        assert rep.norm_increasing

    def test_squared_one_sample_value(self):
        rep = run_example("squared-one-sample", (0.5,), lam=0.01)
        assert rep.rows[0].general == pytest.approx(1.83156e-4, abs=1e-9)

    def test_squared_two_sample_value(self):
        rep = run_example("squared-two-sample", (0.25,), lam=0.01)
        assert rep.rows[0].general == pytest.approx(1.0369700, abs=1e-6)

    def test_hinge_fixtures_reach_corrected_limits(self):
        one = run_example("hinge-one-sample", (0.05,), lam=0.01)
        assert one.rows[0].general == pytest.approx(0.0, abs=1e-12)
        assert one.limit == 0.0
        two = run_example("hinge-two-sample", (0.05,), lam=0.01)
        assert two.rows[0].general == pytest.approx(8.0, abs=1e-6)
        assert two.limit == 8.0

    def test_hinge_discrepancies_recorded_not_asserted(self):
        one = run_example("hinge-one-sample", (0.5,), lam=0.01)
        assert one.discrepancy
        # the printed form disagrees with what the path actually evaluates to
        assert one.rows[0].printed is not None
        assert abs(one.rows[0].printed - one.rows[0].general) > 1e-6
        ex = get_example("hinge-one-sample")
        printed_aux = ex.printed_path(0.5, 0.01)
        prog = ex.objective(0.01)
        p = np.concatenate([printed_aux.a, printed_aux.b, printed_aux.w.reshape(-1)])
        assert prog.evaluate(p) == pytest.approx(64.0, abs=1e-3)

    def test_same_input_local_min_value(self):
        ex = get_example("squared-two-sample-same-input")
        assert ex.local_min_value == 2.0
        prog = ex.objective(0.01)
        assert prog.evaluate([0.0, 0.0, 0.0]) == pytest.approx(2.0)

    def test_lambda_sweep_agreement(self):
        for lam in (1e-3, 1e-2, 1e-1):
            for name in EXAMPLE_NAMES:
                assert run_example(name, (1.0, 0.25), lam=lam).agreement_ok


class TestLandscape:
    def test_weak_neuron_cell(self):
        # at b = -10 the neuron cannot cancel the margin with finite a
        cfg = InnerSolveConfig()
        c = LossCriterion("smoothed_hinge", p=3)
        f0 = bump_curve().curve_value(0.2)
        _, value = _inner_min_scalar(c, f0, [-1.0], math.exp(-10.0), 0.01, cfg)
        assert value == pytest.approx(7.999575548437719, abs=1e-9)

    def test_strong_neuron_cell(self):
        cfg = InnerSolveConfig()
        c = LossCriterion("smoothed_hinge", p=3)
        f0 = bump_curve().curve_value(0.2)
        a, value = _inner_min_scalar(c, f0, [-1.0], math.exp(10.0), 0.01, cfg)
        assert value < 1e-9  # deep valley: tiny a cancels the margin
        assert value == pytest.approx(4 * 0.01 * math.exp(-20.0), rel=1e-3)

    def test_global_basin_cell(self):
        cfg = InnerSolveConfig()
        c = LossCriterion("smoothed_hinge", p=3)
        f0 = bump_curve().curve_value(0.8)
        _, value = _inner_min_scalar(c, f0, [-1.0], math.exp(0.0), 0.01, cfg)
        assert value <= 1e-6

    def test_grid_rows_sorted_and_complete(self):
        grid = landscape_grid(n_theta=12, n_b=9, b_range=(-5.0, 15.0))
        assert len(grid.rows) == 12 * 9
        assert grid.rows == sorted(grid.rows, key=lambda r: (r[0], r[1]))
        assert grid.failures == 0
        assert grid.metadata["lambda"] == 0.01

    def test_scaling_symmetry(self):
        """Halving e^b while doubling the solved amplitude leaves the
        unregularized part unchanged; checks the solver plumbing."""
        cfg = InnerSolveConfig()
        c = LossCriterion("smoothed_hinge", p=3)
        f0 = bump_curve().curve_value(0.35)
        for b in (0.0, 2.0, 5.0):
            a_star, _ = _inner_min_scalar(c, f0, [-1.0], math.exp(b), 0.01, cfg)
            u1 = loss_value(c, [f0 + a_star * math.exp(b)], [-1.0])
            u2 = loss_value(c, [f0 + (2.0 * a_star) * math.exp(b - math.log(2.0))], [-1.0])
            assert abs(u1 - u2) <= 1e-8

    def test_squared_fixture_grid(self):
        grid = landscape_grid("bump-squared", n_theta=6, n_b=6)
        assert grid.failures == 0

    def test_unknown_fixture(self):
        with pytest.raises(UnknownFixture):
            landscape_grid("bump-cauchy")


class TestGoldenSection:
    def test_quadratic(self):
        x, v = golden_section(lambda a: (a - 0.3) ** 2, -5.0, 5.0)
        assert x == pytest.approx(0.3, abs=1e-9)
        assert v == pytest.approx(0.0, abs=1e-15)

    def test_convex_piecewise(self):
        x, _ = golden_section(lambda a: max(0.0, 1.0 - a) ** 3 + 0.5 * a * a, -10, 10)
        assert abs(x) < 1.5


class TestNullSpaceFixtures:
    def test_a_zero_fixture(self):
        fz = a_zero_fixture()
        assert fz.report.passed
        assert fz.report.residuals["max_theta_grad"] <= 1e-10

    def test_a_nonzero_fixture_stationary_but_suboptimal(self):
        fx = a_nonzero_fixture()
        assert fx.report.passed
        prog = original_objective(fx.model, fx.criterion, fx.data, Reduction.MEAN)
        l_hat = prog.evaluate(fx.theta)
        _, vmin = grid_global_min(prog, [(0.0, 1.0)], 1e-3)
        assert l_hat > vmin + 1e-2

    def test_a_nonzero_fixture_neuron_escapes_null_space(self):
        fx = a_nonzero_fixture()
        base = gradient_factorization(fx.model, fx.criterion, fx.data, fx.theta)
        assert np.linalg.norm(base.a_matrix) > 1.0  # jacobian is far from zero
        assert base.norm_ar <= 1e-10
        rng = np.random.default_rng(5)
        for _ in range(10):
            aux = AuxParams(
                rng.uniform(0.2, 1.0, 1) * rng.choice([-1.0, 1.0]),
                rng.uniform(-1, 1, 1),
                rng.uniform(-1, 1, (1, 1)),
                0.01,
            )
            moved = gradient_factorization(fx.model, fx.criterion, fx.data, fx.theta, aux)
            assert moved.norm_ar > 1e-6


class TestProblemBuilders:
    def test_named_datasets(self):
        d = named_dataset("bump-hinge")
        assert d.m == 1 and d.targets[0, 0] == -1.0
        d2 = named_dataset("bump-squared")
        assert d2.targets[0, 0] == pytest.approx(-1.0047266673976663)
        with pytest.raises(UnknownFixture):
            named_dataset("mystery")

    def test_bump_problem(self):
        p = bump_problem("hinge")
        assert p.model.n_params == 1
        assert p.criterion.kind == "smoothed_hinge"

    def test_frozen_basin_objective(self):
        prog, frozen_loss, theta_star = frozen_basin_objective(lam=0.2)
        assert frozen_loss == pytest.approx(7.9996, abs=1e-4)
        assert prog.dim == 3
        # at aux = 0 the objective equals the frozen loss
        assert prog.evaluate([0.0, 0.0, 0.0]) == pytest.approx(frozen_loss)

    def test_frozen_basin_has_no_certifiable_minimum(self):
        """End-to-end on the frozen suboptimal fixture: monitor-halted
        candidates fail the sampled local-minimum check and the
        necessary-condition checker refutes the vanished-amplitude point."""
        from auxlab.augment import AuxParams, Dataset
        from auxlab.autodiff import ParamVector
        from auxlab.optimize import (
            MonitorAction,
            MonitorConfig,
            OptimizerConfig,
            Termination,
            minimize,
        )
        from auxlab.oracles import pgb_check, verify_local_min

        prog, _, theta_star = frozen_basin_objective(lam=0.2)
        init = ParamVector(np.array([0.05, -0.03, 0.01]), prog.layout)
        rec = minimize(
            prog,
            init,
            OptimizerConfig(method="gd", lr=0.4, max_iters=100_000),
            MonitorConfig(action=MonitorAction.HALT, threshold=7.0),
        )
        assert rec.termination is Termination.MONITOR_HALT
        vlm = verify_local_min(prog, rec.final.values, 1e-2, 2000, seed=1)
        assert not vlm.passed

        f0 = bump_curve().curve_value(theta_star)
        aux = AuxParams([0.0], [0.0], [[0.0]], lam=0.2)
        verdict = pgb_check(
            np.array([[f0]]),
            LossCriterion("smoothed_hinge", p=3),
            Dataset([[0.0]], [[-1.0]]),
            aux,
            seed=0,
        )
        assert not verdict.passed  # REFUTED: theta is not globally optimal
