import dataclasses
import math

import numpy as np
import pytest

from nestmc.errors import DegenerateInput, InnerSamplerUnavailable, InvalidParameter, MissingTruth
from nestmc.estimators import nested_mc_estimate
from nestmc.harness import (
    ExperimentConfig,
    ReferenceSpec,
    _hermite_features,
    cell_index,
    convergence_slope,
    monotone_fit,
    mse_summary,
    nested_split,
    reference_value,
    run_experiment,
    run_method,
)
from nestmc.problems import Problem1Spec, Problem2Spec, problem1, problem1_posterior, problem2
from nestmc.sampling import make_stream, substream


def strip_times(report):
    d = report.to_dict()
    d["config"].pop("threads")
    for c in d["cells"]:
        c.pop("wall_time")
    return d


class TestSlope:
    def test_two_points(self):
        assert convergence_slope([(2, 1.0), (4, 0.25)]) == pytest.approx(-2.0, abs=1e-15)

    def test_exact_power_law(self):
        pts = [(2 ** k, 3.0 / 2 ** k) for k in range(2, 11)]
        assert convergence_slope(pts) == pytest.approx(-1.0, abs=1e-12)

    def test_constant(self):
        assert convergence_slope([(2 ** k, 0.3) for k in range(5)]) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("pts", [[(2, 1.0)], [], [(2, 1.0), (4, 0.0)], [(2, 1.0), (2, 0.5)], [(-2, 1.0), (4, 1.0)]])
    def test_degenerate(self, pts):
        with pytest.raises(DegenerateInput):
            convergence_slope(pts)


class TestHelpers:
    def test_mse_single_exact(self):
        mse, se = mse_summary([0.8125], 0.8125)
        assert mse == 0.0 and se == math.inf

    def test_mse_formula(self):
        est = [1.0, 2.0, 4.0]
        mse, se = mse_summary(est, 2.0)
        assert mse == pytest.approx((1 + 0 + 4) / 3)
        assert se == pytest.approx(np.std([1, 0, 4], ddof=1) / math.sqrt(3))

    def test_cell_index_stable(self):
        assert cell_index("sparse_grid", 8, 0) == cell_index("sparse_grid", 8, 0)
        assert cell_index("sparse_grid", 8, 0) != cell_index("sparse_grid", 8, 1)
        assert cell_index("sparse_grid", 8, 0) != cell_index("simple", 8, 0)
        assert 0 <= cell_index("x") < 2 ** 64

    def test_nested_split(self):
        assert nested_split(7) == (16, 8)
        assert nested_split(8) == (16, 16)
        assert nested_split(0) == (1, 1)

    def test_monotone_fit(self):
        fit = monotone_fit([5.0, 3.0, 4.0, 1.0])
        assert np.all(np.diff(fit) <= 0)
        np.testing.assert_allclose(fit, [5.0, 3.5, 3.5, 1.0])
        np.testing.assert_allclose(monotone_fit([3.0, 2.0, 1.0]), [3.0, 2.0, 1.0])

    def test_hermite_features_zero_mean(self):
        w = make_stream(0).normal((200_000, 3))
        feats = _hermite_features(w, 4)
        assert feats.shape[1] == math.comb(4 + 3, 3) - 1
        se = feats.std(axis=0) / math.sqrt(w.shape[0])
        assert np.all(np.abs(feats.mean(axis=0)) < 4 * se)

    def test_unknown_method(self):
        with pytest.raises(InvalidParameter):
            run_method(problem1(Problem1Spec(2, 0.7)), "gam", 4, make_stream(0))

    def test_config_validation(self):
        with pytest.raises(InvalidParameter):
            ExperimentConfig(Problem1Spec(2, 0.7), r=0)
        with pytest.raises(InvalidParameter):
            ExperimentConfig(Problem1Spec(2, 0.7), m_values=())
        with pytest.raises(InvalidParameter):
            ExperimentConfig(Problem1Spec(2, 0.7), m_values=(-1,))
        with pytest.raises(InvalidParameter):
            ExperimentConfig(Problem1Spec(2, 0.7), methods=("gam",))


class TestReference:
    def test_single_outer(self):
        rv = reference_value(problem1(Problem1Spec(3, 0.7)), 1, None, make_stream(0))
        assert rv.stderr == math.inf

    def test_unavailable(self):
        prob = dataclasses.replace(problem1(Problem1Spec(3, 0.7)), inner_conditional=None)
        with pytest.raises(InnerSamplerUnavailable):
            reference_value(prob, 10, 10, make_stream(0))

    def test_stderr_scaling(self):
        prob = problem1(Problem1Spec(4, 0.8))
        root = make_stream(1)
        small = [reference_value(prob, 2000, None, substream(root, i)).stderr for i in range(30)]
        large = [reference_value(prob, 4000, None, substream(root, 100 + i)).stderr for i in range(30)]
        ratio = np.mean(large) / np.mean(small)
        assert abs(ratio - 1 / math.sqrt(2)) < 0.2 / math.sqrt(2)

    def test_control_variates_agree_with_plain(self):
        prob = problem2(Problem2Spec("EvSvGvA", 500))
        cv = reference_value(prob, 20_000, None, make_stream(2))
        plain = reference_value(prob, 20_000, None, make_stream(3), control_variates=False)
        assert cv.control_variates > 0 and plain.control_variates == 0
        assert cv.stderr < plain.stderr / 3
        assert abs(cv.value - plain.value) < 3 * math.hypot(cv.stderr, plain.stderr)

    def test_exact_inner_mse_matches_outer_variance(self):
        # with exact inner means, nested MC is plain MC over Y: MSE = Var(h(Y)) / n_outer
        spec = Problem1Spec(5, 0.7)
        prob = problem1(spec)
        k = np.arange(spec.M + 1)
        lik = np.array([math.comb(spec.M, int(i)) for i in k]) * 0.5 * (
            spec.p ** k * (1 - spec.p) ** (spec.M - k) + (1 - spec.p) ** k * spec.p ** (spec.M - k)
        )
        post = problem1_posterior(spec, k)
        h = np.maximum(post, 1 - post)
        var = float(lik @ h ** 2 - (lik @ h) ** 2)
        root = make_stream(4)
        est = [nested_mc_estimate(prob, 64, None, substream(root, i)).value for i in range(2000)]
        mse, se = mse_summary(est, prob.truth)
        assert abs(mse - var / 64) < 3 * se


class TestRunExperiment:
    def small_cfg(self, **kw):
        base = dict(problem=Problem1Spec(3, 0.7), methods=("sparse_grid", "simple", "nested_mc"),
                    m_values=(4, 5, 6), r=6, master_seed=17)
        base.update(kw)
        return ExperimentConfig(**base)

    def test_report_shape(self):
        rep = run_experiment(self.small_cfg())
        assert len(rep.cells) == 9
        assert rep.truth_or_reference == problem1(Problem1Spec(3, 0.7)).truth
        cell = rep.cell("sparse_grid", 5)
        assert cell.n == 32 and cell.samples_used == 32 and len(cell.estimates) == 6
        assert rep.cell("nested_mc", 5).samples_used == 32
        assert set(rep.slopes) == {"sparse_grid", "simple", "nested_mc"}

    def test_mse_recomputes(self):
        rep = run_experiment(self.small_cfg())
        for c in rep.cells:
            direct = np.mean([(rep.truth_or_reference - e) ** 2 for e in c.estimates])
            assert c.mse == pytest.approx(direct, rel=1e-12)

    def test_deterministic(self):
        assert strip_times(run_experiment(self.small_cfg())) == strip_times(run_experiment(self.small_cfg()))

    def test_thread_count_irrelevant(self):
        a = strip_times(run_experiment(self.small_cfg(threads=1)))
        b = strip_times(run_experiment(self.small_cfg(threads=4)))
        assert a == b

    def test_cells_independent_of_other_cells(self):
        full = run_experiment(self.small_cfg())
        only = run_experiment(self.small_cfg(methods=("simple",), m_values=(5,)))
        assert only.cells[0].estimates == full.cell("simple", 5).estimates

    def test_missing_truth(self):
        with pytest.raises(MissingTruth):
            run_experiment(ExperimentConfig(Problem2Spec("EvSvG", 1000), m_values=(4,), r=2))

    def test_nested_reference(self):
        cfg = ExperimentConfig(Problem2Spec("EvSvG", 1000), methods=("sparse_grid",), m_values=(6, 7), r=3,
                               reference=ReferenceSpec("nested_mc", 2000, 20))
        rep = run_experiment(cfg)
        assert rep.reference["kind"] == "nested_mc"
        assert math.isfinite(rep.reference_stderr) and rep.reference_stderr > 0

    def test_uninformative_problem_converges(self):
        cfg = ExperimentConfig(Problem1Spec(1, 0.5), methods=("sparse_grid",), m_values=(4, 8, 12), r=100,
                               master_seed=3)
        rep = run_experiment(cfg)
        mses = [rep.cell("sparse_grid", m).mse for m in (4, 8, 12)]
        assert mses[0] > mses[1] > mses[2]
        assert mses[2] < 0.01
