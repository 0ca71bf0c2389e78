import numpy as np
import pytest
from scipy.stats import norm

import frozen
from perturbscore import (Binomial2, Box, CovarianceKernel, Disk, MixingDistribution, MultivariateNormal, Normal,
                          NullModel, PerturbationModel, ValidationError, critical_value, tail_probability,
                          tube_constants)
from perturbscore.exceptions import IllConditionedKernelError
from perturbscore.geometry import detect_singularities
from perturbscore.oracle import (field_factor, field_grid, lrt_equivalence_report, mc_null_distribution,
                                 mc_sup_tail, mc_sup_tail_corr)

R = 40_000


def test_one_point_field_is_standard_normal():
    curve = mc_sup_tail_corr(np.eye(1), R, seed=1, thresholds=[1.0, 2.0])
    want = norm.sf([1.0, 2.0])
    assert want[1] == pytest.approx(frozen.ONE_POINT_TAIL_2, abs=1e-15)
    assert np.all(np.abs(curve.probabilities - want) < 4 * curve.standard_errors)


def test_perfectly_correlated_pair_matches_one_point():
    curve = mc_sup_tail_corr(np.ones((2, 2)), R, seed=2, thresholds=[2.0])
    # jitter keeps a second, negligible direction
    assert curve.rank <= 2
    assert abs(curve.probabilities[0] - frozen.ONE_POINT_TAIL_2) < 4 * curve.standard_errors[0]


def test_independent_pair():
    curve = mc_sup_tail_corr(np.eye(2), R, seed=3, thresholds=[2.0])
    want = 1 - norm.cdf(2.0) ** 2
    assert want == pytest.approx(frozen.TWO_INDEP_TAIL_2, abs=1e-15)
    assert abs(curve.probabilities[0] - want) < 4 * curve.standard_errors[0]


def test_same_seed_same_suprema_regardless_of_chunking():
    C = np.array([[1.0, 0.5], [0.5, 1.0]])
    a = mc_sup_tail_corr(C, 500, seed=7)
    b = mc_sup_tail_corr(C, 500, seed=7, max_cells=64)
    np.testing.assert_array_equal(a.sups, b.sups)
    assert not np.array_equal(a.sups, mc_sup_tail_corr(C, 500, seed=8).sups)


def test_jitter_changes_little():
    model = PerturbationModel(NullModel.fixed(Normal(), 0.0), Box(0.5, 2.0))
    k = CovarianceKernel(model)
    grid = np.linspace(0.5, 2.0, 101)[:, None]
    a = mc_sup_tail(k, grid, 20_000, seed=4, thresholds=[2.0], jitter=1e-10)
    b = mc_sup_tail(k, grid, 20_000, seed=4, thresholds=[2.0], jitter=1e-6)
    assert b.jitter == 1e-6
    assert abs(a.probabilities[0] - b.probabilities[0]) < a.standard_errors[0]


def test_single_replicate():
    curve = mc_sup_tail_corr(np.eye(3), 1, seed=0, thresholds=[0.0])
    assert curve.replicates == 1
    assert curve.probabilities[0] in (0.0, 1.0)
    with pytest.raises(ValidationError):
        mc_sup_tail_corr(np.eye(3), 0, seed=0)


def test_indefinite_matrix_rejected():
    with pytest.raises(IllConditionedKernelError):
        field_factor(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_factor_reproduces_matrix():
    C = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.6], [0.1, 0.6, 1.0]])
    L, used = field_factor(C)
    np.testing.assert_allclose(L @ L.T, C + used * np.eye(3), atol=1e-12)


def test_disk_field_grid():
    g = field_grid(Disk(2.0))
    assert g.shape == (36 * 112, 2)
    r = np.linalg.norm(g, axis=1)
    assert r.min() > 0 and r.max() == pytest.approx(2.0)


def test_box_field_grid_skips_singular_neighbourhood():
    k = CovarianceKernel(PerturbationModel(NullModel.fixed(Normal(), 0.0), Box(-3, 3)))
    sing = detect_singularities(k)
    g = field_grid(k.domain, sing)
    assert np.min(np.abs(g)) >= 6e-4 * (1 - 1e-9)
    assert np.all(np.isfinite(k.corr_matrix(g[::40])))


def test_tube_matches_field_for_binomial():
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    k = CovarianceKernel(model)
    consts = tube_constants(k)
    cs = [2.0, 2.5, 3.0]
    curve = mc_sup_tail(k, field_grid(k.domain, detect_singularities(k)), 20_000, seed=5, thresholds=cs)
    tube = tail_probability(np.array(cs), consts)
    assert np.all(np.abs(tube - curve.probabilities) <= np.maximum(0.01, 4 * curve.standard_errors))


def test_null_distribution_is_deterministic():
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    a = mc_null_distribution(model, 50, 20, seed=3)
    b = mc_null_distribution(model, 50, 20, seed=3)
    np.testing.assert_array_equal(a.statistics, b.statistics)
    assert a.failures == 0 and len(a.statistics) == 20
    assert a.critical_values[0] == critical_value(0.05, tube_constants(CovarianceKernel(model)))
    assert 0.0 <= a.rejection_rates[0] <= 1.0


def test_null_distribution_custom_thresholds():
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    d = mc_null_distribution(model, 50, 30, seed=3, critical_values=[-10.0, 100.0])
    np.testing.assert_array_equal(d.rejection_rates, [1.0, 0.0])
    with pytest.raises(ValidationError):
        mc_null_distribution(model, 50, 0, seed=3)


def test_lrt_report_structure():
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    rows = lrt_equivalence_report(model, [100, 400], 3, seed=1, grid=51)
    assert [r["n"] for r in rows] == [100, 400]
    assert all(len(r["discrepancies"]) == 3 and r["median"] >= 0 for r in rows)


def test_lrt_report_margin():
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    full = lrt_equivalence_report(model, [100, 400], 4, seed=2, grid=51)
    away = lrt_equivalence_report(model, [100, 400], 4, seed=2, grid=51, margin=0.1)
    # removing points only lowers each sup
    for f, a in zip(full, away):
        assert np.all(np.array(a["discrepancies"]) <= np.array(f["discrepancies"]) + 1e-12)
    with pytest.raises(ValidationError):
        lrt_equivalence_report(model, [100], 2, seed=0, grid=51, margin=0.6)


def test_lrt_gap_near_flip_does_not_shrink():
    # at the grid's flanking points the fitted eta hits 1 and the quadratic
    # form overshoots; the gap only closes once |theta - 0.5| * sqrt(n) is large
    model = PerturbationModel(NullModel.fixed(Binomial2(), 0.5), Box(0.0, 1.0))
    near = np.array([[0.4999], [0.5001]])
    rows = lrt_equivalence_report(model, [500, 20000], 20, seed=4, grid=near)
    assert rows[1]["median"] > 0.5 * rows[0]["median"] > 0


def test_lrt_report_needs_fixed_null():
    null = NullModel(Normal(), MixingDistribution([0.0], [1.0]), "full")
    with pytest.raises(ValidationError):
        lrt_equivalence_report(PerturbationModel(null, Box(-3, 3)), [100], 2, seed=0)


def test_disk_kernel_factor_is_low_rank():
    model = PerturbationModel(NullModel.fixed(MultivariateNormal(2), [0.0, 0.0]), Disk(1.0))
    k = CovarianceKernel(model)
    L, _ = field_factor(k.corr_matrix(field_grid(k.domain)))
    assert L.shape[1] < 400
