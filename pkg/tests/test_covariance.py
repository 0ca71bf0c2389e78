import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import frozen
from perturbscore import (Binomial2, Box, CovarianceKernel, MixingDistribution, MultivariateNormal, Normal,
                          NullModel, PerturbationModel, Poisson, SingularityError, cov_fixed, cov_nuisance,
                          cov_vector, corr, fisher_info)
from perturbscore.exceptions import DegenerateModelError, NonFiniteVarianceError

from conftest import two_normal_null


def _model(fam, lam, lo, hi, estimate="none"):
    null = NullModel(fam, MixingDistribution([lam], [1.0]), estimate)
    return PerturbationModel(null, Box(lo, hi))


# -- closed-form examples ----------------------------------------------------

@pytest.mark.parametrize("fam,lam,lo,hi", [(Binomial2(), 0.5, 0.0, 1.0), (Normal(), 0.0, -3.0, 3.0),
                                           (Poisson(), 0.5, -1.0, 2.0)])
def test_cov_fixed_at_lambda_is_zero(fam, lam, lo, hi):
    assert cov_fixed(_model(fam, lam, lo, hi), lam, lam) == pytest.approx(0.0, abs=1e-12)


def test_cov_fixed_normal():
    assert cov_fixed(_model(Normal(), 0.0, -3, 3), 1.0, 1.0) == pytest.approx(frozen.NORMAL_COV_1_1, rel=1e-12)


def test_cov_fixed_binomial():
    assert cov_fixed(_model(Binomial2(), 0.5, 0, 1), 1.0, 1.0) == pytest.approx(frozen.BINOM_COV_1_1, rel=1e-12)


def test_cov_vector_at_lambda_is_zero():
    np.testing.assert_allclose(cov_vector(_model(Normal(), 0.3, -3, 3), 0.3), [0.0], atol=1e-14)
    np.testing.assert_allclose(cov_vector(_model(Binomial2(), 0.5, 0, 1), 0.5), [0.0], atol=1e-14)


def test_cov_vector_normal():
    np.testing.assert_allclose(cov_vector(_model(Normal(), 0.0, -3, 3), 1.0, lam0=0.0), [1.0], rtol=1e-12)


def test_cov_vector_binomial():
    got = cov_vector(_model(Binomial2(), 0.5, 0, 1), 1.0, lam0=0.5)
    np.testing.assert_allclose(got, [frozen.BINOM_COV_VECTOR_1], rtol=1e-12)


def test_cov_vector_quadrature_path_agrees():
    # a two-component null has no closed form, so this goes through the sample space
    model = PerturbationModel(NullModel(Normal(), MixingDistribution([-1.0, 1.0], [0.4, 0.6]), "full"),
                              Box(-3, 3))
    got = cov_vector(model, 0.5)
    # c = E_theta[grad log f]; estimate by brute-force quadrature on a fine grid
    x = np.linspace(-15, 15, 200001)
    dx = x[1] - x[0]
    psi = np.exp(-0.5 * (x - 0.5) ** 2) / np.sqrt(2 * np.pi)
    G = model.null.log_grad(x)
    want = (psi[:, None] * G).sum(axis=0) * dx
    np.testing.assert_allclose(got, want, rtol=1e-7, atol=1e-9)


def test_fisher_examples():
    for lam in (-2.0, 0.0, 3.0):
        np.testing.assert_allclose(fisher_info(NullModel.fixed(Normal(), lam)), [[1.0]], rtol=1e-14)
    np.testing.assert_allclose(fisher_info(NullModel.fixed(Binomial2(), 0.5)), [[frozen.BINOM_FISHER_HALF]])


def test_fisher_quadrature_matches_closed_form():
    # one weight and two supports go through the quadrature path; a single
    # component must reproduce the closed form when the weight block is dropped
    null = NullModel(Poisson(), MixingDistribution([-0.5, 1.0], [0.5, 0.5]), "full")
    info = fisher_info(null)
    assert info.shape == (3, 3)
    np.testing.assert_allclose(info, info.T, atol=1e-12)
    assert np.linalg.eigvalsh(info)[0] > 0
    x = np.arange(0, 200)
    G = null.log_grad(x)
    want = (G * null.pdf(x)[:, None]).T @ G
    np.testing.assert_allclose(info, want, rtol=1e-9, atol=1e-12)


def test_fisher_singular_raises():
    # two binomial components fully estimated give 3 parameters for 2 free probabilities
    null = NullModel(Binomial2(), MixingDistribution([0.2, 0.7], [0.5, 0.5]), "full")
    with pytest.raises(DegenerateModelError):
        fisher_info(null)


def test_cov_nuisance_at_lambda_hat_is_zero():
    assert cov_nuisance(_model(Normal(), 0.0, -3, 3), 0.0, 0.0, lam_hat=0.0) == pytest.approx(0.0, abs=1e-14)


def test_cov_nuisance_normal():
    got = cov_nuisance(_model(Normal(), 0.0, -3, 3), 1.0, 1.0, lam_hat=0.0)
    assert got == pytest.approx(frozen.NORMAL_COVSTAR_1_1, rel=1e-12)


def test_corr_examples():
    k = CovarianceKernel(_model(Normal(), 0.0, -3, 3))
    assert corr(k, 1.3, 1.3) == pytest.approx(1.0, abs=1e-15)
    assert corr(k, 1.0, -1.0) == pytest.approx(frozen.NORMAL_CORR_1_M1, rel=1e-12)
    with pytest.raises(SingularityError):
        corr(k, 1e-6, 1.0)


# -- analytic vs quadrature --------------------------------------------------

@pytest.mark.parametrize("fam,lam,lo,hi,estimate", [
    (Binomial2(), 0.5, 0.0, 1.0, "none"),
    (Binomial2(), 0.3, 0.0, 1.0, "full"),
    (Normal(), 0.0, -3.0, 3.0, "none"),
    (Normal(), 0.4, -3.0, 3.0, "full"),
])
def test_analytic_matches_quadrature(fam, lam, lo, hi, estimate):
    model = _model(fam, lam, lo, hi, estimate)
    a = CovarianceKernel(model, strategy="analytic")
    q = CovarianceKernel(model, strategy="quadrature")
    rng = np.random.default_rng(2024)
    t1 = rng.uniform(lo, hi, 50)[:, None]
    t2 = rng.uniform(lo, hi, 50)[:, None]
    np.testing.assert_allclose(q(t1, t2), a(t1, t2), rtol=1e-7, atol=1e-9)


def test_mvnormal_analytic_matches_quadrature():
    fam = MultivariateNormal(2)
    model = PerturbationModel(NullModel.fixed(fam, [0.0, 0.0]), Box([-1.5, -1.5], [1.5, 1.5]))
    a = CovarianceKernel(model, strategy="analytic")
    q = CovarianceKernel(model, strategy="quadrature")
    rng = np.random.default_rng(5)
    t1 = rng.uniform(-1.5, 1.5, (20, 2))
    t2 = rng.uniform(-1.5, 1.5, (20, 2))
    np.testing.assert_allclose(q(t1, t2), a(t1, t2), rtol=1e-7, atol=1e-9)


# -- structural properties ---------------------------------------------------

KERNELS = {
    "binom-fixed": lambda: CovarianceKernel(_model(Binomial2(), 0.5, 0.0, 1.0)),
    "normal-fixed": lambda: CovarianceKernel(_model(Normal(), 0.0, -3.0, 3.0)),
    "normal-nuisance": lambda: CovarianceKernel(_model(Normal(), 0.0, -3.0, 3.0, "full")),
    "mixture-weights": lambda: CovarianceKernel(PerturbationModel(two_normal_null("weights"), Box(-4, 4))),
    "mixture-full": lambda: CovarianceKernel(PerturbationModel(two_normal_null("full"), Box(-4, 4))),
    "poisson-fixed": lambda: CovarianceKernel(_model(Poisson(), 0.5, -1.0, 1.5)),
}
_BUILT = {}


def _kernel(name):
    if name not in _BUILT:
        _BUILT[name] = KERNELS[name]()
    return _BUILT[name]


@pytest.mark.parametrize("name", sorted(KERNELS))
@settings(max_examples=30, deadline=None)
@given(u=st.floats(0, 1), v=st.floats(0, 1))
def test_symmetry_and_cauchy_schwarz(name, u, v):
    k = _kernel(name)
    lo, hi = k.domain.bounds
    a = np.array([[lo[0] + u * (hi[0] - lo[0])]])
    b = np.array([[lo[0] + v * (hi[0] - lo[0])]])
    cab, cba = k(a, b)[0], k(b, a)[0]
    assert abs(cab - cba) <= 1e-10 * max(1.0, abs(cab))
    assert cab ** 2 <= k(a, a)[0] * k(b, b)[0] + 1e-10 * max(1.0, cab ** 2)


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_matrix_symmetric_psd(name):
    k = _kernel(name)
    lo, hi = k.domain.bounds
    pts = np.linspace(lo[0], hi[0], 40)[:, None]
    C = k.matrix(pts)
    np.testing.assert_allclose(C, C.T, atol=1e-10)
    assert np.linalg.eigvalsh(C)[0] > -1e-9 * np.abs(C).max()
    np.testing.assert_allclose(np.diag(C), k.diag(pts), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("fam,lam,lo,hi", [(Binomial2(), 0.4, 0.0, 1.0), (Normal(), 0.0, -3.0, 3.0),
                                           (Poisson(), 0.5, -1.0, 1.5)])
def test_nuisance_below_fixed(fam, lam, lo, hi):
    fixed = CovarianceKernel(_model(fam, lam, lo, hi))
    nuis = CovarianceKernel(_model(fam, lam, lo, hi, "full"))
    pts = np.linspace(lo, hi, 61)[:, None]
    assert np.all(nuis.diag(pts) <= fixed.diag(pts) + 1e-10)


@pytest.mark.parametrize("fam,lam,lo,hi", [(Normal(), 0.0, -3.0, 3.0), (Poisson(), 0.5, -1.0, 1.5),
                                           (Binomial2(), 0.4, 0.0, 1.0)])
def test_nuisance_root_order(fam, lam, lo, hi):
    # C*(lam + t, lam + t) vanishes like t^4 (second order in t^2): C*/t^4 settles
    # to a positive constant while C*/t^2 goes to zero.
    k = CovarianceKernel(_model(fam, lam, lo, hi, "full"))
    ts = np.array([1e-1, 1e-2, 3e-3])
    vals = k.diag((lam + ts)[:, None])
    q4 = vals / ts ** 4
    assert np.all(q4 > 0)
    assert abs(q4[-1] - q4[-2]) < 0.02 * q4[-1]
    assert abs(q4[-1] - q4[-2]) < abs(q4[1] - q4[0])
    q2 = vals / ts ** 2
    assert q2[-1] < 0.02 * q2[0]


@pytest.mark.parametrize("fam,lam,lo,hi,pts", [
    (Normal(), 0.0, -3.0, 3.0, [-1.0, -0.5, 0.5, 1.0, 1.5]),
    (Binomial2(), 0.5, 0.0, 1.0, [0.1, 0.3, 0.6, 0.8, 0.95]),
])
def test_empirical_covariance_matches_kernel(fam, lam, lo, hi, pts):
    # The score is a sum of iid terms u_i = psi / f - 1, so the covariance of
    # S / sqrt(n) is the covariance of u; compare against C at 5 points.
    model = _model(fam, lam, lo, hi)
    k = CovarianceKernel(model)
    rng = np.random.default_rng(99)
    n = 10_000
    x = fam.sample(np.array([lam]), n, rng)
    th = np.array(pts)[:, None]
    U = fam.pdf_matrix(x, th) / fam.pdf_matrix(x, np.array([[lam]]))[0] - 1.0
    emp = U @ U.T / n
    C = k.matrix(th)
    prod = U[:, None, :] * U[None, :, :]
    se = prod.std(axis=2) / np.sqrt(n)
    assert np.all(np.abs(emp - C) <= 5 * se + 1e-12)
    assert np.all(np.abs(U.mean(axis=1)) <= 5 * U.std(axis=1) / np.sqrt(n))


def test_divergent_variance_detected():
    # C(30, 30) = exp(900) - 1 overflows; the quadrature path must refuse it
    model = _model(Normal(), 0.0, -30.0, 30.0)
    with pytest.raises(NonFiniteVarianceError):
        CovarianceKernel(model, strategy="quadrature")


@pytest.mark.parametrize("t", [1e-2, 1e-4, 1e-5])
@pytest.mark.parametrize("strategy", ["analytic", "quadrature"])
def test_poisson_nuisance_kernel_near_support(t, strategy):
    # C*(lam + t, lam + t) = exp(K) - 1 - K with K = e^lam (e^t - 1)^2
    lam = 0.5
    null = NullModel(Poisson(), MixingDistribution([lam], [1.0]), "full")
    k = CovarianceKernel(PerturbationModel(null, Box(-1.0, 1.0)), strategy=strategy)
    K = mp.e ** mp.mpf(lam) * mp.expm1(mp.mpf(-t)) ** 2
    want = float(mp.expm1(K) - K)
    assert k.diag(np.array([[lam - t]]))[0] == pytest.approx(want, rel=1e-9)


def test_three_component_kernel_smooth_at_removable_point():
    # fitted supports near 0.114 and 2.146 used to lose all precision here
    mix = MixingDistribution([-2.558, 0.114, 2.146], [0.383, 0.203, 0.414])
    k = CovarianceKernel(PerturbationModel(NullModel(Normal(), mix, "full"), Box(-4, 4)))
    t = np.array([1e-5, 1e-4, 1e-3])
    q = k.diag((0.114 + t)[:, None]) / t ** 4
    assert np.all(np.isfinite(q)) and np.all(q > 0)
    assert q[0] == pytest.approx(q[1], rel=1e-3)
