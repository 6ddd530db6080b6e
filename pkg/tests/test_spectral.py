"""Perron-Frobenius certificates and stepsize bounds."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsem.em import example_2_5, example_3_5
from rsem.exceptions import AdmissibilityWarning, NonPositiveEta, Star6Violated
from rsem.generator import stationary_distribution, validate_generator
from rsem.spectral import (
    RegimeBounds,
    SpectralCertificate,
    alpha_additive,
    averaging_condition,
    beta_multiplicative,
    build_Qp,
    certificate_report,
    certify_additive,
    certify_multiplicative,
    condition_star6,
    delta_max_additive,
    delta_max_multiplicative,
    eta_p_and_eigvec,
    p0_threshold,
    perron_root,
    spectral_certificate,
)

from test_generator import random_generator

Q25 = validate_generator([[-4.0, 4.0], [1.0, -1.0]])
B25 = RegimeBounds([2.0, -1.0], c0=1.0, L=1.0, L0=1.0)
Q35 = validate_generator([[-3.0, 0.0, 3.0], [1.0, -3.0, 2.0], [1.0, 2.0, -3.0]])
B35 = RegimeBounds([10 / 9, 0.0, -5.0], L=4.0)


def eig_oracle(Qp):
    """``eta`` and normalised Perron vector from a dense eigensolver."""
    w, v = np.linalg.eig(Qp)
    k = int(np.argmax(w.real))
    xi = np.abs(v[:, k].real)
    return -float(w[k].real), xi / xi.max()


def fake_cert(p, eta, xi, q0):
    xi = np.asarray(xi, dtype=float)
    return SpectralCertificate(p, np.zeros((len(xi), len(xi))), eta, xi, q0)


class TestAveraging:
    @pytest.mark.parametrize("gamma", [0.5, 1.0, 1.9, 2.0, 2.1, 3.0])
    def test_example_2_5(self, gamma):
        Q = validate_generator([[-4.0, 4.0], [gamma, -gamma]])
        res = averaging_condition(stationary_distribution(Q), B25)
        assert res.value == pytest.approx((2 * gamma - 4) / (4 + gamma), abs=1e-12)
        assert res.holds == (gamma < 2)

    def test_zero_beta_excluded(self):
        res = averaging_condition(np.array([0.5, 0.5]), RegimeBounds([0.0, 0.0]))
        assert res.value == 0.0 and not res.holds


class TestQp:
    def test_example_2_5_p1(self):
        np.testing.assert_array_equal(build_Qp(Q25, B25, 1.0), [[-3.0, 4.0], [1.0, -1.5]])

    def test_p0_is_identity(self):
        np.testing.assert_array_equal(build_Qp(Q25, B25, 0.0), Q25.rates)

    def test_example_3_5_p2(self):
        expected = [[-3 + 10 / 9, 0.0, 3.0], [1.0, -3.0, 2.0], [1.0, 2.0, -8.0]]
        np.testing.assert_allclose(build_Qp(Q35, B35, 2.0), expected, atol=1e-15)


class TestPerron:
    def test_two_by_two_characteristic_polynomial(self):
        eta, xi = eta_p_and_eigvec(np.array([[-3.0, 4.0], [1.0, -1.5]]))
        # lambda^2 + 4.5 lambda + 0.5 = 0
        assert eta == pytest.approx((4.5 - math.sqrt(18.25)) / 2, abs=1e-13)
        assert np.all(xi > 0) and xi.max() == 1.0

    def test_generator_has_root_zero(self):
        eta, xi = eta_p_and_eigvec(Q25.rates)
        assert eta == pytest.approx(0.0, abs=1e-13)
        np.testing.assert_allclose(xi, [1.0, 1.0], atol=1e-12)

    def test_perron_root_of_positive_matrix(self):
        B = np.array([[2.0, 1.0], [1.0, 2.0]])
        rho, x = perron_root(B)
        assert rho == pytest.approx(3.0, abs=1e-12)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)

    def test_rejects_non_metzler(self):
        with pytest.raises(ValueError):
            eta_p_and_eigvec(np.array([[-1.0, -1.0], [1.0, -1.0]]))

    def test_rejects_reducible(self):
        with pytest.raises(ValueError):
            eta_p_and_eigvec(np.array([[-1.0, 1.0], [0.0, -1.0]]))

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
    def test_against_dense_eigensolver(self, n, seed, p):
        rng = np.random.default_rng(seed)
        Q = validate_generator(random_generator(rng, n))
        bounds = RegimeBounds(rng.uniform(-3, 3, n))
        cert = spectral_certificate(Q, bounds, p)
        eta, xi = eig_oracle(cert.Qp)
        assert cert.eta_p == pytest.approx(eta, abs=1e-8)
        np.testing.assert_allclose(cert.xi, xi, atol=1e-7)
        assert cert.residual() < 1e-10
        assert np.all(cert.xi > 0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(0.05, 4.0), st.floats(0.05, 4.0))
    def test_eta_is_concave_in_p(self, n, seed, p1, p2):
        rng = np.random.default_rng(seed)
        Q = validate_generator(random_generator(rng, n))
        bounds = RegimeBounds(rng.uniform(-3, 3, n))
        eta = lambda p: spectral_certificate(Q, bounds, p).eta_p  # noqa: E731
        assert eta(0.5 * (p1 + p2)) >= 0.5 * (eta(p1) + eta(p2)) - 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_slope_at_zero_is_half_the_averaging_sum(self, n, seed):
        # first-order perturbation of the zero eigenvalue of Q
        rng = np.random.default_rng(seed)
        Q = validate_generator(random_generator(rng, n))
        bounds = RegimeBounds(rng.uniform(-3, 3, n))
        avg = averaging_condition(stationary_distribution(Q), bounds).value
        h = 1e-5
        assert spectral_certificate(Q, bounds, h).eta_p / h == pytest.approx(-avg / 2, abs=1e-3 * (1 + abs(avg)))


class TestP0:
    def test_example_2_5(self):
        assert p0_threshold(Q25, B25) == 4.0

    def test_example_3_5(self):
        assert p0_threshold(Q35, B35) == pytest.approx(5.4, abs=1e-14)

    def test_no_positive_beta(self):
        assert p0_threshold(Q25, RegimeBounds([-1.0, -0.5])) == math.inf

    def test_warns_when_averaging_fails(self):
        Q = validate_generator([[-4.0, 4.0], [3.0, -3.0]])
        with pytest.warns(AdmissibilityWarning):
            p0_threshold(Q, B25)


def alpha_oracle(p, L, beta0, q0, xi_prod):
    """Independent transcription of the additive rate constant."""
    inner = 4 ** (p / 2) * L**p + q0 * xi_prod
    return p * beta0 + p * 4 * L**2 * (3 + 4 * beta0) + p * 2 ** (2 + p) * beta0 * inner


class TestAdditive:
    def test_halved_beta_parameterisation(self):
        # beta_0 = 1, L = 1, q_0 = 4 collapses to p{29 + 4^{(2+p)/2}(4^{p/2} + 4 xi_hat xi_bar)}
        for p in (0.1, 0.5, 0.9):
            cert = fake_cert(p, 0.1, [1.0, 0.8], q0=4.0)
            got = alpha_additive(RegimeBounds([1.0, -0.5], L=1.0), cert)
            expected = p * (29 + 4 ** ((2 + p) / 2) * (4 ** (p / 2) + 4 * 1.25))
            assert got == pytest.approx(expected, rel=1e-14)

    def test_zero_beta_collapse(self):
        cert = fake_cert(0.5, 0.1, [1.0, 0.5], q0=4.0)
        assert alpha_additive(RegimeBounds([0.0, 0.0], L=3.0), cert) == pytest.approx(12 * 0.5 * 9, rel=1e-14)

    def test_matches_second_implementation(self):
        cert = fake_cert(0.5, 0.1, [1.0, 2 / 3], q0=4.0)
        got = alpha_additive(RegimeBounds([2.0, -1.0], L=1.0), cert)
        assert got == pytest.approx(alpha_oracle(0.5, 1.0, 2.0, 4.0, 1.5), rel=1e-14)

    def test_nonpositive_eta_rejected(self):
        with pytest.raises(NonPositiveEta):
            delta_max_additive(B25, fake_cert(0.5, 0.0, [1.0, 1.0], 4.0), 10.0)
        with pytest.raises(NonPositiveEta):
            delta_max_additive(B25, fake_cert(0.5, -0.2, [1.0, 1.0], 4.0), 10.0)

    def test_lipschitz_factor_binds(self):
        bound = delta_max_additive(RegimeBounds([1.0], L=10.0), fake_cert(0.5, 1.0, [1.0], 1.0), 1e-3)
        assert bound.delta_max == pytest.approx(1 / 1600, rel=1e-15)

    def test_halved_beta_pipeline_golden(self):
        bounds = RegimeBounds([1.0, -0.5], c0=1.0, L=1.0, L0=1.0)
        cert = spectral_certificate(Q25, bounds, 0.5)
        alpha = alpha_additive(bounds, cert)
        bound = delta_max_additive(bounds, cert, alpha)
        # hand evaluation from a dense eigensolver
        eta, xi = eig_oracle(np.array([[-3.75, 4.0], [1.0, -1.125]]))
        alpha_hand = 0.5 * (29 + 4**1.25 * (4**0.25 + 4 / xi.min()))
        assert alpha == pytest.approx(alpha_hand, rel=1e-10)
        assert bound.delta_max == pytest.approx(min(1 / 16, (eta / alpha_hand) ** 4), rel=1e-9)
        assert bound.delta_max == pytest.approx(4.728015601729216e-12, rel=1e-9)

    def test_grid_respects_p0_and_unit_cap(self):
        res = certify_additive(Q25, B25, p_grid=(0.5, 0.9, 1.0, 1.5))
        assert [row["p"] for row in res.table] == [0.5, 0.9]
        assert res.bound.delta_max == max(row["delta_max"] for row in res.table)

    def test_nothing_certified_when_eta_vanishes(self):
        # eta_p = p - p^2/2 > 0 on (0, 2) for the two-regime model, but a grid outside (0, 1) is empty
        res = certify_additive(Q25, B25, p_grid=(1.5,))
        assert res.bound is None and res.table == []


class TestStar6:
    def test_example_3_5(self):
        for nu in (0.0, 1.0, 5.0):
            Q = validate_generator([[-(3 + nu), nu, 3.0], [1.0, -3.0, 2.0], [1.0, 2.0, -3.0]])
            assert condition_star6(Q, B35)

    def test_no_positive_beta(self):
        assert condition_star6(Q25, RegimeBounds([-1.0, -1.0]))

    def test_violated(self):
        Q = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
        assert not condition_star6(Q, RegimeBounds([2.0, -5.0]))


class TestMultiplicative:
    def test_zero_beta_collapse(self):
        cert = fake_cert(2.0, 0.5, [1.0, 1.0], q0=3.0)
        assert beta_multiplicative(RegimeBounds([0.0, 0.0], L=1.0), cert) == pytest.approx(40.0, rel=1e-15)

    def test_example_3_5_constant(self):
        cert = spectral_certificate(Q35, B35, 2.0)
        beta = beta_multiplicative(B35, cert)
        # q_0 = max(-q_ii) = 3: (1 + 36) * 5 + 8 * 16 * (5 + 30) = 4665
        assert beta == pytest.approx(4665 * cert.xi_hat * cert.xi_bar, rel=1e-14)

    def test_scale_invariance(self):
        cert = spectral_certificate(Q35, B35, 2.0)
        doubled = SpectralCertificate(2.0, cert.Qp, cert.eta_p, 2 * cert.xi, cert.q0)
        assert beta_multiplicative(B35, doubled) == pytest.approx(beta_multiplicative(B35, cert), rel=1e-14)

    def test_star6_violation_raises(self):
        Q = validate_generator([[-1.0, 1.0], [1.0, -1.0]])
        bounds = RegimeBounds([2.0, -5.0], L=1.0)
        with pytest.raises(Star6Violated):
            beta_multiplicative(bounds, spectral_certificate(Q, bounds, 2.0))

    def test_factors(self):
        big_l = delta_max_multiplicative(RegimeBounds([1.0], L=4.0), fake_cert(2.0, 1.0, [1.0], 1.0), 1e-6)
        assert big_l.delta_max == pytest.approx(1 / 512, rel=1e-15)
        small_l = delta_max_multiplicative(RegimeBounds([1.0], L=0.1), fake_cert(2.0, 1.0, [1.0], 1.0), 100.0)
        assert small_l.delta_max == pytest.approx(1e-4, rel=1e-12)

    def test_example_3_5_pipeline_golden(self):
        res = certify_multiplicative(Q35, B35)
        eta, xi = eig_oracle(build_Qp(Q35, B35, 2.0))
        beta_hand = 4665 / xi.min()
        assert res.star6
        assert res.beta == pytest.approx(beta_hand, rel=1e-10)
        assert res.bound.delta_max == pytest.approx(min(1 / 512, (eta / beta_hand) ** 2), rel=1e-9)
        assert res.bound.delta_max == pytest.approx(3.912070019690796e-09, rel=1e-9)

    def test_vanishing_eta_is_not_certified(self):
        # det(Q_2) = 0 for the two-regime model: eta_2 is zero up to rounding
        res = certify_multiplicative(Q25, B25)
        assert abs(res.certificate.eta_p) < 1e-12
        assert res.bound is None


class TestReport:
    def test_example_2_5_keys(self):
        rep = certificate_report(Q25, B25)
        assert rep["averaging_sum"] == pytest.approx(-0.4, abs=1e-12)
        assert rep["p0"] == 4.0
        assert rep["delta_max_additive"] > 0
        assert rep["delta_max_multiplicative"] is None
        for key in ("p", "eta_p", "xi", "alpha", "beta_mult", "star6", "p_grid"):
            assert key in rep

    def test_failed_averaging_stops_early(self):
        Q = validate_generator([[-4.0, 4.0], [3.0, -3.0]])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = certificate_report(Q, B25)
        assert not rep["averaging_holds"]
        assert rep["delta_max_additive"] is None and rep["delta_max_multiplicative"] is None

    def test_builtin_bounds_are_used(self):
        m = example_3_5(0.0)
        rep = certificate_report(m.generator, m.model.bounds, additive=False)
        assert rep["delta_max_multiplicative"] == pytest.approx(3.912070019690796e-09, rel=1e-9)
        m2 = example_2_5(1.0)
        assert certificate_report(m2.generator, m2.model.bounds)["averaging_sum"] == pytest.approx(-0.4, abs=1e-12)
