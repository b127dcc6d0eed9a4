import math

import numpy as np
import pytest

from squashsim import (
    ModelParams,
    StationaryGaussian,
    contour_ellipse,
    covariance,
    effective_bath,
    is_stable,
    n_eff,
    quad_variance,
    stationary_solution,
    wigner_gaussian,
)
from squashsim.analytic import second_moment_rates
from squashsim.errors import ParameterError, StabilityError

# exact rationals for the feedback point (hand-derived, cross-checked by the
# moment oracle and the truncated steady state)
ZETA_REF = 163.0 / 96.0
MU_REF = -185.0 / 96.0
VAR_X_REF = 13.0 / 96.0
VAR_P_REF = 33.0 / 16.0


def sample_stationary(rng, with_gain=True):
    while True:
        gamma = 10 ** rng.uniform(-3, 0)
        p = ModelParams(
            gamma=gamma,
            kappa=10 ** rng.uniform(1, 4),
            chi=10 ** rng.uniform(-1, 1),
            g=rng.uniform(0, 3 * gamma) if with_gain else 0.0,
            phi=rng.uniform(-math.pi, math.pi),
            eta=rng.uniform(0.05, 1.0),
            nbar=rng.uniform(0, 5),
        )
        if p.gamma - 2 * p.g_sin_phi > 0:
            return p


class TestStability:
    def test_open_loop_stable(self):
        assert is_stable(ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.0))

    def test_wrong_phase_unstable(self):
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.025, phi=math.pi / 2)
        assert not is_stable(p)

    def test_figure_phase_stable(self, base_params):
        assert is_stable(base_params)

    def test_equality_is_unstable(self):
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=1e-2, phi=math.pi / 2)
        assert math.sin(p.phi) == 1.0
        assert not is_stable(p)

    def test_rates(self, base_params):
        fast, slow = second_moment_rates(base_params)
        assert fast == pytest.approx(0.06, rel=1e-12)
        assert slow == pytest.approx(0.01, rel=1e-12)


class TestStationarySolution:
    def test_open_loop_collapses_to_bath(self, measured_params):
        sg = stationary_solution(measured_params)
        b = effective_bath(measured_params)
        assert sg.zeta == b.N and sg.mu == b.M

    def test_feedback_point(self, base_params):
        sg = stationary_solution(base_params)
        assert sg.zeta == pytest.approx(ZETA_REF, rel=1e-12)
        assert sg.mu.real == pytest.approx(MU_REF, rel=1e-12)
        assert abs(sg.mu.imag) < 1e-15

    def test_rejects_printed_instability(self):
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.025, phi=math.pi / 2)
        with pytest.raises(StabilityError, match=r"g\*sin\(phi\) < gamma"):
            stationary_solution(p)

    def test_rejects_nonrelaxing_window(self):
        # g sin(phi) between gamma/2 and gamma: the first-order condition
        # holds but the second moments have no finite fixed point
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.0075, phi=math.pi / 2)
        assert is_stable(p)
        with pytest.raises(StabilityError, match=r"2\*g\*sin\(phi\)"):
            stationary_solution(p)

    def test_nu_term_enters_with_im_m(self):
        # at cos(phi) != 0, Im M != 0 and the nu knob shifts zeta as specified
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.02, phi=-2.2, eta=0.8, nbar=0.5)
        b = effective_bath(p)
        assert b.M.imag != 0.0
        s = p.g_sin_phi
        sg0 = stationary_solution(p, nu=0.0)
        sg1 = stationary_solution(p, nu=0.7)
        expected_shift = s * 2.0 * 0.7 * b.M.imag / (b.Gamma**2 - s**2)
        assert sg1.zeta - sg0.zeta == pytest.approx(expected_shift, rel=1e-12)
        assert sg1.mu == sg0.mu


class TestQuadVariance:
    def test_feedback_point_variances(self, base_params):
        sg = stationary_solution(base_params)
        assert quad_variance(sg, 0.0) == pytest.approx(VAR_X_REF, rel=1e-12)
        assert quad_variance(sg, math.pi / 2) == pytest.approx(VAR_P_REF, rel=1e-12)

    def test_vacuum(self):
        sg = StationaryGaussian(zeta=0.0, mu=0.0)
        for theta in (0.0, 0.5, 1.7):
            assert quad_variance(sg, theta) == pytest.approx(0.25, abs=1e-15)

    def test_pi_periodicity(self, rng):
        sg = StationaryGaussian(zeta=1.3, mu=0.4 - 0.9j)
        for theta in rng.uniform(-3, 3, size=20):
            assert quad_variance(sg, theta) == pytest.approx(
                quad_variance(sg, theta + math.pi), rel=1e-12
            )


class TestNeff:
    def test_open_loop_identity_is_exact(self, rng):
        for _ in range(50):
            p = sample_stationary(rng, with_gain=False)
            assert n_eff(p) == p.nbar  # bit-exact by construction

    def test_feedback_point(self, base_params):
        assert n_eff(base_params) == pytest.approx(-11.0 / 48.0, rel=1e-12)

    def test_matches_zeta_plus_re_mu(self, rng):
        for _ in range(200):
            p = sample_stationary(rng)
            sg = stationary_solution(p)
            assert n_eff(p) == pytest.approx(sg.zeta + sg.mu.real, rel=1e-10, abs=1e-12)

    def test_gain_sweep_values(self):
        # n_eff at g = 0.025, sin(phi) = -1 for increasing coupling
        ref = {0.5: 2.2708333333333335, 1.5: -0.04398148148148148, 2.5: -0.22916666666666666}
        for chi, expected in ref.items():
            p = ModelParams(gamma=1e-2, kappa=1e2, chi=chi, g=0.025,
                            phi=-math.pi / 2, eta=0.8, nbar=0.5)
            assert n_eff(p) == pytest.approx(expected, abs=1e-12)

    def test_rejected_when_unstable(self):
        p = ModelParams(gamma=1e-2, kappa=1e2, chi=2.5, g=0.025, phi=math.pi / 2)
        with pytest.raises(StabilityError):
            n_eff(p)


class TestCovariance:
    def test_feedback_point(self, base_params):
        cov = covariance(stationary_solution(base_params))
        assert cov.vxx == pytest.approx(VAR_X_REF, rel=1e-12)
        assert cov.vpp == pytest.approx(VAR_P_REF, rel=1e-12)
        assert abs(cov.vxp) < 1e-15

    def test_vacuum(self):
        cov = covariance(StationaryGaussian(0.0, 0.0))
        assert (cov.vxx, cov.vpp, cov.vxp) == (0.25, 0.25, 0.0)

    def test_imaginary_mu_tilts(self):
        cov = covariance(StationaryGaussian(1.0, 0.6j))
        assert cov.vxx == cov.vpp
        assert cov.vxp == pytest.approx(-0.3, rel=1e-14)

    def test_reconstructs_quad_variance(self, rng):
        sg = StationaryGaussian(zeta=1.1, mu=0.5 - 0.4j)
        cov = covariance(sg)
        for theta in rng.uniform(0, math.pi, size=25):
            rebuilt = (
                cov.vxx * math.cos(theta) ** 2
                + cov.vpp * math.sin(theta) ** 2
                + cov.vxp * math.sin(2 * theta)
            )
            assert rebuilt == pytest.approx(quad_variance(sg, theta), rel=1e-12)

    def test_non_positive_rejected(self):
        with pytest.raises(ParameterError):
            covariance(StationaryGaussian(zeta=-0.4, mu=0.2))


class TestContourEllipse:
    def test_feedback_point(self, base_params):
        cov = covariance(stationary_solution(base_params))
        ell = contour_ellipse(cov)
        assert ell.semi_major == pytest.approx(math.sqrt(VAR_P_REF), rel=1e-10)
        assert ell.semi_minor == pytest.approx(math.sqrt(VAR_X_REF), rel=1e-10)
        assert ell.angle == pytest.approx(math.pi / 2, abs=1e-12)

    def test_vacuum_circle(self):
        ell = contour_ellipse(covariance(StationaryGaussian(0.0, 0.0)))
        assert ell.semi_major == ell.semi_minor == 0.5
        assert ell.angle == 0.0

    def test_measured_only_contour(self, measured_params):
        cov = covariance(stationary_solution(measured_params))
        ell = contour_ellipse(cov)
        assert ell.semi_major == pytest.approx(1.4361406616345072, rel=1e-10)
        assert ell.semi_minor == pytest.approx(math.sqrt(0.5), rel=1e-12)
        assert ell.angle == pytest.approx(math.pi / 2, abs=1e-12)

    def test_variance_extremal_on_axes(self, rng):
        sg = StationaryGaussian(zeta=0.9, mu=0.45 - 0.3j)
        cov = covariance(sg)
        ell = contour_ellipse(cov)
        assert quad_variance(sg, ell.angle) == pytest.approx(ell.semi_major**2, rel=1e-12)
        assert quad_variance(sg, ell.angle + math.pi / 2) == pytest.approx(
            ell.semi_minor**2, rel=1e-12
        )
        grid = np.linspace(0, math.pi, 721)
        vals = [quad_variance(sg, t) for t in grid]
        assert max(vals) <= ell.semi_major**2 * (1 + 1e-10)
        assert min(vals) >= ell.semi_minor**2 * (1 - 1e-10)

    def test_angle_range(self, rng):
        for _ in range(50):
            z = rng.uniform(0.2, 2.0)
            m = rng.uniform(-0.5, 0.5) + 1j * rng.uniform(-0.5, 0.5)
            try:
                cov = covariance(StationaryGaussian(z, m))
            except ParameterError:
                continue
            ell = contour_ellipse(cov)
            assert -math.pi / 2 < ell.angle <= math.pi / 2
            assert ell.semi_major >= ell.semi_minor > 0


class TestWigner:
    def test_vacuum_peak(self):
        cov = covariance(StationaryGaussian(0.0, 0.0))
        W = wigner_gaussian(cov, np.array([0.0]), np.array([0.0]))
        assert W[0, 0] == pytest.approx(1.0 / (2 * math.pi * 0.25), rel=1e-14)

    def test_feedback_peak(self, base_params):
        # 1 / (2 pi sqrt(VarX * VarP)) at the exact rationals 13/96 * 33/16
        cov = covariance(stationary_solution(base_params))
        W = wigner_gaussian(cov, np.array([0.0]), np.array([0.0]))
        assert W[0, 0] == pytest.approx(1.0 / (2 * math.pi * math.sqrt(429.0 / 1536.0)), rel=1e-12)
        assert W[0, 0] == pytest.approx(0.3011529303461590, rel=1e-10)

    def test_contour_level(self, base_params):
        cov = covariance(stationary_solution(base_params))
        ell = contour_ellipse(cov)
        peak = wigner_gaussian(cov, np.array([0.0]), np.array([0.0]))[0, 0]
        # points on the ellipse axes sit at peak/sqrt(e)
        ca, sa = math.cos(ell.angle), math.sin(ell.angle)
        for r, ang in ((ell.semi_major, (ca, sa)), (ell.semi_minor, (-sa, ca))):
            w = wigner_gaussian(cov, np.array([r * ang[0]]), np.array([r * ang[1]]))[0, 0]
            assert w == pytest.approx(peak / math.sqrt(math.e), rel=1e-10)

    def test_normalization(self, measured_params):
        cov = covariance(stationary_solution(measured_params))
        x = np.linspace(-8, 8, 401)
        p = np.linspace(-10, 10, 501)
        W = wigner_gaussian(cov, x, p)
        total = np.trapezoid(np.trapezoid(W, p, axis=1), x)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestBounds:
    def test_neff_lower_bound_and_heisenberg(self, rng):
        for _ in range(2000):
            p = sample_stationary(rng)
            assert n_eff(p) >= -0.5
            cov = covariance(stationary_solution(p))
            assert cov.det >= (1.0 / 16.0) * (1 - 1e-12)

    def test_squashing_below_vacuum_at_reference(self, base_params):
        assert n_eff(base_params) < 0.0
        cov = covariance(stationary_solution(base_params))
        assert cov.vxx < 0.25  # squashed below the vacuum level
        assert cov.vpp > 0.25
