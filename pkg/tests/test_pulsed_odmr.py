import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from nvodmr.constants import TWO_PI
from nvodmr.photophysics import (
    PopulationVector,
    RateConstants,
    build_generator,
    fluorescence_rate,
    pump_rate_for,
    steady_state,
    wait_relaxation,
)
from nvodmr.pulsed_odmr import (
    FlipProfile,
    PulseTiming,
    PulsedSummary,
    approx_linewidth,
    bare_flip_probability,
    cycle_map,
    dephased_flip_probability,
    integrated_counts,
    optimal_pi_duration,
    optimize_pulsed,
    pi_pulse_matrix,
    propagator_integral,
    pulsed_lineshape,
    pulsed_steady_state,
    pulsed_summary,
    sensitivity_pulsed,
)

RATES = RateConstants()


class TestBareFlip:
    def test_perfect_pi_pulse(self):
        omega = TWO_PI * 0.5
        assert bare_flip_probability(omega, 0.0, math.pi / omega) == pytest.approx(1.0, abs=1e-12)

    def test_full_rotation(self):
        omega = TWO_PI * 0.5
        assert bare_flip_probability(omega, 0.0, 2.0 * math.pi / omega) == pytest.approx(0.0, abs=1e-12)

    def test_detuned_null(self):
        # At delta = sqrt(3) Omega the generalized Rabi angle is 2 pi for t = pi/Omega.
        omega = 2.0
        assert bare_flip_probability(omega, math.sqrt(3.0) * omega, math.pi / omega) == pytest.approx(
            0.0, abs=1e-12)

    def test_broadcasts(self):
        deltas = np.linspace(-3.0, 3.0, 7)
        out = bare_flip_probability(1.0, deltas, 1.0)
        assert out.shape == deltas.shape
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_zero_drive(self):
        assert bare_flip_probability(0.0, 0.0, 1.0) == 0.0


class TestDephasedFlip:
    def test_no_dephasing_limit(self):
        omega, t = TWO_PI * 0.3, 0.7
        for delta0 in (0.0, 1.0, -2.5):
            bare = bare_flip_probability(omega, delta0, t)
            assert dephased_flip_probability(omega, delta0, t, math.inf) == pytest.approx(bare, abs=1e-12)
            # Very long T2* approaches the bare value.
            assert dephased_flip_probability(omega, delta0, t, 1e9) == pytest.approx(bare, abs=1e-6)

    @pytest.mark.parametrize("omega_mhz,delta0,t,t2star", [
        (0.1, 0.0, 3.0, 1.0),
        (0.5, 1.0, 1.3, 3.0),
        (0.03, -0.4, 10.0, 3.0),
        (2.0, 0.3, 0.25, 1.0),
    ])
    def test_against_adaptive_quadrature(self, omega_mhz, delta0, t, t2star):
        omega = TWO_PI * omega_mhz
        spread = math.sqrt(2.0) / t2star

        def integrand(d):
            w2 = omega**2 + d**2
            return (omega**2 / w2 * math.sin(0.5 * math.sqrt(w2) * t) ** 2
                    * math.exp(-0.5 * ((d - delta0) / spread) ** 2)
                    / (math.sqrt(2.0 * math.pi) * spread))

        oracle, _ = quad(integrand, delta0 - 12 * spread, delta0 + 12 * spread,
                         limit=800, epsabs=1e-13, epsrel=1e-12)
        assert dephased_flip_probability(omega, delta0, t, t2star) == pytest.approx(oracle, abs=1e-9)

    def test_oscillatory_regime_against_quadrature(self):
        # t * spread >> 1 exercises the dense-trapezoid branch.
        omega, t, t2star = TWO_PI * 0.01, 120.0, 1.0
        spread = math.sqrt(2.0) / t2star

        def integrand(d):
            w2 = omega**2 + d**2
            return (omega**2 / w2 * math.sin(0.5 * math.sqrt(w2) * t) ** 2
                    * math.exp(-0.5 * (d / spread) ** 2) / (math.sqrt(2.0 * math.pi) * spread))

        oracle, _ = quad(integrand, -12 * spread, 12 * spread, limit=4000,
                         epsabs=1e-13, epsrel=1e-12)
        assert dephased_flip_probability(omega, 0.0, t, t2star) == pytest.approx(oracle, abs=1e-7)

    def test_weak_drive_cannot_flip(self):
        # Omega << 1/T2*: dephasing wins and the flip probability stays small.
        assert dephased_flip_probability(TWO_PI * 0.001, 0.0, 50.0, 3.0) < 0.05

    def test_bounded_probability(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            omega = TWO_PI * rng.uniform(0.01, 3.0)
            delta0 = rng.uniform(-5.0, 5.0)
            t = rng.uniform(0.0, 20.0)
            p = dephased_flip_probability(omega, delta0, t, rng.uniform(0.5, 5.0))
            assert 0.0 <= p <= 1.0


class TestOptimalPiDuration:
    def test_no_dephasing_gives_pi_over_omega(self):
        omega = TWO_PI * 0.5
        assert optimal_pi_duration(omega, 1e12) == pytest.approx(math.pi / omega, abs=1e-3)

    def test_dephasing_shortens_pulse(self):
        omega = TWO_PI * 0.05
        t_opt = optimal_pi_duration(omega, 3.0)
        assert t_opt < math.pi / omega

    def test_matches_brute_force_scan(self):
        omega, t2star = TWO_PI * 0.05, 3.0
        ts = np.linspace(0.25 * math.pi / omega, 2.0 * math.pi / omega, 10000)
        flips = np.array([dephased_flip_probability(omega, 0.0, t, t2star) for t in ts])
        brute = ts[np.argmax(flips)]
        t_opt = optimal_pi_duration(omega, t2star)
        assert t_opt == pytest.approx(brute, abs=2e-3)
        assert dephased_flip_probability(omega, 0.0, t_opt, t2star) >= flips.max() - 1e-9


class TestApproxLinewidth:
    def test_dephasing_limited(self):
        expected = 2.0 * math.sqrt(math.log(2.0)) / (math.pi * 3.0)
        assert approx_linewidth(0.0, 3.0) == pytest.approx(expected, rel=1e-12)
        assert approx_linewidth(0.0, 3.0) == pytest.approx(0.1767, abs=1e-4)

    def test_fourier_limited(self):
        assert approx_linewidth(TWO_PI, math.inf) == pytest.approx(math.sqrt(0.0646326) * TWO_PI,
                                                                   rel=1e-12)
        assert approx_linewidth(TWO_PI, math.inf) == pytest.approx(1.597, abs=1e-3)

    def test_quadrature_combination(self):
        a = approx_linewidth(TWO_PI * 0.3, math.inf)
        b = approx_linewidth(0.0, 2.0)
        combined = approx_linewidth(TWO_PI * 0.3, 2.0)
        assert combined**2 == pytest.approx(a**2 + b**2, rel=1e-12)


class TestPulsedLineshape:
    def test_profile_even(self):
        omega, t2star = TWO_PI * 0.2, 3.0
        t_pi = optimal_pi_duration(omega, t2star)
        deltas = np.linspace(0.1, 3.0, 7)
        plus = dephased_flip_probability(omega, deltas, t_pi, t2star)
        minus = dephased_flip_probability(omega, -deltas, t_pi, t2star)
        np.testing.assert_allclose(plus, minus, atol=1e-12)

    def test_strong_drive_flips_completely(self):
        omega = TWO_PI * 30.0
        profile = pulsed_lineshape(omega, optimal_pi_duration(omega, 3.0), 3.0)
        assert profile.c_pi > 0.999

    def test_matches_approximation_in_limits(self):
        # The quadrature formula is exact in the Fourier- and dephasing-limited
        # regimes; the crossover carries up to ~8% error (see ledger).
        for omega_mhz, t2star, tol in [(0.01, 1.0, 0.02), (1.0, 3.0, 0.01),
                                       (0.1, 1.0, 0.09), (0.05, 3.0, 0.09)]:
            omega = TWO_PI * omega_mhz
            profile = pulsed_lineshape(omega, optimal_pi_duration(omega, t2star), t2star)
            assert profile.fwhm == pytest.approx(approx_linewidth(omega, t2star), rel=tol)

    def test_explicit_grid_bracketing(self):
        omega, t2star = TWO_PI * 0.2, 3.0
        t_pi = optimal_pi_duration(omega, t2star)
        wide = np.linspace(-30.0, 30.0, 101)
        profile = pulsed_lineshape(omega, t_pi, t2star, grid=wide)
        adaptive = pulsed_lineshape(omega, t_pi, t2star)
        assert profile.fwhm == pytest.approx(adaptive.fwhm, rel=1e-6)
        with pytest.raises(ValueError):
            pulsed_lineshape(omega, t_pi, t2star, grid=np.linspace(-0.01, 0.01, 11))


class TestPiPulseMatrix:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(pi_pulse_matrix(0.0), np.eye(4), atol=0.0)

    def test_swap_at_one(self):
        pi = pi_pulse_matrix(1.0)
        p = np.array([0.1, 0.6, 0.2, 0.1])
        out = pi @ p
        np.testing.assert_allclose(out, [0.1, 0.2, 0.6, 0.1], atol=1e-15)

    def test_column_stochastic(self):
        for c in (0.0, 0.3, 0.77, 1.0):
            pi = pi_pulse_matrix(c)
            np.testing.assert_allclose(pi.sum(axis=0), np.ones(4), atol=1e-15)
            assert np.min(pi) >= 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            pi_pulse_matrix(1.2)


class TestPulsedSteadyState:
    def setup_method(self):
        self.gen = build_generator(RATES, pump_rate_for(1.0, RATES))
        self.wait = wait_relaxation(RATES)

    def test_fixed_point_property(self):
        pi = pi_pulse_matrix(0.7)
        p = pulsed_steady_state(self.gen, self.wait, pi, 0.5).as_array()
        m = cycle_map(self.gen, self.wait, pi, 0.5)
        np.testing.assert_allclose(m @ p, p, atol=1e-10)

    def test_matches_power_iteration(self):
        pi = pi_pulse_matrix(0.7)
        m = cycle_map(self.gen, self.wait, pi, 0.5)
        p_iter = np.full(4, 0.25)
        for _ in range(10000):
            p_iter = m @ p_iter
        p = pulsed_steady_state(self.gen, self.wait, pi, 0.5).as_array()
        np.testing.assert_allclose(p, p_iter, atol=1e-8)

    def test_cycle_map_column_stochastic(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            gen = build_generator(RATES, rng.uniform(0.1, 100.0))
            m = cycle_map(gen, self.wait, pi_pulse_matrix(rng.uniform(0.0, 1.0)),
                          rng.uniform(0.01, 20.0))
            np.testing.assert_allclose(m.sum(axis=0), np.ones(4), atol=1e-10)

    def test_no_flip_polarizes_toward_m0(self):
        # Identity MW pulse: the fixed point concentrates in m_0, limited by
        # the singlet branching (polarization is incomplete in this model).
        p = pulsed_steady_state(self.gen, self.wait, np.eye(4), 5.0).as_array()
        p_iter = np.full(4, 0.25)
        m = cycle_map(self.gen, self.wait, np.eye(4), 5.0)
        for _ in range(10000):
            p_iter = m @ p_iter
        np.testing.assert_allclose(p, p_iter, atol=1e-8)
        assert p[1] > 0.75
        assert p[1] > 3.0 * max(p[0], p[2])

    def test_perfect_flip_moves_polarization_to_m_plus(self):
        gen = build_generator(RATES, pump_rate_for(5.0, RATES))
        p = pulsed_steady_state(gen, self.wait, pi_pulse_matrix(1.0), 10.0).as_array()
        assert p[2] > 0.6
        assert p[2] > p[1]

    def test_requires_positive_laser_duration(self):
        with pytest.raises(ValueError):
            pulsed_steady_state(self.gen, self.wait, np.eye(4), 0.0)


class TestIntegratedCounts:
    def test_zero_window(self):
        gen = build_generator(RATES, 1.0)
        p = PopulationVector.ground_zero()
        assert integrated_counts(p, gen, RATES, 1.0, 0.0, 0.01, 0.003) == 0.0

    def test_against_quadrature_oracle(self):
        r = pump_rate_for(0.5, RATES)
        gen = build_generator(RATES, r)
        p0 = np.array([0.2, 0.5, 0.2, 0.1])
        tau, epsilon, b = 0.8, 0.0098, 0.0031
        from scipy.linalg import expm as scipy_expm
        weights = np.array([r / (r + RATES.k(i) + RATES.gamma) for i in (-1, 0, 1)] + [0.0])

        def instantaneous(t):
            return epsilon * RATES.gamma * float(weights @ (scipy_expm(gen.entries * t) @ p0))

        oracle, _ = quad(instantaneous, 0.0, tau, limit=200, epsabs=1e-12)
        oracle += b * r * tau
        counts = integrated_counts(PopulationVector.from_array(p0), gen, RATES, r, tau,
                                   epsilon, b)
        assert counts == pytest.approx(oracle, abs=1e-9)

    def test_long_window_slope_is_cw_rate(self):
        r = pump_rate_for(0.5, RATES)
        gen = build_generator(RATES, r)
        p0 = PopulationVector.ground_zero()
        epsilon, b = 0.0098, 0.0031
        c1 = integrated_counts(p0, gen, RATES, r, 60.0, epsilon, b)
        c2 = integrated_counts(p0, gen, RATES, r, 61.0, epsilon, b)
        slope = c2 - c1  # counts per us
        p_ss = steady_state(gen)
        cw_rate = fluorescence_rate(p_ss, r, RATES, epsilon, b) / 1e6
        assert slope == pytest.approx(cw_rate, rel=1e-2)

    def test_propagator_integral_zero_eigenvalue_exact(self):
        gen = build_generator(RATES, 3.0)
        integral = propagator_integral(gen, 2.5)
        # Columns of the integral sum to tau: conservation integrates to t.
        np.testing.assert_allclose(integral.sum(axis=0), np.full(4, 2.5), atol=1e-10)

    def test_flipped_state_is_dimmer(self):
        r = pump_rate_for(1.2, RATES)
        gen = build_generator(RATES, r)
        wait = wait_relaxation(RATES)
        for c_pi in (0.2, 0.6, 1.0):
            p_on = pulsed_steady_state(gen, wait, pi_pulse_matrix(c_pi), 0.3)
            p_off = pulsed_steady_state(gen, wait, np.eye(4), 0.3)
            c1 = integrated_counts(p_on, gen, RATES, r, 0.3, 0.0098, 0.0)
            c0 = integrated_counts(p_off, gen, RATES, r, 0.3, 0.0098, 0.0)
            assert c0 >= c1


class TestPulsedSummary:
    def test_no_drive_zero_contrast(self):
        r = pump_rate_for(1.2, RATES)
        summary = pulsed_summary(RATES, r, PulseTiming(0.3, 1.0, 0.3, 0.3), 0.0, 3.0,
                                 0.0098, 0.0031)
        assert summary.contrast == 0.0
        assert summary.c_pi == 0.0
        assert summary.f_avg0 > 0.0

    def test_fig4_style_sweep_trends(self):
        # s = 1.2, tau = t_L = 0.3 us, t_w = 1 us, T2* = 3 us; Omega = pi/t_pi.
        r = pump_rate_for(1.2, RATES)
        t_pis = np.array([0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4])
        rows = []
        for t_pi in t_pis:
            omega = math.pi / t_pi
            rows.append(pulsed_summary(RATES, r, PulseTiming(t_pi, 1.0, 0.3, 0.3),
                                       omega, 3.0, 0.0098, 0.0031))
        fwhm = np.array([s.fwhm for s in rows])
        contrast = np.array([s.contrast for s in rows])
        f_avg = np.array([s.f_avg0 for s in rows])
        assert np.all(np.diff(fwhm) < 0.0)          # linewidth narrows with t_pi
        assert np.all(np.diff(f_avg) < 0.0)         # duty cycle dilutes the rate
        # Contrast saturates for short pulses and degrades once dephasing
        # weakens the flip probability.
        assert contrast[0] == pytest.approx(contrast[1], rel=1e-2)
        assert contrast[-1] < contrast[0]

    def test_contrast_below_flip_probability(self):
        r = pump_rate_for(1.2, RATES)
        summary = pulsed_summary(RATES, r, PulseTiming(0.3, 1.0, 0.3, 0.3),
                                 math.pi / 0.3, 3.0, 0.0098, 0.0031)
        assert 0.0 < summary.contrast < summary.c_pi

    def test_timing_validation(self):
        with pytest.raises(ValueError):
            PulseTiming(0.3, 1.0, 0.3, 0.4)  # tau > t_l
        with pytest.raises(ValueError):
            PulseTiming(-0.1, 1.0, 0.3, 0.2)


class TestSensitivityPulsed:
    def test_low_contrast_scaling(self):
        a = sensitivity_pulsed(PulsedSummary(contrast=1e-6, f_avg0=1e5, fwhm=0.3, c_pi=0.5))
        b = sensitivity_pulsed(PulsedSummary(contrast=2e-6, f_avg0=1e5, fwhm=0.3, c_pi=0.5))
        assert a / b == pytest.approx(2.0, rel=1e-4)

    def test_counts_scaling(self):
        a = sensitivity_pulsed(PulsedSummary(contrast=0.1, f_avg0=1e5, fwhm=0.3, c_pi=0.5))
        b = sensitivity_pulsed(PulsedSummary(contrast=0.1, f_avg0=2e5, fwhm=0.3, c_pi=0.5))
        assert a / b == pytest.approx(math.sqrt(2.0), rel=1e-12)


class TestOptimizePulsed:
    def test_deterministic(self):
        kwargs = dict(omega_range=(TWO_PI * 0.03, TWO_PI * 1.0), t_l_range=(0.05, 50.0),
                      coarse=7)
        a = optimize_pulsed(RATES, 3.0, 1.0, 0.0098, 0.0031, s=0.1, **kwargs)
        b = optimize_pulsed(RATES, 3.0, 1.0, 0.0098, 0.0031, s=0.1, **kwargs)
        assert a.eta == b.eta
        assert a.omega == b.omega

    def test_constraint_and_consistency(self):
        opt = optimize_pulsed(RATES, 3.0, 1.0, 0.0098, 0.0031, s=0.1,
                              omega_range=(TWO_PI * 0.03, TWO_PI * 1.0),
                              t_l_range=(0.05, 50.0), coarse=7)
        assert opt.tau <= opt.t_l * (1.0 + 1e-12)
        assert opt.eta == pytest.approx(sensitivity_pulsed(opt.summary), rel=1e-9)
        assert opt.t_pi == pytest.approx(optimal_pi_duration(opt.omega, 3.0), abs=1e-3)
