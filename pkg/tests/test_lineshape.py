import math

import numpy as np
import pytest

from nvodmr.lineshape import (
    AnalyticLine,
    HyperfineTriplet,
    evaluate_line,
    evaluate_triplet,
    gaussian_sensitivity,
    hyperfine_ratio,
    lorentzian_sensitivity,
    numeric_sensitivity,
)


class TestEvaluateLine:
    def test_center_depth(self):
        line = AnalyticLine("lorentzian", fwhm=1.0, contrast=0.3)
        assert evaluate_line(line, 0.0) == pytest.approx(0.7, rel=1e-12)

    def test_far_wings(self):
        for kind in ("lorentzian", "gaussian"):
            line = AnalyticLine(kind, fwhm=1.0, contrast=0.3)
            assert evaluate_line(line, 1e4) == pytest.approx(1.0, abs=1e-6)
            assert evaluate_line(line, -1e4) == pytest.approx(1.0, abs=1e-6)

    def test_lorentzian_half_width(self):
        line = AnalyticLine("lorentzian", fwhm=2.0, contrast=0.4)
        assert evaluate_line(line, 1.0) == pytest.approx(1.0 - 0.2, rel=1e-12)
        assert evaluate_line(line, -1.0) == pytest.approx(1.0 - 0.2, rel=1e-12)

    def test_gaussian_half_width(self):
        line = AnalyticLine("gaussian", fwhm=2.0, contrast=0.4)
        assert evaluate_line(line, 1.0) == pytest.approx(1.0 - 0.2, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            AnalyticLine("voigt", fwhm=1.0, contrast=0.1)
        with pytest.raises(ValueError):
            AnalyticLine("gaussian", fwhm=0.0, contrast=0.1)
        with pytest.raises(ValueError):
            AnalyticLine("gaussian", fwhm=1.0, contrast=1.2)


class TestClosedForms:
    def test_low_contrast_limit_cw(self):
        # eta -> (4 / (3 sqrt 3)) dv / (g c sqrt(F0)) as c -> 0.
        fwhm, c, f0 = 1.0, 1e-6, 1e5
        expected = (4.0 / (3.0 * math.sqrt(3.0))) * (fwhm * 1e6) / (2.8e10 * c * math.sqrt(f0))
        assert lorentzian_sensitivity(fwhm, c, f0) == pytest.approx(expected, rel=1e-6)

    def test_doubling_counts_improves_sqrt2(self):
        a = lorentzian_sensitivity(1.0, 0.2, 1e5)
        b = lorentzian_sensitivity(1.0, 0.2, 2e5)
        assert a / b == pytest.approx(math.sqrt(2.0), rel=1e-12)
        a = gaussian_sensitivity(0.5, 0.1, 1e5)
        b = gaussian_sensitivity(0.5, 0.1, 2e5)
        assert a / b == pytest.approx(math.sqrt(2.0), rel=1e-12)

    def test_zero_contrast_rejected(self):
        with pytest.raises(ValueError):
            lorentzian_sensitivity(1.0, 0.0, 1e5)
        with pytest.raises(ValueError):
            gaussian_sensitivity(1.0, -0.1, 1e5)


class TestNumericSensitivity:
    @pytest.mark.parametrize("fwhm", [0.1, 1.0, 5.0])
    @pytest.mark.parametrize("contrast", [0.01, 0.1, 0.3, 0.5])
    def test_matches_lorentzian_closed_form(self, fwhm, contrast):
        f0 = 1e5
        line = AnalyticLine("lorentzian", fwhm=fwhm, contrast=contrast)
        eta = numeric_sensitivity(lambda nu: f0 * float(evaluate_line(line, nu)),
                                  (-3.0 * fwhm, 3.0 * fwhm), step=fwhm / 200.0)
        assert eta == pytest.approx(lorentzian_sensitivity(fwhm, contrast, f0), rel=1e-3)

    @pytest.mark.parametrize("fwhm", [0.1, 1.0, 5.0])
    @pytest.mark.parametrize("contrast", [0.01, 0.1, 0.3, 0.5])
    def test_matches_gaussian_closed_form(self, fwhm, contrast):
        f0 = 1e5
        line = AnalyticLine("gaussian", fwhm=fwhm, contrast=contrast)
        eta = numeric_sensitivity(lambda nu: f0 * float(evaluate_line(line, nu)),
                                  (-3.0 * fwhm, 3.0 * fwhm), step=fwhm / 200.0)
        assert eta == pytest.approx(gaussian_sensitivity(fwhm, contrast, f0), rel=1e-3)

    def test_shot_noise_scaling(self):
        line = AnalyticLine("lorentzian", fwhm=1.0, contrast=0.2)
        window = (-3.0, 3.0)
        base = numeric_sensitivity(lambda nu: 1e5 * float(evaluate_line(line, nu)), window)
        scaled = numeric_sensitivity(lambda nu: 9e5 * float(evaluate_line(line, nu)), window)
        assert base / scaled == pytest.approx(3.0, rel=1e-6)

    def test_flat_spectrum_rejected(self):
        with pytest.raises(ValueError):
            numeric_sensitivity(lambda nu: 1e5, (-1.0, 1.0))


class TestHyperfine:
    def test_triplet_even_about_center(self):
        triplet = HyperfineTriplet(AnalyticLine("lorentzian", fwhm=1.3, contrast=0.05))
        nu = np.linspace(0.0, 8.0, 50)
        np.testing.assert_allclose(evaluate_triplet(triplet, nu), evaluate_triplet(triplet, -nu),
                                   rtol=1e-13)

    def test_narrow_lines_are_independent(self):
        for kind in ("lorentzian", "gaussian"):
            ratio = hyperfine_ratio(kind, fwhm=0.05, contrast=0.2)
            assert ratio == pytest.approx(1.0, abs=0.01)
            assert ratio <= 1.0 + 1e-7

    def test_ratio_below_one_everywhere(self):
        for kind in ("lorentzian", "gaussian"):
            for fwhm in np.geomspace(0.1, 10.0, 9):
                assert hyperfine_ratio(kind, fwhm, contrast=0.2) <= 1.0 + 1e-7

    def test_lorentzian_overlap_helps_more(self):
        lor = hyperfine_ratio("lorentzian", fwhm=2.16, contrast=0.2)
        gau = hyperfine_ratio("gaussian", fwhm=2.16, contrast=0.2)
        assert lor < gau < 1.0

    def test_overlap_sweep_shape(self):
        # Oracle: dense sweep.  The ratio falls continuously from 1 and
        # approaches the full-overlap limit eta(c)/eta(c/3) from above.
        c = 0.2
        fwhms = np.geomspace(0.1, 300.0, 21)
        ratios = np.array([hyperfine_ratio("gaussian", f, contrast=c) for f in fwhms])
        assert np.all(np.diff(ratios) < 1e-7)
        asymptote = gaussian_sensitivity(1.0, c, 1e5) / gaussian_sensitivity(1.0, c / 3.0, 1e5)
        assert ratios[-1] == pytest.approx(asymptote, rel=5e-3)
        assert np.all(ratios >= asymptote - 1e-6)
        # Continuity across the steep overlap region on a dense grid.
        dense = np.linspace(2.0, 6.0, 41)
        dense_ratios = np.array([hyperfine_ratio("gaussian", f, contrast=c) for f in dense])
        assert np.max(np.abs(np.diff(dense_ratios))) < 0.02

    def test_contrast_reduction_is_worse_than_threefold(self):
        # eta(c/3) > 3 eta(c) once contrast matters in the shot noise.
        for c in (0.3, 0.6):
            assert lorentzian_sensitivity(1.0, c / 3.0, 1e5) > 3.0 * lorentzian_sensitivity(1.0, c, 1e5)
            assert gaussian_sensitivity(1.0, c / 3.0, 1e5) > 3.0 * gaussian_sensitivity(1.0, c, 1e5)

    def test_component_contrast_validated(self):
        with pytest.raises(ValueError):
            hyperfine_ratio("lorentzian", fwhm=1.0, contrast=1.2)
