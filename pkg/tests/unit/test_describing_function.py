"""Unit tests for describing-function evaluation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cglp_toolbox.describing_function import (
    FrequencyGrid,
    alpha_table,
    compute_alpha,
    df_response,
    df_sweep,
    linear_sweep,
    log_grid,
    phase_lag_at,
    phase_lag_table,
    resonance_peak_db,
    theta_rho,
)
from cglp_toolbox.model_core import (
    ElementKind,
    ElementSpec,
    EvaluationError,
    ModelError,
    linear_response,
    make_element,
)


def _element(kind: ElementKind, gamma: float, beta_r: float = 1.0):
    if kind is ElementKind.CI:
        return make_element(ElementSpec(kind=kind, gamma=gamma))
    if kind.order == 2:
        return make_element(ElementSpec(kind=kind, omega_r=1.0, beta_r=beta_r, gamma=gamma))
    return make_element(ElementSpec(kind=kind, omega_r=1.0, gamma=gamma))


class TestFrequencyGrid:
    """Test frequency grid validation."""

    def test_log_grid(self) -> None:
        """Test endpoints and length of a log grid."""
        grid = log_grid(1.0, 1000.0, 400)
        assert len(grid) == 400
        assert grid.hz[0] == pytest.approx(1.0)
        assert grid.hz[-1] == pytest.approx(1000.0)

    def test_empty_grid(self) -> None:
        """Test error for an empty grid."""
        with pytest.raises(ModelError, match="empty"):
            FrequencyGrid(np.array([]))

    def test_not_increasing(self) -> None:
        """Test error for a non-increasing grid."""
        with pytest.raises(ModelError, match="strictly increasing"):
            FrequencyGrid(np.array([1.0, 1.0, 2.0]))

    def test_non_positive(self) -> None:
        """Test error for zero frequency."""
        with pytest.raises(ModelError, match="> 0"):
            FrequencyGrid(np.array([0.0, 1.0]))

    def test_bad_bounds(self) -> None:
        """Test error for reversed bounds."""
        with pytest.raises(ModelError, match="f_min < f_max"):
            log_grid(10.0, 1.0)


class TestCleggIntegrator:
    """Test the describing function of the Clegg integrator."""

    def test_value_at_unit_frequency(self) -> None:
        """Test the closed form 4/pi - j at omega = 1."""
        value = df_response(_element(ElementKind.CI, 0.0), 1.0)
        assert value.real == pytest.approx(4.0 / math.pi, rel=1e-9)
        assert value.imag == pytest.approx(-1.0, rel=1e-9)

    def test_constant_phase(self) -> None:
        """Test the frequency-independent phase of -38.15 degrees."""
        ci = _element(ElementKind.CI, 0.0)
        for omega in (0.01, 1.0, 100.0, 1e4):
            phase = math.degrees(np.angle(df_response(ci, omega)))
            assert phase == pytest.approx(-38.15, abs=0.1)

    def test_magnitude_slope(self) -> None:
        """Test the -1 log-log slope of the magnitude."""
        ci = _element(ElementKind.CI, 0.0)
        grid = log_grid(0.1, 100.0, 50)
        response = df_sweep(ci, grid)
        slope = np.polyfit(np.log10(response.omegas), np.log10(np.abs(response.values)), 1)[0]
        assert slope == pytest.approx(-1.0, abs=1e-3)

    def test_singular_reset_map(self) -> None:
        """Test that gamma = -1 has no describing function."""
        with pytest.raises(EvaluationError, match="singular"):
            df_response(_element(ElementKind.CI, -1.0), 1.0)


class TestSecondOrderRollOff:
    """Test the high-frequency slope of the second-order reset element."""

    @pytest.mark.parametrize("gamma", [0.0, 0.5])
    def test_forty_db_per_decade(self, gamma: float) -> None:
        """Test |G| falls at -40 dB/dec two decades above the corner."""
        gsore = _element(ElementKind.GSORE, gamma)
        response = df_sweep(gsore, log_grid(100.0, 1000.0, 20))
        slope = np.polyfit(np.log10(response.omegas), response.mag_db, 1)[0]
        assert slope == pytest.approx(-40.0, abs=0.5)


class TestLinearLimit:
    """Test that gamma = 1 reduces to the linear response."""

    @settings(max_examples=25, deadline=None)
    @given(
        kind=st.sampled_from([ElementKind.CI, ElementKind.GFORE, ElementKind.GSORE]),
        omega=st.floats(min_value=0.01, max_value=100.0),
    )
    def test_gamma_one_is_linear(self, kind: ElementKind, omega: float) -> None:
        """Property: no reset means the linear frequency response."""
        ctrl = _element(kind, 1.0)
        expected = linear_response(ctrl, omega)
        assert abs(df_response(ctrl, omega) - expected) <= 1e-10 * abs(expected)

    def test_theta_vanishes_without_reset(self) -> None:
        """Test that Theta is zero when A_rho = I."""
        ctrl = _element(ElementKind.GFORE, 1.0)
        assert np.allclose(theta_rho(ctrl, 2.0), 0.0)

    def test_non_positive_frequency(self) -> None:
        """Test error for omega <= 0."""
        with pytest.raises(EvaluationError, match="omega must be > 0"):
            df_response(_element(ElementKind.GFORE, 0.0), 0.0)

    def test_exponent_norm_guard(self) -> None:
        """Test error when pi*A/omega is too large for the matrix exponential."""
        fast = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1e6, gamma=0.0))
        with pytest.raises(EvaluationError, match="exceeds"):
            df_response(fast, 1e-3)


class TestSweeps:
    """Test grid sweeps."""

    def test_failures_are_collected(self) -> None:
        """Test that one bad point does not abort a sweep."""
        # Undamped SORE: (A/omega)^2 + I is singular exactly at omega_r
        ctrl = _element(ElementKind.GSORE, 0.5, beta_r=0.0)
        response = df_sweep(ctrl, FrequencyGrid(np.array([0.5, 1.0, 2.0])))
        assert len(response.grid) == 2
        assert len(response.failures) == 1
        assert response.failures[0][0] == 1.0

    def test_every_point_failing(self) -> None:
        """Test error when no point can be evaluated."""
        with pytest.raises(EvaluationError, match="Every point"):
            df_sweep(_element(ElementKind.CI, -1.0), log_grid(1.0, 10.0, 5))

    def test_linear_sweep_phase(self) -> None:
        """Test the baseline sweep of a first-order lag."""
        grid = FrequencyGrid(np.array([1.0]))
        response = linear_sweep(_element(ElementKind.GFORE, 0.0), grid)
        assert response.phase_deg[0] == pytest.approx(-45.0)
        assert response.mag_db[0] == pytest.approx(-3.0103, abs=1e-4)


class TestPhaseLag:
    """Test the phase-lag reduction of reset."""

    def test_reset_reduces_lag(self) -> None:
        """Test that a FORE lags less than its base filter at high frequency."""
        fore = _element(ElementKind.GFORE, 0.0)
        linear_lag = -math.degrees(np.angle(linear_response(fore, 10.0)))
        assert phase_lag_at(fore, 10.0) < linear_lag - 20.0

    def test_lag_grows_with_gamma(self) -> None:
        """Test that more reset (smaller gamma) means less lag."""
        rows = phase_lag_table([0.0, 0.5, 1.0], ratio=10.0)
        gfore = [row.lag_gfore_deg for row in rows]
        gsore = [row.lag_gsore_deg for row in rows]
        assert gfore[0] < gfore[1] < gfore[2]
        assert gsore[0] < gsore[1] < gsore[2]


class TestCornerShift:
    """Test the corner-shift fraction alpha."""

    def test_linear_limit(self) -> None:
        """Test alpha = 1 without reset."""
        spec = ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=1.0)
        assert compute_alpha(spec) == pytest.approx(1.0, abs=1e-6)

    def test_clegg_integrator_rejected(self) -> None:
        """Test that the integrator has no corner."""
        with pytest.raises(ModelError, match="undefined"):
            compute_alpha(ElementSpec(kind=ElementKind.CI))

    def test_gsore_full_reset(self) -> None:
        """Test alpha of a unit-damped GSORE with full reset."""
        spec = ElementSpec(kind=ElementKind.GSORE, omega_r=1.0, beta_r=1.0, gamma=0.0)
        assert compute_alpha(spec) == pytest.approx(1.2, abs=0.05)

    def test_gfore_matches_closed_form(self) -> None:
        """Test GFORE alpha against the analytic high-frequency describing-function gain."""
        for gamma, expected in ((0.8, 1.00953), (0.4, 1.12237), (0.0, 1.48859)):
            spec = ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=gamma)
            assert compute_alpha(spec) == pytest.approx(expected, abs=2e-4)

    def test_monotone_in_gamma(self) -> None:
        """Test alpha never decreases as gamma decreases."""
        gammas = [1.0, 0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8]
        rows = alpha_table(gammas)
        for before, after in zip(rows, rows[1:]):
            assert after.alpha_gfore >= before.alpha_gfore - 1e-9
            assert after.alpha_gsore >= before.alpha_gsore - 1e-9
        assert all(row.alpha_gsore >= 1.0 for row in rows)

    def test_scales_with_corner(self) -> None:
        """Test alpha does not depend on where the corner sits."""
        unit = ElementSpec(kind=ElementKind.GSORE, omega_r=1.0, beta_r=1.0, gamma=0.0)
        fast = ElementSpec(kind=ElementKind.GSORE, omega_r=628.0, beta_r=1.0, gamma=0.0)
        assert compute_alpha(fast) == pytest.approx(compute_alpha(unit), rel=1e-6)

    def test_negative_gamma_shifts_corner(self) -> None:
        """Test the corner moves up once gamma goes negative."""
        rows = alpha_table([1.0, -0.6])
        assert rows[0].alpha_gfore == pytest.approx(1.0, abs=1e-6)
        assert rows[1].alpha_gfore > 1.05
        assert rows[1].alpha_gsore > 1.05


class TestResonance:
    """Test the damping effect of reset on an undamped SORE."""

    def test_resonance_peak_bounded(self) -> None:
        """Test the reset resonance peak stays below 10 dB."""
        ctrl = _element(ElementKind.GSORE, 0.0, beta_r=0.0)
        grid = FrequencyGrid(np.logspace(-2, 2, 401)[:-1] * 1.0001)
        assert resonance_peak_db(ctrl, grid) < 10.0
