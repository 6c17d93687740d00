"""Unit tests for state-space and reset-controller models."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cglp_toolbox.model_core import (
    ElementKind,
    ElementSpec,
    ModelError,
    ResetController,
    StateSpace,
    TWO_PI,
    as_reset_controller,
    element_spec_from_dict,
    element_spec_to_dict,
    linear_response,
    make_element,
    series,
    static_gain,
    transfer_function,
)


def _first_order(corner: float) -> StateSpace:
    return StateSpace(A=[[-corner]], B=[[corner]], C=[[1.0]], D=[[0.0]])


class TestStateSpace:
    """Test LTI system construction."""

    def test_valid_system(self) -> None:
        """Test shapes and dimensions of a valid system."""
        sys = _first_order(2.0)
        assert sys.n_states == 1
        assert sys.is_siso

    def test_matrices_are_read_only(self) -> None:
        """Test that stored matrices cannot be modified in place."""
        sys = _first_order(2.0)
        with pytest.raises(ValueError):
            sys.A[0, 0] = 5.0

    def test_non_square_a(self) -> None:
        """Test error for a non-square A."""
        with pytest.raises(ModelError, match="A must be square"):
            StateSpace(A=[[1.0, 2.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]])

    def test_b_shape_mismatch(self) -> None:
        """Test error when B does not match A."""
        with pytest.raises(ModelError, match="B must have shape"):
            StateSpace(A=np.eye(2), B=[[1.0]], C=[[1.0, 0.0]], D=[[0.0]])

    def test_non_finite_entry(self) -> None:
        """Test error for NaN entries."""
        with pytest.raises(ModelError, match="non-finite"):
            StateSpace(A=[[float("nan")]], B=[[1.0]], C=[[1.0]], D=[[0.0]])

    def test_static_gain(self) -> None:
        """Test a zero-state gain."""
        sys = static_gain(3.0)
        assert sys.n_states == 0
        assert linear_response(sys, 10.0) == 3.0


class TestResetController:
    """Test reset controller invariants."""

    def test_identity_required_on_non_resetting_states(self) -> None:
        """Test that A_rho must not touch non-resetting states."""
        base = StateSpace(A=-np.eye(2), B=[[1.0], [1.0]], C=[[1.0, 1.0]], D=[[0.0]])
        with pytest.raises(ModelError, match="identity on non-resetting"):
            ResetController(base=base, A_rho=[[0.0, 0.0], [0.0, 0.5]], n_r=1)

    def test_n_r_out_of_range(self) -> None:
        """Test error when more resetting states than states are declared."""
        with pytest.raises(ModelError, match="n_r must lie"):
            ResetController(base=_first_order(1.0), A_rho=[[0.0]], n_r=2)

    def test_linear_view(self) -> None:
        """Test viewing an LTI system as a reset controller."""
        ctrl = as_reset_controller(_first_order(1.0))
        assert ctrl.n_r == 0
        assert ctrl.resets_trivially


class TestElementSpec:
    """Test element parameter validation."""

    def test_gamma_out_of_range(self) -> None:
        """Test error for |gamma| > 1."""
        with pytest.raises(ModelError, match="gamma must lie in"):
            ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=1.5)

    def test_full_reset_kinds_need_zero_gamma(self) -> None:
        """Test that FORE and SORE reject partial reset."""
        with pytest.raises(ModelError, match="full-reset"):
            ElementSpec(kind=ElementKind.FORE, omega_r=1.0, gamma=0.5)

    def test_ci_has_no_corner(self) -> None:
        """Test that a Clegg integrator rejects omega_r."""
        with pytest.raises(ModelError, match="no corner"):
            ElementSpec(kind=ElementKind.CI, omega_r=1.0)

    def test_corner_required(self) -> None:
        """Test error when omega_r is missing or negative."""
        with pytest.raises(ModelError, match="omega_r must be > 0"):
            ElementSpec(kind=ElementKind.GFORE, omega_r=-1.0)

    def test_negative_damping(self) -> None:
        """Test error for beta_r < 0."""
        with pytest.raises(ModelError, match="beta_r"):
            ElementSpec(kind=ElementKind.GSORE, omega_r=1.0, beta_r=-0.1)

    def test_second_order_default_damping(self) -> None:
        """Test that second-order kinds default to unit damping."""
        spec = ElementSpec(kind=ElementKind.SORE, omega_r=1.0)
        assert spec.beta_r == 1.0

    def test_with_gamma_generalizes(self) -> None:
        """Test that a partial reset factor turns FORE into GFORE."""
        spec = ElementSpec(kind=ElementKind.FORE, omega_r=2.0).with_gamma(0.3)
        assert spec.kind is ElementKind.GFORE
        assert spec.gamma == 0.3

    def test_dict_round_trip(self) -> None:
        """Test the Hz-based document form."""
        document = {"kind": "gsore", "omega_r_hz": 100.0, "beta_r": 0.5, "gamma": 0.4}
        spec = element_spec_from_dict(document)
        assert spec.kind is ElementKind.GSORE
        assert spec.omega_r == pytest.approx(TWO_PI * 100.0)
        back = element_spec_to_dict(spec)
        assert back["kind"] == "GSORE"
        assert back["omega_r_hz"] == pytest.approx(100.0)
        assert back["beta_r"] == 0.5
        assert back["gamma"] == 0.4

    def test_unknown_kind(self) -> None:
        """Test error for an unknown element kind."""
        with pytest.raises(ModelError, match="Unknown or missing element kind"):
            element_spec_from_dict({"kind": "PID"})


class TestMakeElement:
    """Test element constructors."""

    def test_gfore_realization(self) -> None:
        """Test GFORE base matrices and reset matrix."""
        ctrl = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=3.0, gamma=0.4))
        assert ctrl.base.A[0, 0] == -3.0
        assert ctrl.base.B[0, 0] == 3.0
        assert ctrl.A_rho[0, 0] == 0.4
        assert ctrl.n_r == 1

    def test_gsore_realization(self) -> None:
        """Test GSORE characteristic polynomial s^2 + 2 beta w s + w^2."""
        ctrl = make_element(
            ElementSpec(kind=ElementKind.GSORE, omega_r=2.0, beta_r=0.5, gamma=0.2)
        )
        poly = np.poly(ctrl.base.A)
        assert poly == pytest.approx([1.0, 2.0, 4.0])
        assert np.allclose(ctrl.A_rho, 0.2 * np.eye(2))
        assert linear_response(ctrl, 1e-6) == pytest.approx(1.0, rel=1e-6)

    def test_clegg_integrator(self) -> None:
        """Test the Clegg integrator is an integrator with a reset factor."""
        ctrl = make_element(ElementSpec(kind=ElementKind.CI, gamma=-0.5))
        assert linear_response(ctrl, 2.0) == pytest.approx(-0.5j)
        assert ctrl.A_rho[0, 0] == -0.5


class TestSeries:
    """Test series interconnection."""

    def test_reset_states_come_first(self) -> None:
        """Test that the resetting states of the head stay in front."""
        head = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=0.0))
        chain = series(head, _first_order(10.0))
        assert chain.n_states == 2
        assert chain.n_r == 1
        assert chain.A_rho[0, 0] == 0.0
        assert chain.A_rho[1, 1] == 1.0

    def test_resetting_tail_rejected(self) -> None:
        """Test that only the head of a chain may reset."""
        tail = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=0.0))
        with pytest.raises(ModelError, match="Only the first element"):
            series(_first_order(1.0), tail)

    @settings(max_examples=30, deadline=None)
    @given(
        a=st.floats(min_value=0.1, max_value=100.0),
        b=st.floats(min_value=0.1, max_value=100.0),
        omega=st.floats(min_value=0.01, max_value=1000.0),
    )
    def test_series_response_is_product(self, a: float, b: float, omega: float) -> None:
        """Property: the series response is the product of the responses."""
        left, right = _first_order(a), _first_order(b)
        expected = linear_response(left, omega) * linear_response(right, omega)
        assert linear_response(series(left, right), omega) == pytest.approx(expected, rel=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(
        a=st.floats(min_value=0.1, max_value=10.0),
        b=st.floats(min_value=0.1, max_value=10.0),
        c=st.floats(min_value=0.1, max_value=10.0),
    )
    def test_series_is_associative(self, a: float, b: float, c: float) -> None:
        """Property: (x y) z and x (y z) have the same response."""
        x, y, z = _first_order(a), _first_order(b), _first_order(c)
        left = series(series(x, y), z)
        right = series(x, series(y, z).base)
        for omega in (0.3, 3.0, 30.0):
            assert linear_response(left, omega) == pytest.approx(
                linear_response(right, omega), rel=1e-9
            )


class TestTransferFunction:
    """Test polynomial realizations."""

    def test_matches_polynomial_ratio(self) -> None:
        """Test the realization against direct polynomial evaluation."""
        num, den = [1.429e8], [175.9, 7738.0, 1.361e6]
        sys = transfer_function(num, den)
        for omega in (1.0, TWO_PI * 100.0, TWO_PI * 1e4):
            s = 1j * omega
            expected = np.polyval(num, s) / np.polyval(den, s)
            assert linear_response(sys, omega) == pytest.approx(expected, rel=1e-9)

    def test_biproper_feedthrough(self) -> None:
        """Test that a biproper function keeps its high-frequency gain in D."""
        sys = transfer_function([2.0, 1.0], [1.0, 4.0])
        assert sys.D[0, 0] == pytest.approx(2.0)

    def test_improper_rejected(self) -> None:
        """Test error for numerator degree above denominator degree."""
        with pytest.raises(ModelError, match="improper"):
            transfer_function([1.0, 0.0, 0.0], [1.0, 1.0])

    def test_zero_denominator(self) -> None:
        """Test error for a zero denominator."""
        with pytest.raises(ModelError, match="zero"):
            transfer_function([1.0], [0.0])

    def test_dc_gain(self) -> None:
        """Test a first-order low-pass at low frequency."""
        sys = transfer_function([1.0], [1.0 / (TWO_PI * 50.0), 1.0])
        assert abs(linear_response(sys, 1e-3)) == pytest.approx(1.0, rel=1e-9)
        assert math.degrees(np.angle(linear_response(sys, TWO_PI * 50.0))) == pytest.approx(-45.0)
