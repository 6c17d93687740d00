"""Unit tests for quadratic stability certificates."""

import numpy as np
import pytest

from cglp_toolbox.loop_shaping import (
    ControllerFamily,
    builtin_plant,
    controller_realization,
    design_tracking_precision,
)
from cglp_toolbox.model_core import (
    TWO_PI,
    ElementKind,
    ElementSpec,
    ModelError,
    ResetController,
    StateSpace,
    make_element,
    static_gain,
    transfer_function,
)
from cglp_toolbox.stability import (
    Backend,
    StabilityCertificate,
    Verdict,
    build_closed_loop,
    check_design,
    find_certificate,
    verify_certificate,
)

OMEGA_C = TWO_PI * 100.0


@pytest.fixture
def fore_loop():
    """First-order plant 1/(s+1) under a partially resetting FORE."""
    plant = transfer_function([1.0], [1.0, 1.0])
    ctrl = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=0.5))
    return build_closed_loop(plant, ctrl)


class TestClosedLoop:
    """Test closed-loop assembly."""

    def test_state_ordering(self, fore_loop) -> None:
        """Test dimensions and the resetting block position."""
        assert fore_loop.n == 2
        assert fore_loop.n_p == 1
        assert fore_loop.n_r == 1
        assert fore_loop.B0[:, 0].tolist() == [0.0, 1.0]

    def test_base_loop_matrix(self, fore_loop) -> None:
        """Test A_cl of the negative feedback interconnection."""
        assert np.allclose(fore_loop.A_cl, [[-1.0, 1.0], [-1.0, -1.0]])
        assert fore_loop.is_hurwitz

    def test_algebraic_loop(self) -> None:
        """Test error when both parts have feedthrough."""
        plant = transfer_function([2.0, 1.0], [1.0, 4.0])
        with pytest.raises(ModelError, match="algebraic loop"):
            build_closed_loop(plant, static_gain(3.0))


class TestCertificate:
    """Test certificate search and verification."""

    def test_simple_loop_is_certified(self, fore_loop) -> None:
        """Test a certificate is found and verifies."""
        search = find_certificate(fore_loop, seed=1, iterations=200, restarts=3)
        assert search.verdict is Verdict.FEASIBLE
        cert = search.certificate
        assert cert is not None
        result = verify_certificate(cert, fore_loop)
        assert result.passed
        assert result.residuals.max_eig_lyap < 0.0
        assert result.residuals.min_eig_P > 0.0

    def test_margin_is_reported(self, fore_loop) -> None:
        """Test the search reports the negated margin it reached."""
        search = find_certificate(fore_loop, seed=1, iterations=200, restarts=3)
        assert search.verdict is Verdict.FEASIBLE
        assert np.isfinite(search.best_objective)
        assert search.best_objective < 0.0

    def test_negated_certificate_fails(self, fore_loop) -> None:
        """Test verification rejects -P."""
        cert = find_certificate(fore_loop, seed=1, iterations=200, restarts=3).certificate
        assert cert is not None
        negated = StabilityCertificate(
            P=-cert.P, beta=-cert.beta, P_rho=-cert.P_rho, residuals=cert.residuals
        )
        result = verify_certificate(negated, fore_loop)
        assert not result.passed
        assert any("min eigenvalue of P" in failure for failure in result.failures)

    def test_wrong_shape(self, fore_loop) -> None:
        """Test verification rejects a P of the wrong size."""
        cert = StabilityCertificate(
            P=np.eye(3), beta=np.zeros(1), P_rho=np.eye(1), residuals=None  # type: ignore[arg-type]
        )
        result = verify_certificate(cert, fore_loop)
        assert not result.passed
        assert "shape" in result.failures[0]

    def test_non_hurwitz_loop(self) -> None:
        """Test an unstable base loop is infeasible."""
        plant = transfer_function([1.0], [1.0, 1.0])
        # Positive feedback through the FORE output
        base = StateSpace(A=[[-1.0]], B=[[1.0]], C=[[-5.0]], D=[[0.0]])
        ctrl = ResetController(base=base, A_rho=[[0.0]], n_r=1)
        unstable = build_closed_loop(plant, ctrl)
        assert find_certificate(unstable).verdict is Verdict.INFEASIBLE


class TestCheckDesign:
    """Test stability of designed controllers on the builtin plant."""

    def test_linear_design_is_stable(self) -> None:
        """Test the linear PID gets a Lyapunov certificate."""
        plant = builtin_plant()
        report = check_design(design_tracking_precision(plant, OMEGA_C, 30.0), plant)
        assert report.verdict is Verdict.FEASIBLE
        assert report.to_dict()["verdict"] == "feasible"
        assert np.max(report.eigs.real) < 0.0

    def test_high_gain_is_infeasible(self) -> None:
        """Test a hundredfold plant gain destabilizes the linear loop."""
        plant = builtin_plant()
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        report = check_design(design, plant.scaled(100.0))
        assert report.verdict is Verdict.INFEASIBLE
        assert report.certificate is None
        assert report.to_dict()["residuals"] is None

    def test_search_is_deterministic(self) -> None:
        """Test two runs with one seed give the same outcome."""
        plant = builtin_plant()
        design = design_tracking_precision(
            plant, OMEGA_C, 30.0, family=ControllerFamily.CGLP_GFORE, gamma=0.6
        )
        first = check_design(design, plant, seed=7, iterations=300, restarts=2)
        second = check_design(design, plant, seed=7, iterations=300, restarts=2)
        assert first.verdict is second.verdict
        assert first.verdict in (Verdict.FEASIBLE, Verdict.UNKNOWN)
        assert first.restarts_used == second.restarts_used
        if first.certificate is not None and second.certificate is not None:
            assert np.array_equal(first.certificate.P, second.certificate.P)

    def test_cvxpy_backend(self, fore_loop) -> None:
        """Test the optional SDP backend on a loop with a known certificate."""
        pytest.importorskip("cvxpy")
        search = find_certificate(fore_loop, backend=Backend.CVXPY)
        assert search.verdict in (Verdict.FEASIBLE, Verdict.UNKNOWN)
        if search.certificate is not None:
            assert verify_certificate(search.certificate, fore_loop).passed

    def test_identity_reset_is_linear(self) -> None:
        """Test a CgLp that never changes its state is checked as a linear loop."""
        plant = builtin_plant()
        design = design_tracking_precision(
            plant, OMEGA_C, 30.0, family=ControllerFamily.CGLP_GFORE, gamma=1.0
        )
        loop = build_closed_loop(plant.state_space, controller_realization(design))
        assert loop.n_r == 0
        report = check_design(design, plant)
        assert report.verdict is Verdict.FEASIBLE
        assert report.certificate is not None
        assert report.certificate.beta.size == 0

    @pytest.mark.parametrize(
        "family, gamma",
        [
            (ControllerFamily.CGLP_GFORE, 0.6),
            (ControllerFamily.CGLP_GFORE, 0.0),
            (ControllerFamily.CGLP_GSORE, 0.0),
        ],
    )
    def test_reset_designs_are_certified(self, family: ControllerFamily, gamma: float) -> None:
        """Test tracking designs with resets get a certificate that verifies independently."""
        plant = builtin_plant()
        design = design_tracking_precision(plant, OMEGA_C, 30.0, family=family, gamma=gamma)
        report = check_design(design, plant, seed=0)
        assert report.verdict is Verdict.FEASIBLE
        assert report.certificate is not None
        loop = build_closed_loop(plant.state_space, controller_realization(design))
        assert loop.n_r > 0
        result = verify_certificate(report.certificate, loop)
        assert result.passed
        assert result.residuals.max_eig_lyap < 0.0
