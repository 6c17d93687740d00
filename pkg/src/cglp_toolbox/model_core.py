"""
State-space and reset-controller representations.

Holds the LTI building blocks, the reset controller (base system plus reset
matrix) and constructors for every reset element family: Clegg integrator,
first and second order reset elements and their generalized variants.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy import linalg, signal

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class ModelError(ValueError):
    """Raised when a model cannot be constructed from the given parameters."""

    pass


class EvaluationError(ArithmeticError):
    """Raised when a frequency-domain evaluation fails numerically."""

    def __init__(self, message: str, omega: Optional[float] = None) -> None:
        super().__init__(message)
        self.omega = omega


def _frozen(matrix: Any, name: str) -> np.ndarray:
    array = np.array(matrix, dtype=float, ndmin=2)
    if array.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got {array.ndim} dimensions")
    if not np.all(np.isfinite(array)):
        raise ModelError(f"{name} contains non-finite entries")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time LTI system dx/dt = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        D = _frozen(self.D, "D")
        p, m = D.shape
        if np.size(self.A) == 0:
            A, B, C = np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0))
        else:
            A, B, C = _frozen(self.A, "A"), _frozen(self.B, "B"), _frozen(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got shape {A.shape}")
        if B.shape != (n, m):
            raise ModelError(f"B must have shape {(n, m)}, got {B.shape}")
        if C.shape != (p, n):
            raise ModelError(f"C must have shape {(p, n)}, got {C.shape}")
        for array in (A, B, C):
            array.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self) -> int:
        return int(self.A.shape[0])

    @property
    def n_inputs(self) -> int:
        return int(self.D.shape[1])

    @property
    def n_outputs(self) -> int:
        return int(self.D.shape[0])

    @property
    def is_siso(self) -> bool:
        return self.n_inputs == 1 and self.n_outputs == 1


@dataclass(frozen=True, eq=False)
class ResetController:
    """
    Reset controller: a base LTI system whose first ``n_r`` states jump to
    ``A_rho @ x`` whenever the controller input crosses zero.

    Resetting states come first; the remaining states are non-resetting and
    the corresponding block of ``A_rho`` is the identity.
    """

    base: StateSpace
    A_rho: np.ndarray
    n_r: int

    def __post_init__(self) -> None:
        if not self.base.is_siso:
            raise ModelError("Reset controllers must be SISO")
        n = self.base.n_states
        if n == 0:
            A_rho = np.zeros((0, 0))
        else:
            A_rho = _frozen(self.A_rho, "A_rho")
        if A_rho.shape != (n, n):
            raise ModelError(f"A_rho must have shape {(n, n)}, got {A_rho.shape}")
        if not 0 <= self.n_r <= n:
            raise ModelError(f"n_r must lie in [0, {n}], got {self.n_r}")
        identity = np.eye(n)
        nr = self.n_r
        # Non-resetting rows and columns must be untouched by a reset.
        if not (
            np.array_equal(A_rho[nr:, :], identity[nr:, :])
            and np.array_equal(A_rho[:, nr:], identity[:, nr:])
        ):
            raise ModelError("A_rho must be the identity on non-resetting states")
        A_rho.setflags(write=False)
        object.__setattr__(self, "A_rho", A_rho)

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def n_nr(self) -> int:
        return self.base.n_states - self.n_r

    @property
    def resets_trivially(self) -> bool:
        """True when a reset leaves every state unchanged (A_rho = I)."""
        return bool(np.array_equal(self.A_rho, np.eye(self.n_states)))


class ElementKind(str, Enum):
    """Reset element families."""

    CI = "CI"
    FORE = "FORE"
    GFORE = "GFORE"
    SORE = "SORE"
    GSORE = "GSORE"

    @property
    def order(self) -> int:
        if self in (ElementKind.SORE, ElementKind.GSORE):
            return 2
        return 1

    @property
    def generalized(self) -> bool:
        return self in (ElementKind.GFORE, ElementKind.GSORE)


@dataclass(frozen=True)
class ElementSpec:
    """Parameters of one reset element. ``omega_r`` is in rad/s."""

    kind: ElementKind
    omega_r: Optional[float] = None
    beta_r: Optional[float] = None
    gamma: float = 0.0

    def __post_init__(self) -> None:
        kind = ElementKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not math.isfinite(self.gamma) or abs(self.gamma) > 1.0:
            raise ModelError(f"gamma must lie in [-1, 1], got {self.gamma}")
        if kind is ElementKind.CI:
            if self.omega_r is not None:
                raise ModelError("CI has no corner frequency")
        else:
            if self.omega_r is None or not self.omega_r > 0.0:
                raise ModelError(f"omega_r must be > 0, got {self.omega_r}")
        if kind.order == 2:
            beta_r = 1.0 if self.beta_r is None else self.beta_r
            if beta_r < 0.0:
                raise ModelError(f"beta_r must be >= 0, got {beta_r}")
            object.__setattr__(self, "beta_r", float(beta_r))
        elif self.beta_r is not None:
            raise ModelError(f"{kind.value} takes no damping coefficient")
        if kind in (ElementKind.FORE, ElementKind.SORE) and self.gamma != 0.0:
            raise ModelError(f"{kind.value} is a full-reset element, gamma must be 0")

    def with_gamma(self, gamma: float) -> "ElementSpec":
        """Same element with another reset factor (traditional kinds become generalized)."""
        kind = self.kind
        if kind is ElementKind.FORE:
            kind = ElementKind.GFORE
        elif kind is ElementKind.SORE:
            kind = ElementKind.GSORE
        return ElementSpec(kind=kind, omega_r=self.omega_r, beta_r=self.beta_r, gamma=gamma)

    def with_omega_r(self, omega_r: float) -> "ElementSpec":
        return ElementSpec(kind=self.kind, omega_r=omega_r, beta_r=self.beta_r, gamma=self.gamma)


def make_element(spec: ElementSpec) -> ResetController:
    """
    Build the reset controller of an element family.

    Args:
        spec: Element parameters

    Returns:
        ResetController whose states all reset with A_rho = gamma * I
    """
    gamma = float(spec.gamma)
    if spec.kind is ElementKind.CI:
        base = StateSpace(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
        return ResetController(base=base, A_rho=[[gamma]], n_r=1)

    omega_r = float(spec.omega_r)  # type: ignore[arg-type]
    if spec.kind.order == 1:
        base = StateSpace(A=[[-omega_r]], B=[[omega_r]], C=[[1.0]], D=[[0.0]])
        return ResetController(base=base, A_rho=[[gamma]], n_r=1)

    beta_r = float(spec.beta_r)  # type: ignore[arg-type]
    base = StateSpace(
        A=[[0.0, 1.0], [-(omega_r**2), -2.0 * beta_r * omega_r]],
        B=[[0.0], [omega_r**2]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
    )
    return ResetController(base=base, A_rho=gamma * np.eye(2), n_r=2)


def as_reset_controller(system: Union[StateSpace, ResetController]) -> ResetController:
    """View a linear system as a reset controller with no resetting states."""
    if isinstance(system, ResetController):
        return system
    return ResetController(base=system, A_rho=np.eye(system.n_states), n_r=0)


def as_state_space(system: Union[StateSpace, ResetController]) -> StateSpace:
    if isinstance(system, ResetController):
        return system.base
    return system


def series(
    left: Union[ResetController, StateSpace], right: Union[StateSpace, ResetController]
) -> ResetController:
    """
    Connect ``left`` into ``right`` (right acts on the output of left).

    The states of ``right`` are appended after those of ``left`` and never
    reset, so the composite still resets on the input of ``left``.

    Raises:
        ModelError: On dimension mismatch or when ``right`` has resetting states
    """
    head = as_reset_controller(left)
    if isinstance(right, ResetController):
        if right.n_r:
            raise ModelError("Only the first element of a series chain may reset")
        right = right.base
    first = head.base
    if first.n_outputs != right.n_inputs:
        raise ModelError(
            f"Cannot connect {first.n_outputs} outputs into {right.n_inputs} inputs"
        )
    n1, n2 = first.n_states, right.n_states
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = first.A
    A[n1:, :n1] = right.B @ first.C
    A[n1:, n1:] = right.A
    B = np.vstack([first.B, right.B @ first.D])
    C = np.hstack([right.D @ first.C, right.C])
    D = right.D @ first.D
    A_rho = np.eye(n1 + n2)
    A_rho[:n1, :n1] = head.A_rho
    return ResetController(base=StateSpace(A=A, B=B, C=C, D=D), A_rho=A_rho, n_r=head.n_r)


def linear_response(system: Union[StateSpace, ResetController], omega: float) -> complex:
    """
    Evaluate C (j omega I - A)^-1 B + D of a SISO system.

    Raises:
        EvaluationError: When j omega I - A is singular at omega
    """
    sys = as_state_space(system)
    d = complex(sys.D[0, 0])
    if sys.n_states == 0:
        return d
    resolvent = 1j * omega * np.eye(sys.n_states) - sys.A
    if np.linalg.cond(resolvent) > 1.0 / np.finfo(float).eps:
        raise EvaluationError(f"j*omega*I - A is singular at omega={omega:g} rad/s", omega)
    try:
        x = linalg.solve(resolvent, sys.B.astype(complex))
    except linalg.LinAlgError as e:
        raise EvaluationError(f"Linear solve failed at omega={omega:g} rad/s: {e}", omega)
    return complex((sys.C @ x)[0, 0]) + d


def static_gain(k: float) -> StateSpace:
    return StateSpace(A=np.zeros((0, 0)), B=np.zeros((0, 1)), C=np.zeros((1, 0)), D=[[k]])


def transfer_function(num: Sequence[float], den: Sequence[float]) -> StateSpace:
    """
    Realize num(s)/den(s) (descending powers of s) as a balanced state space.

    Balancing keeps companion-form entries from spanning many decades when
    corner frequencies are in the kHz range.

    Raises:
        ModelError: If the transfer function is improper or the denominator is zero
    """
    num_arr = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
    den_arr = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
    if den_arr.size == 0:
        raise ModelError("Denominator polynomial is zero")
    if num_arr.size == 0:
        return static_gain(0.0)
    if num_arr.size > den_arr.size:
        raise ModelError("Transfer function is improper")
    if den_arr.size == 1:
        return static_gain(float(num_arr[-1] / den_arr[0]))
    A, B, C, D = signal.tf2ss(num_arr, den_arr)
    _, (scale, _) = linalg.matrix_balance(A, permute=False, separate=True)
    A = A * scale[np.newaxis, :] / scale[:, np.newaxis]
    B = B / scale[:, np.newaxis]
    C = C * scale[np.newaxis, :]
    return StateSpace(A=A, B=B, C=C, D=D)


def polynomial_in_scaled_s(coefficients: Sequence[float], omega: float) -> np.ndarray:
    """Coefficients of sum c_k (s/omega)^k, given c in descending powers of s/omega."""
    coeffs = np.asarray(coefficients, dtype=float)
    degree = coeffs.size - 1
    return np.array([c / omega ** (degree - i) for i, c in enumerate(coeffs)])


def element_spec_from_dict(document: Dict[str, Any]) -> ElementSpec:
    """
    Parse an element spec document, e.g.
    ``{"kind": "GSORE", "omega_r_hz": 100.0, "beta_r": 1.0, "gamma": 0.4}``.

    Raises:
        ModelError: On unknown kind or invalid fields
    """
    try:
        kind = ElementKind(str(document["kind"]).upper())
    except (KeyError, ValueError):
        raise ModelError(f"Unknown or missing element kind: {document.get('kind')!r}")
    omega_r_hz = document.get("omega_r_hz")
    return ElementSpec(
        kind=kind,
        omega_r=None if omega_r_hz is None else TWO_PI * float(omega_r_hz),
        beta_r=None if document.get("beta_r") is None else float(document["beta_r"]),
        gamma=float(document.get("gamma", 0.0)),
    )


def element_spec_to_dict(spec: ElementSpec) -> Dict[str, Any]:
    document: Dict[str, Any] = {"kind": spec.kind.value, "gamma": spec.gamma}
    if spec.omega_r is not None:
        document["omega_r_hz"] = spec.omega_r / TWO_PI
    if spec.beta_r is not None:
        document["beta_r"] = spec.beta_r
    return document

