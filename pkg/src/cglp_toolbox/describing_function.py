"""
Sinusoidal-input describing function of reset controllers.

For a reset controller with base matrices (A, B, C, D) and reset matrix
A_rho, resetting whenever its input crosses zero, the first-harmonic gain is

    G(jw) = C (jwI - A)^-1 (I + j Theta(w)) B + D
    Theta(w) = 2/pi (I + E) (I + A_rho E)^-1 (I - A_rho) ((A/w)^2 + I)^-1,  E = expm(pi A / w)

This module evaluates it point-wise and over grids, and derives the corner
shift, phase-lag and damping characterizations of the element families.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from .model_core import (
    TWO_PI,
    ElementKind,
    ElementSpec,
    EvaluationError,
    ModelError,
    ResetController,
    StateSpace,
    as_reset_controller,
    linear_response,
    make_element,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 400
# exp(700) is close to the largest finite double
MAX_EXPONENT_ABSCISSA = 700.0
# Largest norm of pi*A/omega (balanced A) accepted by the exponential
MAX_EXPONENT_NORM = 1e4
ALPHA_MATCH_RATIO = 10.0
ALPHA_REFERENCE_RATIO = 1e-3


class AlphaOutOfRangeError(EvaluationError):
    """Raised when no corner in the search window matches the reset gain."""

    pass


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing angular frequencies in rad/s."""

    omegas: np.ndarray

    def __post_init__(self) -> None:
        omegas = np.array(self.omegas, dtype=float).ravel()
        if omegas.size == 0:
            raise ModelError("Frequency grid is empty")
        if not np.all(np.isfinite(omegas)) or np.any(omegas <= 0.0):
            raise ModelError("Frequency grid values must be finite and > 0")
        if np.any(np.diff(omegas) <= 0.0):
            raise ModelError("Frequency grid must be strictly increasing")
        omegas.setflags(write=False)
        object.__setattr__(self, "omegas", omegas)

    def __len__(self) -> int:
        return int(self.omegas.size)

    @property
    def hz(self) -> np.ndarray:
        return self.omegas / TWO_PI

    @classmethod
    def from_hz(cls, frequencies_hz: Sequence[float]) -> "FrequencyGrid":
        return cls(TWO_PI * np.asarray(frequencies_hz, dtype=float))


def log_grid(f_min_hz: float, f_max_hz: float, points: int = DEFAULT_GRID_POINTS) -> FrequencyGrid:
    """Log-spaced grid between two frequencies given in Hz."""
    if not 0.0 < f_min_hz < f_max_hz:
        raise ModelError(f"Need 0 < f_min < f_max, got [{f_min_hz}, {f_max_hz}] Hz")
    if points < 2:
        raise ModelError("A frequency grid needs at least 2 points")
    return FrequencyGrid.from_hz(np.logspace(math.log10(f_min_hz), math.log10(f_max_hz), points))


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    """
    Complex gains on a grid, with an optional coherence channel.

    ``failures`` lists the (omega, reason) pairs a sweep could not evaluate;
    those frequencies are absent from ``grid``.
    """

    grid: FrequencyGrid
    values: np.ndarray
    coherence: Optional[np.ndarray] = None
    failures: Tuple[Tuple[float, str], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex).ravel()
        if values.size != len(self.grid):
            raise ModelError(f"{values.size} values for a grid of {len(self.grid)} points")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.coherence is not None:
            coherence = np.array(self.coherence, dtype=float).ravel()
            if coherence.size != values.size:
                raise ModelError("Coherence channel length differs from the grid")
            if np.any(coherence < 0.0) or np.any(coherence > 1.0):
                raise ModelError("Coherence values must lie in [0, 1]")
            coherence.setflags(write=False)
            object.__setattr__(self, "coherence", coherence)

    @property
    def omegas(self) -> np.ndarray:
        return self.grid.omegas

    @property
    def mag_db(self) -> np.ndarray:
        return 20.0 * np.log10(np.abs(self.values))

    @property
    def phase_deg(self) -> np.ndarray:
        """Phase unwrapped along the grid, anchored at the lowest frequency."""
        return np.degrees(np.unwrap(np.angle(self.values)))


def _solve(a: np.ndarray, b: np.ndarray, what: str, omega: float) -> np.ndarray:
    if np.linalg.cond(a) > 1.0 / np.finfo(float).eps:
        raise EvaluationError(f"{what} is singular at omega={omega:g} rad/s", omega)
    try:
        return linalg.solve(a, b)
    except (linalg.LinAlgError, ValueError) as e:
        raise EvaluationError(f"Solving {what} failed at omega={omega:g} rad/s: {e}", omega)


def _reset_factors(ctrl: ResetController, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """(I + E) (I + A_rho E)^-1 (I - A_rho) and (A/w)^2 + I."""
    A = ctrl.base.A
    n = ctrl.n_states
    identity = np.eye(n)
    abscissa = float(np.max(np.linalg.eigvals(A).real)) * math.pi / omega
    if abscissa > MAX_EXPONENT_ABSCISSA:
        raise EvaluationError(
            f"expm(pi*A/omega) overflows at omega={omega:g} rad/s (abscissa {abscissa:.1f})", omega
        )
    balanced = linalg.matrix_balance(A, permute=False, separate=True)[0]
    exponent_norm = float(np.linalg.norm(balanced, 2)) * math.pi / omega
    if exponent_norm > MAX_EXPONENT_NORM:
        raise EvaluationError(
            f"||pi*A/omega|| = {exponent_norm:.3g} exceeds {MAX_EXPONENT_NORM:g} at "
            f"omega={omega:g} rad/s",
            omega,
        )
    E = linalg.expm(math.pi * A / omega)
    if not np.all(np.isfinite(E)):
        raise EvaluationError(f"expm(pi*A/omega) is not finite at omega={omega:g} rad/s", omega)
    jump = _solve(identity + ctrl.A_rho @ E, identity - ctrl.A_rho, "I + A_rho*E", omega)
    scaled = A / omega
    return (identity + E) @ jump, scaled @ scaled + identity


def theta_rho(ctrl: ResetController, omega: float) -> np.ndarray:
    """The reset correction matrix Theta(omega)."""
    if not omega > 0.0:
        raise EvaluationError(f"omega must be > 0, got {omega}", omega)
    if ctrl.n_states == 0:
        return np.zeros((0, 0))
    front, resonant = _reset_factors(ctrl, omega)
    # front @ inv(resonant) without forming the inverse
    return (2.0 / math.pi) * _solve(resonant.T, front.T, "(A/omega)^2 + I", omega).T


def df_response(ctrl: Union[ResetController, StateSpace], omega: float) -> complex:
    """
    Describing-function gain of a reset controller at omega (rad/s).

    Raises:
        EvaluationError: For omega <= 0, a singular solve or a non-finite result
    """
    ctrl = as_reset_controller(ctrl)
    if not omega > 0.0:
        raise EvaluationError(f"omega must be > 0, got {omega}", omega)
    base = ctrl.base
    d = complex(base.D[0, 0])
    if ctrl.n_states == 0:
        return d
    if ctrl.n_r == 0 or ctrl.resets_trivially:
        return linear_response(base, omega)
    front, resonant = _reset_factors(ctrl, omega)
    correction = (2.0 / math.pi) * (front @ _solve(resonant, base.B, "(A/omega)^2 + I", omega))
    forcing = base.B.astype(complex) + 1j * correction
    resolvent = 1j * omega * np.eye(ctrl.n_states) - base.A
    x = _solve(resolvent, forcing, "j*omega*I - A", omega)
    value = complex((base.C @ x)[0, 0]) + d
    if not (math.isfinite(value.real) and math.isfinite(value.imag)):
        raise EvaluationError(f"Non-finite describing function at omega={omega:g} rad/s", omega)
    return value


def _sweep(evaluate: Callable[[float], complex], grid: FrequencyGrid) -> FrequencyResponse:
    kept: List[float] = []
    values: List[complex] = []
    failures: List[Tuple[float, str]] = []
    for omega in grid.omegas:
        try:
            values.append(evaluate(float(omega)))
            kept.append(float(omega))
        except EvaluationError as e:
            failures.append((float(omega), str(e)))
    if failures:
        logger.warning(f"{len(failures)} of {len(grid)} frequency points failed to evaluate")
    if not kept:
        raise EvaluationError(f"Every point of the sweep failed, first: {failures[0][1]}")
    return FrequencyResponse(FrequencyGrid(np.array(kept)), np.array(values), failures=tuple(failures))


def df_sweep(ctrl: Union[ResetController, StateSpace], grid: FrequencyGrid) -> FrequencyResponse:
    """Point-wise describing function over a grid; failed points are collected, not raised."""
    return _sweep(lambda omega: df_response(ctrl, omega), grid)


def linear_sweep(system: Union[ResetController, StateSpace], grid: FrequencyGrid) -> FrequencyResponse:
    """Frequency response of the base linear system (no reset)."""
    return _sweep(lambda omega: linear_response(system, omega), grid)


def phase_lag_at(ctrl: ResetController, omega: float) -> float:
    """Phase lag in degrees (positive means lag)."""
    return -math.degrees(np.angle(df_response(ctrl, omega)))


def compute_alpha(spec: ElementSpec, ratio: float = ALPHA_MATCH_RATIO) -> float:
    """
    Corner-shift fraction of a reset element.

    The describing-function magnitude at ``ratio * omega_r``, relative to its
    low-frequency magnitude, is matched by the base linear element of the
    same order with its corner moved to alpha * omega_r. A matching corner
    below omega_r is not used, so alpha is floored at 1; it is exactly 1 in
    the linear limit.

    Raises:
        ModelError: For a Clegg integrator (no corner)
        AlphaOutOfRangeError: When the matching corner lies outside [omega_r/100, 100*omega_r]
    """
    if spec.kind is ElementKind.CI or spec.omega_r is None:
        raise ModelError("The corner shift is undefined for a Clegg integrator")
    omega_r = float(spec.omega_r)
    omega, omega_low = ratio * omega_r, ALPHA_REFERENCE_RATIO * omega_r
    element = make_element(spec)
    target_db = 20.0 * math.log10(
        abs(df_response(element, omega)) / abs(df_response(element, omega_low))
    )

    def excess_db(log_alpha: float) -> float:
        shifted = replace(spec.with_gamma(1.0), omega_r=omega_r * math.exp(log_alpha))
        base = make_element(shifted).base
        gain = abs(linear_response(base, omega)) / abs(linear_response(base, omega_low))
        return 20.0 * math.log10(gain) - target_db

    lo, hi = math.log(1e-2), math.log(1e2)
    if excess_db(lo) * excess_db(hi) > 0.0:
        raise AlphaOutOfRangeError(
            f"No corner in [{omega_r / 100.0:g}, {omega_r * 100.0:g}] rad/s matches the "
            f"reset gain at {omega:g} rad/s",
            omega,
        )
    alpha = max(1.0, math.exp(optimize.brentq(excess_db, lo, hi, xtol=1e-13)))
    logger.debug(f"alpha({spec.kind.value}, gamma={spec.gamma:g}) = {alpha:.6f}")
    return alpha


@dataclass(frozen=True)
class AlphaRow:
    gamma: float
    alpha_gfore: float
    alpha_gsore: float


def alpha_table(gammas: Sequence[float], beta_r: float = 1.0) -> List[AlphaRow]:
    """Corner-shift fractions of GFORE and GSORE for each gamma."""
    rows = []
    for gamma in gammas:
        gfore = ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=gamma)
        gsore = ElementSpec(kind=ElementKind.GSORE, omega_r=1.0, beta_r=beta_r, gamma=gamma)
        rows.append(AlphaRow(float(gamma), compute_alpha(gfore), compute_alpha(gsore)))
    return rows


@dataclass(frozen=True)
class PhaseLagRow:
    gamma: float
    lag_gfore_deg: float
    lag_gsore_deg: float


def phase_lag_table(
    gammas: Sequence[float], ratio: float = 10.0, beta_r: float = 1.0
) -> List[PhaseLagRow]:
    """Phase lag of GFORE and GSORE at omega = ratio * omega_r for each gamma."""
    rows = []
    for gamma in gammas:
        gfore = make_element(ElementSpec(kind=ElementKind.GFORE, omega_r=1.0, gamma=gamma))
        gsore = make_element(
            ElementSpec(kind=ElementKind.GSORE, omega_r=1.0, beta_r=beta_r, gamma=gamma)
        )
        rows.append(
            PhaseLagRow(float(gamma), phase_lag_at(gfore, ratio), phase_lag_at(gsore, ratio))
        )
    return rows


def resonance_peak_db(ctrl: ResetController, grid: FrequencyGrid) -> float:
    """Peak describing-function magnitude above the magnitude at the lowest grid frequency."""
    response = df_sweep(ctrl, grid)
    mag = response.mag_db
    return float(np.max(mag) - mag[0])
