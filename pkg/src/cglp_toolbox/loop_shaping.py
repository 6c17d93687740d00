"""
PID and CgLp-PID loop shaping.

Series PID:

    C(s) = K_p ((s + w_i)/s) ((1 + s/w_d)/(1 + s/w_t)) (1/(1 + s/w_f))

with the rules of thumb w_i = w_c/10, w_f = 10 w_c, w_d = w_c/a, w_t = a w_c.
Two synthesis procedures are provided: a fixed-bandwidth design that lets a
CgLp (or reset integrator) supply part of the phase so the scale a shrinks,
and a bandwidth-raising design that iterates w_c until the open-loop gain at
a high frequency matches the linear baseline.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cglp import CgLpElement, CgLpOrder, CgLpSpec, build_cglp, cglp_spec_from_dict, cglp_spec_to_dict
from .describing_function import FrequencyGrid, FrequencyResponse, df_response
from .io import read_bode_csv
from .model_core import (
    TWO_PI,
    EvaluationError,
    ModelError,
    ResetController,
    ElementKind,
    ElementSpec,
    StateSpace,
    as_reset_controller,
    linear_response,
    make_element,
    polynomial_in_scaled_s,
    series,
    transfer_function,
)

logger = logging.getLogger(__name__)

INTEGRATOR_RATIO = 0.1
LPF_RATIO = 10.0
MIN_SCALE_A = 1.001
DEFAULT_OMEGA_HIGH = TWO_PI * 1e4


class DesignError(Exception):
    """Raised when a controller design procedure fails."""

    pass


class InfeasibleDesignError(DesignError):
    """Raised when a phase or margin target cannot be met."""

    pass


class ControllerFamily(str, Enum):
    LINEAR = "linear"
    RESET_INTEGRATOR = "reset-integrator"
    CGLP_GFORE = "cglp-gfore"
    CGLP_GSORE = "cglp-gsore"

    @property
    def cglp_order(self) -> Optional[CgLpOrder]:
        if self is ControllerFamily.CGLP_GFORE:
            return CgLpOrder.FIRST
        if self is ControllerFamily.CGLP_GSORE:
            return CgLpOrder.SECOND
        return None


class Accounting(str, Enum):
    """Which PID factors count towards the phase solved for by the scale a."""

    LEADLAG_ONLY = "leadlag-only"
    FULL_PID = "full-pid"


class DesignMode(str, Enum):
    TRACKING = "tracking"
    BANDWIDTH = "bandwidth"


@dataclass(frozen=True)
class PidSpec:
    """Series PID parameters, frequencies in rad/s."""

    K_p: float
    omega_i: float
    omega_d: float
    omega_t: float
    omega_f: float

    def __post_init__(self) -> None:
        if not self.K_p > 0.0:
            raise ModelError(f"K_p must be > 0, got {self.K_p}")
        if not 0.0 < self.omega_i < self.omega_d < self.omega_t < self.omega_f:
            raise ModelError(
                "PID corners must satisfy 0 < omega_i < omega_d < omega_t < omega_f, got "
                f"{self.omega_i:g}, {self.omega_d:g}, {self.omega_t:g}, {self.omega_f:g}"
            )


@dataclass(frozen=True, eq=False)
class PlantModel:
    """
    SISO plant: a transfer function (descending powers of s) or measured
    frequency-response data.

    ``delay`` (seconds) is an input delay modelled by the first-order Pade
    all-pass (1 - s tau/2)/(1 + s tau/2); the same factor enters the
    frequency response and the state-space realization.
    """

    name: str
    num: Optional[np.ndarray] = None
    den: Optional[np.ndarray] = None
    frf_omegas: Optional[np.ndarray] = None
    frf_values: Optional[np.ndarray] = None
    delay: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delay) and self.delay >= 0.0):
            raise ModelError(f"Plant {self.name} delay must be >= 0, got {self.delay}")
        if self.num is not None and self.den is not None:
            num = np.atleast_1d(np.asarray(self.num, dtype=float))
            den = np.atleast_1d(np.asarray(self.den, dtype=float))
            if num.size > den.size:
                raise ModelError(f"Plant {self.name} is improper")
            if np.any(np.roots(den).real >= 0.0):
                raise ModelError(f"Plant {self.name} has an unstable or marginal denominator")
            object.__setattr__(self, "num", num)
            object.__setattr__(self, "den", den)
        elif self.frf_omegas is not None and self.frf_values is not None:
            omegas = np.asarray(self.frf_omegas, dtype=float)
            values = np.asarray(self.frf_values, dtype=complex)
            if omegas.size < 2 or omegas.size != values.size or np.any(np.diff(omegas) <= 0.0):
                raise ModelError(f"FRF data of plant {self.name} is malformed")
            object.__setattr__(self, "frf_omegas", omegas)
            object.__setattr__(self, "frf_values", values)
        else:
            raise ModelError(f"Plant {self.name} needs a transfer function or FRF data")

    @classmethod
    def from_frf_csv(cls, path: str, name: Optional[str] = None) -> "PlantModel":
        """
        Load measured data from a bode CSV (freq_hz, mag_db, phase_deg).

        Raises:
            ModelError: If the file is missing or malformed
        """
        freq_hz, mag_db, phase_deg = read_bode_csv(path)
        values = 10.0 ** (mag_db / 20.0) * np.exp(1j * np.radians(phase_deg))
        return cls(name=name or path, frf_omegas=TWO_PI * freq_hz, frf_values=values)

    @property
    def has_model(self) -> bool:
        return self.num is not None

    def response(self, omega: float) -> complex:
        """
        Plant gain at omega (rad/s).

        Raises:
            EvaluationError: Outside the measured range of FRF data
        """
        s = 1j * omega
        delay = (1.0 - 0.5 * self.delay * s) / (1.0 + 0.5 * self.delay * s)
        if self.num is not None and self.den is not None:
            return complex(delay * np.polyval(self.num, s) / np.polyval(self.den, s))
        omegas, values = self.frf_omegas, self.frf_values
        assert omegas is not None and values is not None
        if not omegas[0] <= omega <= omegas[-1]:
            raise EvaluationError(f"omega={omega:g} rad/s is outside the measured FRF range", omega)
        log_w = np.log10(omegas)
        mag_db = np.interp(math.log10(omega), log_w, 20.0 * np.log10(np.abs(values)))
        phase = np.interp(math.log10(omega), log_w, np.unwrap(np.angle(values)))
        return complex(delay * 10.0 ** (mag_db / 20.0) * np.exp(1j * phase))

    @property
    def state_space(self) -> StateSpace:
        """
        Realization of the transfer function, delay included.

        Raises:
            ModelError: For FRF-only plants
        """
        if self.num is None or self.den is None:
            raise ModelError(f"Plant {self.name} is FRF data only and has no state-space model")
        if self.delay == 0.0:
            return transfer_function(self.num, self.den)
        half = 0.5 * self.delay
        return transfer_function(
            np.polymul(self.num, [-half, 1.0]), np.polymul(self.den, [half, 1.0])
        )

    def scaled(self, factor: float) -> "PlantModel":
        """Same plant with its gain multiplied by ``factor``."""
        if self.num is not None:
            return replace(self, name=f"{self.name}*{factor:g}", num=self.num * factor)
        assert self.frf_values is not None
        return replace(self, name=f"{self.name}*{factor:g}", frf_values=self.frf_values * factor)


BUILTIN_PLANTS: Dict[str, Tuple[Tuple[float, ...], Tuple[float, ...], float]] = {
    # Voice-coil stage, one channel: second-order fit of the measured FRF; the
    # delay carries the phase the fit misses at crossover (-196.25 deg at 100 Hz)
    "spyder-1a": ((1.429e8,), (175.9, 7738.0, 1.361e6), 5.71e-4),
}


def builtin_plant(name: str = "spyder-1a") -> PlantModel:
    try:
        num, den, delay = BUILTIN_PLANTS[name]
    except KeyError:
        raise ModelError(f"Unknown builtin plant {name!r}; known: {', '.join(BUILTIN_PLANTS)}")
    return PlantModel(name=name, num=np.array(num), den=np.array(den), delay=delay)


@dataclass(frozen=True)
class ControllerDesign:
    """
    Result of a CgLp-PID synthesis.

    ``ph_nl_deg`` is the phase the nonlinear part adds at omega_c. For a CgLp
    it is the describing-function phase (``full-pid``) or the phase over the
    same CgLp at gamma = 1 (``leadlag-only``); for a reset integrator it is
    the phase it gains over a linear integrator.
    """

    family: ControllerFamily
    pid: PidSpec
    omega_c: float
    scale_a: float
    achieved_pm_deg: float
    ph_nl_deg: float
    cglp: Optional[CgLpSpec] = None
    reset_integrator_gamma: Optional[float] = None
    alpha: float = 1.0
    target_pm_deg: float = 30.0
    accounting: Accounting = Accounting.FULL_PID

    def __post_init__(self) -> None:
        if not self.scale_a > 1.0:
            raise ModelError(f"scale a must be > 1, got {self.scale_a}")
        if not math.isclose(self.pid.omega_d, self.omega_c / self.scale_a, rel_tol=1e-9):
            raise ModelError("omega_d must equal omega_c / a")
        if not math.isclose(self.pid.omega_t, self.omega_c * self.scale_a, rel_tol=1e-9):
            raise ModelError("omega_t must equal a * omega_c")

    @property
    def gamma(self) -> float:
        if self.cglp is not None:
            return self.cglp.gamma
        if self.reset_integrator_gamma is not None:
            return self.reset_integrator_gamma
        return 1.0

    @property
    def bandwidth_hz(self) -> float:
        return self.omega_c / TWO_PI


def pid_response(spec: PidSpec, omega: float, include_integrator: bool = True) -> complex:
    """
    Exact evaluation of the series PID at j omega.

    With ``include_integrator`` off the 1/s pole is left out (a Clegg
    integrator takes its place) and the zero at w_i is kept.

    Raises:
        EvaluationError: For omega <= 0 (integrator pole)
    """
    if not omega > 0.0:
        raise EvaluationError(f"PID is undefined at omega={omega}", omega)
    s = 1j * omega
    value = spec.K_p * (1.0 + s / spec.omega_d) / (1.0 + s / spec.omega_t) / (1.0 + s / spec.omega_f)
    value *= s + spec.omega_i
    if include_integrator:
        value /= s
    return complex(value)


def pid_state_space(spec: PidSpec, include_integrator: bool = True) -> StateSpace:
    """State-space realization of the PID, optionally without the 1/s pole."""
    num = spec.K_p * polynomial_in_scaled_s([1.0, 1.0], spec.omega_d)
    den = np.polymul(
        polynomial_in_scaled_s([1.0, 1.0], spec.omega_t),
        polynomial_in_scaled_s([1.0, 1.0], spec.omega_f),
    )
    num = np.polymul(num, [1.0, spec.omega_i])
    if include_integrator:
        den = np.polymul(den, [1.0, 0.0])
    return transfer_function(num, den)


def reset_integrator_element(gamma: float) -> ResetController:
    """
    Clegg integrator 1/s resetting to gamma times its state; it replaces the
    PID integrator pole ahead of the (s + w_i) zero.
    """
    if not -1.0 < gamma <= 1.0:
        raise ModelError(f"gamma must lie in (-1, 1], got {gamma}")
    return make_element(ElementSpec(kind=ElementKind.CI, gamma=gamma))


def _leadlag_phase_deg(a: float) -> float:
    return math.degrees(math.atan(a) - math.atan(1.0 / a))


def solve_scale_a(
    required_lead_deg: float,
    accounting: Accounting = Accounting.FULL_PID,
    integrator_ratio: float = INTEGRATOR_RATIO,
    lpf_ratio: float = LPF_RATIO,
) -> float:
    """
    Scale a such that the PID supplies ``required_lead_deg`` at omega_c.

    In ``full-pid`` accounting the lag of the integrator and low-pass factors
    (placed at integrator_ratio*w_c and lpf_ratio*w_c) is included; in
    ``leadlag-only`` accounting only arctan(a) - arctan(1/a) counts.

    Raises:
        InfeasibleDesignError: If the lead needs a < 1.001 or a beyond the
            corner ordering limit min(1/integrator_ratio, lpf_ratio)
    """
    accounting = Accounting(accounting)
    fixed_lag = 0.0
    if accounting is Accounting.FULL_PID:
        fixed_lag = math.degrees(math.atan(integrator_ratio) + math.atan(1.0 / lpf_ratio))

    def excess(a: float) -> float:
        return _leadlag_phase_deg(a) - fixed_lag - required_lead_deg

    lo = MIN_SCALE_A
    hi = min(1.0 / integrator_ratio, lpf_ratio) * (1.0 - 1e-9)
    if excess(lo) > 0.0:
        raise InfeasibleDesignError(
            f"Required lead {required_lead_deg:.3f} deg needs a scale a below {MIN_SCALE_A}"
        )
    if excess(hi) < 0.0:
        raise InfeasibleDesignError(
            f"Required lead {required_lead_deg:.3f} deg exceeds the {accounting.value} supremum "
            f"{required_lead_deg + excess(hi):.3f} deg"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def _wrap_deg(angle: float) -> float:
    """Wrap to (-180, 180]."""
    wrapped = math.fmod(angle + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def _nonlinear_element(design: ControllerDesign) -> Optional[ResetController]:
    if design.cglp is not None:
        return build_cglp(design.cglp, alpha=design.alpha).realization
    if design.reset_integrator_gamma is not None:
        return reset_integrator_element(design.reset_integrator_gamma)
    return None


def controller_response(design: ControllerDesign, omega: float) -> complex:
    """Describing function of the complete controller at omega."""
    has_ri = design.family is ControllerFamily.RESET_INTEGRATOR
    value = pid_response(design.pid, omega, include_integrator=not has_ri)
    element = _nonlinear_element(design)
    if element is not None:
        value *= df_response(element, omega)
    return value


def openloop_value(design: ControllerDesign, plant: PlantModel, omega: float) -> complex:
    return plant.response(omega) * controller_response(design, omega)


def openloop_gain_db(design: ControllerDesign, plant: PlantModel, omega: float) -> float:
    return 20.0 * math.log10(abs(openloop_value(design, plant, omega)))


def open_loop_df(design: ControllerDesign, plant: PlantModel, grid: FrequencyGrid) -> FrequencyResponse:
    """
    Plant response times PID response times the describing function of the
    nonlinear part, per grid point. Failed points are collected.
    """
    element = _nonlinear_element(design)
    has_ri = design.family is ControllerFamily.RESET_INTEGRATOR
    kept, values, failures = [], [], []
    for omega in grid.omegas:
        w = float(omega)
        try:
            value = plant.response(w) * pid_response(design.pid, w, include_integrator=not has_ri)
            if element is not None:
                value *= df_response(element, w)
        except EvaluationError as e:
            failures.append((w, str(e)))
            continue
        kept.append(w)
        values.append(value)
    if failures:
        logger.warning(f"Open-loop sweep: {len(failures)} of {len(grid)} points failed")
    if not kept:
        raise EvaluationError("Every point of the open-loop sweep failed")
    return FrequencyResponse(FrequencyGrid(np.array(kept)), np.array(values), failures=tuple(failures))


def phase_margin_at(design: ControllerDesign, plant: PlantModel, omega: float) -> float:
    return 180.0 + _wrap_deg(math.degrees(np.angle(openloop_value(design, plant, omega))))


def measure_crossover(design: ControllerDesign, plant: PlantModel) -> Tuple[float, float]:
    """
    Locate the 0 dB crossing of the open-loop describing function near omega_c
    by bisection and return (omega_cross, phase margin in degrees there).

    Raises:
        DesignError: If the gain does not cross 0 dB within [w_c/3, 3 w_c]
    """

    def gain(log_w: float) -> float:
        return openloop_gain_db(design, plant, math.exp(log_w))

    lo, hi = math.log(design.omega_c / 3.0), math.log(design.omega_c * 3.0)
    g_lo, g_hi = gain(lo), gain(hi)
    if not g_lo > 0.0 > g_hi:
        raise DesignError("Open-loop gain does not cross 0 dB near omega_c")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if gain(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    omega = math.exp(0.5 * (lo + hi))
    return omega, phase_margin_at(design, plant, omega)


def _reset_phase_gain(element: ResetController, omega: float) -> float:
    """Phase of the describing function above that of the base linear system."""
    gain = df_response(element, omega) / linear_response(element.base, omega)
    return math.degrees(np.angle(gain))


def design_tracking_precision(
    plant: PlantModel,
    omega_c: float,
    pm_deg: float,
    family: ControllerFamily = ControllerFamily.LINEAR,
    gamma: float = 1.0,
    beta_r: float = 1.0,
    accounting: Accounting = Accounting.FULL_PID,
    integrator_ratio: float = INTEGRATOR_RATIO,
    lpf_ratio: float = LPF_RATIO,
    alpha: Optional[float] = None,
) -> ControllerDesign:
    """
    Fixed-bandwidth CgLp-PID design.

    The CgLp is placed at omega_r = omega_c and omega_f = 10 omega_c with its
    lag corner shifted by alpha; the scale a supplies the remaining phase so
    the open loop has phase -180 + pm_deg at omega_c, and K_p puts the
    open-loop describing-function gain at 0 dB there.

    With ``full-pid`` accounting the scale a covers everything: the
    integrator and low-pass lags are added to the requirement and the CgLp
    contributes its full describing-function phase. With ``leadlag-only``
    the lead-lag pair covers the requirement plus the integrator lag only,
    and a CgLp is credited with the phase it has over the same CgLp at
    gamma = 1, so the linear and gamma = 1 designs coincide.

    Args:
        plant: Plant model or FRF
        omega_c: Target bandwidth in rad/s
        pm_deg: Target phase margin in degrees
        family: Controller family
        gamma: Reset factor of the nonlinear part (ignored for linear)
        beta_r: Damping of a second-order CgLp
        accounting: Phase accounting used when solving for a
        alpha: Known corner shift of the CgLp lag, computed when omitted

    Raises:
        InfeasibleDesignError: If the phase target cannot be met
    """
    family = ControllerFamily(family)
    accounting = Accounting(accounting)
    omega_i = integrator_ratio * omega_c
    omega_f = lpf_ratio * omega_c
    cglp_spec: Optional[CgLpSpec] = None
    ri_gamma: Optional[float] = None
    element_alpha = 1.0
    ph_nl = 0.0

    order = family.cglp_order
    if order is not None:
        cglp_spec = CgLpSpec(
            order=order,
            omega_r=omega_c,
            omega_f=10.0 * omega_c,
            gamma=gamma,
            beta_r=beta_r if order is CgLpOrder.SECOND else None,
        )
        element: CgLpElement = build_cglp(cglp_spec, alpha=alpha)
        element_alpha = element.alpha
        ph_nl = math.degrees(np.angle(df_response(element.realization, omega_c)))
        if accounting is Accounting.LEADLAG_ONLY:
            unreset = build_cglp(replace(cglp_spec, gamma=1.0)).realization
            ph_nl -= math.degrees(np.angle(df_response(unreset, omega_c)))
    elif family is ControllerFamily.RESET_INTEGRATOR:
        ri_gamma = float(gamma)
        ph_nl = _reset_phase_gain(reset_integrator_element(ri_gamma), omega_c)

    required = _wrap_deg(-180.0 + pm_deg - math.degrees(np.angle(plant.response(omega_c))))
    if accounting is Accounting.LEADLAG_ONLY:
        required += math.degrees(math.atan(integrator_ratio))
    a = solve_scale_a(required - ph_nl, accounting, integrator_ratio, lpf_ratio)
    unit_pid = PidSpec(1.0, omega_i, omega_c / a, omega_c * a, omega_f)
    draft = ControllerDesign(
        family=family,
        pid=unit_pid,
        omega_c=omega_c,
        scale_a=a,
        achieved_pm_deg=pm_deg,
        ph_nl_deg=ph_nl,
        cglp=cglp_spec,
        reset_integrator_gamma=ri_gamma,
        alpha=element_alpha,
        target_pm_deg=pm_deg,
        accounting=Accounting(accounting),
    )
    K_p = 1.0 / abs(openloop_value(draft, plant, omega_c))
    design = replace(draft, pid=replace(unit_pid, K_p=K_p))
    design = replace(design, achieved_pm_deg=phase_margin_at(design, plant, omega_c))
    logger.info(
        f"Designed {family.value} gamma={design.gamma:g} at {omega_c / TWO_PI:.2f} Hz: "
        f"a={a:.4f}, Ph_nl={ph_nl:.2f} deg, PM={design.achieved_pm_deg:.2f} deg"
    )
    return design


def design_bandwidth(
    plant: PlantModel,
    reference_design: ControllerDesign,
    gamma: float,
    g_pre_db: Optional[float] = None,
    family: ControllerFamily = ControllerFamily.CGLP_GFORE,
    omega_high: float = DEFAULT_OMEGA_HIGH,
    beta_r: float = 1.0,
    tolerance_db: float = 0.1,
    max_iterations: int = 60,
) -> ControllerDesign:
    """
    Raise the bandwidth of a CgLp-PID until its open-loop gain at omega_high
    matches the baseline precision ``g_pre_db``.

    Each candidate omega_c is designed with the fixed-bandwidth procedure;
    omega_c is bisected (log scale) on the monotone relation between omega_c
    and the high-frequency open-loop gain.

    Raises:
        DesignError: On non-convergence or a monotonicity violation
    """
    if g_pre_db is None:
        g_pre_db = openloop_gain_db(reference_design, plant, omega_high)
    if gamma == 1.0 and ControllerFamily(family) is reference_design.family:
        return reference_design

    def candidate(omega_c: float) -> ControllerDesign:
        return design_tracking_precision(
            plant,
            omega_c,
            reference_design.target_pm_deg,
            family=family,
            gamma=gamma,
            beta_r=beta_r,
            accounting=reference_design.accounting,
            integrator_ratio=reference_design.pid.omega_i / reference_design.omega_c,
            lpf_ratio=reference_design.pid.omega_f / reference_design.omega_c,
        )

    def mismatch(log_w: float) -> Tuple[float, ControllerDesign]:
        design = candidate(math.exp(log_w))
        return openloop_gain_db(design, plant, omega_high) - g_pre_db, design

    start = math.log(reference_design.omega_c)
    lo = hi = start
    f_lo, d_lo = mismatch(lo)
    f_hi, d_hi = f_lo, d_lo
    step = math.log(1.5)
    for _ in range(12):
        if f_lo <= 0.0:
            break
        lo -= step
        f_lo, d_lo = mismatch(lo)
    for _ in range(12):
        if f_hi >= 0.0:
            break
        hi += step
        f_hi, d_hi = mismatch(hi)
    if abs(f_lo) < tolerance_db:
        return d_lo
    if abs(f_hi) < tolerance_db:
        return d_hi
    if not f_lo < 0.0 < f_hi:
        raise DesignError("Could not bracket the bandwidth matching the baseline precision")

    for iteration in range(max_iterations):
        mid = 0.5 * (lo + hi)
        f_mid, d_mid = mismatch(mid)
        logger.debug(
            f"Bandwidth iteration {iteration}: {math.exp(mid) / TWO_PI:.3f} Hz, "
            f"mismatch {f_mid:+.4f} dB"
        )
        if not f_lo - tolerance_db <= f_mid <= f_hi + tolerance_db:
            raise DesignError(
                "High-frequency gain is not monotone in omega_c near "
                f"{math.exp(mid) / TWO_PI:.2f} Hz"
            )
        if abs(f_mid) < tolerance_db:
            logger.info(
                f"Bandwidth design gamma={gamma:g} converged at {d_mid.bandwidth_hz:.2f} Hz "
                f"after {iteration + 1} iterations"
            )
            return d_mid
        if f_mid < 0.0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    raise DesignError(f"Bandwidth design did not converge in {max_iterations} iterations")


def bandwidth_violations(designs: Sequence[ControllerDesign], tolerance: float = 0.01) -> List[str]:
    """
    Check that the bandwidth does not fall as gamma decreases within a family.

    Designs are grouped by family and ordered by decreasing gamma; a step
    whose bandwidth drops by more than ``tolerance`` (relative) is reported.

    Returns:
        One message per violating step, empty when the sequences are monotone
    """
    by_family: Dict[ControllerFamily, List[ControllerDesign]] = {}
    for design in designs:
        by_family.setdefault(design.family, []).append(design)

    violations = []
    for family, members in by_family.items():
        ordered = sorted(members, key=lambda d: -d.gamma)
        for previous, current in zip(ordered, ordered[1:]):
            if current.bandwidth_hz < previous.bandwidth_hz * (1.0 - tolerance):
                violations.append(
                    f"{family.value}: bandwidth falls from {previous.bandwidth_hz:.2f} Hz "
                    f"(gamma={previous.gamma:g}) to {current.bandwidth_hz:.2f} Hz (gamma={current.gamma:g})"
                )
    for message in violations:
        logger.warning(f"Bandwidth sequence not monotone: {message}")
    return violations


def design_fixed_pid_extra_pm(
    reference_design: ControllerDesign,
    plant: PlantModel,
    family: ControllerFamily,
    gamma: float,
    beta_r: float = 1.0,
) -> ControllerDesign:
    """
    Keep the linear PID corners and add a CgLp at omega_c to raise the phase
    margin; only K_p is renormalized so the bandwidth stays put.
    """
    order = ControllerFamily(family).cglp_order
    if order is None:
        raise ModelError("Extra phase margin designs need a CgLp family")
    omega_c = reference_design.omega_c
    spec = CgLpSpec(
        order=order,
        omega_r=omega_c,
        omega_f=10.0 * omega_c,
        gamma=gamma,
        beta_r=beta_r if order is CgLpOrder.SECOND else None,
    )
    element = build_cglp(spec)
    draft = replace(
        reference_design,
        family=ControllerFamily(family),
        pid=replace(reference_design.pid, K_p=1.0),
        cglp=spec,
        reset_integrator_gamma=None,
        alpha=element.alpha,
        ph_nl_deg=math.degrees(np.angle(df_response(element.realization, omega_c))),
    )
    K_p = 1.0 / abs(openloop_value(draft, plant, omega_c))
    design = replace(draft, pid=replace(draft.pid, K_p=K_p))
    return replace(design, achieved_pm_deg=phase_margin_at(design, plant, omega_c))


def controller_realization(design: ControllerDesign) -> ResetController:
    """
    Complete controller as one reset controller, nonlinear part first so that
    it resets on the controller input e.
    """
    has_ri = design.family is ControllerFamily.RESET_INTEGRATOR
    linear = pid_state_space(design.pid, include_integrator=not has_ri)
    element = _nonlinear_element(design)
    if element is None:
        return as_reset_controller(linear)
    return series(element, linear)


def design_to_dict(design: ControllerDesign) -> Dict[str, Any]:
    """JSON-ready document; frequencies in Hz."""
    pid = design.pid
    document: Dict[str, Any] = {
        "family": design.family.value,
        "gamma": design.gamma,
        "omega_c_hz": design.omega_c / TWO_PI,
        "scale_a": design.scale_a,
        "achieved_pm_deg": design.achieved_pm_deg,
        "target_pm_deg": design.target_pm_deg,
        "ph_nl_deg": design.ph_nl_deg,
        "alpha": design.alpha,
        "accounting": design.accounting.value,
        "pid": {
            "K_p": pid.K_p,
            "omega_i_hz": pid.omega_i / TWO_PI,
            "omega_d_hz": pid.omega_d / TWO_PI,
            "omega_t_hz": pid.omega_t / TWO_PI,
            "omega_f_hz": pid.omega_f / TWO_PI,
        },
    }
    if design.cglp is not None:
        document["cglp"] = cglp_spec_to_dict(design.cglp)
    if design.reset_integrator_gamma is not None:
        document["reset_integrator_gamma"] = design.reset_integrator_gamma
    return document


def design_from_dict(document: Dict[str, Any]) -> ControllerDesign:
    """
    Rebuild a design from its JSON document.

    Raises:
        ModelError: On missing or invalid fields
    """
    try:
        pid_doc = document["pid"]
        pid = PidSpec(
            K_p=float(pid_doc["K_p"]),
            omega_i=TWO_PI * float(pid_doc["omega_i_hz"]),
            omega_d=TWO_PI * float(pid_doc["omega_d_hz"]),
            omega_t=TWO_PI * float(pid_doc["omega_t_hz"]),
            omega_f=TWO_PI * float(pid_doc["omega_f_hz"]),
        )
        omega_c = TWO_PI * float(document["omega_c_hz"])
        scale_a = float(document["scale_a"])
        family = ControllerFamily(document["family"])
        cglp_doc = document.get("cglp")
        ri_gamma = document.get("reset_integrator_gamma")
        # Corner ordering is checked against the rebuilt PID, so rebuild it from omega_c and a
        pid = replace(pid, omega_d=omega_c / scale_a, omega_t=omega_c * scale_a)
        return ControllerDesign(
            family=family,
            pid=pid,
            omega_c=omega_c,
            scale_a=scale_a,
            achieved_pm_deg=float(document.get("achieved_pm_deg", float("nan"))),
            ph_nl_deg=float(document.get("ph_nl_deg", 0.0)),
            cglp=None if cglp_doc is None else cglp_spec_from_dict(cglp_doc),
            reset_integrator_gamma=None if ri_gamma is None else float(ri_gamma),
            alpha=float(document.get("alpha", 1.0)),
            target_pm_deg=float(document.get("target_pm_deg", 30.0)),
            accounting=Accounting(document.get("accounting", Accounting.FULL_PID.value)),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelError):
            raise
        raise ModelError(f"Invalid design document: {e}")
