"""
Fixed-step hybrid simulation of reset control loops.

The plant is advanced by exact zero-order-hold discretization; controller and
feedforward use the configured method (zoh, foh or tustin), always on their
physical state so that a reset can act on it. A reset fires at sample k when
the sampled error changes sign (e_k e_{k-1} < 0) or hits zero exactly, and
replaces the controller state by A_rho x before the output is computed.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, signal

from .loop_shaping import ControllerDesign, PlantModel, controller_realization
from .model_core import (
    TWO_PI,
    ModelError,
    ResetController,
    StateSpace,
    as_reset_controller,
    polynomial_in_scaled_s,
    transfer_function,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-4
DIVERGENCE_FACTOR = 1e3
NM = 1e-9
MAX_POLE_FRACTION = 0.2
MIN_CYCLE_RESETS = 8
LINE_POWER_SHARE = 0.05


class Discretization(str, Enum):
    ZOH = "zoh"
    FOH = "foh"
    TUSTIN = "tustin"


class SimulationError(Exception):
    """Raised on divergence or when a model cannot be discretized at the step size."""

    def __init__(self, message: str, trace: Optional["SimulationTrace"] = None) -> None:
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ReferenceConfig:
    """Triangle reference from 0 to ``peak_to_peak`` metres; 0 disables the reference."""

    peak_to_peak: float = 1e-3
    period: float = 0.5
    prefilter_corner: float = TWO_PI * 20.0

    def __post_init__(self) -> None:
        if self.peak_to_peak < 0.0:
            raise ModelError(f"peak_to_peak must be >= 0, got {self.peak_to_peak}")
        if not self.period > 0.0:
            raise ModelError(f"period must be > 0, got {self.period}")
        if self.peak_to_peak > 0.0 and self.prefilter_corner < 10.0 * self.fundamental:
            raise ModelError(
                f"Prefilter corner {self.prefilter_corner:g} rad/s must be at least 10x the "
                f"reference fundamental {self.fundamental:g} rad/s"
            )

    @property
    def enabled(self) -> bool:
        return self.peak_to_peak > 0.0

    @property
    def fundamental(self) -> float:
        return TWO_PI / self.period


@dataclass(frozen=True)
class NoiseConfig:
    """Uniform sensor noise on [-amplitude, amplitude] metres."""

    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.amplitude < 0.0:
            raise ModelError(f"Noise amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class FeedforwardConfig:
    enabled: bool = True
    lpf_corner: float = TWO_PI * 1000.0
    lpf_order: int = 3
    detune: float = 1.0

    def __post_init__(self) -> None:
        if not self.lpf_corner > 0.0:
            raise ModelError(f"Feedforward corner must be > 0, got {self.lpf_corner}")
        if not self.detune > 0.0:
            raise ModelError(f"Feedforward detune must be > 0, got {self.detune}")


@dataclass(frozen=True)
class SimConfig:
    """
    Simulation settings; times in seconds.

    ``quantization`` rounds the measured position to a multiple of that many
    metres (0 disables). ``subsample_resets`` locates each crossing between
    samples and resets the state there. ``max_pole_fraction`` bounds every
    pole magnitude as a fraction of the Nyquist frequency pi/dt.
    """

    dt: float = DEFAULT_DT
    duration: float = 5.0
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    feedforward: FeedforwardConfig = field(default_factory=FeedforwardConfig)
    discretization: Discretization = Discretization.ZOH
    quantization: float = 0.0
    resets_enabled: bool = True
    subsample_resets: bool = False
    divergence_factor: float = DIVERGENCE_FACTOR
    max_pole_fraction: float = MAX_POLE_FRACTION

    def __post_init__(self) -> None:
        object.__setattr__(self, "discretization", Discretization(self.discretization))
        if not self.dt > 0.0:
            raise ModelError(f"dt must be > 0, got {self.dt}")
        if not self.duration > 0.0:
            raise ModelError(f"duration must be > 0, got {self.duration}")
        if self.reference.enabled and self.duration < 10.0 * self.reference.period * (1 - 1e-9):
            raise ModelError(
                f"duration {self.duration:g} s is shorter than 10 reference periods"
            )
        if self.quantization < 0.0:
            raise ModelError(f"quantization must be >= 0, got {self.quantization}")
        if not 0.0 < self.max_pole_fraction <= 1.0:
            raise ModelError(f"max_pole_fraction must lie in (0, 1], got {self.max_pole_fraction}")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1

    @property
    def default_settle_skip(self) -> float:
        return 2.0 * self.reference.period

    def precision_variant(self) -> "SimConfig":
        """Same settings with the reference made zero (noise-only precision run)."""
        return replace(self, reference=replace(self.reference, peak_to_peak=0.0))


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    noise: np.ndarray
    reset_indices: Tuple[int, ...] = ()
    reset_times: Tuple[float, ...] = ()

    @property
    def reset_count(self) -> int:
        return len(self.reset_indices)


@dataclass(frozen=True)
class Metrics:
    e_rms: float
    e_max_abs: float
    reset_count: int
    limit_cycle_flag: bool


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """
    x_{k+1} = Phi x_k + Gamma0 u_k + Gamma1 (u_{k+1} - u_k),  y_k = C x_k + D u_k.

    Gamma1 is zero for zero-order hold.
    """

    Phi: np.ndarray
    Gamma0: np.ndarray
    Gamma1: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float
    method: Discretization

    @property
    def n_states(self) -> int:
        return int(self.Phi.shape[0])


@dataclass(frozen=True, eq=False)
class ElementResponse:
    """Open-loop output of a reset controller; ``u_pre`` is the output before any reset at k."""

    u: np.ndarray
    u_pre: np.ndarray
    reset_indices: Tuple[int, ...]


def _check_sampling(
    system: StateSpace, dt: float, what: str, fraction: float = MAX_POLE_FRACTION
) -> None:
    """Poles up to ``fraction`` of the Nyquist frequency pass, the limit itself included."""
    if system.n_states == 0:
        return
    limit = fraction * math.pi / dt
    fastest = float(np.max(np.abs(linalg.eigvals(system.A))))
    if fastest > limit * (1.0 + 1e-9):
        raise SimulationError(
            f"{what} has a pole at {fastest / TWO_PI:.1f} Hz, above {fraction:g} of the "
            f"Nyquist frequency ({limit / TWO_PI:.1f} Hz) for dt={dt:g} s"
        )


def discretize(
    system: StateSpace, dt: float, method: Discretization = Discretization.ZOH
) -> DiscreteSystem:
    """
    Discretize keeping the continuous-time state coordinates.

    Raises:
        ModelError: If dt <= 0
    """
    if not dt > 0.0:
        raise ModelError(f"dt must be > 0, got {dt}")
    method = Discretization(method)
    A, B = system.A, system.B
    n, m = system.n_states, system.n_inputs
    if n == 0:
        empty = np.zeros((0, m))
        return DiscreteSystem(np.zeros((0, 0)), empty, empty, system.C, system.D, dt, method)

    if method is Discretization.ZOH:
        M = np.zeros((n + m, n + m))
        M[:n, :n], M[:n, n:] = A, B
        E = linalg.expm(M * dt)
        Phi, Gamma0, Gamma1 = E[:n, :n], E[:n, n:], np.zeros((n, m))
    elif method is Discretization.FOH:
        M = np.zeros((n + 2 * m, n + 2 * m))
        M[:n, :n], M[:n, n : n + m] = A, B
        M[n : n + m, n + m :] = np.eye(m)
        E = linalg.expm(M * dt)
        Phi, Gamma0, Gamma1 = E[:n, :n], E[:n, n : n + m], E[:n, n + m :] / dt
    else:
        left = np.eye(n) - 0.5 * dt * A
        Phi = linalg.solve(left, np.eye(n) + 0.5 * dt * A)
        Gamma_t = linalg.solve(left, 0.5 * dt * B)
        Gamma0, Gamma1 = 2.0 * Gamma_t, Gamma_t
    return DiscreteSystem(Phi, Gamma0, Gamma1, system.C, system.D, dt, method)


def make_feedforward(
    plant: PlantModel, lpf_corner: float, lpf_order: int = 3, detune: float = 1.0
) -> StateSpace:
    """
    C_ff(s) = (detune G(s))^-1 / (s/lpf_corner + 1)^lpf_order.

    Raises:
        ModelError: For FRF-only or non-minimum-phase plants, or when C_ff is not strictly proper
    """
    if plant.num is None or plant.den is None:
        raise ModelError(f"Plant {plant.name} has no transfer function to invert")
    num_p = np.trim_zeros(plant.num, "f")
    if num_p.size > 1 and np.any(np.roots(num_p).real >= 0.0):
        raise ModelError(f"Plant {plant.name} is not minimum phase")
    lpf = np.array([1.0])
    for _ in range(lpf_order):
        lpf = np.polymul(lpf, polynomial_in_scaled_s([1.0, 1.0], lpf_corner))
    num = np.asarray(plant.den, dtype=float)
    den = np.polymul(detune * num_p, lpf)
    if num.size >= den.size:
        raise ModelError(
            f"Feedforward is not strictly proper with a filter of order {lpf_order}"
        )
    return transfer_function(num, den)


def make_reference(cfg: SimConfig) -> np.ndarray:
    """
    Triangle from 0 up to the peak-to-peak value and back, passed through a
    critically damped fourth-order prefilter (zero-order-hold discretized).
    """
    ref = cfg.reference
    t = np.arange(cfg.n_samples) * cfg.dt
    if not ref.enabled:
        return np.zeros_like(t)
    triangle = 0.5 * ref.peak_to_peak * (signal.sawtooth(ref.fundamental * t, width=0.5) + 1.0)
    prefilter = transfer_function(
        [1.0], polynomial_in_scaled_s([1.0, 4.0, 6.0, 4.0, 1.0], ref.prefilter_corner)
    )
    d = discretize(prefilter, cfg.dt)
    _, out, _ = signal.dlsim((d.Phi, d.Gamma0, d.C, d.D, cfg.dt), triangle)
    return np.ravel(out)


def _crossed(e: float, e_prev: Optional[float]) -> bool:
    return e_prev is not None and (e * e_prev < 0.0 or e == 0.0)


class _ResetStepper:
    """Advances a discretized reset controller one sample at a time."""

    def __init__(
        self,
        ctrl: ResetController,
        dt: float,
        method: Discretization,
        resets_enabled: bool = True,
        subsample: bool = False,
    ) -> None:
        self._ctrl = ctrl
        self._d = discretize(ctrl.base, dt, method)
        self._resets = resets_enabled and not ctrl.resets_trivially
        self._subsample = subsample and self._resets
        self._A_rho = np.asarray(ctrl.A_rho)
        self._C = np.asarray(ctrl.base.C)[0]
        self._D = float(ctrl.base.D[0, 0])
        self._dt = dt
        self.x = np.zeros(ctrl.n_states)
        self._x_prev = self.x.copy()
        self._e_prev: Optional[float] = None

    def output(self, e: float) -> float:
        return float(self._C @ self.x) + self._D * e

    def maybe_reset(self, e: float) -> Optional[float]:
        """Apply the reset law at the current sample; returns the crossing instant offset."""
        if not self._resets or not _crossed(e, self._e_prev):
            return None
        offset = 0.0
        if self._subsample and self._e_prev is not None and e != 0.0:
            fraction = self._e_prev / (self._e_prev - e)
            offset = -(1.0 - fraction) * self._dt
            self.x = self._reset_between(fraction)
        else:
            self.x = self._A_rho @ self.x
        return offset

    def _reset_between(self, fraction: float) -> np.ndarray:
        """Re-run the last step, resetting at the interpolated crossing (zero-order hold)."""
        assert self._e_prev is not None
        u = np.array([self._e_prev])
        head = discretize(self._ctrl.base, fraction * self._dt)
        x_mid = head.Phi @ self._x_prev + head.Gamma0 @ u
        x_mid = self._A_rho @ x_mid
        tail = discretize(self._ctrl.base, (1.0 - fraction) * self._dt)
        return tail.Phi @ x_mid + tail.Gamma0 @ u

    def advance(self, e: float, e_next: float) -> None:
        self._x_prev = self.x
        d = self._d
        self.x = d.Phi @ self.x + d.Gamma0[:, 0] * e + d.Gamma1[:, 0] * (e_next - e)
        self._e_prev = e


def simulate_element(
    ctrl: ResetController,
    e: np.ndarray,
    dt: float,
    method: Discretization = Discretization.ZOH,
    resets_enabled: bool = True,
    subsample_resets: bool = False,
) -> ElementResponse:
    """Drive a reset controller open loop with a sampled input."""
    ctrl = as_reset_controller(ctrl)
    e = np.asarray(e, dtype=float)
    stepper = _ResetStepper(ctrl, dt, Discretization(method), resets_enabled, subsample_resets)
    u = np.zeros_like(e)
    u_pre = np.zeros_like(e)
    resets: List[int] = []
    for k in range(len(e)):
        u_pre[k] = stepper.output(e[k])
        if stepper.maybe_reset(e[k]) is not None:
            resets.append(k)
        u[k] = stepper.output(e[k])
        e_next = e[k + 1] if k + 1 < len(e) else e[k]
        stepper.advance(e[k], e_next)
    return ElementResponse(u=u, u_pre=u_pre, reset_indices=tuple(resets))


def simulate(design: ControllerDesign, plant: PlantModel, cfg: SimConfig) -> SimulationTrace:
    """
    Closed-loop run: triangle reference through the prefilter, feedforward
    C_ff r added to the controller output, uniform sensor noise on the
    measurement, e = r - (y + noise).

    Raises:
        ModelError: For FRF-only or non strictly proper plants
        SimulationError: On divergence (carrying the partial trace) or sampling violations
    """
    plant_ss = plant.state_space
    if plant_ss.D[0, 0] != 0.0:
        raise ModelError("Closed-loop simulation needs a strictly proper plant")
    ctrl = controller_realization(design)
    _check_sampling(plant_ss, cfg.dt, "Plant", cfg.max_pole_fraction)
    _check_sampling(ctrl.base, cfg.dt, "Controller", cfg.max_pole_fraction)

    n = cfg.n_samples
    t = np.arange(n) * cfg.dt
    r = make_reference(cfg)
    rng = np.random.default_rng(cfg.noise.seed)
    noise = (
        rng.uniform(-cfg.noise.amplitude, cfg.noise.amplitude, n)
        if cfg.noise.amplitude > 0.0
        else np.zeros(n)
    )

    plant_d = discretize(plant_ss, cfg.dt, Discretization.ZOH)
    C_p = np.asarray(plant_ss.C)[0]
    stepper = _ResetStepper(
        ctrl, cfg.dt, cfg.discretization, cfg.resets_enabled, cfg.subsample_resets
    )
    ff_d: Optional[DiscreteSystem] = None
    if cfg.feedforward.enabled and cfg.reference.enabled:
        ff = make_feedforward(
            plant, cfg.feedforward.lpf_corner, cfg.feedforward.lpf_order, cfg.feedforward.detune
        )
        _check_sampling(ff, cfg.dt, "Feedforward", cfg.max_pole_fraction)
        ff_d = discretize(ff, cfg.dt, cfg.discretization)
    x_ff = np.zeros(0 if ff_d is None else ff_d.n_states)

    scale = max(cfg.reference.peak_to_peak, cfg.noise.amplitude) or 1.0
    limit = cfg.divergence_factor * scale
    q = cfg.quantization

    def measured_error(k: int, x_plant: np.ndarray) -> Tuple[float, float]:
        y_k = float(C_p @ x_plant)
        sensed = round(y_k / q) * q if q > 0.0 else y_k
        return y_k, float(r[k] - sensed - noise[k])

    y = np.zeros(n)
    e = np.zeros(n)
    u = np.zeros(n)
    resets: List[int] = []
    reset_times: List[float] = []
    x_p = np.zeros(plant_ss.n_states)
    y_k, e_k = measured_error(0, x_p)

    for k in range(n):
        if not (math.isfinite(y_k) and abs(y_k) <= limit):
            trace = SimulationTrace(
                t[:k], r[:k], y[:k], e[:k], u[:k], noise[:k], tuple(resets), tuple(reset_times)
            )
            logger.error(f"Simulation diverged at t={t[k]:.4f} s (|y|={abs(y_k):.3e} m)")
            raise SimulationError(f"Simulation diverged at t={t[k]:.4f} s", trace)
        offset = stepper.maybe_reset(e_k)
        if offset is not None:
            resets.append(k)
            reset_times.append(float(t[k] + offset))
        u_k = stepper.output(e_k)
        if ff_d is not None:
            u_k += float(ff_d.C[0] @ x_ff) + float(ff_d.D[0, 0]) * r[k]
        y[k], e[k], u[k] = y_k, e_k, u_k

        x_p = plant_d.Phi @ x_p + plant_d.Gamma0[:, 0] * u_k
        if k + 1 < n:
            y_next, e_next = measured_error(k + 1, x_p)
            r_next = r[k + 1]
        else:
            y_next, e_next, r_next = y_k, e_k, r[k]
        stepper.advance(e_k, e_next)
        if ff_d is not None:
            x_ff = ff_d.Phi @ x_ff + ff_d.Gamma0[:, 0] * r[k] + ff_d.Gamma1[:, 0] * (r_next - r[k])
        y_k, e_k = y_next, e_next

    logger.debug(f"Simulated {n} samples, {len(resets)} resets")
    return SimulationTrace(t, r, y, e, u, noise, tuple(resets), tuple(reset_times))


def _has_limit_cycle(
    x: np.ndarray, fs: float, reference_frequency: Optional[float], ratio: float = 3.0
) -> bool:
    """
    Dominant spectral line (amplitude > ratio x the median of neighbouring
    bins, carrying at least LINE_POWER_SHARE of the non-DC power) at a
    frequency that is not a harmonic of the reference.
    """
    if x.size < 64 or not np.any(x):
        return False
    freqs, psd = signal.welch(x - np.mean(x), fs=fs, window="hann", nperseg=x.size)
    resolution = freqs[1] - freqs[0]
    amplitude = np.sqrt(psd)
    total = float(np.sum(psd[1:]))
    for idx in np.argsort(amplitude[1:])[::-1][:5] + 1:
        if reference_frequency:
            harmonic = round(freqs[idx] / reference_frequency)
            if harmonic >= 1 and abs(freqs[idx] - harmonic * reference_frequency) <= 1.5 * resolution:
                continue
        lo, hi = max(1, idx - 20), min(amplitude.size, idx + 21)
        neighbours = np.concatenate([amplitude[lo : max(lo, idx - 2)], amplitude[idx + 3 : hi]])
        line = float(np.sum(psd[max(1, idx - 2) : idx + 3]))
        if line < LINE_POWER_SHARE * total:
            return False
        if neighbours.size and amplitude[idx] > ratio * np.median(neighbours):
            logger.debug(f"Dominant line at {freqs[idx]:.2f} Hz")
            return True
        return False
    return False


def _has_reset_cycle(
    reset_times: np.ndarray, t: np.ndarray, err: np.ndarray, reference_period: float
) -> bool:
    """
    Sustained reset-driven oscillation on a triangle reference.

    Flags when the settled resets repeat with a steady period (half the
    full-cycle intervals t[i+2] - t[i] within 25% of their median), the
    error does not decay (last-quarter RMS at least half the first-quarter
    RMS) and the resets fall mid-ramp, between 1/8 and 3/8 of a period after
    a turnaround, in at least 3/4 of the half-periods.
    """
    if reset_times.size < MIN_CYCLE_RESETS or err.size < 8:
        return False
    cycles = reset_times[2:] - reset_times[:-2]
    median = float(np.median(cycles))
    dt = float(t[1] - t[0])
    if median < 10.0 * dt:
        return False
    if np.mean(np.abs(cycles - median) <= 0.25 * median) < 0.5:
        return False

    quarter = err.size // 4
    first = float(np.sqrt(np.mean(err[:quarter] ** 2)))
    last = float(np.sqrt(np.mean(err[-quarter:] ** 2)))
    if not last >= 0.5 * first:
        return False

    half = 0.5 * reference_period
    phase = np.mod(reset_times, half)
    mid_ramp = (phase >= 0.25 * half) & (phase <= 0.75 * half)
    start, stop = math.ceil(t[0] / half), math.floor(t[-1] / half)
    if stop <= start:
        return False
    halves = np.arange(start, stop)
    hit = np.unique(np.floor(reset_times[mid_ramp] / half).astype(int))
    share = np.isin(halves, hit).mean()
    logger.debug(f"Reset cycle: median period {median * 1e3:.2f} ms, mid-ramp share {share:.2f}")
    return bool(share >= 0.75)


def metrics(
    trace: SimulationTrace,
    settle_skip: float,
    use_output_error: bool = False,
    reference_frequency: Optional[float] = None,
) -> Metrics:
    """
    RMS and peak error after ``settle_skip`` seconds.

    Args:
        trace: Simulation trace
        settle_skip: Seconds discarded at the start
        use_output_error: Use r - y instead of the measured error (precision runs)
        reference_frequency: Reference fundamental in Hz, whose harmonics are
            not counted as limit cycles; also enables the reset-based detector

    Raises:
        ModelError: If nothing is left after settle_skip
    """
    mask = trace.t > settle_skip
    if not np.any(mask):
        raise ModelError(f"No samples after settle_skip={settle_skip:g} s")
    err = (trace.r - trace.y)[mask] if use_output_error else trace.e[mask]
    e_rms = float(np.sqrt(np.mean(err**2)))
    e_max = float(np.max(np.abs(err)))
    dt = float(trace.t[1] - trace.t[0]) if trace.t.size > 1 else 1.0
    settled = set(np.flatnonzero(mask).tolist())
    limit_cycle = _has_limit_cycle(err, 1.0 / dt, reference_frequency)
    if not limit_cycle and reference_frequency:
        reset_times = np.asarray(trace.reset_times, dtype=float)
        limit_cycle = _has_reset_cycle(
            reset_times[reset_times > settle_skip], trace.t[mask], err, 1.0 / reference_frequency
        )
    return Metrics(
        e_rms=e_rms,
        e_max_abs=e_max,
        reset_count=sum(1 for k in trace.reset_indices if k in settled),
        limit_cycle_flag=limit_cycle,
    )
