"""
Empirical frequency-response estimation and the first-harmonic oracle.

``estimate_frf`` is the H1 estimator (cross-spectrum over input auto-spectrum,
Welch averaged) with magnitude-squared coherence. ``first_harmonic`` drives a
reset controller with a sinusoid in the time domain and projects the steady
output on sin/cos, giving an independent check of the describing function.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, signal

from .describing_function import FrequencyGrid, FrequencyResponse, df_response
from .model_core import (
    ElementKind,
    ElementSpec,
    EvaluationError,
    ResetController,
    as_reset_controller,
    make_element,
)
from .sim_engine import Discretization, simulate_element

logger = logging.getLogger(__name__)

MIN_SEGMENTS = 4
MIN_ORACLE_CYCLES = 20
ORACLE_SAMPLES_PER_HALF_PERIOD = 200
ORACLE_GAMMAS = (-1.0, -0.5, 0.0, 0.4, 0.8, 1.0)
ORACLE_BETAS = (0.5, 1.0)


class SpectralError(ValueError):
    """Raised for invalid records or excitation parameters."""

    pass


@dataclass(frozen=True)
class WindowConfig:
    """Welch segmentation; ``length`` defaults to one second of samples."""

    length: Optional[int] = None
    overlap: float = 0.5
    taper: str = "hann"

    def __post_init__(self) -> None:
        if self.length is not None and self.length < 8:
            raise SpectralError(f"Window length must be >= 8 samples, got {self.length}")
        if not 0.0 <= self.overlap < 1.0:
            raise SpectralError(f"Overlap must lie in [0, 1), got {self.overlap}")


@dataclass(frozen=True)
class ChirpConfig:
    f0: float
    f1: float
    duration: float
    amplitude: float = 1.0


@dataclass(frozen=True, eq=False)
class SpectralEstimate:
    response: FrequencyResponse
    window: WindowConfig
    segments: int
    excitation: Optional[ChirpConfig] = None

    @property
    def low_confidence(self) -> bool:
        return self.segments < MIN_SEGMENTS


@dataclass(frozen=True)
class OracleRow:
    family: str
    gamma: float
    beta_r: Optional[float]
    omega: float
    df_mag: float
    oracle_mag: float
    df_phase: float
    oracle_phase: float

    @property
    def err(self) -> float:
        """Relative magnitude error."""
        return abs(self.oracle_mag - self.df_mag) / self.df_mag

    @property
    def phase_err(self) -> float:
        return abs((self.oracle_phase - self.df_phase + 180.0) % 360.0 - 180.0)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "gamma": self.gamma,
            "beta_r": self.beta_r,
            "omega": self.omega,
            "df_mag": self.df_mag,
            "oracle_mag": self.oracle_mag,
            "df_phase": self.df_phase,
            "oracle_phase": self.oracle_phase,
            "err": self.err,
            "phase_err": self.phase_err,
        }


ORACLE_COLUMNS = (
    "family",
    "gamma",
    "beta_r",
    "omega",
    "df_mag",
    "oracle_mag",
    "df_phase",
    "oracle_phase",
    "err",
    "phase_err",
)


def _segmentation(size: int, fs: float, window: WindowConfig) -> Tuple[Dict[str, Any], int]:
    """Welch keyword arguments and segment count for a record of ``size`` samples."""
    nperseg = window.length or int(round(fs))
    if nperseg > size:
        logger.warning(f"Window of {nperseg} samples exceeds the record; using {size}")
        nperseg = size
    noverlap = int(nperseg * window.overlap)
    segments = 1 + (size - nperseg) // (nperseg - noverlap)
    return dict(fs=fs, window=window.taper, nperseg=nperseg, noverlap=noverlap), segments


def power_spectrum(
    x: np.ndarray, fs: float, window: Optional[WindowConfig] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One-sided Welch power spectral density with the segmentation of
    ``estimate_frf``; integrating it over frequency gives the mean square.

    Returns:
        Tuple of (frequencies in Hz, density in units^2/Hz)

    Raises:
        SpectralError: On an empty or non-finite record, or fs <= 0
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise SpectralError(f"Record must be 1-D with at least 8 samples, got shape {x.shape}")
    if not fs > 0.0:
        raise SpectralError(f"fs must be > 0, got {fs}")
    if not np.all(np.isfinite(x)):
        raise SpectralError("Record contains non-finite samples")
    kwargs, _ = _segmentation(x.size, fs, window or WindowConfig())
    return signal.welch(x, **kwargs)


def estimate_frf(
    x: np.ndarray,
    y: np.ndarray,
    fs: float,
    window: Optional[WindowConfig] = None,
    excitation: Optional[ChirpConfig] = None,
) -> SpectralEstimate:
    """
    H1 estimate Sxy/Sxx and coherence |Sxy|^2/(Sxx Syy).

    The DC bin and bins where the input auto-spectrum vanishes are dropped.

    Raises:
        SpectralError: On unequal or non-finite records, or fs <= 0
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    window = window or WindowConfig()
    if x.ndim != 1 or x.shape != y.shape:
        raise SpectralError(f"Records must be 1-D of equal length, got {x.shape} and {y.shape}")
    if not fs > 0.0:
        raise SpectralError(f"fs must be > 0, got {fs}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SpectralError("Records contain non-finite samples")

    kwargs, segments = _segmentation(x.size, fs, window)
    nperseg = kwargs["nperseg"]
    f, S_xy = signal.csd(x, y, **kwargs)
    _, S_xx = signal.welch(x, **kwargs)
    _, S_yy = signal.welch(y, **kwargs)

    keep = (f > 0.0) & (S_xx > 1e-12 * np.max(S_xx))
    if not np.any(keep):
        raise SpectralError("Input auto-spectrum is zero in every bin")
    S_xy, S_xx, S_yy = S_xy[keep], S_xx[keep], S_yy[keep]
    H = S_xy / S_xx
    with np.errstate(divide="ignore", invalid="ignore"):
        coherence = np.where(S_yy > 0.0, np.abs(S_xy) ** 2 / (S_xx * S_yy), 0.0)
    coherence = np.clip(coherence, 0.0, 1.0)
    if segments < MIN_SEGMENTS:
        logger.warning(f"Only {segments} Welch segments; estimate is low confidence")
    response = FrequencyResponse(
        FrequencyGrid(2.0 * math.pi * f[keep]), H, coherence=coherence
    )
    return SpectralEstimate(
        response=response,
        window=WindowConfig(int(nperseg), window.overlap, window.taper),
        segments=segments,
        excitation=excitation,
    )


def make_chirp(
    f0: float, f1: float, duration: float, fs: float, amplitude: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Linear chirp from f0 to f1 Hz with continuous phase.

    Returns:
        Tuple of (t, x)

    Raises:
        SpectralError: If f0 <= 0, duration <= 0 or f1 > fs/2.5
    """
    if not f0 > 0.0:
        raise SpectralError(f"f0 must be > 0, got {f0}")
    if not duration > 0.0:
        raise SpectralError(f"duration must be > 0, got {duration}")
    if f1 > fs / 2.5:
        raise SpectralError(f"f1={f1:g} Hz aliases at fs={fs:g} Hz (limit fs/2.5)")
    t = np.arange(int(round(duration * fs)) + 1) / fs
    return t, amplitude * signal.chirp(t, f0=f0, t1=duration, f1=f1, method="linear")


def chirp_experiment(
    ctrl: ResetController,
    excitation: ChirpConfig,
    fs: float,
    window: Optional[WindowConfig] = None,
) -> SpectralEstimate:
    """Drive a reset controller with a chirp and estimate its frequency response."""
    _, x = make_chirp(excitation.f0, excitation.f1, excitation.duration, fs, excitation.amplitude)
    y = simulate_element(as_reset_controller(ctrl), x, 1.0 / fs).u
    return estimate_frf(x, y, fs, window, excitation)


def _settling_cycles(ctrl: ResetController, omega: float) -> int:
    """Cycles needed for the base system transient to decay by e^-10."""
    if ctrl.n_states == 0:
        return 0
    rates = -linalg.eigvals(ctrl.base.A).real
    decaying = rates[rates > 1e-12]
    if decaying.size == 0:
        return 0
    return int(math.ceil(10.0 / float(np.min(decaying)) * omega / (2.0 * math.pi)))


def first_harmonic(
    ctrl: ResetController,
    omega: float,
    cycles: int = 40,
    samples_per_half_period: int = ORACLE_SAMPLES_PER_HALF_PERIOD,
) -> complex:
    """
    First-harmonic gain of a reset controller driven by sin(omega t).

    Zero crossings land on samples, so resets happen exactly at the crossing.
    The transient part and the first half of ``cycles`` are discarded; the
    rest is projected on sin/cos over whole periods, with reset samples taken
    as the mean of the pre- and post-reset outputs.

    Raises:
        SpectralError: For cycles < 20 or too few samples per period
        EvaluationError: If the response diverges
    """
    if cycles < MIN_ORACLE_CYCLES:
        raise SpectralError(f"At least {MIN_ORACLE_CYCLES} cycles are needed, got {cycles}")
    if samples_per_half_period < 100:
        raise SpectralError("At least 200 samples per period are needed")
    ctrl = as_reset_controller(ctrl)
    half = samples_per_half_period
    per_cycle = 2 * half
    warmup = _settling_cycles(ctrl, omega) + cycles // 2
    total = warmup + cycles - cycles // 2
    dt = math.pi / (half * omega)
    k = np.arange(total * per_cycle + 1)
    e = np.sin(math.pi * k / half)
    e[np.abs(e) < 1e-12] = 0.0

    response = simulate_element(ctrl, e, dt, Discretization.FOH)
    if not np.all(np.isfinite(response.u)):
        raise EvaluationError(f"Time-domain response diverged at omega={omega:g} rad/s", omega)
    y = response.u.copy()
    resets = list(response.reset_indices)
    y[resets] = 0.5 * (response.u_pre[resets] + response.u[resets])

    start = warmup * per_cycle
    window = slice(start, total * per_cycle)
    phase = math.pi * k[window] / half
    M = total * per_cycle - start
    a = 2.0 / M * float(np.sum(y[window] * np.sin(phase)))
    b = 2.0 / M * float(np.sum(y[window] * np.cos(phase)))
    return complex(a, b)


def oracle_lattice(
    families: Sequence[ElementKind] = (ElementKind.CI, ElementKind.GFORE, ElementKind.GSORE),
    gammas: Sequence[float] = ORACLE_GAMMAS,
    omegas: Optional[Sequence[float]] = None,
    beta_rs: Sequence[float] = ORACLE_BETAS,
    cycles: int = 40,
) -> List[OracleRow]:
    """
    Describing function against first-harmonic simulation for elements at
    omega_r = 1 rad/s. CI with gamma = -1 has no describing function and is skipped.
    """
    grid = np.logspace(-1.0, 1.5, 10) if omegas is None else np.asarray(omegas, dtype=float)
    rows: List[OracleRow] = []
    for kind in families:
        kind = ElementKind(kind)
        for gamma in gammas:
            if kind is ElementKind.CI and gamma == -1.0:
                logger.info("Skipping CI with gamma=-1 (singular reset map)")
                continue
            for beta_r in beta_rs if kind.order == 2 else (None,):
                spec = ElementSpec(
                    kind=kind,
                    omega_r=None if kind is ElementKind.CI else 1.0,
                    beta_r=beta_r,
                    gamma=gamma,
                )
                ctrl = make_element(spec)
                for omega in grid:
                    df = df_response(ctrl, float(omega))
                    oracle = first_harmonic(ctrl, float(omega), cycles)
                    rows.append(
                        OracleRow(
                            family=kind.value,
                            gamma=float(gamma),
                            beta_r=beta_r,
                            omega=float(omega),
                            df_mag=abs(df),
                            oracle_mag=abs(oracle),
                            df_phase=math.degrees(np.angle(df)),
                            oracle_phase=math.degrees(np.angle(oracle)),
                        )
                    )
    worst = max((row.err for row in rows), default=0.0)
    logger.info(f"Oracle lattice: {len(rows)} points, worst magnitude error {worst:.2e}")
    return rows
