"""
Constant-in-gain Lead-in-phase (CgLp) compensators.

A CgLp element is a generalized reset lag (GFORE or GSORE) in series with a
linear lead of the same order. The lead zero cancels the lag pole in gain,
while the reduced phase lag of the reset element leaves a net broadband
phase lead between omega_r and omega_f.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .describing_function import (
    FrequencyGrid,
    compute_alpha,
    df_response,
    df_sweep,
)
from .model_core import (
    TWO_PI,
    ElementKind,
    ElementSpec,
    EvaluationError,
    ModelError,
    ResetController,
    StateSpace,
    make_element,
    polynomial_in_scaled_s,
    series,
    transfer_function,
)

logger = logging.getLogger(__name__)

MIN_TAMING_RATIO = 10.0


class CgLpOrder(str, Enum):
    """Order of the reset lag and of the matching lead."""

    FIRST = "first"
    SECOND = "second"

    @property
    def lag_kind(self) -> ElementKind:
        return ElementKind.GFORE if self is CgLpOrder.FIRST else ElementKind.GSORE

    @property
    def n_r(self) -> int:
        return 1 if self is CgLpOrder.FIRST else 2


@dataclass(frozen=True)
class CgLpSpec:
    """
    CgLp parameters; frequencies in rad/s.

    ``gamma`` is restricted to [0, 1] unless ``allow_negative_gamma`` is set.
    ``alpha_correction`` off places the lag corner at omega_r instead of
    omega_r / alpha.
    """

    order: CgLpOrder
    omega_r: float
    omega_f: float
    gamma: float
    beta_r: Optional[float] = None
    allow_negative_gamma: bool = False
    alpha_correction: bool = True

    def __post_init__(self) -> None:
        order = CgLpOrder(self.order)
        object.__setattr__(self, "order", order)
        if not self.omega_r > 0.0:
            raise ModelError(f"omega_r must be > 0, got {self.omega_r}")
        if not self.omega_f >= MIN_TAMING_RATIO * self.omega_r * (1.0 - 1e-12):
            raise ModelError(
                f"omega_f must be at least {MIN_TAMING_RATIO:g} * omega_r, "
                f"got ratio {self.omega_f / self.omega_r:g}"
            )
        lowest = -1.0 if self.allow_negative_gamma else 0.0
        if not lowest <= self.gamma <= 1.0:
            raise ModelError(f"gamma must lie in [{lowest:g}, 1], got {self.gamma}")
        if order is CgLpOrder.SECOND:
            beta_r = 1.0 if self.beta_r is None else float(self.beta_r)
            if beta_r < 0.0:
                raise ModelError(f"beta_r must be >= 0, got {beta_r}")
            object.__setattr__(self, "beta_r", beta_r)
        elif self.beta_r is not None:
            raise ModelError("A first-order CgLp takes no damping coefficient")

    def lag_spec(self, omega_r: Optional[float] = None) -> ElementSpec:
        """The reset lag element, by default at the nominal corner."""
        return ElementSpec(
            kind=self.order.lag_kind,
            omega_r=self.omega_r if omega_r is None else omega_r,
            beta_r=self.beta_r,
            gamma=self.gamma,
        )


@dataclass(frozen=True, eq=False)
class CgLpElement:
    """A built CgLp: spec, corner shift and the composed reset realization."""

    spec: CgLpSpec
    alpha: float
    omega_r_alpha: float
    realization: ResetController


def lead_filter(spec: CgLpSpec) -> StateSpace:
    """(s/wr + 1)/(s/wf + 1), or its second-order counterpart with unity-damped poles."""
    if spec.order is CgLpOrder.FIRST:
        num = polynomial_in_scaled_s([1.0, 1.0], spec.omega_r)
        den = polynomial_in_scaled_s([1.0, 1.0], spec.omega_f)
    else:
        num = polynomial_in_scaled_s([1.0, 2.0 * float(spec.beta_r or 0.0), 1.0], spec.omega_r)
        den = polynomial_in_scaled_s([1.0, 2.0, 1.0], spec.omega_f)
    return transfer_function(num, den)


def build_cglp(spec: CgLpSpec, alpha: Optional[float] = None) -> CgLpElement:
    """
    Build a CgLp element with the lag corner shifted to omega_r / alpha.

    Args:
        spec: CgLp parameters
        alpha: Known corner shift; computed from the lag element when omitted

    Raises:
        AlphaOutOfRangeError: If the corner shift cannot be located
    """
    if spec.gamma == 1.0 or not spec.alpha_correction:
        alpha = 1.0
    elif alpha is None:
        alpha = compute_alpha(spec.lag_spec())
    omega_r_alpha = spec.omega_r / alpha
    lag = make_element(spec.lag_spec(omega_r_alpha))
    realization = series(lag, lead_filter(spec))
    logger.debug(
        f"CgLp {spec.order.value}: gamma={spec.gamma:g}, alpha={alpha:.4f}, "
        f"omega_r_alpha={omega_r_alpha / TWO_PI:.2f} Hz"
    )
    return CgLpElement(spec=spec, alpha=alpha, omega_r_alpha=omega_r_alpha, realization=realization)


def phase_lead_at(elem: CgLpElement, omega: float) -> float:
    """Describing-function phase of the CgLp in degrees (positive = lead)."""
    return math.degrees(np.angle(df_response(elem.realization, omega)))


def default_band(spec: CgLpSpec) -> Tuple[float, float]:
    return spec.omega_r, spec.omega_f / 10.0


def _band_grid(elem: CgLpElement, band: Optional[Tuple[float, float]], points: int) -> FrequencyGrid:
    lo, hi = default_band(elem.spec) if band is None else band
    spec = elem.spec
    tolerance = 1.0 + 1e-9
    if not (spec.omega_r / 10.0 <= lo * tolerance and hi <= spec.omega_f * tolerance and lo < hi):
        raise ModelError("Band must lie inside [omega_r/10, omega_f]")
    return FrequencyGrid(np.logspace(math.log10(lo), math.log10(hi), points))


def gain_flatness(
    elem: CgLpElement, band: Optional[Tuple[float, float]] = None, points: int = 100
) -> float:
    """
    Largest |magnitude| in dB of the describing function over a band.

    Raises:
        ModelError: If the band is outside [omega_r/10, omega_f]
        EvaluationError: If any grid point fails
    """
    response = df_sweep(elem.realization, _band_grid(elem, band, points))
    if response.failures:
        omega, reason = response.failures[0]
        raise EvaluationError(reason, omega)
    return float(np.max(np.abs(response.mag_db)))


def max_phase_lead(
    elem: CgLpElement, band: Optional[Tuple[float, float]] = None, points: int = 200
) -> float:
    """Largest describing-function phase lead in degrees over a band."""
    response = df_sweep(elem.realization, _band_grid(elem, band, points))
    return float(np.max(np.degrees(np.angle(response.values))))


def gamma_for_lead(
    order: CgLpOrder,
    target_deg: float,
    omega_ratio: float = 10.0,
    taming_ratio: float = 100.0,
    beta_r: Optional[float] = None,
) -> float:
    """
    Reset factor giving ``target_deg`` of lead at omega = omega_ratio * omega_r.

    Bisects the gamma -> lead curve on [0, 1]; lead grows as gamma falls.

    Raises:
        ModelError: If the target is outside the lead range reachable on [0, 1]
    """
    if order is CgLpOrder.SECOND and beta_r is None:
        beta_r = 1.0

    def lead(gamma: float) -> float:
        spec = CgLpSpec(
            order=order, omega_r=1.0, omega_f=taming_ratio, gamma=gamma, beta_r=beta_r
        )
        return phase_lead_at(build_cglp(spec), omega_ratio)

    lo, hi = 0.0, 1.0
    lead_lo, lead_hi = lead(lo), lead(hi)
    if not lead_hi <= target_deg <= lead_lo:
        raise ModelError(
            f"Lead of {target_deg:g} deg is outside [{lead_hi:.2f}, {lead_lo:.2f}] deg"
        )
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if lead(mid) > target_deg:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6:
            break
    return 0.5 * (lo + hi)


def cglp_spec_from_dict(document: dict) -> CgLpSpec:
    """
    Parse a CgLp spec document, e.g.
    ``{"order": "second", "omega_r_hz": 100, "omega_f_hz": 1000, "gamma": 0, "beta_r": 1}``.
    """
    try:
        order = CgLpOrder(str(document["order"]).lower())
        omega_r = TWO_PI * float(document["omega_r_hz"])
        omega_f = TWO_PI * float(document["omega_f_hz"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"Invalid CgLp spec: {e}")
    beta_r = document.get("beta_r")
    if order is CgLpOrder.FIRST:
        beta_r = None
    return CgLpSpec(
        order=order,
        omega_r=omega_r,
        omega_f=omega_f,
        gamma=float(document.get("gamma", 0.0)),
        beta_r=None if beta_r is None else float(beta_r),
        allow_negative_gamma=bool(document.get("allow_negative_gamma", False)),
        alpha_correction=bool(document.get("alpha_correction", True)),
    )


def cglp_spec_to_dict(spec: CgLpSpec) -> dict:
    document = {
        "order": spec.order.value,
        "omega_r_hz": spec.omega_r / TWO_PI,
        "omega_f_hz": spec.omega_f / TWO_PI,
        "gamma": spec.gamma,
    }
    if spec.beta_r is not None:
        document["beta_r"] = spec.beta_r
    if spec.allow_negative_gamma:
        document["allow_negative_gamma"] = True
    if not spec.alpha_correction:
        document["alpha_correction"] = False
    return document
