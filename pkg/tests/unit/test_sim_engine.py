"""Unit tests for the hybrid closed-loop simulator."""

import math
from dataclasses import replace

import numpy as np
import pytest

from cglp_toolbox.loop_shaping import (
    ControllerFamily,
    PlantModel,
    builtin_plant,
    design_tracking_precision,
)
from cglp_toolbox.model_core import (
    TWO_PI,
    ElementKind,
    ElementSpec,
    ModelError,
    StateSpace,
    linear_response,
    make_element,
)
from cglp_toolbox.sim_engine import (
    Discretization,
    FeedforwardConfig,
    NoiseConfig,
    ReferenceConfig,
    SimConfig,
    SimulationError,
    _has_limit_cycle,
    _has_reset_cycle,
    discretize,
    make_feedforward,
    make_reference,
    metrics,
    simulate,
    simulate_element,
)

OMEGA_C = TWO_PI * 100.0


def _short_config(**overrides) -> SimConfig:
    cfg = SimConfig(
        dt=1e-4,
        duration=0.5,
        reference=ReferenceConfig(
            peak_to_peak=1e-3, period=0.05, prefilter_corner=TWO_PI * 250.0
        ),
        noise=NoiseConfig(amplitude=0.0),
    )
    return replace(cfg, **overrides)


@pytest.fixture(scope="module")
def plant() -> PlantModel:
    return builtin_plant()


class TestDiscretize:
    """Test discretization of an integrator."""

    @pytest.mark.parametrize(
        "method, gamma0, gamma1",
        [
            (Discretization.ZOH, 0.1, 0.0),
            (Discretization.FOH, 0.1, 0.05),
            (Discretization.TUSTIN, 0.1, 0.05),
        ],
    )
    def test_integrator(self, method: Discretization, gamma0: float, gamma1: float) -> None:
        """Test Phi and input matrices of 1/s."""
        integrator = StateSpace(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]])
        d = discretize(integrator, 0.1, method)
        assert d.Phi[0, 0] == pytest.approx(1.0)
        assert d.Gamma0[0, 0] == pytest.approx(gamma0)
        assert d.Gamma1[0, 0] == pytest.approx(gamma1)

    def test_first_order_zoh(self) -> None:
        """Test the exact ZOH pole of a first-order lag."""
        lag = StateSpace(A=[[-2.0]], B=[[2.0]], C=[[1.0]], D=[[0.0]])
        d = discretize(lag, 0.05)
        assert d.Phi[0, 0] == pytest.approx(math.exp(-0.1))
        assert d.Gamma0[0, 0] == pytest.approx(1.0 - math.exp(-0.1))

    def test_bad_step(self) -> None:
        """Test error for dt <= 0."""
        with pytest.raises(ModelError, match="dt must be > 0"):
            discretize(StateSpace(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]]), 0.0)


class TestSimConfig:
    """Test simulation settings validation."""

    def test_too_short(self) -> None:
        """Test error for fewer than 10 reference periods."""
        with pytest.raises(ModelError, match="shorter than 10 reference periods"):
            SimConfig(duration=1.0)

    def test_prefilter_too_slow(self) -> None:
        """Test error for a prefilter below 10x the reference fundamental."""
        with pytest.raises(ModelError, match="Prefilter corner"):
            ReferenceConfig(period=0.05, prefilter_corner=TWO_PI * 50.0)

    def test_negative_noise(self) -> None:
        """Test error for a negative noise amplitude."""
        with pytest.raises(ModelError, match="Noise amplitude"):
            NoiseConfig(amplitude=-1.0)

    def test_precision_variant(self) -> None:
        """Test the precision run drops the reference and keeps the rest."""
        cfg = _short_config(noise=NoiseConfig(amplitude=5e-6, seed=3))
        precision = cfg.precision_variant()
        assert not precision.reference.enabled
        assert precision.noise.amplitude == 5e-6
        assert not np.any(make_reference(precision))

    def test_sample_count(self) -> None:
        """Test both end points are sampled."""
        assert _short_config().n_samples == 5001

    @pytest.mark.parametrize("fraction", [0.0, 1.5])
    def test_pole_fraction_bounds(self, fraction: float) -> None:
        """Test error for a pole fraction outside (0, 1]."""
        with pytest.raises(ModelError, match="max_pole_fraction must lie in"):
            _short_config(max_pole_fraction=fraction)


class TestReference:
    """Test the prefiltered triangle reference."""

    def test_bounds(self) -> None:
        """Test the reference stays within its stroke and reaches the top."""
        r = make_reference(_short_config())
        assert r[0] == 0.0
        assert r.min() >= -1e-12
        assert r.max() <= 1e-3 * 1.0001
        assert r.max() > 0.9e-3


class TestFeedforward:
    """Test the plant-inverse feedforward."""

    def test_low_frequency_inverse(self, plant: PlantModel) -> None:
        """Test C_ff G is unity well below the filter corner."""
        ff = make_feedforward(plant, TWO_PI * 1000.0)
        omega = TWO_PI * 1.0
        assert abs(linear_response(ff, omega) * plant.response(omega)) == pytest.approx(
            1.0, rel=1e-3
        )

    def test_frf_plant_rejected(self) -> None:
        """Test error for a plant without a transfer function."""
        frf = PlantModel(name="frf", frf_omegas=np.array([1.0, 2.0]), frf_values=np.array([1.0, 1.0]))
        with pytest.raises(ModelError, match="no transfer function"):
            make_feedforward(frf, TWO_PI * 1000.0)


class TestSimulateElement:
    """Test the open-loop reset stepper."""

    def test_clegg_integrator_resets_at_crossing(self) -> None:
        """Test a full reset zeroes the output at the sign change."""
        ci = make_element(ElementSpec(kind=ElementKind.CI, gamma=0.0))
        t = np.arange(1000) * 1e-3
        response = simulate_element(ci, np.sin(TWO_PI * t), 1e-3)
        assert len(response.reset_indices) == 1
        k = response.reset_indices[0]
        assert response.u[k] == 0.0
        assert response.u_pre[k] > 0.0

    def test_resets_disabled(self) -> None:
        """Test no reset fires when resets are disabled."""
        ci = make_element(ElementSpec(kind=ElementKind.CI, gamma=0.0))
        t = np.arange(1000) * 1e-3
        response = simulate_element(ci, np.sin(TWO_PI * t), 1e-3, resets_enabled=False)
        assert response.reset_indices == ()
        assert np.array_equal(response.u, response.u_pre)


class TestSimulate:
    """Test closed-loop runs on the builtin plant."""

    def test_no_reset_matches_disabled_resets(self, plant: PlantModel) -> None:
        """Test gamma = 1 gives the same trace with resets on or off."""
        design = design_tracking_precision(
            plant, OMEGA_C, 30.0, family=ControllerFamily.CGLP_GFORE, gamma=1.0
        )
        on = simulate(design, plant, _short_config())
        off = simulate(design, plant, _short_config(resets_enabled=False))
        assert on.reset_count == 0
        assert np.array_equal(on.y, off.y)
        assert np.array_equal(on.u, off.u)

    def test_cglp_resets(self, plant: PlantModel) -> None:
        """Test a partially resetting CgLp fires resets and tracks."""
        design = design_tracking_precision(
            plant, OMEGA_C, 30.0, family=ControllerFamily.CGLP_GFORE, gamma=0.6
        )
        cfg = _short_config(noise=NoiseConfig(amplitude=1e-6, seed=1))
        trace = simulate(design, plant, cfg)
        assert trace.reset_count > 0
        assert len(trace.reset_times) == trace.reset_count
        result = metrics(trace, settle_skip=0.1)
        assert result.e_rms < 1e-4
        assert result.e_max_abs >= result.e_rms
        assert result.reset_count <= trace.reset_count

    def test_tracking_error_is_small(self, plant: PlantModel) -> None:
        """Test the linear loop with feedforward tracks the triangle."""
        trace = simulate(design_tracking_precision(plant, OMEGA_C, 30.0), plant, _short_config())
        assert metrics(trace, settle_skip=0.1).e_rms < 1e-4

    def test_noise_is_seeded(self, plant: PlantModel) -> None:
        """Test one seed reproduces a noisy precision run."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        cfg = _short_config(noise=NoiseConfig(amplitude=5e-6, seed=11)).precision_variant()
        first = simulate(design, plant, cfg)
        second = simulate(design, plant, cfg)
        assert np.array_equal(first.y, second.y)
        assert np.max(np.abs(first.noise)) <= 5e-6
        assert not np.any(first.r)

    def test_divergence_keeps_partial_trace(self, plant: PlantModel) -> None:
        """Test an unstable loop stops with the samples simulated so far."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        cfg = _short_config()
        with pytest.raises(SimulationError, match="diverged") as excinfo:
            simulate(design, plant.scaled(100.0), cfg)
        trace = excinfo.value.trace
        assert trace is not None
        assert 0 < len(trace.t) < cfg.n_samples

    def test_sampling_too_slow(self, plant: PlantModel) -> None:
        """Test error when a controller pole is too fast for the step."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        with pytest.raises(SimulationError, match="0.2 of the Nyquist frequency"):
            simulate(design, plant, _short_config(dt=1e-3))

    def test_pole_fraction_is_configurable(self, plant: PlantModel) -> None:
        """Test a 1 kHz low-pass passes at Nyquist/5 and fails at a tenth of Nyquist."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        assert simulate(design, plant, _short_config()).t.size == 5001
        with pytest.raises(SimulationError, match="0.1 of the Nyquist frequency"):
            simulate(design, plant, _short_config(max_pole_fraction=0.1))

    def test_frf_plant_rejected(self, plant: PlantModel) -> None:
        """Test error for a plant without a state-space model."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        frf = PlantModel(name="frf", frf_omegas=np.array([1.0, 2.0]), frf_values=np.array([1.0, 1.0]))
        with pytest.raises(ModelError, match="FRF data only"):
            simulate(design, frf, _short_config())


class TestMetrics:
    """Test error metrics."""

    def test_empty_window(self, plant: PlantModel) -> None:
        """Test error when settle_skip covers the whole run."""
        trace = simulate(design_tracking_precision(plant, OMEGA_C, 30.0), plant, _short_config())
        with pytest.raises(ModelError, match="No samples after"):
            metrics(trace, settle_skip=1.0)

    def test_output_error(self, plant: PlantModel) -> None:
        """Test the precision metric ignores the injected noise."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0)
        cfg = _short_config(noise=NoiseConfig(amplitude=5e-6, seed=2)).precision_variant()
        trace = simulate(design, plant, cfg)
        measured = metrics(trace, settle_skip=0.1)
        output = metrics(trace, settle_skip=0.1, use_output_error=True)
        assert output.e_rms < measured.e_rms


class TestLimitCycleDetection:
    """Test the spectral and reset-based limit-cycle detectors."""

    T = np.arange(0.1, 1.0, 1e-4)
    PERIOD = 0.05

    def test_line_off_the_reference_harmonics(self) -> None:
        """Test a sine at 37 Hz is flagged against a 20 Hz reference."""
        rng = np.random.default_rng(0)
        x = np.sin(TWO_PI * 37.0 * self.T) + 1e-3 * rng.standard_normal(self.T.size)
        assert _has_limit_cycle(x, 1e4, 20.0)

    def test_reference_harmonic_is_ignored(self) -> None:
        """Test a sine at the second reference harmonic is not flagged."""
        rng = np.random.default_rng(0)
        x = np.sin(TWO_PI * 40.0 * self.T) + 1e-3 * rng.standard_normal(self.T.size)
        assert not _has_limit_cycle(x, 1e4, 20.0)

    def test_white_noise(self) -> None:
        """Test a noise floor peak is not taken for a line."""
        rng = np.random.default_rng(4)
        assert not _has_limit_cycle(rng.uniform(-1.0, 1.0, self.T.size), 1e4, 20.0)

    def test_mid_ramp_resets(self) -> None:
        """Test steady resets halfway along every ramp are flagged."""
        resets = (np.arange(4, 40) + 0.5) * 0.5 * self.PERIOD
        err = 1e-6 * np.sin(TWO_PI * self.T / self.PERIOD)
        assert _has_reset_cycle(resets, self.T, err, self.PERIOD)

    def test_turnaround_resets(self) -> None:
        """Test resets at the triangle corners are not a limit cycle."""
        resets = np.arange(4, 40) * 0.5 * self.PERIOD
        err = 1e-6 * np.sin(TWO_PI * self.T / self.PERIOD)
        assert not _has_reset_cycle(resets, self.T, err, self.PERIOD)

    def test_decaying_error(self) -> None:
        """Test mid-ramp resets with a dying error are not flagged."""
        resets = (np.arange(4, 40) + 0.5) * 0.5 * self.PERIOD
        err = 1e-6 * np.exp(-5.0 * self.T) * np.sin(TWO_PI * self.T / self.PERIOD)
        assert not _has_reset_cycle(resets, self.T, err, self.PERIOD)

    def test_too_few_resets(self) -> None:
        """Test a handful of resets is not enough evidence."""
        resets = (np.arange(4, 9) + 0.5) * 0.5 * self.PERIOD
        err = 1e-6 * np.sin(TWO_PI * self.T / self.PERIOD)
        assert not _has_reset_cycle(resets, self.T, err, self.PERIOD)


def _testbench_config(**overrides) -> SimConfig:
    return _short_config(duration=1.0, noise=NoiseConfig(amplitude=5e-6, seed=7), **overrides)


def _tracking(plant: PlantModel, family: ControllerFamily, gamma: float, cfg: SimConfig):
    design = design_tracking_precision(plant, OMEGA_C, 30.0, family=family, gamma=gamma)
    trace = simulate(design, plant, cfg)
    return metrics(trace, settle_skip=0.1, reference_frequency=1.0 / cfg.reference.period)


class TestTestbenchTrends:
    """Test tracking and precision trends of the reset designs against the linear loop."""

    @pytest.fixture(scope="class")
    def linear(self, plant: PlantModel):
        return _tracking(plant, ControllerFamily.LINEAR, 1.0, _testbench_config())

    @pytest.mark.parametrize("gamma", [0.4, 0.6])
    def test_cglp_tracks_no_worse(self, plant: PlantModel, linear, gamma: float) -> None:
        """Test a partially resetting CgLp tracks at least as well as the linear loop."""
        result = _tracking(plant, ControllerFamily.CGLP_GFORE, gamma, _testbench_config())
        assert result.e_rms <= linear.e_rms

    def test_reset_integrator_cycles_with_detuned_feedforward(self, plant: PlantModel) -> None:
        """Test a full-reset integrator limit cycles on a 10% detuned plant inverse."""
        cfg = _testbench_config(feedforward=FeedforwardConfig(detune=1.1))
        linear = _tracking(plant, ControllerFamily.LINEAR, 1.0, cfg)
        reset = _tracking(plant, ControllerFamily.RESET_INTEGRATOR, 0.0, cfg)
        assert reset.limit_cycle_flag
        assert not linear.limit_cycle_flag
        assert reset.e_rms > linear.e_rms

    @pytest.mark.parametrize("gamma", [0.4, 0.6])
    def test_cglp_precision_no_worse(self, plant: PlantModel, gamma: float) -> None:
        """Test noise-only output error of a CgLp is at most the linear loop's."""
        cfg = _testbench_config().precision_variant()
        errors = {}
        for family, g in ((ControllerFamily.LINEAR, 1.0), (ControllerFamily.CGLP_GFORE, gamma)):
            design = design_tracking_precision(plant, OMEGA_C, 30.0, family=family, gamma=g)
            trace = simulate(design, plant, cfg)
            errors[family] = metrics(trace, settle_skip=0.1, use_output_error=True).e_rms
        assert errors[ControllerFamily.CGLP_GFORE] <= errors[ControllerFamily.LINEAR]


class TestStepSize:
    """Test the tracking error is insensitive to the simulation step."""

    @pytest.mark.parametrize(
        "family, gamma", [(ControllerFamily.LINEAR, 1.0), (ControllerFamily.CGLP_GFORE, 0.6)]
    )
    def test_halving_dt(self, plant: PlantModel, family: ControllerFamily, gamma: float) -> None:
        """Test halving dt moves e_rms by under 5% (ZOH adds half a step of delay)."""
        design = design_tracking_precision(plant, OMEGA_C, 30.0, family=family, gamma=gamma)
        coarse = _short_config(subsample_resets=True)
        fine = replace(coarse, dt=5e-5)
        e_coarse = metrics(simulate(design, plant, coarse), settle_skip=0.1).e_rms
        e_fine = metrics(simulate(design, plant, fine), settle_skip=0.1).e_rms
        assert e_fine == pytest.approx(e_coarse, rel=0.05)
