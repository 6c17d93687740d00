"""
Design-and-simulate campaigns behind the ``tables`` command.

A campaign designs one controller per (family, gamma) row at a fixed
bandwidth and one with the bandwidth raised to the baseline high-frequency
gain, checks quadratic stability of every design, and simulates the designs
of the selected mode for tracking (triangle reference with feedforward) and
precision (zero reference, injected noise). Each reset family is matched to
the high-frequency gain of its own gamma = 1 design. Rows run in a process pool; each
row is written to its own JSON file and the tables and ``report.json`` are
assembled once all rows have joined.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from .config import Config
from .io import write_json, write_rows_csv
from .loop_shaping import (
    DEFAULT_OMEGA_HIGH,
    Accounting,
    ControllerDesign,
    ControllerFamily,
    DesignError,
    DesignMode,
    PlantModel,
    bandwidth_violations,
    builtin_plant,
    design_bandwidth,
    design_from_dict,
    design_to_dict,
    design_tracking_precision,
    measure_crossover,
    openloop_gain_db,
)
from .model_core import TWO_PI, EvaluationError, ModelError
from .sim_engine import SimConfig, SimulationError, metrics, simulate
from .stability import DEFAULT_ITERATIONS, DEFAULT_RESTARTS, Backend, Verdict, check_design

logger = logging.getLogger(__name__)

ERROR_UNIT = 100e-9
BANDWIDTH_POLE_FRACTION = 0.5

SCALE_A_COLUMNS = (
    "family",
    "gamma",
    "scale_a",
    "ph_nl_deg",
    "alpha",
    "crossover_hz",
    "pm_deg",
    "stability",
    "status",
)
BANDWIDTH_COLUMNS = (
    "family",
    "gamma",
    "bandwidth_hz",
    "scale_a",
    "g_high_db",
    "stability",
    "status",
)
PERFORMANCE_COLUMNS = (
    "family",
    "gamma",
    "mode",
    "tracking_rms",
    "tracking_max",
    "precision_rms",
    "precision_max",
    "resets",
    "limit_cycle",
    "stability",
    "status",
)


@dataclass(frozen=True)
class CampaignSettings:
    """Everything a campaign row needs; picklable so rows can run in workers."""

    families: Tuple[ControllerFamily, ...]
    gammas: Tuple[float, ...]
    mode: DesignMode
    plant: PlantModel
    omega_c: float
    pm_deg: float = 30.0
    beta_r: float = 1.0
    accounting: Accounting = Accounting.FULL_PID
    omega_high: float = DEFAULT_OMEGA_HIGH
    sim: SimConfig = field(default_factory=SimConfig)
    seed: int = 0
    iterations: int = DEFAULT_ITERATIONS
    restarts: int = DEFAULT_RESTARTS
    backend: Backend = Backend.DESCENT
    output_dir: str = "out"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.families:
            raise ModelError("A campaign needs at least one controller family")
        if not self.gammas:
            raise ModelError("A campaign needs at least one gamma")
        for gamma in self.gammas:
            if not 0.0 <= gamma <= 1.0:
                raise ModelError(f"Campaign gammas must lie in [0, 1], got {gamma}")

    @classmethod
    def from_config(cls, config: Config) -> "CampaignSettings":
        """
        Build settings from a validated configuration.

        Raises:
            ModelError: If the FRF file of the plant section cannot be read
        """
        plant = (
            PlantModel.from_frf_csv(config.plant_frf)
            if config.plant_frf
            else builtin_plant(config.plant_builtin)
        )
        return cls(
            families=tuple(config.families),
            gammas=tuple(config.gammas),
            mode=config.mode,
            plant=plant,
            omega_c=TWO_PI * config.wc_hz,
            pm_deg=config.pm_deg,
            beta_r=config.beta_r,
            accounting=config.accounting,
            omega_high=TWO_PI * config.omega_high_hz,
            sim=config.sim_config,
            seed=config.seed,
            iterations=config.stability_iterations,
            restarts=config.stability_restarts,
            backend=config.stability_backend,
            output_dir=config.output_dir,
            workers=config.workers,
        )

    def row_keys(self) -> List[Tuple[ControllerFamily, float]]:
        """(family, gamma) pairs in table order; the linear family has one row at gamma 1."""
        keys: List[Tuple[ControllerFamily, float]] = []
        for family in self.families:
            gammas = (1.0,) if family is ControllerFamily.LINEAR else self.gammas
            for gamma in gammas:
                if (family, float(gamma)) not in keys:
                    keys.append((family, float(gamma)))
        return keys


@dataclass(frozen=True)
class RowTask:
    settings: CampaignSettings
    reference: ControllerDesign
    g_pre_db: float
    family: ControllerFamily
    gamma: float

    @property
    def name(self) -> str:
        return f"{self.family.value}-g{self.gamma:.2f}"


@dataclass
class CampaignReport:
    """
    Rows in table order plus the gamma = 1 designs the bandwidth designs of
    each family were matched to (``g_pre_db`` in dB at omega_high).
    """

    references: Dict[ControllerFamily, ControllerDesign]
    g_pre_db: Dict[ControllerFamily, float]
    rows: List[Dict[str, Any]]
    files: List[str] = field(default_factory=list)

    @property
    def bandwidth_violations(self) -> List[str]:
        """Steps where a family's bandwidth falls as gamma decreases."""
        designs = [
            design_from_dict(row["bandwidth"]["design"])
            for row in self.rows
            if row["bandwidth"] is not None
        ]
        return bandwidth_violations(designs)

    def results(self) -> Dict[str, Dict[str, Dict[str, Optional[float]]]]:
        """Per family and gamma: the figures the campaign tables compare, errors in 100 nm."""
        results: Dict[str, Dict[str, Dict[str, Optional[float]]]] = {}
        for row in self.rows:
            performance = row["performance"] or {}
            bandwidth = row["bandwidth"]
            tracking = row["tracking"]
            results.setdefault(row["family"], {})[f"{row['gamma']:g}"] = {
                "e_rms_tracking": performance.get("tracking_rms"),
                "e_rms_precision": performance.get("precision_rms"),
                "e_max_precision": performance.get("precision_max"),
                "bandwidth_hz": None if bandwidth is None else bandwidth["design"]["omega_c_hz"],
                "scale_a": None if tracking is None else tracking["design"]["scale_a"],
            }
        return results

    @property
    def failures(self) -> int:
        return sum(1 for row in self.rows if row["status"] != "ok")

    def to_dict(self, settings: CampaignSettings) -> Dict[str, Any]:
        return {
            "campaign": {
                "families": [f.value for f in settings.families],
                "gammas": list(settings.gammas),
                "mode": settings.mode.value,
                "plant": settings.plant.name,
                "wc_hz": settings.omega_c / TWO_PI,
                "pm_deg": settings.pm_deg,
                "accounting": settings.accounting.value,
                "omega_high_hz": settings.omega_high / TWO_PI,
                "seed": settings.seed,
            },
            "references": {
                family.value: {"design": design_to_dict(design), "g_pre_db": self.g_pre_db[family]}
                for family, design in self.references.items()
            },
            "results": self.results(),
            "bandwidth_violations": self.bandwidth_violations,
            "rows": self.rows,
            "failures": self.failures,
        }


def _in_error_units(value: float) -> float:
    return value / ERROR_UNIT


def _design_stage(
    task: RowTask, design: ControllerDesign, with_crossover: bool
) -> Dict[str, Any]:
    settings = task.settings
    document: Dict[str, Any] = {"design": design_to_dict(design)}
    if with_crossover:
        omega, pm = measure_crossover(design, settings.plant)
        document["crossover_hz"] = omega / TWO_PI
        document["pm_deg"] = pm
    document["g_high_db"] = openloop_gain_db(design, settings.plant, settings.omega_high)
    if settings.plant.has_model:
        report = check_design(
            design,
            settings.plant,
            seed=settings.seed,
            iterations=settings.iterations,
            restarts=settings.restarts,
            backend=settings.backend,
        )
        document["stability"] = report.verdict.value
        document["stability_report"] = report.to_dict()
    else:
        document["stability"] = "not-checked"
    return document


def _performance_stage(task: RowTask, design: ControllerDesign) -> Dict[str, Any]:
    settings = task.settings
    sim = settings.sim
    if settings.mode is DesignMode.BANDWIDTH and sim.max_pole_fraction < BANDWIDTH_POLE_FRACTION:
        # Raised bandwidths put the low-pass corner past Nyquist/5 at the default step
        logger.warning(
            f"Row {task.name}: bandwidth designs are simulated with poles up to "
            f"{BANDWIDTH_POLE_FRACTION:g} of the Nyquist frequency"
        )
        sim = replace(sim, max_pole_fraction=BANDWIDTH_POLE_FRACTION)
    tracking_cfg = replace(sim, noise=replace(sim.noise, amplitude=0.0))
    precision_cfg = sim.precision_variant()
    reference_hz = 1.0 / sim.reference.period

    tracking = metrics(
        simulate(design, settings.plant, tracking_cfg),
        tracking_cfg.default_settle_skip,
        reference_frequency=reference_hz,
    )
    precision = metrics(
        simulate(design, settings.plant, precision_cfg),
        precision_cfg.default_settle_skip,
        use_output_error=True,
    )
    return {
        "tracking_rms": _in_error_units(tracking.e_rms),
        "tracking_max": _in_error_units(tracking.e_max_abs),
        "precision_rms": _in_error_units(precision.e_rms),
        "precision_max": _in_error_units(precision.e_max_abs),
        "resets": tracking.reset_count,
        "limit_cycle": tracking.limit_cycle_flag or precision.limit_cycle_flag,
    }


def run_row(task: RowTask) -> Dict[str, Any]:
    """
    Design, check and simulate one (family, gamma) row.

    Failures are recorded on the row (``status`` failed, with the stage and
    message) rather than raised, so the campaign continues.
    """
    settings = task.settings
    row: Dict[str, Any] = {
        "family": task.family.value,
        "gamma": task.gamma,
        "status": "ok",
        "error": None,
        "tracking": None,
        "bandwidth": None,
        "performance": None,
    }
    stage = "tracking design"
    try:
        tracking_design = design_tracking_precision(
            settings.plant,
            settings.omega_c,
            settings.pm_deg,
            family=task.family,
            gamma=task.gamma,
            beta_r=settings.beta_r,
            accounting=settings.accounting,
        )
        row["tracking"] = _design_stage(task, tracking_design, with_crossover=True)

        stage = "bandwidth design"
        bandwidth_design: Optional[ControllerDesign] = None
        try:
            bandwidth_design = design_bandwidth(
                settings.plant,
                task.reference,
                task.gamma,
                g_pre_db=task.g_pre_db,
                family=task.family,
                omega_high=settings.omega_high,
                beta_r=settings.beta_r,
            )
            row["bandwidth"] = _design_stage(task, bandwidth_design, with_crossover=False)
        except (DesignError, EvaluationError) as e:
            if settings.mode is DesignMode.BANDWIDTH:
                raise
            logger.warning(f"Row {task.name}: bandwidth design failed: {e}")
            row["bandwidth_error"] = str(e)

        stage = "simulation"
        selected = row["tracking"] if settings.mode is DesignMode.TRACKING else row["bandwidth"]
        design = tracking_design if settings.mode is DesignMode.TRACKING else bandwidth_design
        assert selected is not None and design is not None
        if selected["stability"] == Verdict.INFEASIBLE.value:
            row["status"] = "unstable"
            row["error"] = "base linear loop is not Hurwitz; simulation skipped"
        elif not settings.plant.has_model:
            row["error"] = "FRF-only plant; simulation skipped"
        else:
            row["performance"] = _performance_stage(task, design)
    except (DesignError, EvaluationError, SimulationError, ModelError) as e:
        logger.error(f"Row {task.name} failed during {stage}: {e}")
        row["status"] = "failed"
        row["error"] = f"{stage}: {e}"

    path = os.path.join(settings.output_dir, "rows", f"{task.name}.json")
    write_json(path, row)
    logger.info(f"Row {task.name} finished with status {row['status']}")
    return row


def _scale_a_rows(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    table = []
    for row in rows:
        entry: Dict[str, Any] = {"family": row["family"], "gamma": row["gamma"]}
        tracking = row["tracking"]
        if tracking is not None:
            entry.update(
                scale_a=tracking["design"]["scale_a"],
                ph_nl_deg=tracking["design"]["ph_nl_deg"],
                alpha=tracking["design"]["alpha"],
                crossover_hz=tracking["crossover_hz"],
                pm_deg=tracking["pm_deg"],
                stability=tracking["stability"],
            )
        entry["status"] = row["status"]
        table.append(entry)
    return table


def _bandwidth_rows(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    table = []
    for row in rows:
        entry: Dict[str, Any] = {"family": row["family"], "gamma": row["gamma"]}
        bandwidth = row["bandwidth"]
        if bandwidth is not None:
            entry.update(
                bandwidth_hz=bandwidth["design"]["omega_c_hz"],
                scale_a=bandwidth["design"]["scale_a"],
                g_high_db=bandwidth["g_high_db"],
                stability=bandwidth["stability"],
            )
        entry["status"] = row["status"]
        table.append(entry)
    return table


def _performance_rows(rows: List[Dict[str, Any]], mode: DesignMode) -> List[Dict[str, Any]]:
    table = []
    for row in rows:
        entry: Dict[str, Any] = {"family": row["family"], "gamma": row["gamma"], "mode": mode.value}
        if row["performance"] is not None:
            entry.update(row["performance"])
            entry["limit_cycle"] = int(entry["limit_cycle"])
        selected = row["tracking"] if mode is DesignMode.TRACKING else row["bandwidth"]
        if selected is not None:
            entry["stability"] = selected["stability"]
        entry["status"] = row["status"]
        table.append(entry)
    return table


def run_campaign(settings: CampaignSettings, table_format: str = "csv") -> CampaignReport:
    """
    Run every row of a campaign and write the tables and report.

    Args:
        settings: Campaign settings
        table_format: ``csv`` or ``json`` for the three tables

    Returns:
        CampaignReport with rows in table order

    Raises:
        DesignError: If a gamma = 1 reference design itself fails
    """
    references: Dict[ControllerFamily, ControllerDesign] = {}
    g_pre: Dict[ControllerFamily, float] = {}
    for family in settings.families:
        references[family] = design_tracking_precision(
            settings.plant,
            settings.omega_c,
            settings.pm_deg,
            family=family,
            gamma=1.0,
            beta_r=settings.beta_r,
            accounting=settings.accounting,
        )
        g_pre[family] = openloop_gain_db(references[family], settings.plant, settings.omega_high)
        logger.info(
            f"Campaign baseline {family.value}: a={references[family].scale_a:.4f}, "
            f"G_pre={g_pre[family]:.2f} dB at {settings.omega_high / TWO_PI:g} Hz"
        )

    tasks = [
        RowTask(settings, references[family], g_pre[family], family, gamma)
        for family, gamma in settings.row_keys()
    ]
    if settings.workers > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            rows = list(pool.map(run_row, tasks))
    else:
        rows = [run_row(task) for task in tasks]

    report = CampaignReport(references=references, g_pre_db=g_pre, rows=rows)
    out = settings.output_dir
    for name, columns, table in (
        ("table_scale_a", SCALE_A_COLUMNS, _scale_a_rows(rows)),
        ("table_bandwidth", BANDWIDTH_COLUMNS, _bandwidth_rows(rows)),
        ("table_performance", PERFORMANCE_COLUMNS, _performance_rows(rows, settings.mode)),
    ):
        path = os.path.join(out, f"{name}.{table_format}")
        if table_format == "json":
            write_json(path, {"columns": list(columns), "rows": table})
        else:
            write_rows_csv(path, columns, table)
        report.files.append(path)
    report_path = os.path.join(out, "report.json")
    write_json(report_path, report.to_dict(settings))
    report.files.append(report_path)

    if report.failures:
        logger.warning(f"Campaign finished with {report.failures} of {len(rows)} rows not ok")
    else:
        logger.info(f"Campaign finished: {len(rows)} rows")
    return report


def first_failure(report: CampaignReport) -> Optional[str]:
    """Error message of the first row that is not ok."""
    for row in report.rows:
        if row["status"] != "ok":
            return f"{row['family']} gamma={row['gamma']}: {row['error']}"
    return None
