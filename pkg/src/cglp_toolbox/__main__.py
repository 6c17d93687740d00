"""
Command-line entry point of the CgLp reset-control toolbox.

Subcommands cover element and CgLp frequency responses, CgLp-PID design,
stability certificates, closed-loop simulation, design/performance tables
and the time-domain validation of the describing function.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from .campaign import CampaignSettings, first_failure, run_campaign
from .cglp import CgLpOrder, CgLpSpec, build_cglp, cglp_spec_from_dict, cglp_spec_to_dict
from .config import Config, ConfigValidationError
from .describing_function import (
    FrequencyGrid,
    alpha_table,
    df_sweep,
    linear_sweep,
    log_grid,
)
from .io import (
    bode_rows,
    dumps_json,
    load_json,
    rows_to_csv,
    write_text,
    write_trace_csv,
)
from .logging_config import setup_logging
from .loop_shaping import (
    Accounting,
    ControllerDesign,
    ControllerFamily,
    DesignError,
    DesignMode,
    InfeasibleDesignError,
    PlantModel,
    builtin_plant,
    controller_realization,
    design_bandwidth,
    design_from_dict,
    design_to_dict,
    design_tracking_precision,
    measure_crossover,
    openloop_gain_db,
)
from .model_core import (
    TWO_PI,
    ElementKind,
    EvaluationError,
    ModelError,
    ResetController,
    element_spec_from_dict,
    make_element,
)
from .sim_engine import (
    NM,
    Discretization,
    FeedforwardConfig,
    NoiseConfig,
    ReferenceConfig,
    SimConfig,
    SimulationError,
    metrics,
    simulate,
)
from .spectral import ORACLE_COLUMNS, SpectralError, oracle_lattice
from .stability import DEFAULT_ITERATIONS, DEFAULT_RESTARTS, Backend, Verdict, check_design

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

DEFAULT_CAMPAIGN: Dict[str, Any] = {
    "campaign": {
        "families": ["reset-integrator", "cglp-gfore", "cglp-gsore"],
        "gammas": [1.0, 0.8, 0.6, 0.4, 0.2, 0.0],
        "mode": "tracking",
    },
    "application": {"logging": {"level": "WARNING"}, "output_dir": "out"},
}


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out:
        write_text(args.out, text)
        logger.info(f"Wrote {args.out}")
    else:
        sys.stdout.write(text)


def _emit_table(
    args: argparse.Namespace,
    columns: Sequence[str],
    rows: List[Dict[str, Any]],
    document: Optional[Dict[str, Any]] = None,
) -> None:
    """Rows as CSV, or as JSON (``document`` when given, the rows otherwise)."""
    if args.format == "json":
        _emit(args, dumps_json(document if document is not None else {"rows": rows}))
    else:
        _emit(args, rows_to_csv(columns, rows))


def _flatten(document: Dict[str, Any], prefix: str = "") -> List[Dict[str, Any]]:
    """Nested document as key/value rows with dotted keys."""
    rows: List[Dict[str, Any]] = []
    for key in sorted(document):
        value = document[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flatten(value, f"{name}."))
        else:
            rows.append({"key": name, "value": value})
    return rows


def _emit_document(args: argparse.Namespace, document: Dict[str, Any]) -> None:
    if args.format == "csv":
        _emit(args, rows_to_csv(("key", "value"), _flatten(document)))
    else:
        _emit(args, dumps_json(document))


def _grid(args: argparse.Namespace, default_min_hz: float, default_max_hz: float) -> FrequencyGrid:
    return log_grid(
        args.f_min if args.f_min is not None else default_min_hz,
        args.f_max if args.f_max is not None else default_max_hz,
        args.points,
    )


def _plant(args: argparse.Namespace) -> PlantModel:
    return PlantModel.from_frf_csv(args.plant_frf) if args.plant_frf else builtin_plant(args.plant)


def _design(args: argparse.Namespace, plant: PlantModel) -> ControllerDesign:
    """Design from --design JSON, else synthesized from the design flags."""
    if getattr(args, "design", None):
        return design_from_dict(load_json(args.design))
    family = ControllerFamily(args.family)
    if family is ControllerFamily.LINEAR and args.gamma != 1.0:
        raise ModelError("The linear family takes no reset factor; drop --gamma")
    omega_c = TWO_PI * args.wc_hz
    accounting = Accounting(args.accounting)
    if DesignMode(args.mode) is DesignMode.TRACKING:
        return design_tracking_precision(
            plant,
            omega_c,
            args.pm_deg,
            family=family,
            gamma=args.gamma,
            beta_r=args.beta_r,
            accounting=accounting,
        )
    reference = design_tracking_precision(
        plant,
        omega_c,
        args.pm_deg,
        family=family,
        gamma=1.0,
        beta_r=args.beta_r,
        accounting=accounting,
    )
    return design_bandwidth(
        plant,
        reference,
        args.gamma,
        g_pre_db=args.g_pre_db,
        family=family,
        omega_high=TWO_PI * args.omega_high_hz,
        beta_r=args.beta_r,
    )


def _controller_document(
    document: Dict[str, Any]
) -> Tuple[ResetController, Tuple[float, float], Dict[str, Any]]:
    """
    Controller, default band in Hz and extra output fields of a spec document:
    an element spec ("kind"), a CgLp spec ("order") or a design ("pid").
    """
    if "pid" in document:
        design = design_from_dict(document)
        f_c = design.bandwidth_hz
        return controller_realization(design), (f_c / 100.0, f_c * 100.0), {}
    if "order" in document:
        element = build_cglp(cglp_spec_from_dict(document))
        f_r, f_f = element.spec.omega_r / TWO_PI, element.spec.omega_f / TWO_PI
        return element.realization, (f_r / 10.0, f_f * 10.0), {"alpha": element.alpha}
    spec = element_spec_from_dict(document)
    if spec.omega_r is None:
        return make_element(spec), (0.1, 1000.0), {}
    f_r = spec.omega_r / TWO_PI
    return make_element(spec), (f_r / 100.0, f_r * 100.0), {}


def _bode_output(
    args: argparse.Namespace,
    ctrl: ResetController,
    band: Tuple[float, float],
    extra: Dict[str, Any],
) -> int:
    grid = _grid(args, *band)
    response = df_sweep(ctrl, grid)
    baseline = linear_sweep(ctrl, response.grid) if args.baseline else None
    columns, rows = bode_rows(response, baseline)
    document = dict(extra)
    document["rows"] = rows
    document["failures"] = [[omega / TWO_PI, reason] for omega, reason in response.failures]
    _emit_table(args, columns, rows, document)
    return EXIT_OK


def cmd_bode(args: argparse.Namespace) -> int:
    """Describing-function sweep of an element, CgLp or design document."""
    if args.spec:
        ctrl, band, extra = _controller_document(load_json(args.spec))
    else:
        if args.kind is None:
            raise ModelError("bode needs --spec or --kind")
        ctrl, band, extra = _controller_document(
            {"kind": args.kind, "omega_r_hz": args.fr_hz, "beta_r": args.beta_r, "gamma": args.gamma}
        )
    return _bode_output(args, ctrl, band, extra)


def cmd_cglp_bode(args: argparse.Namespace) -> int:
    """Describing-function sweep of a CgLp built from flags or a spec file."""
    if args.spec:
        spec = cglp_spec_from_dict(load_json(args.spec))
    else:
        order = CgLpOrder(args.order)
        spec = CgLpSpec(
            order=order,
            omega_r=TWO_PI * args.fr_hz,
            omega_f=TWO_PI * args.ff_hz,
            gamma=args.gamma,
            beta_r=args.beta_r if order is CgLpOrder.SECOND else None,
            allow_negative_gamma=args.allow_negative_gamma,
            alpha_correction=not args.no_alpha,
        )
    document = cglp_spec_to_dict(spec)
    ctrl, band, extra = _controller_document(document)
    extra["spec"] = document
    return _bode_output(args, ctrl, band, extra)


def cmd_alpha_table(args: argparse.Namespace) -> int:
    """Corner-shift fractions of GFORE and GSORE for a list of reset factors."""
    rows = [
        {"gamma": row.gamma, "alpha_gfore": row.alpha_gfore, "alpha_gsore": row.alpha_gsore}
        for row in alpha_table(args.gammas, beta_r=args.beta_r)
    ]
    _emit_table(args, ("gamma", "alpha_gfore", "alpha_gsore"), rows)
    return EXIT_OK


def cmd_design(args: argparse.Namespace) -> int:
    """Synthesize a CgLp-PID and report it with its measured crossover."""
    plant = _plant(args)
    design = _design(args, plant)
    document = design_to_dict(design)
    omega, pm = measure_crossover(design, plant)
    document["measured"] = {
        "crossover_hz": omega / TWO_PI,
        "pm_deg": pm,
        "g_high_db": openloop_gain_db(design, plant, TWO_PI * args.omega_high_hz),
    }
    _emit_document(args, document)
    return EXIT_OK


def cmd_stability_check(args: argparse.Namespace) -> int:
    """
    Quadratic stability certificate search for a design closed around the plant.

    The design is made for the nominal plant; --gain-scale perturbs only the
    plant the loop is closed around.
    """
    plant = _plant(args)
    design = _design(args, plant)
    report = check_design(
        design,
        plant.scaled(args.gain_scale) if args.gain_scale != 1.0 else plant,
        seed=args.seed,
        iterations=args.iterations,
        restarts=args.restarts,
        backend=Backend(args.backend),
    )
    _emit_document(args, report.to_dict())
    if report.verdict is Verdict.INFEASIBLE:
        print("Error: closed loop is not stable (base linear loop is not Hurwitz)", file=sys.stderr)
        return EXIT_INFEASIBLE
    if report.verdict is Verdict.UNKNOWN:
        logger.warning("No certificate found within the iteration budget")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    """Closed-loop simulation of a design with tracking or precision settings."""
    plant = _plant(args)
    design = _design(args, plant)
    cfg = SimConfig(
        dt=args.dt,
        duration=args.duration,
        reference=ReferenceConfig(
            peak_to_peak=args.peak_to_peak_m,
            period=args.period,
            prefilter_corner=TWO_PI * args.prefilter_hz,
        ),
        noise=NoiseConfig(amplitude=args.noise_nm * NM, seed=args.seed),
        feedforward=FeedforwardConfig(
            enabled=not args.no_feedforward,
            lpf_corner=TWO_PI * args.ff_lpf_hz,
            detune=args.detune,
        ),
        discretization=Discretization(args.discretization),
        quantization=args.quantization_nm * NM,
        resets_enabled=not args.no_resets,
        subsample_resets=args.subsample_resets,
        max_pole_fraction=args.max_pole_fraction,
    )
    if args.precision:
        cfg = cfg.precision_variant()
    trace = simulate(design, plant, cfg)
    if args.trace:
        write_trace_csv(args.trace, trace)
        logger.info(f"Wrote {len(trace.t)} trace rows to {args.trace}")
    result = metrics(
        trace,
        cfg.default_settle_skip if args.settle_skip is None else args.settle_skip,
        use_output_error=args.precision,
        reference_frequency=None if args.precision else 1.0 / cfg.reference.period,
    )
    _emit_document(
        args,
        {
            "e_rms_m": result.e_rms,
            "e_max_abs_m": result.e_max_abs,
            "reset_count": result.reset_count,
            "limit_cycle_flag": result.limit_cycle_flag,
        },
    )
    return EXIT_OK


def cmd_tables(args: argparse.Namespace) -> int:
    """Run a design/stability/simulation campaign and write its tables."""
    config = Config(args.config) if args.config else Config.from_dict(DEFAULT_CAMPAIGN)
    config = config.with_overrides(
        {
            "application.seed": args.seed_override,
            "application.output_dir": args.out,
            "application.workers": args.workers,
        }
    )
    if args.log_level is None:
        setup_logging(config.log_level, config.log_format)
    report = run_campaign(CampaignSettings.from_config(config), table_format=args.format)
    for path in report.files:
        print(path)
    if report.failures:
        logger.warning(
            f"{report.failures} campaign rows were not ok, first: {first_failure(report)}"
        )
    return EXIT_OK


def cmd_df_validate(args: argparse.Namespace) -> int:
    """Describing function against first-harmonic simulation on a lattice of elements."""
    try:
        families = [ElementKind(f.strip().upper()) for f in args.families]
    except ValueError as e:
        raise ModelError(f"Unknown element kind: {e}")
    omegas = None
    if args.points is not None:
        if args.points < 2:
            raise ModelError("--points must be at least 2")
        omegas = [10.0 ** (-1.0 + 2.5 * k / (args.points - 1)) for k in range(args.points)]
    rows = oracle_lattice(families, args.gammas, omegas, cycles=args.cycles)
    documents = [row.to_dict() for row in rows]
    worst_mag = max((row.err for row in rows), default=0.0)
    worst_phase = max((row.phase_err for row in rows), default=0.0)
    _emit_table(
        args,
        ORACLE_COLUMNS,
        documents,
        {"rows": documents, "worst_err": worst_mag, "worst_phase_err": worst_phase},
    )
    if worst_mag > args.tolerance or worst_phase > args.phase_tolerance:
        print(
            f"Error: describing function deviates from simulation "
            f"(magnitude {worst_mag:.2%}, phase {worst_phase:.2f} deg)",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    return EXIT_OK


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(parser: argparse.ArgumentParser, default_format: str) -> None:
    parser.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    parser.add_argument("--out", type=str, default=None, help="Output file (default: stdout)")
    parser.add_argument(
        "--format", choices=["csv", "json"], default=default_format, help="Output format"
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Log level (default: WARNING, or the configuration file's level)",
    )


def _add_grid(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--f-min", type=float, default=None, help="Lowest frequency in Hz")
    parser.add_argument("--f-max", type=float, default=None, help="Highest frequency in Hz")
    parser.add_argument("--points", type=int, default=400, help="Grid points (default: 400)")
    parser.add_argument(
        "--baseline", action="store_true", help="Add the linear (no reset) response columns"
    )


def _add_plant(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--plant", default="spyder-1a", help="Builtin plant (default: spyder-1a)")
    parser.add_argument("--plant-frf", default=None, help="Measured plant FRF as a bode CSV")


def _add_design(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--design", default=None, help="Design JSON written by the design command")
    parser.add_argument(
        "--mode", choices=[m.value for m in DesignMode], default="tracking", help="Design mode"
    )
    parser.add_argument(
        "--family",
        choices=[f.value for f in ControllerFamily],
        default=ControllerFamily.CGLP_GFORE.value,
        help="Controller family (default: cglp-gfore)",
    )
    parser.add_argument("--gamma", type=float, default=1.0, help="Reset factor (default: 1)")
    parser.add_argument("--wc-hz", type=float, default=100.0, help="Bandwidth in Hz (default: 100)")
    parser.add_argument("--pm-deg", type=float, default=30.0, help="Phase margin (default: 30)")
    parser.add_argument("--beta-r", type=float, default=1.0, help="GSORE damping (default: 1)")
    parser.add_argument(
        "--accounting",
        choices=[a.value for a in Accounting],
        default=Accounting.FULL_PID.value,
        help="PID phase accounting (default: full-pid)",
    )
    parser.add_argument(
        "--omega-high-hz",
        type=float,
        default=1e4,
        help="Frequency of the precision gain G_pre in Hz (default: 10000)",
    )
    parser.add_argument(
        "--g-pre-db", type=float, default=None, help="Target G_pre (default: linear baseline)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cglp-toolbox",
        description="CgLp reset-control toolbox: describing functions, CgLp-PID design, "
        "stability certificates and closed-loop simulation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s bode --kind GSORE --fr-hz 100 --gamma 0 --baseline --out gsore.csv
  %(prog)s cglp-bode --order second --fr-hz 100 --ff-hz 10000 --gamma 0
  %(prog)s design --mode bandwidth --family cglp-gfore --gamma 0 --out design.json
  %(prog)s stability-check --design design.json
  %(prog)s simulate --design design.json --trace trace.csv
  %(prog)s tables --config config.yaml --out results
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bode", help="Describing-function sweep of a controller spec")
    _add_common(p, "csv")
    _add_grid(p)
    p.add_argument("--spec", default=None, help="Element, CgLp or design JSON")
    p.add_argument("--kind", default=None, help="Element kind (CI, FORE, GFORE, SORE, GSORE)")
    p.add_argument("--fr-hz", type=float, default=None, help="Element corner in Hz")
    p.add_argument("--beta-r", type=float, default=None, help="Damping of second-order kinds")
    p.add_argument("--gamma", type=float, default=0.0, help="Reset factor (default: 0)")
    p.set_defaults(handler=cmd_bode)

    p = sub.add_parser("cglp-bode", help="Describing-function sweep of a CgLp element")
    _add_common(p, "csv")
    _add_grid(p)
    p.add_argument("--spec", default=None, help="CgLp spec JSON")
    p.add_argument("--order", choices=[o.value for o in CgLpOrder], default="first")
    p.add_argument("--fr-hz", type=float, default=100.0, help="Lead start in Hz (default: 100)")
    p.add_argument("--ff-hz", type=float, default=1000.0, help="Taming corner in Hz (default: 1000)")
    p.add_argument("--gamma", type=float, default=0.0, help="Reset factor (default: 0)")
    p.add_argument("--beta-r", type=float, default=1.0, help="GSORE damping (default: 1)")
    p.add_argument("--allow-negative-gamma", action="store_true")
    p.add_argument("--no-alpha", action="store_true", help="Skip the corner-shift correction")
    p.set_defaults(handler=cmd_cglp_bode)

    p = sub.add_parser("alpha-table", help="Corner-shift fraction against reset factor")
    _add_common(p, "csv")
    p.add_argument(
        "--gammas",
        type=_float_list,
        default=[1.0, 0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8],
        help="Comma-separated reset factors",
    )
    p.add_argument("--beta-r", type=float, default=1.0, help="GSORE damping (default: 1)")
    p.set_defaults(handler=cmd_alpha_table)

    p = sub.add_parser("design", help="Synthesize a CgLp-PID controller")
    _add_common(p, "json")
    _add_plant(p)
    _add_design(p)
    p.set_defaults(handler=cmd_design)

    p = sub.add_parser("stability-check", help="Search a quadratic stability certificate")
    _add_common(p, "json")
    _add_plant(p)
    _add_design(p)
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.add_argument("--backend", choices=[b.value for b in Backend], default="descent")
    p.add_argument("--gain-scale", type=float, default=1.0, help="Multiply the plant gain")
    p.set_defaults(handler=cmd_stability_check)

    p = sub.add_parser("simulate", help="Closed-loop simulation of a design")
    _add_common(p, "json")
    _add_plant(p)
    _add_design(p)
    p.add_argument("--dt", type=float, default=1e-4, help="Sample time in s (default: 1e-4)")
    p.add_argument(
        "--max-pole-fraction",
        type=float,
        default=0.2,
        help="Largest pole magnitude as a fraction of the Nyquist frequency (default: 0.2)",
    )
    p.add_argument("--duration", type=float, default=5.0, help="Duration in s (default: 5)")
    p.add_argument("--period", type=float, default=0.5, help="Reference period in s")
    p.add_argument("--peak-to-peak-m", type=float, default=1e-3, help="Reference amplitude in m")
    p.add_argument("--prefilter-hz", type=float, default=20.0, help="Reference prefilter corner")
    p.add_argument("--noise-nm", type=float, default=0.0, help="Uniform noise amplitude in nm")
    p.add_argument("--quantization-nm", type=float, default=0.0, help="Encoder resolution in nm")
    p.add_argument("--no-feedforward", action="store_true")
    p.add_argument("--ff-lpf-hz", type=float, default=1000.0, help="Feedforward filter corner")
    p.add_argument("--detune", type=float, default=1.0, help="Feedforward plant-gain error factor")
    p.add_argument(
        "--discretization", choices=[d.value for d in Discretization], default="zoh"
    )
    p.add_argument("--no-resets", action="store_true", help="Run the base linear controller")
    p.add_argument("--subsample-resets", action="store_true")
    p.add_argument("--precision", action="store_true", help="Zero reference, error r - y")
    p.add_argument("--settle-skip", type=float, default=None, help="Seconds left out of metrics")
    p.add_argument("--trace", default=None, help="Write the trace CSV here")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("tables", help="Run a design and performance campaign")
    p.add_argument("--config", default=None, help="Campaign configuration (YAML or JSON)")
    p.add_argument(
        "--seed", dest="seed_override", type=int, default=None, help="Override application.seed"
    )
    p.add_argument("--out", default=None, help="Output directory (overrides application.output_dir)")
    p.add_argument("--workers", type=int, default=None, help="Worker processes")
    p.add_argument("--format", choices=["csv", "json"], default="csv", help="Table format")
    p.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=None,
        help="Log level (default: the configuration file's level)",
    )
    p.set_defaults(handler=cmd_tables)

    p = sub.add_parser("df-validate", help="Check describing functions against simulation")
    _add_common(p, "csv")
    p.add_argument("--families", type=lambda s: s.split(","), default=["CI", "GFORE", "GSORE"])
    p.add_argument(
        "--gammas", type=_float_list, default=[-1.0, -0.5, 0.0, 0.4, 0.8, 1.0]
    )
    p.add_argument("--points", type=int, default=None, help="Frequencies in [0.1, 31.6] rad/s")
    p.add_argument("--cycles", type=int, default=40, help="Simulated cycles per point")
    p.add_argument("--tolerance", type=float, default=0.02, help="Magnitude tolerance")
    p.add_argument("--phase-tolerance", type=float, default=1.0, help="Phase tolerance in deg")
    p.set_defaults(handler=cmd_df_validate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point of the toolbox.

    Returns:
        int: Exit code (0 success, 2 usage, 3 numeric failure, 4 infeasible design)
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or "WARNING")
    logger.debug(f"Running {args.command}")

    try:
        return int(args.handler(args))
    except InfeasibleDesignError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DesignError, EvaluationError, SimulationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigValidationError, ModelError, SpectralError, FileNotFoundError, yaml.YAMLError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
