import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

import pandas as pd
from colorama import Fore, Style
from loguru import logger

from .bench.common import BenchReport, SyntheticScenario
from .bench.harness import run_benchmark
from .bench.stats import cdf_reading
from .bench.synthetic import simulate, write_ground_truth
from .config import ConfigError, TrackwatchConfig, describe_defaults
from .domain.common import AisMessage, Roi, TrackwatchError
from .ingest.aivdm import read_aivdm_file
from .ingest.records import read_records
from .normalcy.common import EmptyTrainingSetError, ModelFileError
from .normalcy.detection import detect_track
from .normalcy.geofence import load_zones
from .normalcy.model import fit
from .normalcy.storage import load_model, save_model
from .preprocess.batch import BatchResult, build_tracks, tracks_to_frame, write_tracks_csv
from .preprocess.common import PreprocessCounters
from .stream.common import BindError
from .stream.live import LiveService, parse_endpoint, serve
from .version import __version__

__all__ = ("main", "build_arg_parser")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_EMPTY_TRAINING_SET = 3
EXIT_MODEL = 4
EXIT_BIND = 5

VERDICT_COLUMNS = ["track_id", "mmsi", "n", "k", "nfa", "decision", "t_start", "t_end", "mean_score"]
AIVDM_SUFFIXES = {".nmea", ".aivdm"}


def _int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"replica counts must be positive, got {text!r}")
    return values


def build_arg_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="TOML configuration file")
    common.add_argument("--roi", type=str, default=None, help="latmin,latmax,lonmin,lonmax")
    common.add_argument("--model", type=str, default=None, help="model file path")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("inputs", nargs="+", help="record CSV/JSON-lines files or timestamped AIVDM files")
    inputs.add_argument(
        "--input-format",
        choices=["auto", "records", "aivdm"],
        default="auto",
        help="auto picks aivdm for .nmea/.aivdm files",
    )

    parser = argparse.ArgumentParser(
        prog="trackwatch",
        description="Vessel track anomaly detection over AIS position reports.",
        epilog=describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    raw = argparse.RawDescriptionHelpFormatter
    commands.add_parser(
        "train", parents=[common, inputs], help="fit a normalcy model", epilog=describe_defaults(), formatter_class=raw
    )

    detect = commands.add_parser(
        "detect", parents=[common, inputs], help="score tracks with a model", epilog=describe_defaults(), formatter_class=raw
    )
    detect.add_argument("--output", type=str, default=None, help="verdict file, stdout when omitted")
    detect.add_argument("--format", choices=["csv", "json"], default="csv")

    tracks = commands.add_parser(
        "tracks", parents=[common, inputs], help="build and resample tracks only", epilog=describe_defaults(), formatter_class=raw
    )
    tracks.add_argument("--output", type=str, default="tracks.csv")
    tracks.add_argument("--format", choices=["csv", "json"], default="csv")

    serve_cmd = commands.add_parser(
        "serve", parents=[common], help="live detection over TCP", epilog=describe_defaults(), formatter_class=raw
    )
    serve_cmd.add_argument("--listen", type=str, default="127.0.0.1:10110", help="HOST:PORT")
    serve_cmd.add_argument("--alerts", type=str, default=None, help="PATH or HOST:PORT")
    serve_cmd.add_argument("--replicas", type=int, default=None)
    serve_cmd.add_argument("--partitions", type=int, default=None)
    serve_cmd.add_argument("--log-dir", type=str, default=None, help="mirror partitions to files here")

    bench = commands.add_parser(
        "bench", parents=[common], help="timing and capacity benchmark", epilog=describe_defaults(), formatter_class=raw
    )
    bench.add_argument("scenario", type=str, help="scenario TOML file")
    bench.add_argument("--replicas", type=_int_list, default=[1], help="comma-separated replica counts")
    bench.add_argument("--partitions", type=int, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--window", type=int, default=600, help="window in seconds")
    bench.add_argument("--output-dir", type=str, default=None)
    bench.add_argument("--sequential", action="store_true", help="run replicas in this process")

    report = commands.add_parser("report", help="render a saved report.json")
    report.add_argument("report", type=str)
    report.add_argument("-v", "--verbose", action="store_true")
    return parser


def _read_inputs(paths: Sequence[str], input_format: str) -> Iterator[AisMessage]:
    for path in paths:
        if not Path(path).is_file():
            raise ConfigError(f"input {path} does not exist")
        aivdm = input_format == "aivdm" or (input_format == "auto" and Path(path).suffix.lower() in AIVDM_SUFFIXES)
        yield from (read_aivdm_file(path) if aivdm else read_records(path))


def _print_counts(counters: PreprocessCounters):
    print(
        f"{Fore.CYAN}built: {counters.built}{Style.RESET_ALL}  "
        f"{Fore.YELLOW}rejected: {counters.rejected}{Style.RESET_ALL}  "
        f"{Fore.GREEN}tested: {counters.tested}{Style.RESET_ALL}"
    )


def _load_config(args) -> TrackwatchConfig:
    config = TrackwatchConfig.from_config(args.config).with_overrides(
        roi=args.roi,
        model=args.model,
        replicas=args.replicas if args.command == "serve" else None,
        partitions=getattr(args, "partitions", None),
        alerts=getattr(args, "alerts", None),
    )
    config.logging.apply(verbose=args.verbose)
    return config


def _build(config: TrackwatchConfig, args) -> BatchResult:
    result = build_tracks(_read_inputs(args.inputs, args.input_format), config.preprocess_config())
    _print_counts(result.counters)
    return result


def _with_model_roi(config: TrackwatchConfig, model) -> TrackwatchConfig:
    if config.roi != model.roi:
        if config.roi is not None:
            logger.warning(f"Model ROI {model.roi} differs from configured ROI {config.roi}; using the model's.")
        config = replace(config, roi=model.roi)
    return config


def cmd_train(args) -> int:
    config = _load_config(args)
    cfg = config.preprocess_config()
    result = _build(config, args)
    model = fit(result.resampled(cfg.resample_period_s), config.roi, config.grid, config.normalcy)
    save_model(model, config.paths.model)
    print(f"{Fore.GREEN}model written to {config.paths.model}{Style.RESET_ALL}")
    return EXIT_OK


def cmd_detect(args) -> int:
    config = _load_config(args)
    model = load_model(config.paths.model)
    config = _with_model_roi(config, model)
    cfg = config.preprocess_config()
    result = _build(config, args)

    rows = []
    for track in result.resampled(cfg.resample_period_s):
        verdict = detect_track(
            model,
            track,
            min_points=cfg.min_points,
            aggregation=config.normalcy.aggregation,
            ratio_threshold=config.normalcy.ratio_threshold,
        )
        rows.append({column: getattr(verdict, column) for column in VERDICT_COLUMNS})
    frame = pd.DataFrame(rows, columns=VERDICT_COLUMNS)
    frame["decision"] = [d.value for d in frame["decision"]]

    target = args.output if args.output is not None else sys.stdout
    if args.format == "json":
        frame.to_json(target, orient="records", lines=True)
    else:
        frame.to_csv(target, index=False)

    flagged = int((frame["decision"] != "normal").sum())
    color = Fore.RED if flagged else Fore.GREEN
    print(f"{color}{flagged} of {len(frame)} tracks flagged{Style.RESET_ALL}", file=sys.stderr)
    return EXIT_OK


def cmd_tracks(args) -> int:
    config = _load_config(args)
    cfg = config.preprocess_config()
    result = _build(config, args)
    tracks = result.resampled(cfg.resample_period_s)
    if args.format == "json":
        tracks_to_frame(tracks).to_json(args.output, orient="records", lines=True)
    else:
        write_tracks_csv(tracks, args.output)
    print(f"{Fore.GREEN}{len(result.tested_tracks)} tracks written to {args.output}{Style.RESET_ALL}")
    return EXIT_OK


def cmd_serve(args) -> int:
    config = _load_config(args)
    endpoint = parse_endpoint(args.listen)
    if endpoint is None:
        raise ConfigError(f"--listen must be HOST:PORT, got {args.listen!r}")
    model = load_model(config.paths.model)
    config = _with_model_roi(config, model)
    zones = load_zones(config.paths.zones) if config.paths.zones else ()

    service = LiveService(
        model,
        config.preprocess_config(),
        alerts=config.paths.alerts,
        settings=config.normalcy,
        stream=config.stream,
        zones=zones,
        host=endpoint[0],
        port=endpoint[1],
        log_directory=args.log_dir,
    )
    result = serve(service)
    _print_counts(result.counters)
    return EXIT_OK


def _scenario_roi(traffic, grid) -> Roi:
    lats = [m.lat for m in traffic.messages]
    lons = [m.lon for m in traffic.messages]
    pad = grid.cell_size_deg
    return Roi(
        max(-90.0, min(lats) - pad), min(90.0, max(lats) + pad), max(-180.0, min(lons) - pad), min(180.0, max(lons) + pad)
    )


def cmd_bench(args) -> int:
    config = _load_config(args)
    scenario = SyntheticScenario.from_config(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    traffic = simulate(scenario)
    if not traffic.messages:
        raise EmptyTrainingSetError("scenario produced no messages")

    if config.roi is None:
        config = replace(config, roi=_scenario_roi(traffic, config.grid))
        logger.info(f"No ROI configured; using the scenario's bounding box {config.roi}.")
    cfg = config.preprocess_config()

    if args.model is not None or Path(config.paths.model).is_file():
        model = load_model(config.paths.model)
        config = _with_model_roi(config, model)
        cfg = config.preprocess_config()
    else:
        logger.info("No model file; fitting one on the scenario traffic.")
        result = build_tracks(traffic.messages, cfg)
        model = fit(result.resampled(cfg.resample_period_s), config.roi, config.grid, config.normalcy)

    output_dir = Path(args.output_dir or config.paths.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_ground_truth(traffic, output_dir / "ground_truth.csv")
    reports = run_benchmark(
        traffic.messages,
        model,
        cfg,
        replicas=args.replicas,
        settings=config.normalcy,
        stream=config.stream,
        window_s=args.window,
        parallel=not args.sequential,
        output_dir=output_dir,
    )
    for report in reports:
        print(f"{Fore.CYAN}replicas={report.replicas}{Style.RESET_ALL}")
        print(render_report(report))
    return EXIT_OK


def render_report(report: BenchReport) -> str:
    timing = report.timing
    names = ["mean", "std", "min", "q1", "median", "q3", "max"]
    lines = ["detection time (s)"]
    if timing is None:
        lines.append("no detections")
    else:
        lines.append(" ".join(f"{name:>10}" for name in names))
        lines.append(" ".join(f"{getattr(timing, name):>10.4f}" for name in names))
    lines += [
        f"tracks built {report.built} = rejected {report.rejected} + tested {report.tested}",
        f"throughput {report.throughput:.2f} detections/s over {report.replicas} replicas",
    ]
    if report.cdf.points:
        for fraction in (0.8, 0.9):
            count = cdf_reading(report.cdf, fraction)
            lines.append(
                f"{fraction:.0%} of {report.window_s}s windows have < {count + 1} unique MMSIs"
            )
    lines.append(
        f"peak {report.peak_unique_mmsi} unique MMSIs per window -> {report.capacity_cores} core(s)"
    )
    return "\n".join(lines)


def cmd_report(args) -> int:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if args.verbose else "INFO")
    try:
        report = BenchReport.from_json(Path(args.report).read_text())
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"cannot read report {args.report}: {e}")
    print(render_report(report))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "detect": cmd_detect,
    "tracks": cmd_tracks,
    "serve": cmd_serve,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except EmptyTrainingSetError as e:
        logger.error(f"Empty training set: {e}")
        return EXIT_EMPTY_TRAINING_SET
    except ModelFileError as e:
        logger.error(f"Model file error: {e}")
        return EXIT_MODEL
    except BindError as e:
        logger.error(str(e))
        return EXIT_BIND
    except (TrackwatchError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
