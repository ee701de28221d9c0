import argparse
import logging
import math
import sys
from pathlib import Path

import orjson

from src.analysis.cwt_engine import cwt, padded_unit_grid, pulse_leader_field, pulse_plane
from src.analysis.errors import ConfigError, PLeaderError, SpectrumHypothesisError
from src.analysis.exporters import (
    read_exponent_csv,
    read_signal_csv,
    write_exponent_csv,
    write_leader_csv,
    write_plane_binary,
    write_plane_csv,
    write_signal_csv,
    write_spectrum_csv,
    write_spectrum_svg,
)
from src.analysis.pexponent import default_pulse_p_scale_range, default_pulse_scale_range, exponent_field
from src.analysis.pleaders import leader_field
from src.analysis.spectrum import coarse_grained_spectrum, theoretical_spectrum, theory_on_bins, validate_p
from src.analysis.tf_dataclasses import ExponentField, ScaleGrid
from src.analysis.wavelet_kit import AnalyzingWavelet, build_even_wavelet
from src.cli.config_parser import (
    INPUT_MAPPING,
    RunConfig,
    apply_overrides,
    load_config,
    resolve_threads,
)
from src.data.acceptance_checks import CRITERIA_MAPPING, run_criteria
from src.data.signal_battery import get_test_signal
from src.simulation.pulse_config import get_pulse_shape
from src.simulation.pulse_dataclasses import PulseProcessParams, PulseSet
from src.simulation.pulse_sim import (
    band_census,
    expected_band_count,
    read_pulse_set,
    sample_path,
    sample_process,
    write_pulse_set,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ACCEPTANCE_FAILED = 2
SIGNAL_SCALE_RANGE = (2.0**-2, 2.0**-8)
THEORY_HINT = (
    "pick parameters the theory covers, e.g. --set process.alpha=-0.7 --set process.eta=0.5 --set analysis.p=1.2, "
    "or --set analysis.p=inf for the Hölder spectrum, or --set spectrum.theory=false"
)


def build_wavelet(config: RunConfig) -> AnalyzingWavelet:
    return build_even_wavelet(config.wavelet.vanishing_moments, config.wavelet.smoothness)


def build_process_params(config: RunConfig) -> PulseProcessParams:
    process = config.process
    return PulseProcessParams(
        alpha=process.alpha,
        eta=process.eta,
        pulse=get_pulse_shape(process.pulse),
        j_max=process.j_max,
        seed=process.seed,
    )


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scale_grid(config: RunConfig, default_range: tuple[float, float]) -> ScaleGrid:
    a_max = config.grid.a_max if config.grid.a_max is not None else default_range[0]
    a_min = config.grid.a_min if config.grid.a_min is not None else default_range[1]
    return ScaleGrid.dyadic(a_max, a_min, config.grid.scales_per_octave)


def cmd_simulate(config: RunConfig) -> list[Path]:
    """Sample a pulse process; write its pulse set and sampled path."""
    params = build_process_params(config)
    pulses = sample_process(params)
    config_hash = config.config_hash()
    out = _out_dir(config)
    pulse_file = write_pulse_set(out / "pulses.json", params, pulses, config_hash)
    path_file = write_signal_csv(out / "path.csv", sample_path(params, pulses, config.process.num_points), config_hash)

    print(f"sampled {pulses.count} pulses (alpha={params.alpha}, eta={params.eta}, j_max={params.j_max}, seed={params.seed})")
    for j, count in enumerate(band_census(pulses, params.eta, params.j_max)):
        print(f"  band {j:2d}: {count:6d} pulses (expected {expected_band_count(j, params.eta):9.1f})")
    return [pulse_file, path_file]


def _pulse_field(config: RunConfig, params: PulseProcessParams, pulses: PulseSet, threads: int):
    psi = build_wavelet(config)
    analysis = config.analysis
    if math.isinf(analysis.p):
        grid = _scale_grid(config, tuple(reversed(default_pulse_scale_range(params.j_max))))
        positions, targets = padded_unit_grid(analysis.J, float(grid.scales[0]))
        plane = pulse_plane(params, pulses, psi, grid, positions, threads=threads, oversample=config.grid.oversample)
        leaders = leader_field(plane, analysis.p, positions=targets[:: analysis.exponent_stride], threads=threads)
        return plane, leaders, exponent_field(leaders, scale_range=analysis.scale_range)

    # narrow pulses enter as isolated mass below the finest regression anchor
    anchors = default_pulse_p_scale_range(analysis.J)
    grid = _scale_grid(config, (anchors[1], 2.0 ** -(analysis.J - 2)))
    resolved_width = max(anchors[0], float(grid.scales[-1]))
    plane, leaders = pulse_leader_field(
        params,
        pulses,
        psi,
        analysis.p,
        analysis.J,
        grid,
        resolved_width,
        threads=threads,
        stride=analysis.exponent_stride,
        oversample=config.grid.oversample,
    )
    return plane, leaders, exponent_field(leaders, scale_range=analysis.scale_range or anchors)


def _signal_field(config: RunConfig, signal, threads: int):
    psi = build_wavelet(config)
    plane = cwt(signal, psi, _scale_grid(config, SIGNAL_SCALE_RANGE), threads=threads)
    targets = signal.x[:: config.analysis.exponent_stride]
    leaders = leader_field(plane, config.analysis.p, positions=targets, threads=threads)
    return plane, leaders, exponent_field(leaders, scale_range=config.analysis.scale_range)


def _load_signal(config: RunConfig):
    analysis = config.analysis
    if analysis.input is not None:
        path = Path(analysis.input)
        if not path.exists():
            raise ConfigError(f"input file {path} does not exist")
        if path.suffix == ".json":
            return read_pulse_set(path)
        return read_signal_csv(path)
    if analysis.signal is not None:
        lo, hi = analysis.signal_domain
        return get_test_signal(analysis.signal, lo, hi, analysis.signal_step, **analysis.signal_params)
    params = build_process_params(config)
    return params, sample_process(params)


def cmd_analyze(config: RunConfig) -> list[Path]:
    """Transform, leaders and exponents of a signal or pulse set."""
    threads = resolve_threads(config)
    source = _load_signal(config)
    if isinstance(source, tuple):
        logger.info(f"analyzing pulse set of {source[1].count} pulses on the analytic path")
        plane, leaders, field = _pulse_field(config, *source, threads)
    else:
        logger.info(f"analyzing sampled signal of {len(source.values)} points")
        plane, leaders, field = _signal_field(config, source, threads)

    config_hash = config.config_hash()
    out = _out_dir(config)
    files = []
    if config.output.plane_csv:
        files.append(write_plane_csv(out / "plane.csv", plane, config_hash))
    if config.output.plane_binary:
        files.append(write_plane_binary(out / "plane.tspl", plane, config_hash))
    files.append(write_leader_csv(out / "leaders.csv", leaders, config_hash))
    files.append(write_exponent_csv(out / "exponents.csv", field, config_hash))

    finite = field.finite_slopes()
    sentinels = sum(e.is_sentinel for e in field.estimates)
    summary = f"mean {finite.mean():.4f}" if len(finite) else "no finite estimates"
    print(f"estimated {len(field.estimates)} exponents (p={field.p:g}): {summary}, {sentinels} sentinels")
    return files


def _theory(config: RunConfig, p: float, required: bool):
    alpha, eta = config.process.alpha, config.process.eta
    try:
        if not math.isinf(p):
            validate_p(alpha, eta, p)
        return theoretical_spectrum(alpha, eta, p)
    except SpectrumHypothesisError as e:
        if required:
            raise SpectrumHypothesisError(f"{e}; {THEORY_HINT}") from e
        logger.warning(f"theory overlay unavailable: {e}")
        return None


def cmd_spectrum(config: RunConfig) -> list[Path]:
    """Coarse-grained spectrum of an exponent field, with the theoretical overlay."""
    spectrum = config.spectrum
    if spectrum.input is not None:
        if not Path(spectrum.input).exists():
            raise ConfigError(f"input file {spectrum.input} does not exist")
        field: ExponentField = read_exponent_csv(spectrum.input)
        theory = _theory(config, field.p, required=False) if spectrum.theory else None
    else:
        # chained from the process config
        theory = _theory(config, config.analysis.p, required=True) if spectrum.theory else None
        params = build_process_params(config)
        _, _, field = _pulse_field(config, params, sample_process(params), resolve_threads(config))

    J = int(round(math.log2(len(field.positions))))
    estimate = coarse_grained_spectrum(field, spectrum.bin_width, J)
    config_hash = config.config_hash()
    out = _out_dir(config)
    on_bins = theory_on_bins(estimate, theory) if theory is not None else None
    csv_file = write_spectrum_csv(out / "spectrum.csv", estimate, on_bins, config_hash)
    title = f"p = {field.p:g}, alpha = {config.process.alpha:g}, eta = {config.process.eta:g}"
    svg_file = write_spectrum_svg(
        out / "spectrum.svg", estimate, theory.curve() if theory is not None else None, title, config_hash
    )
    if theory is not None:
        lo, hi = theory.support
        print(f"theoretical support [{lo:.4f}, {hi:.4f}]")
    print(f"spectrum over {estimate.num_points} exponents in {int(estimate.nonempty.sum())} bins")
    return [csv_file, svg_file]


def cmd_verify(config: RunConfig) -> tuple[dict, int]:
    """Run the acceptance suite; exit code 2 when any criterion fails."""
    verify = config.verify
    names = verify.criteria or list(CRITERIA_MAPPING)
    unknown = [name for name in names if name not in CRITERIA_MAPPING]
    if unknown:
        raise ConfigError(f"unknown criteria {unknown}, expected some of {list(CRITERIA_MAPPING)}")
    entries = run_criteria(names, verify.tolerances, config.process.seed, verify.seed_sweep, resolve_threads(config))
    report = {
        "config_sha256": config.config_hash(),
        "seed": config.process.seed,
        "criteria": entries,
        "all_pass": all(entry["pass"] for entry in entries),
    }
    out = _out_dir(config)
    (out / "verify_report.json").write_bytes(orjson.dumps(report, option=orjson.OPT_INDENT_2))
    for entry in entries:
        rate = f", seed pass rate {entry['seed_sweep']['pass_rate']:.2f}" if "seed_sweep" in entry else ""
        print(f"{entry['name']:>4} {'PASS' if entry['pass'] else 'FAIL'}  {entry['target']}: {entry['measured']}{rate}")
    return report, EXIT_OK if report["all_pass"] else EXIT_ACCEPTANCE_FAILED


def _parse_tolerances(items) -> dict[str, float]:
    tolerances = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"tolerance override '{item}' must have the form NAME=VALUE")
        try:
            tolerances[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance for {name} is not a number: '{value}'") from None
    return tolerances


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pleader", description="Continuous p-leader multifractal analysis")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "sample a random pulse process"),
        ("analyze", "transform, leaders and exponents of a signal"),
        ("spectrum", "multifractal spectrum with theoretical overlay"),
        ("verify", "run the acceptance suite"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="JSON run config")
        sub.add_argument("--seed", type=int, help="process seed (u64)")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--threads", type=int, help="worker threads (default: $PLEADER_THREADS or 1)")
        sub.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE", help="override a config field")
        sub.add_argument("--verbose", action="store_true")
        sub.add_argument("--quiet", action="store_true")
        if name in INPUT_MAPPING:
            sub.add_argument("--input", help="input file")
        if name == "verify":
            sub.add_argument("--criteria", help="comma-separated criterion names, e.g. A1,A3")
            sub.add_argument("--seed-sweep", type=int, help="per-seed pass rates over N seeds")
            sub.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = list(args.set)
    if getattr(args, "input", None) is not None:
        overrides.append(f"{INPUT_MAPPING[args.command]}={orjson.dumps(args.input).decode()}")
    config = apply_overrides(config, {"seed": args.seed, "out": args.out, "threads": args.threads}, overrides)
    if args.command == "verify":
        if args.criteria:
            config = config.set_field("verify.criteria", [c.strip() for c in args.criteria.split(",") if c.strip()])
        if args.seed_sweep is not None:
            config = config.set_field("verify.seed_sweep", args.seed_sweep)
        tolerances = {**config.verify.tolerances, **_parse_tolerances(args.tolerance)}
        config = config.set_field("verify.tolerances", tolerances)
    return config


COMMAND_MAPPING = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "spectrum": cmd_spectrum,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    try:
        config = resolve_config(args)
        if args.command == "verify":
            _, code = cmd_verify(config)
            return code
        for path in COMMAND_MAPPING[args.command](config):
            logger.info(f"wrote {path}")
        return EXIT_OK
    except (PLeaderError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
