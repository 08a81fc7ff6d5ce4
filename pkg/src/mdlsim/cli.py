"""Command-line entry point: ``mdlsim {sweep,mdl-vs-ratio,analyze,print-config}``.

Exit codes: 0 success, 1 configuration error, 2 runtime/numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import tomli
import tomli_w

from . import __version__
from .channel import ChannelSpectrum, true_mdl
from .container import ContainerError, load
from .dsp import EqualizerSolution, MdlEstimate, estimate_mdl, wiener_equalizer
from .mdl import AggregationRule, ClampPolicy, SnrValue
from .report import emit_csv, emit_heatmap, emit_mdl_vs_ratio
from .sweep import ConfigError, SweepConfig, run_sweep, with_overrides

log = logging.getLogger("mdlsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SECTIONS = {
    "link": (
        "sections", "delay_spread_ps", "insertion_spread_db", "n_bins", "symbol_rate_gbd",
        "spatial_modes", "polarizations_per_mode",
    ),
    "emulator": ("placements", "inspan_index", "base_attenuation_db"),
    "sweep": (
        "ratios_db", "snrs_db", "reference_snr_db", "seeds", "base_seed", "training_length",
        "aggregation", "clamp_policy", "correction_snr",
    ),
    "output": ("output_dir",),
}


def config_to_toml(config: SweepConfig) -> str:
    flat = config.to_dict()
    doc = {"schema_version": flat.pop("schema_version")}
    for section, keys in SECTIONS.items():
        doc[section] = {k: flat[k] for k in keys}
    return tomli_w.dumps(doc)


def load_config(path) -> SweepConfig:
    if path is None:
        return SweepConfig()
    try:
        data = tomli.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return SweepConfig.from_dict(data)


def _common(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="TOML sweep configuration (defaults: see print-config)")
    p.add_argument("-o", "--out", help="output directory (overrides output.output_dir)")
    p.add_argument("-j", "--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seed", type=int, help="override sweep.base_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdlsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mdlsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run the (ratio x SNR) grid and write CSV + SVG heatmaps")
    _common(p)

    p = sub.add_parser("mdl-vs-ratio", help="reference-only sweep: MDL versus attenuation ratio")
    _common(p)
    p.add_argument("--seeds", type=int, default=20, help="replicates per ratio (default 20)")

    p = sub.add_parser("analyze", help="report MDL for a saved channel/equalizer container")
    p.add_argument("path")
    p.add_argument("--snr-db", type=float, help="SNR for the analytic equalizer / correction")
    p.add_argument("--aggregation", choices=[r.value for r in AggregationRule], default=None)
    p.add_argument("--clamp-policy", choices=[c.value for c in ClampPolicy], default=ClampPolicy.CLAMP_TO_FLOOR.value)

    p = sub.add_parser("print-config", help="print the effective configuration as TOML")
    p.add_argument("-c", "--config")
    return parser


def _prepare(args, **extra) -> tuple:
    config = load_config(args.config)
    config = with_overrides(config, output_dir=args.out, base_seed=args.seed, **extra)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return config, Path(config.output_dir)


def cmd_sweep(args) -> int:
    config, out = _prepare(args)
    config.validate()
    t0 = time.perf_counter()
    result = run_sweep(config, jobs=args.jobs)
    paths = emit_csv(result, out)
    paths += emit_heatmap(result, out, "uncorrected")
    paths += emit_heatmap(result, out, "corrected")
    paths += emit_mdl_vs_ratio(result, out)
    failed = sum(1 for r in result.rows if r.status.startswith("failed"))
    log.info("sweep finished in %.1f s, %d rows (%d failed)", time.perf_counter() - t0, len(result.rows), failed)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_mdl_vs_ratio(args) -> int:
    config, out = _prepare(args, seeds=args.seeds)
    config.validate(reference_only=True)
    result = run_sweep(config, jobs=args.jobs, reference_only=True)
    for p in emit_mdl_vs_ratio(result, out):
        print(p)
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        obj = load(args.path)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.path}: {exc}") from exc
    except ContainerError as exc:
        raise ConfigError(str(exc)) from exc
    agg = args.aggregation or AggregationRule.GRAM_MEAN.value
    report: dict = {"path": str(args.path), "aggregation": agg}
    if isinstance(obj, ChannelSpectrum):
        report["kind"] = "channel"
        report["bins"] = obj.n_bins
        report["true_mdl_db"] = {r.value: true_mdl(obj, r).db for r in AggregationRule}
        if args.snr_db is not None:
            snr = SnrValue.from_db(args.snr_db)
            est = estimate_mdl(wiener_equalizer(obj, snr), snr, True, agg, args.clamp_policy)
            report["wiener_estimate"] = est.to_dict()
    elif isinstance(obj, EqualizerSolution):
        report["kind"] = "equalizer"
        snr = SnrValue.from_db(args.snr_db) if args.snr_db is not None else obj.fitted_snr
        if snr is None:
            raise ConfigError("equalizer has no fitted SNR; pass --snr-db")
        report["estimate"] = estimate_mdl(obj, snr, True, agg, args.clamp_policy).to_dict()
    elif isinstance(obj, MdlEstimate):
        report["kind"] = "mdl-estimate"
        report["estimate"] = obj.to_dict()
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_print_config(args) -> int:
    sys.stdout.write(config_to_toml(load_config(args.config)))
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "mdl-vs-ratio": cmd_mdl_vs_ratio,
    "analyze": cmd_analyze,
    "print-config": cmd_print_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"mdlsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(f"mdlsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
