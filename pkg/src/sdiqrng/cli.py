"""Command-line interface.

Subcommands cover the pipeline stages individually (simulate, calibrate,
certify, extract, test), reporting (report, curves) and the full chain
(run).  Exit codes: 0 on success, 2 on usage/config errors, and the abort
codes 10-13 documented in :mod:`sdiqrng.pipeline` when a protocol rule
trips.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .blockio import read_sample_block, write_sample_block
from .entropy import format_entropy_report
from .extractor import read_bit_file
from .pipeline import ProtocolAbort, RunConfig
from .stattests import run_battery

_CONFIG_FLAGS = (
    # (flag, config field, type)
    ("--state-kind", "state_kind", str),
    ("--excess-noise-snl", "excess_noise_snl", float),
    ("--squeezing-db", "squeezing_db", float),
    ("--antisqueezing-db", "antisqueezing_db", float),
    ("--delta", "delta", float),
    ("--adc-bits", "adc_bits", int),
    ("--effective-bits", "effective_bits", int),
    ("--lo-r", "lo_r", float),
    ("--lo-t", "lo_t", float),
    ("--lo-excess-db", "lo_excess_db", float),
    ("--enoise-db", "enoise_db", float),
    ("--check-ratio", "check_ratio", float),
    ("--enoise-ratio", "enoise_ratio", float),
    ("--n-total", "n_total", int),
    ("--n-calibration", "n_calibration", int),
    ("--sample-rate-hz", "sample_rate_hz", float),
    ("--epsilon", "epsilon", float),
    ("--master-seed", "master_seed", int),
    ("--switch-seed", "switch_seed", int),
)


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="TOML config file")
    for flag, dest, typ in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None)
    parser.add_argument("--signal-blocked", action="store_true", default=None,
                        dest="signal_blocked")
    parser.add_argument("--no-monitor-lo", action="store_false", default=None,
                        dest="monitor_lo")
    parser.add_argument("--no-battery", action="store_false", default=None,
                        dest="run_battery")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_toml(args.config) if args.config else RunConfig()
    overrides = {}
    for _, dest, _ in _CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            overrides[dest] = value
    for dest in ("signal_blocked", "monitor_lo", "run_battery"):
        value = getattr(args, dest, None)
        if value is not None:
            overrides[dest] = value
    return config.with_overrides(**overrides)


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    block = (pipeline.simulate_calibration_block(config) if args.calibration
             else pipeline.simulate_main_block(config))
    write_sample_block(args.out, block)
    print(f"wrote {args.out}: {len(block)} samples, "
          f"saturation fraction {block.saturation_fraction:.3g}")
    return 0


def _cmd_calibrate(args) -> int:
    config = _config_from_args(args)
    vac = read_sample_block(args.vacuum)
    main = read_sample_block(args.main)
    budget = pipeline.calibrate(config, vac, main)
    for name in ("var_total_vac", "var_total_squ", "var_total_ant",
                 "var_electronic", "var_lo"):
        print(f"budget.{name}: {getattr(budget, name)!r}")
    print(f"budget.var_snl: {budget.var_snl!r}")
    print(f"budget.electronic_fraction: {budget.electronic_fraction!r}")
    print(f"budget.lo_fraction: {budget.lo_fraction!r}")
    return 0


def _cmd_certify(args) -> int:
    config = _config_from_args(args)
    main = read_sample_block(args.main)
    nominal, effective = pipeline.certify(config, main)
    sys.stdout.write(format_entropy_report(nominal, prefix="cert.nominal."))
    sys.stdout.write(format_entropy_report(effective, prefix="cert.effective."))
    if effective.h_low_smooth <= 0:
        print("certified entropy <= 0: protocol would abort", file=sys.stderr)
        return pipeline.EntropyAbort.code
    return 0


def _cmd_extract(args) -> int:
    config = _config_from_args(args)
    main = read_sample_block(args.main)
    _, effective = pipeline.certify(config, main)
    if effective.h_low_smooth <= 0:
        print("certified entropy <= 0: nothing to extract", file=sys.stderr)
        return pipeline.EntropyAbort.code
    bits, info = pipeline.extract(config, main, effective.h_low_smooth)
    from .extractor import write_bit_file
    write_bit_file(args.out, bits, {
        "role": "extracted random bits",
        "n_in": info["n_in"], "m_out": info["m_out"],
        "epsilon_smooth": config.epsilon_smooth,
        "epsilon_hash": config.epsilon_hash,
        "toeplitz_seed_sha256": info["seed_sha256"],
    })
    print(f"wrote {args.out}: {info['m_out']} bits")
    print(f"output sha256: {info['output_sha256']}")
    return 0


def _cmd_test(args) -> int:
    bits, _ = read_bit_file(args.bits)
    report = run_battery(bits, alpha=args.alpha)
    sys.stdout.write(report.format_text())
    if args.csv:
        report.write_csv(args.csv)
        print(f"wrote {args.csv}")
    return 0 if report.all_passed else 1


def _cmd_curves(args) -> int:
    config = _config_from_args(args)
    paths = pipeline.emit_figures(args.outdir, config)
    for name, path in paths.items():
        print(f"wrote {path}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.outdir) / "report.txt"
    if not path.exists():
        print(f"no report found at {path}", file=sys.stderr)
        return 2
    sys.stdout.write(path.read_text())
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    result = pipeline.run_protocol(config, outdir=args.outdir)
    sys.stdout.write(result.format_report())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdiqrng",
        description="Semi-device-independent CV-QRNG desk-scale toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an acquisition to a block file")
    _add_config_arguments(p)
    p.add_argument("--calibration", action="store_true",
                   help="simulate the vacuum calibration acquisition instead")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("calibrate", help="noise budget from block files")
    _add_config_arguments(p)
    p.add_argument("--vacuum", type=Path, required=True)
    p.add_argument("--main", type=Path, required=True)
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("certify", help="entropy certification of a block file")
    _add_config_arguments(p)
    p.add_argument("--main", type=Path, required=True)
    p.set_defaults(fn=_cmd_certify)

    p = sub.add_parser("extract", help="certify then Toeplitz-extract a block file")
    _add_config_arguments(p)
    p.add_argument("--main", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("test", help="statistical battery on a bit file")
    p.add_argument("--bits", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--csv", type=Path)
    p.set_defaults(fn=_cmd_test)

    p = sub.add_parser("curves", help="write the entropy curve CSV bundle")
    _add_config_arguments(p)
    p.add_argument("--outdir", type=Path, required=True)
    p.set_defaults(fn=_cmd_curves)

    p = sub.add_parser("report", help="print the report of a finished run")
    p.add_argument("--outdir", type=Path, required=True)
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("run", help="full protocol chain")
    _add_config_arguments(p)
    p.add_argument("--outdir", type=Path, required=True)
    p.set_defaults(fn=_cmd_run)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ProtocolAbort as exc:
        print(f"protocol abort [{exc.code}]: {exc.reason}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
