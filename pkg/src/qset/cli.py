"""Command-line front end: synthesis, analysis, and scenario bundles.

Five subcommands, all configuration-driven and deterministic:

- ``qset simulate``: compose a synthetic trace per the config and write
  it with its ground-truth annotations plus a manifest;
- ``qset analyze TRACE``: run the recovery pipeline on a trace file and
  write the report and plot CSVs;
- ``qset thermal``: electron-temperature curves with the per-channel
  cooling decomposition, optionally a heated-substrate field;
- ``qset device``: electrostatic feature summary and transfer curve;
- ``qset reproduce {fig2,fig3}``: the two end-to-end demonstration
  bundles (telegraph-defect recovery; dwell-ratio thermometry with and
  without the helium bath).

Every run writes a ``manifest.json`` echoing the fully resolved
configuration, defaults included, so artifacts are re-derivable.  Exit
codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O or
file-format error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .analysis import analyze_trace
from .config import ScenarioConfig, default_config, load_config, resolved_tree
from .errors import (
    ConfigError,
    NoTelegraphDetected,
    NumericalError,
    ResourceLimitError,
    TraceParseError,
)
from .scenarios import (
    _write_csv,
    _write_json,
    defect_thermometry_bundle,
    device_summary,
    electron_temperature_curves,
    substrate_hotspot,
    telegraph_readout_bundle,
)
from .synth import compose_trace
from .traces import n_samples, read_trace, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _load(args) -> ScenarioConfig:
    if args.config is not None:
        return load_config(args.config, seed=args.seed, output_dir=args.out)
    return default_config(seed=0 if args.seed is None else args.seed)


def _out_dir(args, config: ScenarioConfig | None, fallback: str) -> str:
    if args.out is not None:
        path = args.out
    elif config is not None and config.run.output_dir is not None:
        path = config.run.output_dir
    else:
        path = fallback
    os.makedirs(path, exist_ok=True)
    return path


def _manifest(out: str, command: str, config, artifacts: list, extra=None):
    payload = {
        "command": command,
        "config": None if config is None else resolved_tree(config),
        "artifacts": sorted(artifacts),
    }
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out, "manifest.json"), payload)


def cmd_simulate(args) -> int:
    config = _load(args)
    out = _out_dir(args, config, ".")
    trace = compose_trace(config.recipe, config.run.duration, config.run.dt)
    trace_path = os.path.join(out, "trace.csv")
    write_trace(trace, trace_path)
    _manifest(
        out,
        "simulate",
        config,
        ["trace.csv", "manifest.json"],
        extra={"n_samples": n_samples(config.run.duration, config.run.dt)},
    )
    print(f"wrote {trace_path}: {trace.samples.size} samples")
    return EXIT_OK


def cmd_analyze(args) -> int:
    trace = read_trace(args.trace)
    out = _out_dir(args, None, ".")
    report = analyze_trace(
        trace,
        detrend=not args.no_detrend,
        segment_length=args.psd_segment,
        include_series=True,
    )
    series = report.pop("series")
    _write_csv(
        os.path.join(out, "psd.csv"),
        ["frequency_Hz", "psd_A2_per_Hz", "model_A2_per_Hz"],
        [
            series["psd_frequency_Hz"],
            series["psd_A2_per_Hz"],
            series["psd_model_A2_per_Hz"],
        ],
    )
    flat = series["flat_detect_A"]
    counts, edges = np.histogram(flat, bins=200)
    centers = 0.5 * (edges[:-1] + edges[1:])
    _write_csv(
        os.path.join(out, "histogram.csv"),
        ["current_A", "count"],
        [centers, counts],
        int_columns=("count",),
    )
    report_path = args.report_out or os.path.join(out, "report.json")
    _write_json(report_path, report)
    print(
        f"tau_bar = {report['tau_bar_s']:.4g} s, "
        f"delta_e/kT = {report['delta_e_over_kt']:.4g}, "
        f"fit tau = {report['fit']['correlation_time_s']:.4g} s"
    )
    print(f"wrote {report_path}")
    return EXIT_OK


def cmd_thermal(args) -> int:
    config = _load(args)
    out = _out_dir(args, config, ".")
    curves = electron_temperature_curves(config.thermal, p_set=config.p_set)
    _write_csv(
        os.path.join(out, "thermal.csv"),
        ["t_ph_K", "t_e_K", "p_eph_W", "p_qp_W"],
        [curves["t_ph_K"], curves["t_e_K"], curves["p_eph_W"], curves["p_qp_W"]],
    )
    artifacts = ["thermal.csv", "manifest.json"]
    extra = {"p_set": config.p_set}
    if args.substrate:
        spot = substrate_hotspot(power=config.p_set, t_bath=config.t_mxc)
        _write_csv(
            os.path.join(out, "substrate.csv"),
            ["r_m", "t_surface_K"],
            [spot["surface_r_m"], spot["surface_t_K"]],
        )
        artifacts.append("substrate.csv")
        extra["substrate"] = {
            k: spot[k]
            for k in (
                "t_source_K",
                "t_peak_K",
                "t_bath_K",
                "power_W",
                "flux_imbalance",
                "iterations",
            )
        }
        print(
            f"substrate: t_source = {spot['t_source_K']*1e3:.2f} mK "
            f"at {config.p_set*1e12:.3g} pW, {config.t_mxc*1e3:.3g} mK bath"
        )
    _manifest(out, "thermal", config, artifacts, extra=extra)
    print(f"wrote {os.path.join(out, 'thermal.csv')}")
    return EXIT_OK


def cmd_device(args) -> int:
    config = _load(args)
    out = _out_dir(args, config, ".")
    summary = device_summary(
        config.device, config.thermal, t_bath=config.t_mxc
    )
    gate = summary.pop("gate_e")
    curve = summary.pop("transfer_current_A")
    _write_csv(
        os.path.join(out, "transfer.csv"),
        ["gate_e", "current_A"],
        [gate, curve],
    )
    _write_json(os.path.join(out, "device.json"), summary)
    _manifest(
        out, "device", config, ["transfer.csv", "device.json", "manifest.json"]
    )
    print(
        f"v_djqp = {summary['v_djqp_V']*1e3:.4f} mV, "
        f"E_C = {summary['charging_energy_J']:.4g} J, "
        f"E_J/E_C = {summary['ej_over_ec']:.2e}"
    )
    return EXIT_OK


def cmd_reproduce(args) -> int:
    config = load_config(args.config) if args.config is not None else None
    device = config.device if config is not None else None
    thermal = config.thermal if config is not None else None
    out = _out_dir(args, config, args.figure)
    if args.figure == "fig2":
        report = telegraph_readout_bundle(
            out, seed=args.seed, device=device, thermal_params=thermal
        )
        artifacts = [
            "trace.csv",
            "histogram.csv",
            "psd.csv",
            "report.json",
            "manifest.json",
        ]
        print(
            f"recovered tau_bar = {report['tau_bar_s']:.1f} s, "
            f"delta_e/kT = {report['delta_e_over_kt']:.3f}, "
            f"sensitivity = {report['sensitivity_e_per_sqrtHz']:.2e} e/rtHz"
        )
    else:
        t_bath = config.t_mxc if config is not None else None
        kwargs = {} if t_bath is None else {"t_bath": t_bath}
        report = defect_thermometry_bundle(
            out, device=device, thermal_params=thermal, **kwargs
        )
        artifacts = ["thermometry.csv", "report.json", "manifest.json"]
        print(
            f"local temperature ratio (bath/empty) = "
            f"{report['temperature_ratio_from_dwell']:.4f}"
        )
    _manifest(out, f"reproduce {args.figure}", config, artifacts)
    print(f"wrote bundle to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qset",
        description=__doc__.split("\n\n")[0],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="YAML scenario file")
        p.add_argument("--seed", type=int, metavar="N", help="override seed")
        p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("simulate", help="compose a synthetic trace")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="run the recovery pipeline")
    p.add_argument("trace", metavar="TRACE", help="trace CSV to analyze")
    p.add_argument(
        "--no-detrend",
        action="store_true",
        help="skip baseline removal (degrades recovery on drifting data)",
    )
    p.add_argument(
        "--psd-segment",
        type=int,
        metavar="N",
        help="Welch segment length in samples (power of two)",
    )
    p.add_argument(
        "--report-out", metavar="PATH", help="report destination (JSON)"
    )
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("thermal", help="electron-temperature curves")
    p.add_argument(
        "--substrate",
        action="store_true",
        help="also solve the heated-substrate field at p_set, t_mxc",
    )
    common(p)
    p.set_defaults(func=cmd_thermal)

    p = sub.add_parser("device", help="electrostatic summary")
    common(p)
    p.set_defaults(func=cmd_device)

    p = sub.add_parser(
        "reproduce",
        help="end-to-end demonstration bundles",
        description=(
            "fig2: day-long telegraph-defect recording and its recovery; "
            "fig3: dwell-ratio thermometry across the bias grid with and "
            "without the helium bath.  Bundle duration, sampling, and the "
            "frozen seed are fixed; --seed draws a fresh realization and "
            "--config overrides device/thermal parameters."
        ),
    )
    p.add_argument("figure", choices=("fig2", "fig3"))
    common(p)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceParseError as exc:
        print(f"trace parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, NoTelegraphDetected, ResourceLimitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
