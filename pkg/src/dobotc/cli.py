"""Command-line front end: ``dobotc synthesize|simulate|compare|fit``.

Exit codes: 0 success, 2 config/schema/data error, 3 synthesis error,
4 simulation divergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dobotc import __version__
from dobotc.errors import (
    ConfigError,
    DataError,
    DimensionError,
    IntegrationError,
    ParameterError,
    SynthesisError,
)
from dobotc.fit import expected_fit, model_fit, read_io_csv, synthetic_dataset, write_io_csv
from dobotc.scenario import (
    DEFAULT_VARIANTS,
    compare,
    load_config,
    parse_variants,
    run_metrics,
    run_simulation,
    summary_report,
    synthesize,
    write_json,
    write_trajectory_csv,
)

log = logging.getLogger("dobotc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    report = summary_report(cfg, synthesize(cfg))
    text = json.dumps(report, indent=2)
    if args.out:
        write_json(_out_dir(args.out) / "summary.json", report)
    print(text)
    return EXIT_OK if report["certificates"]["all_pass"] else EXIT_SYNTHESIS


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    synth = synthesize(cfg)
    traj = run_simulation(cfg, synth)
    report = summary_report(cfg, synth, run_metrics(synth, traj))
    out = _out_dir(args.out)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_json(out / "summary.json", report)
    print(json.dumps(report["metrics"], indent=2))
    return EXIT_OK


def _format_table(rows) -> str:
    cols = ["variant", "cost_J", "rms_error", "tail_amplitude", "observer_tail", "settling_time", "tail_ratio"]
    cells = [[str(r[c]) if isinstance(r[c], str) else f"{r[c]:.6g}" for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    rows = compare(cfg, parse_variants(args.variants))
    print(_format_table(rows))
    if args.out:
        write_json(_out_dir(args.out) / "compare.json", rows)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    plant = cfg.build_plant()
    if args.generate:
        t, U, y = synthetic_dataset(
            plant, samples=args.samples, dt=args.dt, seed=cfg.seed, noise_ratio=args.noise_ratio
        )
        write_io_csv(args.data, t, U, y)
        log.info("wrote synthetic dataset to %s", args.data)
    t, U, y = read_io_csv(args.data, plant.m)
    fit = model_fit(plant, t, U, y)
    result = {"fit_percent": fit, "samples": int(t.size)}
    if args.generate:
        result["expected_fit_percent"] = expected_fit(args.noise_ratio)
    if args.out:
        write_json(_out_dir(args.out) / "fit.json", result)
    print(f"fit: {fit:.6f} %")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dobotc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="design gains and print certificates")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="directory for summary.json")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="run the closed loop and export trajectory.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare observer/compensator variants")
    p.add_argument("--config", required=True)
    p.add_argument("--variants", default=DEFAULT_VARIANTS,
                   help=f"';'-separated variants of obs=on|off,comp=on|off (default {DEFAULT_VARIANTS!r})")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit", help="NRMSE fit of the config's plant against t,u1..um,y data")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--generate", action="store_true",
                   help="first write a seeded synthetic dataset to --data")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--noise-ratio", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, DimensionError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except IntegrationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
