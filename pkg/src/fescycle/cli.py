"""Command line entry point: ``fescycle {simulate,pattern,certify}``.

Exit codes: 0 success, 1 I/O or config error, 2 model or feasibility error,
3 gain certification failed (``certify`` only).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .bounds import estimate_bounds
from .config import RunSetup, build, load_config
from .controller import RPM, GainReport, check_gains, json_safe
from .errors import ConfigError, FesCycleError
from .scheduler import pattern_table, q_gast, q_glut, write_pattern_csv
from .simulation import initial_errors, run, write_summary

log = logging.getLogger("fescycle")

EXIT_OK, EXIT_IO, EXIT_MODEL, EXIT_UNCERTIFIED = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    config: Optional[Path]
    out: Path
    seed: Optional[int] = None
    overrides: list = field(default_factory=list)


def _prepare(m: RunManifest) -> RunSetup:
    if m.config is not None and not m.config.is_file():
        raise FileNotFoundError(f"config file not found: {m.config}")
    cfg = load_config(m.config, m.overrides, m.seed)
    setup = build(cfg)
    m.out.mkdir(parents=True, exist_ok=True)
    return setup


def certify(setup: RunSetup) -> tuple[GainReport, dict]:
    """Bound estimation plus the gain check for the configured run."""
    est = estimate_bounds(setup.model, setup.sim.trajectory, setup.sim.gains, setup.budget)
    z0 = initial_errors(setup.model, setup.sim)
    report = check_gains(setup.sim.gains, est.gain_bounds(z0))
    payload = report.to_dict()
    payload["bounds"] = est.to_dict()
    return report, payload


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(json_safe(payload), fh, indent=2, allow_nan=False)


def cmd_simulate(m: RunManifest) -> int:
    setup = _prepare(m)
    report, payload = certify(setup)
    _write_json(m.out / "gains.json", payload)
    trace = run(setup.model, setup.sim, report=report)
    trace.to_csv(m.out / "trace.csv")
    s = write_summary(trace, m.out / "summary.json", setup.settle_time)
    print(f"final |e1| = {abs(s['final_e1']):.3e} rad, switches = {s['switch_count']}, "
          f"saturated steps = {s['saturation_steps']}, gains certified = {report.all_passed}")
    return EXIT_OK


def cmd_pattern(m: RunManifest) -> int:
    setup = _prepare(m)
    model = setup.model
    cadence = model.sense * setup.pattern_cadence_rpm * RPM
    rows = pattern_table(model, setup.pattern_n, cadence)
    write_pattern_csv(rows, m.out / "pattern.csv")
    print(f"q_glut = {q_glut(model.geometry, model.sense):.12f} rad")
    print(f"q_gast = {q_gast(model.geometry, model.sense):.12f} rad")
    return EXIT_OK


def cmd_certify(m: RunManifest) -> int:
    setup = _prepare(m)
    report, payload = certify(setup)
    _write_json(m.out / "gains.json", payload)
    for name in ("alpha_product", "beta", "ks"):
        c = getattr(report, name)
        print(f"{name:14s} {c.value:12.6g} > {c.threshold:12.6g}  {'pass' if c.passed else 'FAIL'}")
    return EXIT_OK if report.all_passed else EXIT_UNCERTIFIED


COMMANDS = {"simulate": cmd_simulate, "pattern": cmd_pattern, "certify": cmd_certify}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fescycle", description="FES cycling tracking-control simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "closed-loop run; writes trace.csv, summary.json, gains.json"),
        ("pattern", "stimulation table over one revolution; writes pattern.csv"),
        ("certify", "estimate bounds and check the gain conditions; writes gains.json"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, default=None, help="JSON or TOML config file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VAL",
                       help="dotted config override, repeatable")
        p.add_argument("--seed", type=int, default=None, help="seed for bound-estimation sampling")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    manifest = RunManifest(args.command, args.config, args.out, args.seed, list(args.override))
    try:
        return COMMANDS[args.command](manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FesCycleError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
