"""Command-line entry point: ``prvdyn <subcommand> --config run.json --out DIR``."""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimConfig, load_config
from .csvio import write_csv
from .errors import ConfigError, NotApplicableError, PrvError
from .pdm import TRAJECTORY_COLUMNS, initial_state, simulate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 3
EXIT_FLOW_REVERSAL = 4


def parse_range(text: str) -> list:
    """``a:step:b`` (inclusive) or a comma-separated list."""
    if ":" in text:
        a, step, b = (float(v) for v in text.split(":"))
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def _common(p):
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: PRVDYN_JOBS or 1)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted-path config override")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prvdyn", description="Relief valve, pipe and tank dynamics")
    ap.add_argument("--version", action="version", version=f"prvdyn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="time simulation with the full pipe model")
    _common(p)
    p.add_argument("--stages", action="store_true", help="also write relief-cycle stage annotations")

    p = sub.add_parser("equilibrium", help="lift-pressure characteristic and folds")
    _common(p)
    p.add_argument("--n-samples", type=int, default=256)
    p.add_argument("--exact-gas", action="store_true", help="use the configured discharge convention for gas")

    p = sub.add_parser("qwm-eig", help="quarter-wave model Jacobian at the equilibrium for tank.inflow.q")
    _common(p)
    p.add_argument("--no-convection", action="store_true")

    p = sub.add_parser("hopf", help="critical pipe length against relative flow")
    _common(p)
    p.add_argument("--q", default="0.1:0.1:0.9")
    p.add_argument("--L-min", type=float, default=0.05)
    p.add_argument("--L-max", type=float, default=10.0)
    p.add_argument("--no-convection", action="store_true")
    p.add_argument("--no-inlet-loss", action="store_true")

    p = sub.add_parser("chart", help="opening/closing classification over (q, L)")
    _common(p)
    p.add_argument("--q", default="0.3:0.2:0.9")
    p.add_argument("--L", default="0.5,1,2")

    p = sub.add_parser("sweep-r", help="Poincare section against restitution coefficient")
    _common(p)
    p.add_argument("--r", default="0.2:0.1:0.9")
    p.add_argument("--discard", type=float, default=0.5)

    p = sub.add_parser("design", help="dimensionless opening and closing forces")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--bd", type=float, required=True)
    p.add_argument("--n", type=int, default=101)
    return ap


def _header(cfg: SimConfig, extra: str = "") -> list:
    lines = [cfg.header()]
    if extra:
        lines.append(extra)
    return lines


def cmd_simulate(cfg: SimConfig, args) -> int:
    system = cfg.system()
    run = cfg.run_settings()
    res = simulate(system, cfg.schedule(system), run, initial=initial_state(system, run.n_nodes, cfg.tank.p_r0 * system.p_set))
    hdr = _header(cfg)
    rows = zip(*(res.samples[c] for c in TRAJECTORY_COLUMNS))
    write_csv(args.out / "trajectory.csv", list(TRAJECTORY_COLUMNS), rows, hdr)
    write_csv(args.out / "events.csv", ["t", "kind", "impact_speed"], ((e.t, e.kind, e.impact_speed) for e in res.events), hdr)
    summary = dict(res.summary, header=hdr[0], config=cfg.to_dict())
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    if args.stages:
        from .sweeps import hysteresis_stages, write_stages_json

        st = hysteresis_stages(res, system)
        st["header"] = hdr[0]
        write_stages_json(st, args.out / "stages.json")
    return EXIT_FLOW_REVERSAL if res.status == "flow-reversal" else EXIT_OK


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def cmd_equilibrium(cfg, args) -> int:
    from .equilibrium import characteristic_curve, write_curve_csv

    curve = characteristic_curve(cfg.system(), args.n_samples, exact_gas=args.exact_gas)
    write_curve_csv(curve, args.out / "equilibrium.csv", _header(cfg))
    return EXIT_OK


def cmd_qwm_eig(cfg, args) -> int:
    from .qwm import QwmOptions, qwm_equilibrium, qwm_jacobian

    system = cfg.system()
    opts = QwmOptions(convection=not args.no_convection, inlet_loss=cfg.pipe.inlet_loss)
    mdot = cfg.tank.inflow.q * system.capacity()
    y = qwm_equilibrium(system, mdot, system.L, opts)
    jac = qwm_jacobian(system, y, system.L, mdot, opts)
    report = {
        "header": cfg.header(),
        "state_order": ["x", "xdot", "p_r", "B", "C"],
        "equilibrium": y.tolist(),
        "jacobian": jac.matrix.tolist(),
        "eigenvalues": [[float(ev.real), float(ev.imag)] for ev in jac.eigenvalues],
        "classification": jac.classification,
    }
    (args.out / "qwm_eig.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def cmd_hopf(cfg, args) -> int:
    from .qwm import QwmOptions, hopf_boundary, write_boundary_csv
    from .sweeps import resolve_jobs

    opts = QwmOptions(convection=not args.no_convection, inlet_loss=not args.no_inlet_loss)
    hb = hopf_boundary(cfg.system(), parse_range(args.q), (args.L_min, args.L_max), opts, jobs=resolve_jobs(args.jobs))
    write_boundary_csv(hb, args.out / "hopf.csv", _header(cfg))
    return EXIT_OK


def cmd_chart(cfg, args) -> int:
    from .sweeps import Thresholds, stability_chart, write_chart_csv

    th = Thresholds()
    chart = stability_chart(parse_range(args.L), parse_range(args.q), cfg.system(), cfg.run_settings(), th, cfg.tank.p_r0, args.jobs)
    write_chart_csv(chart, args.out / "chart.csv", _header(cfg, "thresholds " + json.dumps(th.__dict__, sort_keys=True)))
    return EXIT_OK


def cmd_sweep_r(cfg, args) -> int:
    from .sweeps import restitution_sweep, write_sweep_csv

    secs = restitution_sweep(parse_range(args.r), cfg.system(), cfg.tank.inflow.q, cfg.run_settings(), args.discard, cfg.tank.p_r0, args.jobs)
    write_sweep_csv(secs, args.out / "sweep_r.csv", _header(cfg, f"discard {args.discard}"))
    return EXIT_OK


def cmd_design(args) -> int:
    from .design import BlowdownDesign, write_force_csv

    d = BlowdownDesign(args.delta, args.eta, args.k, args.bd)
    params = f"delta={args.delta!r} eta={args.eta!r} k={args.k!r} bd={args.bd!r}"
    write_force_csv(d, args.out / "design.csv", args.n, [f"prvdyn {__version__} design {params}"])
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "qwm-eig": cmd_qwm_eig,
    "hopf": cmd_hopf,
    "chart": cmd_chart,
    "sweep-r": cmd_sweep_r,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "design":
            return cmd_design(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = load_config(args.config, args.override)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotApplicableError as exc:
        print(f"not applicable: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (PrvError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
