"""Command-line front end: ``fvdsim <subcommand> CONFIG [options]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure.  Every run writes its artifacts plus ``manifest.json`` (schema
version, config hash, seed, tool version, wall time, output list) into
``--out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from fvdsim import __version__
from fvdsim.analysis import (
    WindowMethod,
    decay_rate_scan,
    resonance_scan,
    scaling_fit,
    write_json,
    write_resonance_csv,
    write_scan_csv,
)
from fvdsim.config import SCHEMA_VERSION, build_experiment, config_hash, load_config
from fvdsim.engine import exact_pqg
from fvdsim.errors import ArgumentError, ConfigError, FvdError, OrderCapError
from fvdsim.model import build_hamiltonian, landscape, neel_bits, write_landscape_csv
from fvdsim.pauli import DEFAULT_MAX_BCH_ORDER, nested_commutator_reports, neel_reference, staggered_magnetization
from fvdsim.protocols import InitialKind, InitialState, quench_experiment, resonance_ramp_experiment
from fvdsim.state import StateVector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _ratio_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fvdsim", description="False-vacuum decay simulator for Rydberg rings.")
    parser.add_argument("--version", action="version", version=f"fvdsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. spec.n_sites=8 (repeatable)")
        p.add_argument("--out", default="fvdsim_out", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="parallel workers (default: FVDSIM_THREADS or cores)")
        p.add_argument("--deterministic", action="store_true", help="force single-threaded execution")

    p = sub.add_parser("evolve", help="run a quench and write the observable time series")
    common(p)
    p = sub.add_parser("scan-deltal", help="decay rates versus V/Delta_l with a scaling fit")
    common(p)
    p.add_argument("--ratios", type=_ratio_list, default=None, help="comma-separated V/Delta_l values")
    p.add_argument("--state", choices=["neel", "pqg"], default=None)
    p.add_argument("--method", choices=["formula", "percentage"], default=None)
    p = sub.add_parser("resonance", help="final bubble density versus V/Delta_l after the sqrt ramp")
    common(p)
    p.add_argument("--L", dest="length", type=int, default=None)
    p.add_argument("--ratios", type=_ratio_list, default=None)
    p.add_argument("--landscape", action="store_true", help="also write the final-state landscape projection")
    p = sub.add_parser("bch", help="nested-commutator coefficients on Neel and PQG")
    common(p)
    p.add_argument("--max-order", type=int, default=None)
    p = sub.add_parser("landscape", help="static-energy landscape of product states")
    common(p)
    p = sub.add_parser("selftest", help="quick internal consistency checks")
    common(p, needs_config=False)
    return parser


def resolve_threads(args) -> int:
    if args.deterministic:
        return 1
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", "threads")
        return args.threads
    env = os.environ.get("FVDSIM_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"FVDSIM_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ConfigError("FVDSIM_THREADS must be >= 1")
        return value
    return os.cpu_count() or 1


class _Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, args, data: dict | None):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.data = data
        self.files: list[str] = []
        self.start = time.perf_counter()
        self.command = args.command
        self.threads = resolve_threads(args)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def finish(self) -> None:
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config_hash": config_hash(self.data) if self.data is not None else None,
            "config": self.data,
            "seed": self.data.get("rng_seed") if self.data else None,
            "tool_version": __version__,
            "threads": self.threads,
            "wall_time_s": time.perf_counter() - self.start,
            "outputs": sorted(self.files),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def cmd_evolve(args, data) -> int:
    run = _Run(args, data)
    cfg = build_experiment(data).with_(threads=run.threads)
    series = quench_experiment(cfg)
    series.write_csv(run.path("timeseries.csv"))
    run.finish()
    return EXIT_OK


def cmd_scan_deltal(args, data) -> int:
    scan = dict(data.get("scan") or {})
    ratios = args.ratios if args.ratios is not None else scan.get("ratios")
    if not ratios:
        raise ConfigError("scan-deltal needs a non-empty ratio list (--ratios or scan.ratios)", "scan.ratios")
    state = args.state or scan.get("state", "pqg")
    method = WindowMethod(args.method or scan.get("method", "formula"))
    run = _Run(args, data)
    cfg = build_experiment(data).with_(threads=run.threads)
    cfg = cfg.with_(initial=InitialState(InitialKind(state), cfg.initial.pqg_method, cfg.initial.pqg_epsilon))
    points, _ = decay_rate_scan(cfg, [float(r) for r in ratios], method, dt=float(scan.get("dt", 0.002)),
                                alpha_low=float(scan.get("alpha_low", 0.2)),
                                alpha_high=float(scan.get("alpha_high", 0.9)), horizon=scan.get("horizon"))
    write_scan_csv(run.path(f"scan_{state}_{method.value}.csv"), points)
    fit_range = scan.get("fit_range")
    if len(points) >= 4:
        fit = scaling_fit([(p.v_over_dl, p.gamma, p.omega) for p in points], tuple(fit_range) if fit_range else None)
        write_json(run.path(f"scaling_fit_{state}_{method.value}.json"), fit.to_dict())
    run.finish()
    return EXIT_OK


def cmd_resonance(args, data) -> int:
    res = dict(data.get("resonance") or {})
    length = args.length if args.length is not None else res.get("L")
    ratios = args.ratios if args.ratios is not None else res.get("ratios")
    if length is None or not ratios:
        raise ConfigError("resonance needs L and a non-empty ratio list", "resonance")
    omega_f = float(res.get("omega_f", data["spec"]["omega"]))
    ramp = float(res.get("ramp_duration", 1.0))
    run = _Run(args, data)
    cfg = build_experiment(data).with_(threads=run.threads)
    scan = resonance_scan(cfg, [float(r) for r in ratios], int(length), omega_f, ramp)
    write_resonance_csv(run.path(f"resonance_L{length}.csv"), scan)
    write_json(run.path(f"peak_L{length}.json"), scan.to_dict())
    if args.landscape or res.get("landscape"):
        series = resonance_ramp_experiment(cfg.with_(sample_times=(0.0, ramp)), omega_f, ramp, with_landscape=True)
        proj = series.metadata["landscape_projection"]
        with open(run.path("landscape_projection.csv"), "w") as fh:
            fh.write("hamming_distance,energy_over_v,probability\n")
            for (dist, energy), prob in proj.items():
                fh.write(f"{dist},{energy:.16e},{prob:.16e}\n")
    run.finish()
    return EXIT_OK


def cmd_bch(args, data) -> int:
    bch = dict(data.get("bch") or {})
    max_order = args.max_order if args.max_order is not None else int(bch.get("max_order", 4))
    if not 0 <= max_order <= DEFAULT_MAX_BCH_ORDER:
        raise OrderCapError(f"max_order must be in [0, {DEFAULT_MAX_BCH_ORDER}], got {max_order}")
    run = _Run(args, data)
    cfg = build_experiment(data)
    spec = cfg.spec
    n = spec.n_sites
    # MHz units so the coefficients read directly as powers of Omega
    h = build_hamiltonian(spec, angular=False)
    m = staggered_magnetization(n)
    neel = StateVector.basis(n, neel_bits(n))
    pqg = exact_pqg(spec, float(bch.get("pqg_epsilon", cfg.initial.pqg_epsilon)))
    refs = {k: neel_reference(k, spec.omega, spec.delta_g, spec.v_nn, spec.delta_l, spec.nearest_neighbor)
            for k in range(max_order + 1)}
    refs = {k: v for k, v in refs.items() if v is not None}
    reports = nested_commutator_reports(h, m, max_order, neel, pqg, refs)
    write_json(run.path("bch.json"), {"reports": [r.to_dict() for r in reports]})
    run.finish()
    return EXIT_OK


def cmd_landscape(args, data) -> int:
    run = _Run(args, data)
    spec = build_experiment(data).spec
    write_landscape_csv(run.path("landscape.csv"), landscape(spec), spec.n_sites)
    run.finish()
    return EXIT_OK


def cmd_selftest(args, data) -> int:
    from fvdsim.selftest import run_selftest

    run = _Run(args, None)
    results = run_selftest()
    with open(run.path("selftest.txt"), "w") as fh:
        for name, ok, detail in results:
            line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
            print(line)
            fh.write(line + "\n")
    run.finish()
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERIC


COMMANDS = {
    "evolve": cmd_evolve,
    "scan-deltal": cmd_scan_deltal,
    "resonance": cmd_resonance,
    "bch": cmd_bch,
    "landscape": cmd_landscape,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        data = None if args.command == "selftest" else load_config(args.config, args.set)
        return COMMANDS[args.command](args, data)
    except (ConfigError, OrderCapError) as exc:
        print(f"fvdsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArgumentError as exc:
        print(f"fvdsim: invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FvdError as exc:
        print(f"fvdsim: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"fvdsim: numerical failure (LinAlgError): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
