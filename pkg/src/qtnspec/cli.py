"""Command-line driver: qtnspec {run,validate,solve,compile,shots,spectrum,oracle}."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, reference_toml


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtnspec", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "all stages: solve, oracle, compile, shots, spectrum, field scan"),
        ("validate", "check a config without running anything"),
        ("solve", "DMRG eigenstates"),
        ("compile", "circuits for the configured states (needs solve)"),
        ("shots", "energy, overlap and dipole protocols (needs compile)"),
        ("spectrum", "neutron-scattering intensity map (needs solve)"),
        ("oracle", "exact-diagonalization energies"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name != "validate",
                       help="TOML path or bundled name (spin_half_zero_field, spin_half_field_B3, cr8)")
        p.add_argument("--out", help="output directory (default: the config's output_dir)")
        p.add_argument("--seed", type=int, help="override the global seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for compiled kernels")
        p.add_argument("--no-plots", action="store_true", help="skip SVG figures")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "validate":
            p.add_argument("--reference", action="store_true", help="print every key with its default")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "validate" and args.reference:
        sys.stdout.write(reference_toml())
        return 0
    if args.config is None:
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg.data["seed"] = args.seed
    if args.command == "validate":
        print(f"{args.config}: ok")
        return 0
    if args.threads > 1:
        import numba
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))

    from .pipeline import Run, run_all
    out = Path(args.out or cfg["output_dir"])
    plots = not args.no_plots
    if args.command == "run":
        run_all(cfg, out, plots)
    else:
        r = Run(cfg, out, plots)
        stage = {"solve": r.solve, "compile": r.compile, "shots": r.shots,
                 "spectrum": r.spectrum, "oracle": r.oracle}[args.command]
        try:
            r.stage(args.command, stage)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        r.finish()
    print(out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
