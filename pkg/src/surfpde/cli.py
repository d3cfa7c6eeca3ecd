"""Command line interface.

    surfpde run <preset-or-file> [--set section.key=value ...] [--out DIR]
    surfpde converge <preset-or-file> --levels N [--set ...] [--out DIR]
    surfpde list-presets

Exit codes: 0 success, 2 configuration error, 3 numerical fault.
The SURFPDE_THREADS environment variable caps compiled-kernel threads.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from surfpde.errors import ConfigError, NumericalFault


def _apply_thread_env():
    n = os.environ.get("SURFPDE_THREADS")
    if n:
        try:
            import numba

            numba.set_num_threads(max(1, int(n)))
        except (ValueError, RuntimeError) as e:
            print(f"warning: SURFPDE_THREADS ignored ({e})", file=sys.stderr)


def _build_parser():
    ap = argparse.ArgumentParser(prog="surfpde",
                                 description="PDEs on moving curves and surfaces")
    ap.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run_p = sub.add_parser("run", help="run one experiment preset or config file")
    run_p.add_argument("config")
    run_p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override any config key")
    run_p.add_argument("--out", default=None, help="output directory")

    conv_p = sub.add_parser("converge", help="refinement study: dx, dx/2, ...")
    conv_p.add_argument("config")
    conv_p.add_argument("--levels", type=int, default=3)
    conv_p.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE")
    conv_p.add_argument("--out", default=None)

    sub.add_parser("list-presets", help="list shipped experiment presets")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    _apply_thread_env()
    try:
        if args.cmd == "list-presets":
            from surfpde.config import list_presets

            for name in list_presets():
                print(name)
            return 0

        from surfpde.config import load_config
        from surfpde import harness

        config = load_config(args.config, args.overrides)
        if args.cmd == "run":
            summary = harness.run(config, args.out)
            print(f"{summary['name']}: {summary['steps']} steps to t={summary['t']:g}, "
                  f"{summary['n_active']} active nodes, outputs in {summary['outdir']}")
            for t, e in summary["errors"]:
                print(f"  t={t:g}  max_abs_error={e:.6e}")
            if summary["radius"]:
                t, m, s = summary["radius"][-1]
                print(f"  final mean radius {m:.6g} (stddev {s:.3g})")
            if summary["components"]:
                print(f"  final component count {summary['components'][-1][1]}")
            return 0

        result = harness.converge(config, args.levels, args.out)
        print(f"errors ({config.name}):")
        dxs = sorted(result["table"], reverse=True)
        for dx in dxs:
            row = "  dx=%-9g" % dx
            for t in sorted(result["table"][dx]):
                row += "  %.3e" % result["table"][dx][t]
            print(row)
        print("e.o.c.:")
        for dx, t, order in result["eoc"]:
            print(f"  dx={dx:<9g} t={t:<8g} eoc={order:.3f}")
        print(f"outputs in {result['outdir']}")
        return 0
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except NumericalFault as e:
        print(f"numerical fault: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
