"""Produce the local-stability certificate and an in-basin trajectory check.

Default config: one CUBIC flow on a 12500 pkt/s link with 10 ms delay.  The
stability run reports the quartic-form matrix, its minimum eigenvalue, and
the guaranteed basin radius for a 1% window excursion; the convergence run
then starts inside that basin and writes per-sample norm / V / Vdot / bound
diagnostics, whose bound_fraction should be exactly 1.0.
"""

import argparse
import os

from tcpfluid import build_config, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/stability", help="artifact directory")
    parser.add_argument("--capacity-pkts", type=float, default=12500.0)
    parser.add_argument("--delay-tau", type=float, default=0.01)
    args = parser.parse_args()

    base = {
        "algorithm": "cubic",
        "capacity_pkts": args.capacity_pkts,
        "delay_tau": args.delay_tau,
    }
    cert = run_experiment(
        build_config({**base, "mode": "stability"}),
        os.path.join(args.out, "certificate"),
    )
    print(cert.summary)

    # Start the verification trajectory well inside the certified radius.
    delta = cert.metrics["basin_delta"]
    diag = run_experiment(
        build_config(
            {
                **base,
                "mode": "convergence",
                "init": "offset",
                "init_offset_s": 0.8 * delta,
                "t_end": 100.0 * args.delay_tau,
            }
        ),
        os.path.join(args.out, "trajectory"),
    )
    print()
    print(diag.summary)
    for result in (cert, diag):
        for name, path in sorted(result.artifacts.items()):
            print(f"wrote {name}: {path}")


if __name__ == "__main__":
    main()
