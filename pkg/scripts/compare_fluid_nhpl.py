"""Cross-validate the fluid model against the event-driven loss simulator.

Default config: 20 CUBIC flows sharing a 1 Gbit/s link (125000 pkt/s at
1000-byte packets) with a 1 ms round-trip delay, started at the equilibrium.
The fluid post-transient mean should sit on the fixed point and the NHPL
per-flow mean within a few percent of it; both numbers plus the relative gap
are printed, and all trace/event CSVs land in the output directory.
"""

import argparse

from tcpfluid import build_config, run_experiment


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/compare", help="artifact directory")
    parser.add_argument("--flows", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--t-end", type=float, default=30.0)
    args = parser.parse_args()

    config = build_config(
        {
            "mode": "both",
            "algorithm": "cubic",
            "capacity_pkts": 125000.0,
            "delay_tau": 0.001,
            "flows": args.flows,
            "init": "fixed-point",
            "t_end": args.t_end,
            "seed": args.seed,
            "post_transient": 0.5,
        }
    )
    result = run_experiment(config, args.out)
    print(result.summary)
    gap = result.metrics["nhpl_vs_fluid"]
    print(f"\nfluid vs nhpl post-transient gap: {100.0 * gap:+.2f}%")
    for name, path in sorted(result.artifacts.items()):
        print(f"wrote {name}: {path}")


if __name__ == "__main__":
    main()
