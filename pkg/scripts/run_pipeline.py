#!/usr/bin/env python3
"""Run the full pipeline on the synthetic population and compare the
reported elasticities against the generator's ground truth.

Example:
    python3 scripts/run_pipeline.py --out runs/demo --seed 7
"""

import argparse
import json
import pathlib

from pseudopanel import cli


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo", help="output directory")
    parser.add_argument("--config", default=None, help="optional TOML run config")
    parser.add_argument("--seed", type=int, default=7, help="master RNG seed")
    args = parser.parse_args(argv)

    cli_args = ["run-all", "--out", args.out, "--seed", str(args.seed)]
    if args.config:
        cli_args += ["--config", args.config]
    rc = cli.main(cli_args)
    if rc != 0:
        return rc

    out = pathlib.Path(args.out)
    truth = json.loads((out / "truth.json").read_text())
    estimates = json.loads((out / "estimates.json").read_text())
    e_true = dict(zip(truth["function_codes"], truth["elasticities"]))

    print()
    print(f"{'function':22s} {'form':7s} {'effects':8s} "
          f"{'elasticity':>10s} {'s.e.':>7s} {'true':>7s} {'error':>7s}")
    for fn in truth["function_codes"]:
        f = estimates["functions"][fn]
        e = f["elasticity"]["value"]
        se = f["elasticity"]["std_error"]
        print(f"{fn:22s} {f['form']:7s} {f['effects']:8s} "
              f"{e:10.3f} {se:7.3f} {e_true[fn]:7.3f} {e - e_true[fn]:7.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
