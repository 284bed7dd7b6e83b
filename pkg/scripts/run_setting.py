"""Run one simulation setting and print its metric summary.

    python3 scripts/run_setting.py --setting 1 --G 30 --out runs
"""

import argparse
import json

from fhvs import runner
from fhvs.frame import SETTINGS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--setting", default="1", choices=SETTINGS)
    ap.add_argument("--K", type=int, default=60)
    ap.add_argument("--A", type=int, default=10)
    ap.add_argument("--G", type=int, default=30)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--full-scale", action="store_true", help="K=300, G=100, 4 chains x 1000 draws")
    args = ap.parse_args()

    overrides = dict(setting=args.setting, K=args.K, A=args.A, G=args.G, seed=args.seed, threads=args.threads, out=args.out)
    if args.full_scale:
        overrides.update(K=300, A=47, G=100, mcmc={"chains": 4, "warmup": 1000, "draws": 1000})
    summary = runner.run_setting(runner.RunConfig.from_dict(overrides))
    for key, metrics in summary.get("metrics", {}).items():
        print(key, json.dumps({k: round(v, 4) for k, v in metrics.items()}))
    if summary["failures"]:
        raise SystemExit(f"{len(summary['failures'])} replicate(s) failed")


if __name__ == "__main__":
    main()
