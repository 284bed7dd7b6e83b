"""Share of random designs whose SASW bias factor falls below one (gamma = 0).

Contrasts three weight patterns with varying cluster sizes: equal design
weights within strata, equal w* within strata, and unrestricted weights.
"""

import argparse

import numpy as np

from fhvs.distributions import bias_factor
from fhvs.tables import AreaSample


def draw(rng, pattern: str, max_strata: int) -> AreaSample:
    H = int(rng.integers(1, max_strata + 1))
    stratum = np.repeat(np.arange(H), rng.integers(2, 9, size=H))
    m = len(stratum)
    n = rng.integers(1, 31, size=m).astype(float)
    level = rng.uniform(0.5, 3.0, size=H)[stratum]
    w = {"design": level * n, "wstar": level, "free": rng.uniform(0.5, 3.0, size=m) * n}[pattern]
    return AreaSample.planned(np.zeros(m), w, n=n, stratum=stratum)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-strata", type=int, default=3)
    args = ap.parse_args()

    for pattern in ("design", "wstar", "free"):
        rng = np.random.default_rng(args.seed)
        f = np.array([bias_factor(draw(rng, pattern, args.max_strata), 0.0, 1.0).factor for _ in range(args.n)])
        print(f"{pattern:7s} below one {np.mean(f < 1 - 1e-12):.4f}  equal to one {np.mean(np.abs(f - 1) <= 1e-12):.4f}  max {f.max():.4f}")


if __name__ == "__main__":
    main()
