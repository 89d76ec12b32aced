"""Run both optimality checks at full size and print the report.

    python3 scripts/theorem_check.py --seed 5
"""
import argparse
import sys

from rearrange.verify import VerifyConfig, verify_theorems


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--tiny-max-objects", type=int, default=4)
    ap.add_argument("--mid-scenes", type=int, default=1000)
    ap.add_argument("--episodes", type=int, default=2000)
    args = ap.parse_args()
    report = verify_theorems(
        VerifyConfig(
            seed=args.seed,
            tiny_max_objects=args.tiny_max_objects,
            mid_scenes=args.mid_scenes,
            episodes=args.episodes,
        )
    )
    print(report.text(), end="")
    sys.exit(0 if report.passed else 1)


if __name__ == "__main__":
    main()
