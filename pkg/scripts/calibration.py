"""Threshold sweep: precision and see effort against the termination offset,
goal and non-goal accuracy against the classification offset.

    python3 scripts/calibration.py --samples 10000
"""
import argparse
from dataclasses import fields

from rearrange.evaluation import CalibrationRow, calibrate_thresholds
from rearrange.io import rows_to_text
from rearrange.perception import NoiseModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--sigma", type=float, default=0.08)
    ap.add_argument("--p-bad-view", type=float, default=0.5)
    ap.add_argument("--see", default="random")
    args = ap.parse_args()

    noise = NoiseModel(sigma=args.sigma, p_bad_view=args.p_bad_view, view_correlation=0.5)
    rows = calibrate_thresholds(
        noise,
        [0.0, 0.06, 0.12, 0.2, 0.3, 0.45, 0.6],
        [0.01, 0.04, 0.1, 0.2, 0.4],
        args.samples,
        args.seed,
        see_kind=args.see,
    )
    header = [f.name for f in fields(CalibrationRow) if f.name != "samples"]
    print(rows_to_text(header, [[getattr(r, k) for k in header] for r in rows]), end="")


if __name__ == "__main__":
    main()
