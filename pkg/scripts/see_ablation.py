"""Match success and see steps of each see policy at one noise level.

    python3 scripts/see_ablation.py --trials 10000 --p-bad-view 0.7
"""
import argparse

from rearrange.evaluation import paired_gap_z, run_see_trials
from rearrange.io import rows_to_text
from rearrange.perception import NoiseModel

ORDER = ("oracle", "greedy", "random", "nosee")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=17)
    ap.add_argument("--goals", type=int, default=5)
    ap.add_argument("--max-see-steps", type=int, default=5)
    ap.add_argument("--sigma", type=float, default=0.03)
    ap.add_argument("--p-bad-view", type=float, default=0.7)
    ap.add_argument("--view-correlation", type=float, default=0.8)
    args = ap.parse_args()

    noise = NoiseModel(sigma=args.sigma, p_bad_view=args.p_bad_view, view_correlation=args.view_correlation)
    trials = {
        k: run_see_trials(noise, k, args.trials, args.seed, args.goals, max_see_steps=args.max_see_steps)
        for k in ORDER
    }
    rows = []
    for k, nxt in zip(ORDER, ORDER[1:] + (None,)):
        z = paired_gap_z(trials[k].correct, trials[nxt].correct) if nxt else float("nan")
        rows.append((k, trials[k].match_success, trials[k].mean_see_steps, z))
    print(rows_to_text(("see", "match_success", "see_steps", "z_vs_next"), rows), end="")


if __name__ == "__main__":
    main()
