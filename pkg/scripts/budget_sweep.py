"""Completion and planning steps of the main policies over several step budgets.

    python3 scripts/budget_sweep.py --episodes 500 --out results/budget
"""
import argparse

from rearrange.experiment import ExperimentSpec, PolicySpec, ScenarioSource, metrics_text, run_experiment
from rearrange.perception import NoiseModel

POLICIES = (
    PolicySpec("pi0", "nosee", "pi0"),
    PolicySpec("random", "nosee", "pi0"),
    PolicySpec("pi0", "random", "pi1"),
    PolicySpec("pi0", "greedy", "pi1"),
    PolicySpec("pi0", "oracle", "pi1"),
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--max-objects", type=int, default=6)
    ap.add_argument("--budgets", default="10,15,20,30")
    ap.add_argument("--out", help="results directory")
    args = ap.parse_args()

    base = dict(sigma=0.03, p_bad_view=0.3, view_correlation=0.5)
    exp = ExperimentSpec(
        scenarios=(ScenarioSource(f"random{args.max_objects}", random_max_objects=args.max_objects),),
        policies=POLICIES,
        noises=(
            ("ideal", NoiseModel.ideal()),
            ("scene_bad_0.30", NoiseModel(p_bad_scene=0.3, **base)),
        ),
        episodes=args.episodes,
        budgets=tuple(int(b) for b in args.budgets.split(",")),
        seed=args.seed,
        output=args.out,
    )
    print(metrics_text(run_experiment(exp)), end="")


if __name__ == "__main__":
    main()
