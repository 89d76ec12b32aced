"""Command line: gen, run, experiment, calibrate, verify, report."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from .depgraph import build_dependency_graph
from .evaluation import CalibrationRow, calibrate_thresholds
from .experiment import (
    ExperimentSpec,
    PolicySpec,
    ScenarioSource,
    experiment_from_dict,
    metrics_csv,
    metrics_text,
    regenerate_report,
    run_experiment,
)
from .io import (
    load_scenario,
    noise_from_dict,
    rows_to_csv,
    rows_to_text,
    save_scenario,
    trace_to_jsonl,
)
from .perception import NoiseModel, Thresholds
from .scene import ScenarioParams, generate_scene, random_params
from .seeding import derive_seed, stream
from .simulator import EpisodeConfig, run_episode
from .verify import VerifyConfig, verify_theorems

_NOISE_FLOATS = ("mu_match", "mu_nonmatch", "sigma", "p_bad_view", "mu_bad", "temperature", "view_correlation")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _confuser(text: str) -> dict[int, int]:
    out = {}
    for pair in text.split(","):
        obj, goal = pair.split(":")
        out[int(obj)] = int(goal)
    return out


def add_noise_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("noise model")
    g.add_argument("--noise-file", help="JSON noise model; individual flags override its fields")
    for name in _NOISE_FLOATS:
        g.add_argument(_flag(name), type=float, default=None)
    g.add_argument("--num-views", type=int, default=None)
    g.add_argument("--p-bad-scene", type=float, default=None)
    g.add_argument("--confuser", type=_confuser, default=None, help="object:goal pairs, e.g. 1:2,3:1")
    g.add_argument("--random-confuser", action="store_true", default=None)


def noise_from_args(args, base: NoiseModel | None = None) -> NoiseModel:
    if args.noise_file:
        base = noise_from_dict(json.loads(Path(args.noise_file).read_text()))
    base = base or NoiseModel()
    d = {f.name: getattr(base, f.name) for f in fields(NoiseModel)}
    for name in _NOISE_FLOATS + ("num_views", "p_bad_scene", "confuser", "random_confuser"):
        v = getattr(args, name)
        if v is not None:
            d[name] = v
    return NoiseModel(**d)


def add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("episode")
    g.add_argument("--step-budget", type=int, default=30)
    g.add_argument("--max-see-steps", type=int, default=5)
    g.add_argument("--p-grasp-fail", type=float, default=0.0)
    g.add_argument("--p-rotate-fail", type=float, default=0.0)
    g.add_argument("--lam", type=float, default=0.2, help="rotation failure penalty")
    g.add_argument("--mu", type=float, default=0.18, help="rotation magnitude penalty")
    g.add_argument("--omega-m", type=float, default=0.12)
    g.add_argument("--omega-g", type=float, default=0.04)
    g.add_argument("--fusion", choices=("mean", "latest"), default="mean")


def config_from_args(args, seed: int) -> EpisodeConfig:
    return EpisodeConfig(
        step_budget=args.step_budget,
        max_see_steps=args.max_see_steps,
        p_grasp_fail=args.p_grasp_fail,
        p_rotate_fail=args.p_rotate_fail,
        lam=args.lam,
        mu=args.mu,
        thresholds=Thresholds(omega_m=args.omega_m, omega_g=args.omega_g),
        fusion=args.fusion,
        rng_seed=seed,
    )


def add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--num-goals", type=int, default=4)
    g.add_argument("--num-nongoals", type=int, default=0)
    g.add_argument("--cycles", type=_int_list, default=(), help="cycle lengths, e.g. 2,3")
    g.add_argument("--fraction-at-goal", type=float, default=0.0)
    g.add_argument("--p-chain", type=float, default=0.0)
    g.add_argument("--p-nongoal-on-goal", type=float, default=0.0)
    g.add_argument("--random-max-objects", type=int, default=None, help="draw random scenario params instead")


def params_from_args(args, seed: int) -> ScenarioParams:
    return ScenarioParams(
        num_goal_objects=args.num_goals,
        num_nongoal_objects=args.num_nongoals,
        cycle_type=args.cycles,
        fraction_at_goal=args.fraction_at_goal,
        rng_seed=seed,
        p_chain=args.p_chain,
        p_nongoal_on_goal=args.p_nongoal_on_goal,
    )


# --- commands ------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    noise = noise_from_args(args) if args.with_noise else None
    for k in range(args.count):
        s = derive_seed(args.seed, k)
        if args.random_max_objects:
            spec = generate_scene(random_params(stream(s, 0), args.random_max_objects))
        else:
            spec = generate_scene(params_from_args(args, s % 2**31))
        path = out / f"scenario_{k:04d}.json"
        save_scenario(path, spec, noise)
        print(path)
    return 0


def cmd_run(args) -> int:
    noise_in_file = None
    if args.scenario:
        spec, noise_in_file = load_scenario(args.scenario)
    elif args.random_max_objects:
        spec = generate_scene(random_params(stream(args.seed, 0), args.random_max_objects))
    else:
        spec = generate_scene(params_from_args(args, args.seed))
    noise = noise_from_args(args, base=noise_in_file)
    if args.edge_list:
        g = build_dependency_graph(spec, spec.initial_state(), spec.true_goal)
        sys.stderr.write(g.to_edge_list())
    tr = run_episode(spec, args.grasp, args.see, args.place, noise, config_from_args(args, args.seed))
    text = trace_to_jsonl(tr)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _policies(text: str) -> tuple[PolicySpec, ...]:
    out = []
    for item in text.split(","):
        grasp, see, place = item.split("/")
        out.append(PolicySpec(grasp, see, place))
    return tuple(out)


def cmd_experiment(args) -> int:
    if args.config:
        exp = experiment_from_dict(json.loads(Path(args.config).read_text()), output=args.out)
        exp = replace(exp, seed=args.seed)
    else:
        if args.random_max_objects:
            src = ScenarioSource(f"random{args.random_max_objects}", random_max_objects=args.random_max_objects)
        else:
            src = ScenarioSource("cli", params=params_from_args(args, 0))
        exp = ExperimentSpec(
            scenarios=(src,),
            policies=_policies(args.policies),
            noises=(("cli", noise_from_args(args)),),
            episodes=args.episodes,
            budgets=args.budgets,
            seed=args.seed,
            config=config_from_args(args, 0),
            output=args.out,
        )
    rows = run_experiment(exp)
    sys.stdout.write(metrics_csv(rows) if args.csv else metrics_text(rows))
    return 0


CALIBRATION_HEADER = tuple(f.name for f in fields(CalibrationRow))


def cmd_calibrate(args) -> int:
    rows = calibrate_thresholds(
        noise_from_args(args),
        args.omega_m_values,
        args.omega_g_values,
        args.samples,
        args.seed,
        num_goals=args.goals,
        see_kind=args.see,
        max_see_steps=args.max_see_steps,
    )
    values = [[getattr(r, k) for k in CALIBRATION_HEADER] for r in rows]
    if args.out:
        Path(args.out).write_text(rows_to_csv(CALIBRATION_HEADER, values))
    sys.stdout.write(rows_to_text(CALIBRATION_HEADER, values))
    return 0


def cmd_verify(args) -> int:
    cfg = VerifyConfig(
        seed=args.seed,
        tiny_max_objects=args.tiny_max_objects,
        mid_scenes=args.mid_scenes,
        episodes=args.episodes,
        accuracy_trials=args.accuracy_trials,
    )
    report = verify_theorems(cfg)
    text = report.text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0 if report.passed else 1


def cmd_report(args) -> int:
    sys.stdout.write(regenerate_report(args.dir))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rearrange", description="Tabletop rearrangement simulator and experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write scenario files")
    add_scenario_args(p)
    add_noise_args(p)
    p.add_argument("--with-noise", action="store_true", help="embed the noise model in each file")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one episode and print its trace")
    add_scenario_args(p)
    add_noise_args(p)
    add_config_args(p)
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--grasp", choices=("pi0", "greedy", "random"), default="pi0")
    p.add_argument("--see", choices=("nosee", "random", "greedy", "oracle"), default="nosee")
    p.add_argument("--place", choices=("pi0", "pi1"), default="pi0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--edge-list", action="store_true", help="dump the initial dependency graph to stderr")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="run a policy x noise x budget grid")
    add_scenario_args(p)
    add_noise_args(p)
    add_config_args(p)
    p.add_argument("--config", help="experiment JSON (scenarios, policies, noises, ...)")
    p.add_argument("--policies", default="pi0/nosee/pi0,pi0/greedy/pi1", help="grasp/see/place,...")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--budgets", type=_int_list, default=(15, 20, 30))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--csv", action="store_true", help="print CSV instead of the aligned table")
    p.add_argument("--out", help="results directory")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("calibrate", help="sweep the confidence offsets")
    add_noise_args(p)
    p.add_argument("--omega-m-values", type=_float_list, default=[0.0, 0.06, 0.12, 0.2, 0.3, 0.45, 0.6])
    p.add_argument("--omega-g-values", type=_float_list, default=[0.01, 0.04, 0.1, 0.2])
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--goals", type=int, default=5)
    p.add_argument("--see", choices=("nosee", "random", "greedy", "oracle"), default="random")
    p.add_argument("--max-see-steps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("verify", help="check optimality and placement claims")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tiny-max-objects", type=int, default=4)
    p.add_argument("--mid-scenes", type=int, default=200)
    p.add_argument("--episodes", type=int, default=2000)
    p.add_argument("--accuracy-trials", type=int, default=4000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="regenerate the text report of a results directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
