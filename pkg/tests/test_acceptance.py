"""Exit criteria. Each test prints one verdict line and asserts it.

Run alone with ``pytest -m acceptance -s``.
"""
import time

import numpy as np
import pytest

from rearrange.cli import main
from rearrange.depgraph import (
    DependencyGraph,
    build_dependency_graph,
    classify_membership,
    min_fvs_bruteforce,
    min_fvs_exact,
)
from rearrange.evaluation import calibrate_thresholds, count_inversions, paired_gap_z, run_see_trials
from rearrange.experiment import ExperimentSpec, PolicySpec, ScenarioSource, compute_rows, run_summaries
from rearrange.perception import (
    NoiseModel,
    Thresholds,
    classify_goal,
    entropy,
    should_terminate,
    to_distribution,
)
from rearrange.seeding import stream
from rearrange.verify import (
    VerifyConfig,
    check_optimality,
    enumerate_tiny_scenes,
    grasp_order_totals,
    random_scenes,
    run_block2,
)

pytestmark = pytest.mark.acceptance

SEE_NOISE = NoiseModel(sigma=0.03, p_bad_view=0.7, view_correlation=0.8)
CALIBRATION_NOISE = NoiseModel(sigma=0.08, p_bad_view=0.5, view_correlation=0.5)
BUDGET_NOISE = NoiseModel(sigma=0.03, p_bad_view=0.3, view_correlation=0.5, p_bad_scene=0.3)


def random_digraph(rng):
    n = int(rng.integers(1, 11))
    density = rng.uniform(0.1, 0.5)
    arcs = [(a, b) for a in range(1, n + 1) for b in range(1, n + 1) if a != b and rng.random() < density]
    return DependencyGraph.from_arcs(range(1, n + 1), arcs)


def test_fvs_matches_subset_enumeration(report_line):
    rng = stream(2024, 1)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        g = random_digraph(rng)
        mismatches += min_fvs_exact(g).size != min_fvs_bruteforce(g).size
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 60
    report_line(1, "fvs-oracle", ok, f"graphs=1000 mismatches={mismatches} time={dt:.1f}s")
    assert ok


def test_ideal_pi0_is_optimal(report_line):
    t0 = time.perf_counter()
    scenes = random_scenes(1000, 6, seed=7)
    bad = [k for k, s in enumerate(scenes) if not check_optimality(s, k).ok]
    dt = time.perf_counter() - t0
    ok = not bad and dt < 300
    report_line(2, "pi0-optimality", ok, f"scenes=1000 mismatches={len(bad)} time={dt:.1f}s")
    assert ok


def test_grasp_order_invariance(report_line):
    # every occupancy pattern with M <= 5, plus random generator scenes (which include overlaps)
    scenes = enumerate_tiny_scenes(5) + random_scenes(300, 5, seed=11)
    checked = failures = 0
    for spec in scenes:
        g = build_dependency_graph(spec, spec.initial_state(), spec.true_goal)
        if len(classify_membership(g).free) < 2:
            continue
        checked += 1
        totals = grasp_order_totals(spec)
        failures += len(totals) != 1 or -1 in totals
    ok = failures == 0 and checked > 0
    report_line(3, "grasp-order-invariance", ok, f"scenes={checked} failures={failures}")
    assert ok


def test_in_hand_placement_needs_no_more_steps(report_line):
    t0 = time.perf_counter()
    block = run_block2(VerifyConfig(seed=5, episodes=2000))
    dt = time.perf_counter() - t0
    for line in block.lines():
        print(line)
    ok = block.passed and dt < 600 and all(p.pairs >= 2000 for p in block.points)
    gaps = " ".join(f"{p.name}:gap={p.gap:.2f},diff={p.steps_pi0 - p.steps_pi1:.3f}" for p in block.points)
    report_line(4, "in-hand-vs-scene", ok, f"{gaps} time={dt:.0f}s")
    assert ok


def test_distribution_invariants(report_line):
    rng = stream(99, 5)
    th = Thresholds()
    worst_norm = 0.0
    violations = 0
    for _ in range(10**5):
        n = int(rng.integers(2, 12))
        s = rng.normal(0, rng.choice([0.01, 0.3, 3.0]), size=n)
        tau = float(rng.choice([0.01, 0.1, 1.0]))
        d = to_distribution(s, tau)
        worst_norm = max(worst_norm, abs(d.probs.sum() - 1.0))
        h = entropy(d)
        if not -1e-12 <= h <= np.log(n) + 1e-12:
            violations += 1
        shifted = to_distribution(s + rng.uniform(-5, 5), tau)
        if (
            shifted.argmax != d.argmax
            or classify_goal(shifted, n, th) != classify_goal(d, n, th)
            or should_terminate(shifted, n, th) != should_terminate(d, n, th)
        ):
            violations += 1
    ok = worst_norm <= 1e-9 and violations == 0
    report_line(5, "distribution-invariants", ok, f"vectors=100000 max|sum-1|={worst_norm:.1e} violations={violations}")
    assert ok


def test_see_policy_ordering(report_line):
    order = ["oracle", "greedy", "random", "nosee"]
    trials = {k: run_see_trials(SEE_NOISE, k, 10**4, seed=17, max_see_steps=5) for k in order}
    rates = {k: trials[k].match_success for k in order}
    zs = [paired_gap_z(trials[a].correct, trials[b].correct) for a, b in zip(order, order[1:])]
    ok = all(z > 1.645 for z in zs)
    detail = " ".join(f"{k}={rates[k]:.4f}" for k in order) + " z=" + ",".join(f"{z:.1f}" for z in zs)
    report_line(6, "see-ordering", ok, detail)
    assert ok


def test_budget_monotonicity(report_line):
    policies = tuple(
        PolicySpec(g, s, p)
        for g in ("pi0", "random", "greedy")
        for s in ("nosee", "random", "greedy", "oracle")
        for p in ("pi0", "pi1")
    )
    exp = ExperimentSpec(
        scenarios=(ScenarioSource("random", random_max_objects=6),),
        policies=policies,
        noises=(("noisy", BUDGET_NOISE),),
        episodes=150,
        budgets=(15, 20, 30),
        seed=23,
    )
    rows = compute_rows(exp, run_summaries(exp))
    by_policy: dict[str, list] = {}
    for r in rows:
        by_policy.setdefault(r.policy, []).append(r)
    bad = []
    for name, group in by_policy.items():
        comp = [r.task_completion for r in sorted(group, key=lambda r: r.budget)]
        if any(b < a for a, b in zip(comp, comp[1:])):
            bad.append(name)
    ok = not bad and len(by_policy) == len(policies)
    report_line(7, "budget-monotonicity", ok, f"policies={len(by_policy)} non-monotone={bad}")
    assert ok


def test_calibration_monotonicity(report_line):
    omegas = [0.0, 0.06, 0.12, 0.2, 0.3, 0.45, 0.6]
    rows = calibrate_thresholds(CALIBRATION_NOISE, omegas, [], 10**4, seed=31)
    prec = [r.precision_at_termination for r in rows]
    steps = [r.mean_see_steps for r in rows]
    inv_p, inv_s = count_inversions(prec), count_inversions(steps)
    ok = inv_p <= 1 and inv_s <= 1 and not np.isnan(prec).any()
    detail = "precision=" + ",".join(f"{p:.3f}" for p in prec) + " see=" + ",".join(f"{s:.2f}" for s in steps)
    report_line(8, "calibration-monotonicity", ok, f"{detail} inversions={inv_p}/{inv_s}")
    assert ok


def test_reports_are_byte_identical(tmp_path, report_line, monkeypatch):
    verify = ["verify", "--seed", "41", "--mid-scenes", "50", "--episodes", "300", "--accuracy-trials", "500"]
    experiment = ["experiment", "--seed", "41", "--episodes", "40", "--random-max-objects", "6",
                  "--p-bad-scene", "0.3", "--p-bad-view", "0.3", "--sigma", "0.03",
                  "--policies", "pi0/nosee/pi0,pi0/greedy/pi1,random/random/pi1"]
    outputs = []
    for run, workers in enumerate(("1", "3")):
        monkeypatch.setenv("REARRANGE_WORKERS", workers)
        main(verify + ["--out", str(tmp_path / f"verify{run}.txt")])
        main(experiment + ["--out", str(tmp_path / f"exp{run}")])
        outputs.append(
            [(tmp_path / f"verify{run}.txt").read_bytes()]
            + [(tmp_path / f"exp{run}" / f).read_bytes() for f in ("report.txt", "metrics.csv", "episodes.jsonl")]
        )
    same = [a == b for a, b in zip(*outputs)]
    ok = all(same)
    report_line(9, "determinism", ok, f"verify={same[0]} experiment={all(same[1:])} workers=1 vs 3")
    assert ok
