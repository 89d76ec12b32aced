"""Matching-only Monte Carlo: see trials, scene-view accuracy, threshold calibration sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perception import (
    NoiseModel,
    Thresholds,
    classify_goal,
    draw_latent_views,
    sample_scene_view,
    should_terminate,
    to_distribution,
)
from .policy import SeePolicyKind
from .scene import ScenarioParams, SceneSpec, generate_scene
from .seeding import derive_seed, stream
from .simulator import EpisodeConfig, run_see_session

# stream tags for a see trial, under derive_seed(master, trial)
_T_OBJECT, _T_HAND, _T_SEE, _T_ROTATE, _T_SCENE = range(1, 6)


@dataclass
class SeeTrials:
    """Per-trial outcomes of in-hand matching sessions."""

    correct: np.ndarray  # final classification equals the true goal
    see_steps: np.ndarray
    terminated: np.ndarray  # final distribution passed the termination threshold
    first_correct: np.ndarray  # classification from the free first view alone
    first_below: np.ndarray  # first view was below the termination threshold

    @property
    def match_success(self) -> float:
        return float(self.correct.mean())

    @property
    def mean_see_steps(self) -> float:
        return float(self.see_steps.mean())


def matching_scene(num_goals: int, num_nongoals: int = 0) -> SceneSpec:
    return generate_scene(ScenarioParams(num_goal_objects=num_goals, num_nongoal_objects=num_nongoals))


def run_see_trials(
    noise: NoiseModel,
    see_kind: SeePolicyKind | str,
    n_trials: int,
    seed: int,
    num_goals: int = 5,
    thresholds: Thresholds = Thresholds(),
    max_see_steps: int = 5,
    fusion: str = "mean",
    p_rotate_fail: float = 0.0,
) -> SeeTrials:
    """Grasp a random goal object and run one in-hand session per trial.

    Trial ``t`` draws everything from ``derive_seed(seed, t)``, so different see
    policies evaluated with the same seed face the same objects and view qualities.
    """
    spec = matching_scene(num_goals)
    cfg = EpisodeConfig(
        max_see_steps=max_see_steps, thresholds=thresholds, fusion=fusion, p_rotate_fail=p_rotate_fail
    )
    out = {k: np.zeros(n_trials, dtype=bool) for k in ("correct", "terminated", "first_correct", "first_below")}
    steps = np.zeros(n_trials, dtype=int)
    for t in range(n_trials):
        s = derive_seed(seed, t)
        latent = draw_latent_views(noise, spec, s, max_poses=0)
        i = int(stream(s, _T_OBJECT).integers(1, num_goals + 1))
        goal_confuser = {spec.true_goal[k]: c for k, c in latent.confuser.items()}
        d, first, records = run_see_session(
            spec, i, see_kind, noise, cfg, latent,
            stream(s, _T_HAND), stream(s, _T_SEE), stream(s, _T_ROTATE), goal_confuser,
        )
        truth = spec.true_goal[i]
        out["correct"][t] = classify_goal(d, num_goals, thresholds) == truth
        out["terminated"][t] = should_terminate(d, num_goals, thresholds)
        out["first_correct"][t] = classify_goal(first, num_goals, thresholds) == truth
        out["first_below"][t] = not should_terminate(first, num_goals, thresholds)
        steps[t] = len(records)
    return SeeTrials(see_steps=steps, **out)


def scene_view_accuracy(
    noise: NoiseModel,
    n_trials: int,
    seed: int,
    num_goals: int = 5,
    thresholds: Thresholds = Thresholds(),
) -> float:
    """Fraction of single scene views of goal objects classified to the true goal."""
    spec = matching_scene(num_goals)
    state = spec.initial_state()
    hits = 0
    for t in range(n_trials):
        s = derive_seed(seed, t)
        latent = draw_latent_views(noise, spec, s, max_poses=0)
        i = int(stream(s, _T_OBJECT).integers(1, num_goals + 1))
        x = sample_scene_view(noise, spec, state, i, stream(s, _T_SCENE), latent)
        hits += classify_goal(to_distribution(x, noise.temperature), num_goals, thresholds) == spec.true_goal[i]
    return hits / n_trials


def nongoal_accuracy(
    noise: NoiseModel,
    n_trials: int,
    seed: int,
    num_goals: int = 5,
    thresholds: Thresholds = Thresholds(),
) -> float:
    """Fraction of single views of non-goal objects classified as non-goal."""
    spec = matching_scene(num_goals, num_nongoals=1)
    state = spec.initial_state()
    i = spec.nongoal_objects[0]
    hits = 0
    for t in range(n_trials):
        s = derive_seed(seed, t)
        latent = draw_latent_views(noise, spec, s, max_poses=0)
        x = sample_scene_view(noise, spec, state, i, stream(s, _T_SCENE), latent)
        hits += classify_goal(to_distribution(x, noise.temperature), num_goals, thresholds) is None
    return hits / n_trials


# --- calibration ---------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationRow:
    sweep: str  # "omega_m" | "omega_g"
    omega: float
    zeta: float
    samples: int
    # omega_m rows
    below_threshold_success: float = float("nan")
    precision_at_termination: float = float("nan")
    termination_rate: float = float("nan")
    mean_see_steps: float = float("nan")
    match_success: float = float("nan")
    # omega_g rows
    goal_accuracy: float = float("nan")
    nongoal_accuracy: float = float("nan")


def calibrate_thresholds(
    noise: NoiseModel,
    omega_m_values: list[float],
    omega_g_values: list[float],
    samples: int,
    seed: int,
    num_goals: int = 5,
    see_kind: SeePolicyKind | str = SeePolicyKind.RANDOM,
    max_see_steps: int = 5,
    omega_g: float = 0.04,
) -> list[CalibrationRow]:
    """Sweep both confidence offsets; every point reuses the same trial seeds."""
    if samples < 100:
        raise ValueError("calibration needs at least 100 samples per point")
    rows = []
    for w in omega_m_values:
        if not 0 <= w < 1 - 1 / num_goals:
            raise ValueError(f"omega_m={w} outside [0, 1 - 1/N)")
        # the sweep deliberately allows omega_m = 0, so no Thresholds.validate here
        th = Thresholds(omega_m=w, omega_g=min(omega_g, w))
        tr = run_see_trials(noise, see_kind, samples, seed, num_goals, th, max_see_steps)
        below = tr.first_below
        rows.append(
            CalibrationRow(
                sweep="omega_m",
                omega=w,
                zeta=th.zeta_m(num_goals),
                samples=samples,
                below_threshold_success=float(tr.first_correct[below].mean()) if below.any() else float("nan"),
                precision_at_termination=(
                    float(tr.correct[tr.terminated].mean()) if tr.terminated.any() else float("nan")
                ),
                termination_rate=float(tr.terminated.mean()),
                mean_see_steps=tr.mean_see_steps,
                match_success=tr.match_success,
            )
        )
    for w in omega_g_values:
        th = Thresholds(omega_m=max(w, 0.12), omega_g=w)
        rows.append(
            CalibrationRow(
                sweep="omega_g",
                omega=w,
                zeta=th.zeta_g(num_goals),
                samples=samples,
                goal_accuracy=scene_view_accuracy(noise, samples, seed, num_goals, th),
                nongoal_accuracy=nongoal_accuracy(noise, samples, seed, num_goals, th),
            )
        )
    return rows


def count_inversions(values: list[float], tol: float = 0.0) -> int:
    """Adjacent decreases larger than ``tol``."""
    return sum(1 for a, b in zip(values, values[1:]) if b < a - tol)


# --- paired statistics ----------------------------------------------------------------


def paired_bootstrap_ci(
    diffs: np.ndarray, seed: int, n_boot: int = 2000, level: float = 0.95
) -> tuple[float, float]:
    """Percentile bootstrap CI of the mean of paired differences."""
    diffs = np.asarray(diffs, dtype=float)
    if diffs.size == 0:
        raise ValueError("no paired differences")
    rng = stream(seed, 101)
    means = np.empty(n_boot)
    for b in range(n_boot):
        means[b] = diffs[rng.integers(0, diffs.size, diffs.size)].mean()
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def paired_gap_z(a: np.ndarray, b: np.ndarray) -> float:
    """z statistic of mean(a - b) for paired 0/1 or real outcomes; inf when a == b pathwise but means differ."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
    if se == 0.0:
        return 0.0 if d.mean() == 0 else float(np.sign(d.mean()) * np.inf)
    return float(d.mean() / se)
