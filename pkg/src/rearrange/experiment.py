"""Monte Carlo experiment grid: scenarios x noise models x policies x step budgets.

Every episode runs once at the largest budget. Metrics for a smaller budget ``b``
come from truncating its per-step record at ``b``; the episode loop never looks at
the budget, so this equals a fresh run with budget ``b``.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .io import (
    config_from_dict,
    config_to_dict,
    dumps,
    noise_from_dict,
    noise_to_dict,
    params_from_dict,
    params_to_dict,
    rows_to_csv,
    rows_to_text,
)
from .perception import NoiseModel
from .scene import ScenarioParams, SceneSpec, generate_scene, random_params
from .seeding import derive_seed, stream
from .simulator import EpisodeConfig, run_episode

WORKERS_ENV = "REARRANGE_WORKERS"


@dataclass(frozen=True)
class ScenarioSource:
    """Either fixed structure (re-seeded each episode) or fully random params."""

    name: str
    params: ScenarioParams | None = None
    random_max_objects: int | None = None

    def __post_init__(self):
        if (self.params is None) == (self.random_max_objects is None):
            raise ValueError("give exactly one of params or random_max_objects")

    def scene(self, episode_seed: int) -> SceneSpec:
        if self.params is not None:
            return generate_scene(replace(self.params, rng_seed=derive_seed(episode_seed, 0) % 2**31))
        return generate_scene(random_params(stream(episode_seed, 0), self.random_max_objects))


@dataclass(frozen=True)
class PolicySpec:
    grasp: str = "pi0"
    see: str = "nosee"
    place: str = "pi0"

    @property
    def name(self) -> str:
        return f"{self.grasp}/{self.see}/{self.place}"


@dataclass(frozen=True)
class ExperimentSpec:
    scenarios: tuple[ScenarioSource, ...]
    policies: tuple[PolicySpec, ...]
    noises: tuple[tuple[str, NoiseModel], ...]
    episodes: int
    budgets: tuple[int, ...] = (15, 20, 30)
    seed: int = 0
    config: EpisodeConfig = field(default_factory=EpisodeConfig)
    output: str | None = None

    def validate(self) -> None:
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        for name, grid in (("scenarios", self.scenarios), ("policies", self.policies),
                           ("noises", self.noises), ("budgets", self.budgets)):
            if not grid:
                raise ValueError(f"{name} grid is empty")
        if min(self.budgets) < 1:
            raise ValueError("budgets must be >= 1")

    def cells(self) -> list[tuple[int, int, int]]:
        return [
            (s, n, p)
            for s in range(len(self.scenarios))
            for n in range(len(self.noises))
            for p in range(len(self.policies))
        ]


@dataclass(frozen=True)
class EpisodeSummary:
    """Per-step arrays of one episode, enough to score any budget."""

    cell: tuple[int, int, int]
    episode: int
    seed: int
    completed: bool = False
    num_steps: int = 0
    grasp_ok: tuple[bool, ...] = ()
    matched: tuple[bool, ...] = ()  # False on failed grasps
    see_steps: tuple[int, ...] = ()
    reward_grasp: tuple[float, ...] = ()
    reward_see: tuple[float, ...] = ()  # summed per step
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "cell": list(self.cell),
            "episode": self.episode,
            "seed": self.seed,
            "completed": self.completed,
            "num_steps": self.num_steps,
            "grasp_ok": list(self.grasp_ok),
            "matched": list(self.matched),
            "see_steps": list(self.see_steps),
            "reward_grasp": list(self.reward_grasp),
            "reward_see": list(self.reward_see),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSummary":
        return cls(
            cell=tuple(d["cell"]),
            episode=d["episode"],
            seed=d["seed"],
            completed=d["completed"],
            num_steps=d["num_steps"],
            grasp_ok=tuple(d["grasp_ok"]),
            matched=tuple(d["matched"]),
            see_steps=tuple(d["see_steps"]),
            reward_grasp=tuple(d["reward_grasp"]),
            reward_see=tuple(d["reward_see"]),
            error=d["error"],
        )


def episode_seed(master: int, scenario_idx: int, episode: int) -> int:
    """Shared by every noise model and policy, so cells are paired episode by episode."""
    return derive_seed(master, scenario_idx, episode)


def run_one(exp: ExperimentSpec, cell: tuple[int, int, int], episode: int) -> EpisodeSummary:
    s_idx, n_idx, p_idx = cell
    seed = episode_seed(exp.seed, s_idx, episode)
    try:
        spec = exp.scenarios[s_idx].scene(seed)
        pol = exp.policies[p_idx]
        cfg = replace(exp.config, step_budget=max(exp.budgets), rng_seed=seed)
        tr = run_episode(spec, pol.grasp, pol.see, pol.place, exp.noises[n_idx][1], cfg)
    except Exception as e:  # isolate any failure to this episode
        return EpisodeSummary(cell, episode, seed, error=f"{type(e).__name__}: {e}")
    return EpisodeSummary(
        cell=cell,
        episode=episode,
        seed=seed,
        completed=tr.completed,
        num_steps=len(tr.steps),
        grasp_ok=tuple(s.grasp_ok for s in tr.steps),
        matched=tuple(bool(s.matched) for s in tr.steps),
        see_steps=tuple(len(s.see) for s in tr.steps),
        reward_grasp=tuple(s.reward_grasp for s in tr.steps),
        reward_see=tuple(float(sum(r.reward for r in s.see)) for s in tr.steps),
    )


def _run_chunk(args) -> list[EpisodeSummary]:
    exp, jobs = args
    return [run_one(exp, cell, e) for cell, e in jobs]


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_summaries(exp: ExperimentSpec, workers: int | None = None) -> list[EpisodeSummary]:
    exp.validate()
    jobs = [(cell, e) for cell in exp.cells() for e in range(exp.episodes)]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        out = _run_chunk((exp, jobs))
    else:
        size = max(1, len(jobs) // (workers * 4))
        chunks = [(exp, jobs[k : k + size]) for k in range(0, len(jobs), size)]
        with Pool(workers) as pool:
            out = [s for part in pool.map(_run_chunk, chunks) for s in part]
    return sorted(out, key=lambda s: (s.cell, s.episode))


# --- metrics -------------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetOutcome:
    completed: bool
    steps: int
    see_steps: int
    picks: int
    matches: int
    reward_grasp: float
    reward_see: float
    see_actions: int


def truncate(s: EpisodeSummary, budget: int) -> BudgetOutcome:
    k = min(s.num_steps, budget)
    completed = s.completed and s.num_steps <= budget
    ok = s.grasp_ok[:k]
    return BudgetOutcome(
        completed=completed,
        steps=s.num_steps if completed else budget,
        see_steps=int(sum(s.see_steps[:k])),
        picks=int(sum(ok)),
        matches=int(sum(m for m, g in zip(s.matched[:k], ok) if g)),
        reward_grasp=float(sum(s.reward_grasp[:k])),
        reward_see=float(sum(s.reward_see[:k])),
        see_actions=int(sum(s.see_steps[:k])),
    )


METRIC_HEADER = (
    "scenario", "noise", "policy", "budget", "episodes", "errors",
    "task_completion", "completion_steps_mean", "completion_steps_std",
    "overall_steps_mean", "overall_steps_std", "see_steps", "match_success",
    "mean_rg_per_step", "mean_rs_per_see",
)


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    noise: str
    policy: str
    budget: int
    episodes: int
    errors: int
    task_completion: float  # percent
    completion_steps_mean: float
    completion_steps_std: float
    overall_steps_mean: float  # failures count as the budget
    overall_steps_std: float
    see_steps: float  # mean per completed episode
    match_success: float  # percent of successful picks
    mean_rg_per_step: float
    mean_rs_per_see: float

    def values(self) -> tuple:
        return tuple(getattr(self, k) for k in METRIC_HEADER)


def _mean_std(x: list[float]) -> tuple[float, float]:
    if not x:
        return float("nan"), float("nan")
    a = np.asarray(x, dtype=float)
    return float(a.mean()), float(a.std())


def metrics_row(names: tuple[str, str, str], budget: int, summaries: list[EpisodeSummary]) -> MetricsRow:
    good = [s for s in summaries if s.error is None]
    outs = [truncate(s, budget) for s in good]
    done = [o for o in outs if o.completed]
    c_mean, c_std = _mean_std([o.steps for o in done])
    o_mean, o_std = _mean_std([o.steps for o in outs])
    picks = sum(o.picks for o in outs)
    steps = sum(min(s.num_steps, budget) for s in good)
    sees = sum(o.see_actions for o in outs)
    return MetricsRow(
        scenario=names[0],
        noise=names[1],
        policy=names[2],
        budget=budget,
        episodes=len(summaries),
        errors=len(summaries) - len(good),
        task_completion=100.0 * len(done) / len(outs) if outs else float("nan"),
        completion_steps_mean=c_mean,
        completion_steps_std=c_std,
        overall_steps_mean=o_mean,
        overall_steps_std=o_std,
        see_steps=float(np.mean([o.see_steps for o in done])) if done else float("nan"),
        match_success=100.0 * sum(o.matches for o in outs) / picks if picks else float("nan"),
        mean_rg_per_step=sum(o.reward_grasp for o in outs) / steps if steps else float("nan"),
        mean_rs_per_see=sum(o.reward_see for o in outs) / sees if sees else float("nan"),
    )


def compute_rows(exp: ExperimentSpec, summaries: list[EpisodeSummary]) -> list[MetricsRow]:
    """Reduction over sorted cell keys; independent of how episodes were scheduled."""
    by_cell: dict[tuple, list[EpisodeSummary]] = {}
    for s in sorted(summaries, key=lambda s: (s.cell, s.episode)):
        by_cell.setdefault(tuple(s.cell), []).append(s)
    rows = []
    for cell in exp.cells():
        names = (exp.scenarios[cell[0]].name, exp.noises[cell[1]][0], exp.policies[cell[2]].name)
        for b in sorted(exp.budgets):
            rows.append(metrics_row(names, b, by_cell.get(cell, [])))
    return rows


def metrics_csv(rows: list[MetricsRow]) -> str:
    return rows_to_csv(METRIC_HEADER, [r.values() for r in rows])


def metrics_text(rows: list[MetricsRow]) -> str:
    return rows_to_text(METRIC_HEADER, [r.values() for r in rows])


# --- persistence ---------------------------------------------------------------------


def experiment_to_dict(exp: ExperimentSpec) -> dict:
    return {
        "scenarios": [
            {
                "name": s.name,
                "params": None if s.params is None else params_to_dict(s.params),
                "random_max_objects": s.random_max_objects,
            }
            for s in exp.scenarios
        ],
        "policies": [{"grasp": p.grasp, "see": p.see, "place": p.place} for p in exp.policies],
        "noises": [{"name": n, "model": noise_to_dict(m)} for n, m in exp.noises],
        "episodes": exp.episodes,
        "budgets": list(exp.budgets),
        "seed": exp.seed,
        "config": config_to_dict(exp.config),
    }


def experiment_from_dict(d: dict, output: str | None = None) -> ExperimentSpec:
    return ExperimentSpec(
        scenarios=tuple(
            ScenarioSource(
                name=s["name"],
                params=None if s.get("params") is None else params_from_dict(s["params"]),
                random_max_objects=s.get("random_max_objects"),
            )
            for s in d["scenarios"]
        ),
        policies=tuple(PolicySpec(**p) for p in d["policies"]),
        noises=tuple((n["name"], noise_from_dict(n["model"])) for n in d["noises"]),
        episodes=int(d["episodes"]),
        budgets=tuple(int(b) for b in d["budgets"]),
        seed=int(d["seed"]),
        config=config_from_dict(d["config"]) if "config" in d else EpisodeConfig(),
        output=output,
    )


def write_results(out_dir: str | Path, exp: ExperimentSpec, summaries: list[EpisodeSummary],
                  rows: list[MetricsRow]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiment.json").write_text(json.dumps(experiment_to_dict(exp), indent=2) + "\n")
    (out / "episodes.jsonl").write_text("".join(dumps(s.to_dict()) + "\n" for s in summaries))
    (out / "metrics.csv").write_text(metrics_csv(rows))
    (out / "report.txt").write_text(metrics_text(rows))


def regenerate_report(out_dir: str | Path) -> str:
    """Rebuild the text report from a saved results directory."""
    out = Path(out_dir)
    exp = experiment_from_dict(json.loads((out / "experiment.json").read_text()))
    summaries = [
        EpisodeSummary.from_dict(json.loads(line))
        for line in (out / "episodes.jsonl").read_text().splitlines()
        if line.strip()
    ]
    return metrics_text(compute_rows(exp, summaries))


def run_experiment(exp: ExperimentSpec, workers: int | None = None) -> list[MetricsRow]:
    summaries = run_summaries(exp, workers)
    rows = compute_rows(exp, summaries)
    if exp.output:
        write_results(exp.output, exp, summaries, rows)
    return rows
