"""Serialization: scenario files, noise/config dicts, trace JSONL and metric tables.

Every writer emits keys in a fixed order so outputs diff cleanly and re-runs are
byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

from .perception import NoiseModel, Thresholds
from .scene import LocKind, ScenarioParams, SceneSpec
from .simulator import EpisodeConfig, EpisodeTrace, SeeRecord, StepRecord

SCENARIO_FORMAT = "rearrange-scenario/1"
NONGOAL_TAG = "nongoal"


def dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


# --- scenario ------------------------------------------------------------------------


def params_to_dict(p: ScenarioParams) -> dict:
    d = asdict(p)
    d["cycle_type"] = list(p.cycle_type)
    return d


def params_from_dict(d: dict) -> ScenarioParams:
    known = {f.name for f in fields(ScenarioParams)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown scenario params {sorted(unknown)}")
    d = dict(d)
    d["cycle_type"] = tuple(d.get("cycle_type", ()))
    return ScenarioParams(**d)


def scenario_to_dict(spec: SceneSpec, noise: NoiseModel | None = None) -> dict:
    out = {
        "format": SCENARIO_FORMAT,
        "num_objects": spec.num_objects,
        "num_goals": spec.num_goals,
        "objects": [
            {
                "id": i,
                "true_goal": NONGOAL_TAG if spec.true_goal[i] is None else spec.true_goal[i],
                "initial_cells": sorted(spec.initial_footprint[i]),
            }
            for i in spec.objects
        ],
        "goals": [{"id": j, "cells": sorted(spec.goal_footprint[j])} for j in sorted(spec.goal_footprint)],
        "cell_universe": sorted(spec.cell_universe),
        "params": None if spec.params is None else params_to_dict(spec.params),
    }
    if noise is not None:
        out["noise"] = noise_to_dict(noise)
    return out


def scenario_from_dict(d: dict) -> SceneSpec:
    if d.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"not a scenario document (format={d.get('format')!r})")
    true_goal = {}
    initial = {}
    for o in d["objects"]:
        g = o["true_goal"]
        true_goal[int(o["id"])] = None if g == NONGOAL_TAG else int(g)
        initial[int(o["id"])] = frozenset(int(c) for c in o["initial_cells"])
    spec = SceneSpec(
        num_objects=int(d["num_objects"]),
        num_goals=int(d["num_goals"]),
        true_goal=dict(sorted(true_goal.items())),
        initial_footprint=dict(sorted(initial.items())),
        goal_footprint={int(g["id"]): frozenset(int(c) for c in g["cells"]) for g in d["goals"]},
        cell_universe=frozenset(int(c) for c in d["cell_universe"]),
        params=None if d.get("params") is None else params_from_dict(d["params"]),
    )
    return spec


def save_scenario(path: str | Path, spec: SceneSpec, noise: NoiseModel | None = None) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(spec, noise), indent=2) + "\n")


def load_scenario(path: str | Path) -> tuple[SceneSpec, NoiseModel | None]:
    d = json.loads(Path(path).read_text())
    noise = noise_from_dict(d["noise"]) if d.get("noise") is not None else None
    return scenario_from_dict(d), noise


# --- noise / config ------------------------------------------------------------------


def noise_to_dict(noise: NoiseModel) -> dict:
    d = asdict(noise)
    if noise.confuser is not None:
        d["confuser"] = {str(k): int(v) for k, v in sorted(noise.confuser.items())}
    return d


def noise_from_dict(d: dict) -> NoiseModel:
    d = dict(d)
    if d.get("confuser") is not None:
        d["confuser"] = {int(k): int(v) for k, v in d["confuser"].items()}
    return NoiseModel(**d)


def config_to_dict(cfg: EpisodeConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> EpisodeConfig:
    d = dict(d)
    if "thresholds" in d:
        d["thresholds"] = Thresholds(**d["thresholds"])
    return EpisodeConfig(**d)


# --- traces --------------------------------------------------------------------------


def _floats(xs) -> list[float] | None:
    return None if xs is None else [float(x) for x in xs]


def see_record_to_dict(r: SeeRecord) -> dict:
    return {
        "view": r.view,
        "rotate_ok": r.rotate_ok,
        "magnitude": r.magnitude,
        "delta_entropy": r.delta_entropy,
        "match": r.match,
        "reward": r.reward,
        "probs": _floats(r.probs),
    }


def step_to_dict(s: StepRecord) -> dict:
    return {
        "type": "step",
        "index": s.index,
        "grasp": s.grasp,
        "grasp_ok": s.grasp_ok,
        "inhand_probs": _floats(s.inhand_probs),
        "see": [see_record_to_dict(r) for r in s.see],
        "place": None if s.place is None else str(s.place),
        "reward_grasp": s.reward_grasp,
        "probs": _floats(s.probs),
        "matched": s.matched,
    }


def trace_summary_dict(trace: EpisodeTrace) -> dict:
    final = {}
    for i in sorted(trace.final_state.location):
        loc = trace.final_state.location[i]
        final[str(i)] = sorted(loc.cells) if loc.kind is LocKind.PLACED else loc.kind.value
    return {
        "type": "summary",
        "completed": trace.completed,
        "planning_steps": trace.planning_steps,
        "see_steps_total": trace.see_steps_total,
        "match_successes": trace.match_successes,
        "picks": trace.picks,
        "step_budget": trace.step_budget,
        "seed": trace.seed,
        "final_locations": final,
    }


def trace_to_jsonl(trace: EpisodeTrace) -> str:
    lines = [dumps(step_to_dict(s)) for s in trace.steps]
    lines.append(dumps(trace_summary_dict(trace)))
    return "\n".join(lines) + "\n"


def read_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# --- tables --------------------------------------------------------------------------


def format_cell(v: Any) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "nan" if v != v else f"{v:.4f}"
    return str(v)


def rows_to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


def rows_to_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    cells = [list(header)] + [[format_cell(v) for v in r] for r in rows]
    widths = [max(len(row[k]) for row in cells) for k in range(len(header))]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(c.rjust(w) if n else c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
