"""Validation protocols for the learned parameter map and step selector."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .episode import EPISODE_FIELDS, EpisodeConfig, InitialCondition, run_episode
from .maps import StepSelector, select_step
from .paramgrid import ParamGrid, query_params
from .svm import SafeRegionModel

MODES = ("reach", "step-select")
_MODE_TAG = {"reach": 1, "step-select": 2}


class EmptyRegionError(RuntimeError):
    """Rejection sampling found no admissible point."""


@dataclass
class ValidationReport:
    mode: str
    seed: int
    records: list

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(int(r["reached"]) for r in self.records)

    @property
    def success_fraction(self) -> float:
        return self.successes / self.n if self.n else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("trial",) + EPISODE_FIELDS)
            for k, rec in enumerate(self.records):
                w.writerow([k] + [v if isinstance(v, (str, int)) else repr(float(v))
                                  for v in (rec[f] for f in EPISODE_FIELDS)])


def _draw(rng, sampler, accept, max_draws):
    for _ in range(max_draws):
        x = sampler(rng)
        if accept(x):
            return x
    raise EmptyRegionError(f"no admissible sample in {max_draws} draws")


def sample_safe_pairs(model: SafeRegionModel, grid: ParamGrid, n: int, seed: int,
                      max_draws: int = 1000) -> np.ndarray:
    """``n`` uniform (v0, s_des) pairs inside the safe region and the grid box."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MODE_TAG["reach"]]))
    v_lo = max(model.v_range[0], grid.velocities[0])
    v_hi = min(model.v_range[1], grid.velocities[-1])
    s_lo = max(model.s_range[0], grid.positions[0])
    s_hi = min(model.s_range[1], grid.positions[-1])
    lo, hi = np.array([v_lo, s_lo]), np.array([v_hi, s_hi])
    return np.array([_draw(rng, lambda r: lo + r.random(2) * (hi - lo),
                           lambda x: model.decision_function(x[None])[0] > 0, max_draws)
                     for _ in range(n)]).reshape(n, 2)


def sample_step_velocities(sel: StepSelector, model: SafeRegionModel | None, grid: ParamGrid,
                           n: int, seed: int, max_draws: int = 1000) -> np.ndarray:
    """``n`` uniform velocities whose selected step lies in the safe region."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MODE_TAG["step-select"]]))
    lo = max(sel.v_range[0], grid.velocities[0])
    hi = min(sel.v_range[1], grid.velocities[-1])

    def ok(v):
        s = select_step(sel, v)
        if not grid.contains(v, s):
            return False
        return model is None or model.decision_function([[v, s]])[0] > 0

    return np.array([_draw(rng, lambda r: lo + r.random() * (hi - lo), ok, max_draws)
                     for _ in range(n)], dtype=float)


def validate_reach(grid: ParamGrid, model: SafeRegionModel, n: int, seed: int,
                   config: EpisodeConfig | None = None, max_draws: int = 1000) -> ValidationReport:
    pairs = sample_safe_pairs(model, grid, n, seed, max_draws)
    records = []
    for v, s in pairs:
        ic = InitialCondition(float(v), float(s))
        records.append(run_episode(ic, query_params(grid, ic), config, keep_logs=False).record())
    return ValidationReport("reach", seed, records)


def validate_step_select(grid: ParamGrid, sel: StepSelector, model: SafeRegionModel | None,
                         n: int, seed: int, config: EpisodeConfig | None = None,
                         max_draws: int = 1000) -> ValidationReport:
    records = []
    for v in sample_step_velocities(sel, model, grid, n, seed, max_draws):
        ic = InitialCondition(float(v), select_step(sel, float(v)))
        records.append(run_episode(ic, query_params(grid, ic), config, keep_logs=False).record())
    return ValidationReport("step-select", seed, records)
