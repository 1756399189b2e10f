"""End-to-end pieces shared by the CLI and the planted-DAG experiments."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import chain_dag, simulate_students
from .errors import ConfigError
from .mask import extract_adjacency
from .metrics import structural_f1
from .trainer import TrainConfig, evaluate_prediction, init_state, split_by_student, structure_snapshot, train


def parse_grid(text):
    """``"start:stop:step"`` -> inclusive, rounded array of cutoffs in (0, 1)."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"malformed grid {text!r}; expected start:stop:step") from None
    if step <= 0 or stop < start:
        raise ConfigError(f"malformed grid {text!r}; need step > 0 and stop >= start")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    grid = np.round(start + step * np.arange(n), 10)
    if grid[0] <= 0 or grid[-1] >= 1:
        raise ConfigError(f"grid {text!r} leaves the open interval (0, 1)")
    return grid


def kappa_sweep(L, P, truth, grid):
    """Structural scores of the extracted graph at every cutoff in ``grid``."""
    rows = []
    for kappa in grid:
        adj, _ = extract_adjacency(L, P, float(kappa))
        rows.append({"kappa": float(kappa), **structural_f1(adj, truth)})
    return rows


def best_of_sweep(rows):
    # first maximum keeps the smallest cutoff on ties
    return max(rows, key=lambda r: r["f1"])


def scaled_config(epochs=30, **overrides):
    """Defaults with the warm-up period shrunk so ``epochs`` spans the same schedule stages."""
    base = TrainConfig()
    period = max(1, round(base.schedule_period_epochs * epochs / base.epochs))
    return replace(base, epochs=epochs, schedule_period_epochs=period, **overrides)


@dataclass
class Scenario:
    world: object
    train: list
    heldout: list
    skill_index: dict


def chain_scenario(seed, num_skills=10, n_students=1000, steps=50, **dynamics):
    rng = np.random.default_rng(seed)
    world = chain_dag(num_skills, rng, seed=seed, **dynamics)
    sequences = simulate_students(world, n_students, steps, rng)
    tr, held = split_by_student(sequences, TrainConfig().heldout_fraction, seed)
    return Scenario(world, tr, held, {str(i): i for i in range(num_skills)})


@dataclass
class RecoveryRun:
    config: TrainConfig
    history: list
    sweep: list
    best: dict
    untrained: dict
    trained: dict
    adjacency: np.ndarray
    state: object


def run_recovery(scenario, config, grid=None):
    """Train on ``scenario`` and score the extracted graph over a cutoff sweep."""
    grid = parse_grid("0.40:0.55:0.005") if grid is None else grid
    untrained = evaluate_prediction(init_state(len(scenario.skill_index), config).model, scenario.heldout, scenario.skill_index)
    state, history = train(scenario.train, scenario.skill_index, config)
    P, L = structure_snapshot(state.model)
    rows = kappa_sweep(L, P, scenario.world.true_adjacency, grid)
    best = best_of_sweep(rows)
    adjacency, _ = extract_adjacency(L, P, best["kappa"])
    trained = evaluate_prediction(state.model, scenario.heldout, scenario.skill_index)
    return RecoveryRun(config, history, rows, best, untrained, trained, adjacency, state)
