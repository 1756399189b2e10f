"""Training loop, temperature/unroll schedule, evaluation and checkpoints."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .errors import ConfigError, DataError, NumericalError
from .mask import LEARNABLE, STRUCTURE_MODES
from .model import CausalKT
from .sinkhorn import hardness

log = logging.getLogger(__name__)

SCHEDULES = ("additive", "multiplicative", "fixed")
HISTORY_COLUMNS = ("epoch", "loss", "hardness", "L_sparsity", "temperature", "unroll")
CHECKPOINT_FORMAT = "causalkt-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 5e-4
    init_temperature: float = 2.0
    init_unroll: int = 5
    temperature_increment: float = 2.0
    unroll_increment: int = 5
    schedule_period_epochs: int = 10
    schedule: str = "additive"
    alpha_start: float = 1.0
    alpha_increment: float = 1.0
    alpha_max: float = 10.0
    structure_mode: str = LEARNABLE
    kappa: float = 0.45
    embedding_dim: int = 32
    seed: int = 0
    grad_clip: float = 5.0
    heldout_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}")
        if self.structure_mode not in STRUCTURE_MODES:
            raise ConfigError(f"structure_mode must be one of {STRUCTURE_MODES}")
        if not 0.0 < self.kappa < 1.0:
            raise ConfigError("kappa must lie in (0, 1)")
        if self.schedule_period_epochs < 1:
            raise ConfigError("schedule_period_epochs must be >= 1")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ConfigError("heldout_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)


def schedule_at(config, epoch):
    """``(temperature, unroll, alpha)`` in force during 0-based ``epoch``."""
    period = epoch // config.schedule_period_epochs
    if config.schedule == "fixed":
        # hold the values the additive warm-up would end on
        period = max(config.epochs - 1, 0) // config.schedule_period_epochs
        temperature = config.init_temperature + period * config.temperature_increment
        unroll = config.init_unroll + period * config.unroll_increment
    elif config.schedule == "additive":
        temperature = config.init_temperature + period * config.temperature_increment
        unroll = config.init_unroll + period * config.unroll_increment
    else:
        temperature = config.init_temperature * config.temperature_increment**period
        unroll = config.init_unroll * config.unroll_increment**period
    alpha = min(config.alpha_start + period * config.alpha_increment, config.alpha_max)
    return float(temperature), int(unroll), float(alpha)


# ------------------------------------------------------------------ batching

@dataclass
class EncodedData:
    skills: list
    correct: list

    def __len__(self):
        return len(self.skills)


def encode_sequences(sequences, skill_index):
    """Dense arrays per sequence; sequences with fewer than two events are dropped."""
    skills, correct, skipped = [], [], 0
    for s in sequences:
        if len(s) < 2:
            skipped += 1
            continue
        skills.append(s.dense_skills(skill_index))
        correct.append(s.correct)
    if skipped:
        log.warning("skipped %d sequence(s) with fewer than two events", skipped)
    return EncodedData(skills, correct)


def pad_batch(data, idx):
    length = max(len(data.skills[i]) for i in idx)
    b = len(idx)
    skills = np.zeros((b, length), dtype=np.int64)
    correct = np.zeros((b, length), dtype=bool)
    valid = np.zeros((b, length), dtype=bool)
    for row, i in enumerate(idx):
        n = len(data.skills[i])
        skills[row, :n] = data.skills[i]
        correct[row, :n] = data.correct[i]
        valid[row, :n] = True
    return skills, correct, valid


def split_by_student(sequences, heldout_fraction, seed):
    """Shuffle students with ``seed`` and hold out ``heldout_fraction`` of them."""
    rng = np.random.default_rng([seed, 2])
    order = rng.permutation(len(sequences))
    n_held = int(round(heldout_fraction * len(sequences)))
    held = sorted(order[:n_held])
    train = sorted(order[n_held:])
    return [sequences[i] for i in train], [sequences[i] for i in held]


# ------------------------------------------------------------------ training

@dataclass
class TrainState:
    model: CausalKT
    optimizer: ad.Adam
    rng: np.random.Generator
    epochs_completed: int = 0


def structure_snapshot(model):
    """Current ``(P, L)`` as numpy arrays under the model's schedule."""
    _, P, L = model.build_mask()
    return P.value, L.value


def l_sparsity(L, kappa):
    c = L.shape[0]
    if c < 2:
        return 0.0
    lower = L[np.tril_indices(c, k=-1)]
    return float(np.mean(lower < kappa))


def init_state(num_skills, config):
    t0, u0, a0 = schedule_at(config, 0)
    from .sinkhorn import SinkhornConfig

    model = CausalKT.init(
        num_skills,
        embedding_dim=config.embedding_dim,
        structure_mode=config.structure_mode,
        alpha=a0,
        sinkhorn_cfg=SinkhornConfig(t0, u0),
        seed=config.seed,
    )
    optimizer = ad.Adam(model.parameters().values(), lr=config.learning_rate)
    return TrainState(model, optimizer, np.random.default_rng([config.seed, 1]))


def train(sequences, skill_index, config, state=None, on_epoch=None):
    """Fit the model; returns ``(state, history)``.

    ``history`` is a list of dicts keyed by :data:`HISTORY_COLUMNS`.
    """
    data = encode_sequences(sequences, skill_index)
    if len(data) == 0:
        raise DataError("train: no sequence with at least two events")
    if state is None:
        state = init_state(len(skill_index), config)
    model, opt, rng = state.model, state.optimizer, state.rng
    params = list(model.parameters().values())
    history = []
    for epoch in range(state.epochs_completed, config.epochs):
        model.set_schedule(*schedule_at(config, epoch))
        order = rng.permutation(len(data))
        total, count = 0.0, 0
        for batch_no, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            if len(idx) == 0:
                continue
            skills, correct, valid = pad_batch(data, idx)
            opt.zero_grad()
            loss = model.batch_loss(skills, correct, valid)
            value = float(loss.value)
            if not np.isfinite(value):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, batch {batch_no + 1}")
            ad.backward(loss)
            grads, _ = ad.clip_grad_norm([p.grad for p in params], config.grad_clip)
            opt.step(grads)
            total += value * len(idx)
            count += len(idx)
        P, L = structure_snapshot(model)
        row = {
            "epoch": epoch + 1,
            "loss": total / count,
            "hardness": hardness(P),
            "L_sparsity": l_sparsity(L, config.kappa),
            "temperature": model.mask.sinkhorn_cfg.temperature,
            "unroll": model.mask.sinkhorn_cfg.unroll,
        }
        history.append(row)
        state.epochs_completed = epoch + 1
        log.info("epoch %d loss %.5f hardness %.3f", row["epoch"], row["loss"], row["hardness"])
        if on_epoch is not None:
            on_epoch(row)
    return state, history


# ------------------------------------------------------------------ evaluation

def roc_auc(labels, scores):
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties averaged)."""
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def prediction_metrics(labels, probs):
    labels = np.asarray(labels, dtype=bool)
    probs = np.clip(np.asarray(probs, dtype=np.float64), 1e-15, 1 - 1e-15)
    log_loss = -np.mean(np.where(labels, np.log(probs), np.log1p(-probs)))
    return {
        "log_loss": float(log_loss),
        "auc": roc_auc(labels, probs),
        "accuracy": float(np.mean((probs >= 0.5) == labels)),
        "n_events": int(len(labels)),
    }


def predict_events(model, sequences, skill_index, chunk=256):
    """Labels and predicted probabilities for every predicted event (t >= 2)."""
    data = encode_sequences(sequences, skill_index)
    M, _, _ = model.build_mask()
    labels, probs = [], []
    for start in range(0, len(data), chunk):
        idx = np.arange(start, min(start + chunk, len(data)))
        skills, correct, valid = pad_batch(data, idx)
        p = model.predict_proba(skills, correct, M)
        keep = valid[:, 1:]
        labels.append(correct[:, 1:][keep])
        probs.append(p[keep])
    if not labels:
        return np.zeros(0, bool), np.zeros(0)
    return np.concatenate(labels), np.concatenate(probs)


def evaluate_prediction(model, heldout, skill_index):
    if not heldout:
        raise DataError("evaluate_prediction: empty heldout set")
    labels, probs = predict_events(model, heldout, skill_index)
    return prediction_metrics(labels, probs)


# ------------------------------------------------------------------ persistence

def write_history(path, history):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in HISTORY_COLUMNS])


def read_history(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {c: (int(r[c]) if c in ("epoch", "unroll") else float(r[c])) for c in HISTORY_COLUMNS} for r in rows
    ]


def _pack(array):
    array = np.asarray(array, dtype=np.float64)
    return {"shape": list(array.shape), "data": array.ravel().tolist()}


def _unpack(blob):
    return np.asarray(blob["data"], dtype=np.float64).reshape(blob["shape"])


def save_checkpoint(path, state, config, skill_index):
    model = state.model
    cfg = model.mask.sinkhorn_cfg
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "num_skills": model.num_skills,
        "config": config.to_dict(),
        "skill_index": skill_index,
        "schedule": {"temperature": cfg.temperature, "unroll": cfg.unroll, "alpha": model.mask.alpha},
        "epochs_completed": state.epochs_completed,
        "arrays": {name: _pack(a) for name, a in model.all_arrays().items()},
        "optimizer": state.optimizer.state_dict(),
        "rng_state": state.rng.bit_generator.state,
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True))


@dataclass
class Checkpoint:
    state: TrainState
    config: TrainConfig
    skill_index: dict

    @property
    def model(self):
        return self.state.model


def load_checkpoint(path):
    blob = json.loads(Path(path).read_text())
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a checkpoint file")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {blob.get('version')}")
    config = TrainConfig.from_dict(blob["config"])
    state = init_state(int(blob["num_skills"]), config)
    model = state.model
    targets = dict(model.parameters())
    targets["L_bar"] = model.mask.structure_logits
    targets["E"] = model.heads.E
    arrays = blob["arrays"]
    if set(arrays) != set(targets):
        raise DataError(f"{path}: parameter set {sorted(arrays)} does not match model {sorted(targets)}")
    for name, tensor in targets.items():
        value = _unpack(arrays[name])
        if value.shape != tensor.shape:
            raise DataError(f"{path}: {name} has shape {value.shape}, expected {tensor.shape}")
        tensor.value[...] = value
    sched = blob["schedule"]
    model.set_schedule(sched["temperature"], sched["unroll"], sched["alpha"])
    state.optimizer.load_state_dict(blob["optimizer"])
    state.rng.bit_generator.state = blob["rng_state"]
    state.epochs_completed = int(blob["epochs_completed"])
    return Checkpoint(state, config, {str(k): int(v) for k, v in blob["skill_index"].items()})
