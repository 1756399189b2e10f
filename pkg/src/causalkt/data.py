"""Response logs: CSV I/O, dense skill indexing and a planted-DAG simulator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

RESPONSE_HEADER = ("user_id", "sequence", "skill_id", "is_correct")


@dataclass(frozen=True)
class ResponseEvent:
    user_id: str
    sequence_position: int
    skill_id: str
    is_correct: bool


@dataclass
class ResponseSequence:
    user_id: str
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.events)

    @property
    def skill_ids(self):
        return [e.skill_id for e in self.events]

    @property
    def correct(self):
        return np.array([e.is_correct for e in self.events], dtype=bool)

    def dense_skills(self, skill_index):
        try:
            return np.array([skill_index[e.skill_id] for e in self.events], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"skill {exc.args[0]!r} missing from skill index") from None


def _skill_sort_key(skill_id):
    try:
        return (0, int(skill_id), "")
    except ValueError:
        return (1, 0, skill_id)


def build_skill_index(sequences):
    ids = {e.skill_id for s in sequences for e in s.events}
    return {sid: i for i, sid in enumerate(sorted(ids, key=_skill_sort_key))}


def _parse_correct(raw, lineno):
    value = raw.strip().lower()
    if value in ("1", "true"):
        return True
    if value in ("0", "false"):
        return False
    raise DataError(f"line {lineno}: unknown correctness value {raw!r}")


def load_responses(path, skill_index=None):
    """Read a response CSV into per-user sequences sorted by position.

    Returns ``(sequences, skill_index)``. Without an explicit ``skill_index``
    one is built from the file, ordering ids numerically when possible.
    """
    path = Path(path)
    by_user = {}
    seen = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], dict(skill_index or {})
        if tuple(h.strip() for h in header) != RESPONSE_HEADER:
            raise DataError(f"line 1: expected header {','.join(RESPONSE_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"line {lineno}: expected 4 fields, got {len(row)}")
            user, pos, skill, correct = (v.strip() for v in row)
            try:
                pos = int(pos)
            except ValueError:
                raise DataError(f"line {lineno}: sequence position {pos!r} is not an integer") from None
            if pos < 1:
                raise DataError(f"line {lineno}: sequence position must be >= 1")
            if not user or not skill:
                raise DataError(f"line {lineno}: empty user or skill id")
            if (user, pos) in seen:
                raise DataError(f"line {lineno}: duplicate position {pos} for user {user!r}")
            seen.add((user, pos))
            by_user.setdefault(user, []).append(ResponseEvent(user, pos, skill, _parse_correct(correct, lineno)))
    sequences = [
        ResponseSequence(user, sorted(events, key=lambda e: e.sequence_position))
        for user, events in by_user.items()
    ]
    if skill_index is None:
        skill_index = build_skill_index(sequences)
    else:
        skill_index = dict(skill_index)
        for s in sequences:
            s.dense_skills(skill_index)
    return sequences, skill_index


def write_responses(path, sequences):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESPONSE_HEADER)
        for s in sequences:
            for e in s.events:
                writer.writerow([e.user_id, e.sequence_position, e.skill_id, int(e.is_correct)])


def write_skill_index(path, skill_index):
    Path(path).write_text(json.dumps(skill_index, indent=2, sort_keys=True) + "\n")


def read_skill_index(path):
    raw = json.loads(Path(path).read_text())
    return {str(k): int(v) for k, v in raw.items()}


# ------------------------------------------------------------------ simulator

@dataclass
class PlantedWorld:
    """Ground-truth prerequisite DAG plus the dynamics used to simulate students.

    ``true_adjacency[i, k] = 1`` means skill ``k`` is a prerequisite of ``i``;
    ``edge_weights`` uses the same layout.
    """

    true_adjacency: np.ndarray
    edge_weights: np.ndarray
    noise_scale: float = 0.1
    mastery_gain: float = 1.0
    guess: float = 0.1
    slip: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        from .metrics import is_dag

        self.true_adjacency = np.asarray(self.true_adjacency, dtype=np.int64)
        self.edge_weights = np.asarray(self.edge_weights, dtype=np.float64)
        if not is_dag(self.true_adjacency)[0]:
            raise DataError("planted graph contains a cycle")
        for name in ("guess", "slip"):
            if not 0.0 <= getattr(self, name) < 0.5:
                raise DataError(f"{name} must lie in [0, 0.5)")
        if self.noise_scale < 0:
            raise DataError("noise_scale must be non-negative")

    @property
    def num_skills(self):
        return self.true_adjacency.shape[0]

    def edges(self):
        """``[(prerequisite, dependent, weight), ...]`` sorted by (src, dst)."""
        dst, src = np.nonzero(self.true_adjacency)
        out = [(int(s), int(d), float(self.edge_weights[d, s])) for d, s in zip(dst, src)]
        return sorted(out)

    def to_json(self):
        return {
            "num_skills": self.num_skills,
            "edges": [list(e) for e in self.edges()],
            "noise_scale": self.noise_scale,
            "mastery_gain": self.mastery_gain,
            "guess": self.guess,
            "slip": self.slip,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data):
        c = int(data["num_skills"])
        adj = np.zeros((c, c), dtype=np.int64)
        weights = np.zeros((c, c))
        for src, dst, w in data["edges"]:
            adj[int(dst), int(src)] = 1
            weights[int(dst), int(src)] = float(w)
        return cls(
            true_adjacency=adj,
            edge_weights=weights,
            noise_scale=float(data.get("noise_scale", 0.1)),
            mastery_gain=float(data.get("mastery_gain", 1.0)),
            guess=float(data.get("guess", 0.1)),
            slip=float(data.get("slip", 0.1)),
            seed=data.get("seed"),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _world_from_order(order, include, rng, **dynamics):
    c = len(order)
    adj = np.zeros((c, c), dtype=np.int64)
    weights = np.zeros((c, c))
    for a, b in zip(*np.nonzero(include)):
        # position b precedes position a in the topological order
        dep, pre = order[a], order[b]
        adj[dep, pre] = 1
        weights[dep, pre] = rng.uniform(0.5, 1.5)
    return PlantedWorld(adj, weights, **dynamics)


def sample_dag(num_skills, edge_density, rng, **dynamics):
    """Random DAG: uniform topological order, each forward edge kept with prob ``edge_density``."""
    if num_skills < 2:
        raise DataError("sample_dag needs at least two skills")
    if not 0.0 < edge_density <= 1.0:
        raise DataError(f"edge density must lie in (0, 1], got {edge_density}")
    order = rng.permutation(num_skills)
    include = np.tril(rng.random((num_skills, num_skills)) < edge_density, k=-1)
    return _world_from_order(order, include, rng, **dynamics)


def chain_dag(num_skills, rng, **dynamics):
    """A single chain ``s_0 -> s_1 -> ...`` through a random ordering of the skills."""
    if num_skills < 2:
        raise DataError("chain_dag needs at least two skills")
    order = rng.permutation(num_skills)
    include = np.eye(num_skills, k=-1, dtype=bool)
    return _world_from_order(order, include, rng, **dynamics)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def simulate_students(world, n_students, T, rng):
    """Simulate ``n_students`` response sequences of length ``T``.

    Each student holds a latent mastery per skill. At every step a skill is
    drawn uniformly, the answer is Bernoulli with probability
    ``clip(sigmoid(mastery), guess, 1 - slip)``, and the practised skill's
    mastery grows by ``gain * sigmoid(mean_j w_ij m_j)`` over its parents ``j``
    (gate 1 for root skills) plus Gaussian noise.
    """
    if n_students < 1 or T < 2:
        raise DataError("need n_students >= 1 and T >= 2")
    c = world.num_skills
    parents = [np.nonzero(world.true_adjacency[i])[0] for i in range(c)]
    weights = [world.edge_weights[i, parents[i]] for i in range(c)]
    lo, hi = world.guess, 1.0 - world.slip
    sequences = []
    for s, student_rng in enumerate(rng.spawn(n_students)):
        mastery = student_rng.normal(0.0, 1.0, c)
        skills = student_rng.integers(0, c, T)
        events = []
        for t, i in enumerate(skills):
            p = min(max(_sigmoid(mastery[i]), lo), hi)
            correct = bool(student_rng.random() < p)
            pa = parents[i]
            gate = _sigmoid(np.mean(weights[i] * mastery[pa])) if len(pa) else 1.0
            mastery[i] += world.mastery_gain * gate + student_rng.normal(0.0, world.noise_scale)
            events.append(ResponseEvent(str(s), t + 1, str(int(i)), correct))
        sequences.append(ResponseSequence(str(s), events))
    return sequences
