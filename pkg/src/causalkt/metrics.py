"""Structural comparison of adjacency matrices and DAG utilities.

Adjacency convention throughout: ``A[i, k] = 1`` means skill ``k`` is a
prerequisite of skill ``i`` (edge ``k -> i``).
"""

from __future__ import annotations

import csv
from collections import deque
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError

NONE, FORWARD, BACKWARD, BIDIRECTIONAL = 0, 1, 2, 3
RELATIONSHIP_NAMES = ("none", "forward", "backward", "bidirectional")


def relationship_classes(adj):
    """Class of every unordered pair ``(i, j)``, ``i < j``, as a flat array.

    ``forward`` means ``i -> j`` only (i is a prerequisite of j), ``backward``
    means ``j -> i`` only.
    """
    adj = np.asarray(adj) != 0
    iu, ju = np.triu_indices(adj.shape[0], k=1)
    fwd = adj[ju, iu]
    bwd = adj[iu, ju]
    return np.where(fwd & bwd, BIDIRECTIONAL, np.where(fwd, FORWARD, np.where(bwd, BACKWARD, NONE)))


def structural_f1(pred, truth):
    """Precision, recall and F1 over exact per-pair relationship matches."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[0] != pred.shape[1]:
        raise DimensionError(f"structural_f1: shapes {pred.shape} and {truth.shape} differ or are not square")
    p, t = relationship_classes(pred), relationship_classes(truth)
    match = p == t
    n_true, n_pred = int(np.count_nonzero(t)), int(np.count_nonzero(p))
    recall = np.count_nonzero(match & (t != NONE)) / n_true if n_true else 0.0
    precision = np.count_nonzero(match & (p != NONE)) / n_pred if n_pred else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"precision": float(precision), "recall": float(recall), "f1": float(f1)}


def is_dag(adj):
    """Kahn's algorithm.

    Returns ``(True, order)`` with prerequisites first, or ``(False, cycle)``
    where ``cycle`` is a closed walk ``[v0, v1, ..., v0]`` along edges.
    """
    adj = np.asarray(adj) != 0
    n = adj.shape[0]
    indegree = adj.sum(axis=1).astype(int)  # number of prerequisites
    queue = deque(np.flatnonzero(indegree == 0).tolist())
    order = []
    while queue:
        k = queue.popleft()
        order.append(int(k))
        for i in np.flatnonzero(adj[:, k]):
            indegree[i] -= 1
            if indegree[i] == 0:
                queue.append(int(i))
    if len(order) == n:
        return True, order
    return False, _find_cycle(adj, set(range(n)) - set(order))


def _find_cycle(adj, remaining):
    # every leftover node keeps a leftover prerequisite, so walking backwards must repeat
    node = min(remaining)
    path, pos = [], {}
    while node not in pos:
        pos[node] = len(path)
        path.append(node)
        node = next(int(k) for k in np.flatnonzero(adj[node]) if int(k) in remaining)
    cycle = path[pos[node]:] + [node]
    return cycle[::-1]  # walk backwards along prerequisites, so reverse to follow edges


# ------------------------------------------------------------------ file formats

def adjacency_to_edges(adj, labels=None):
    adj = np.asarray(adj)
    labels = list(range(adj.shape[0])) if labels is None else list(labels)
    dst, src = np.nonzero(adj)
    return sorted((labels[s], labels[d]) for d, s in zip(dst, src))


def _edge_sort_key(edge):
    from .data import _skill_sort_key

    return tuple(_skill_sort_key(str(x)) for x in edge)


def write_edge_list(path, edges):
    """CSV ``src_skill_id,dst_skill_id`` (prerequisite, dependent), sorted."""
    edges = sorted(((str(s), str(d)) for s, d in edges), key=_edge_sort_key)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["src_skill_id", "dst_skill_id"])
        writer.writerows(edges)


def read_edge_list(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["src_skill_id", "dst_skill_id"]:
            raise DataError(f"{path}: expected header src_skill_id,dst_skill_id")
        edges = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"{path}: line {lineno}: expected 2 fields")
            edges.append((row[0].strip(), row[1].strip()))
    return edges


def read_graph(path):
    """Load an edge list CSV or a world JSON as a list of ``(src, dst)`` string pairs."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        from .data import PlantedWorld

        world = PlantedWorld.load(path)
        return [(str(s), str(d)) for s, d, _ in world.edges()], [str(i) for i in range(world.num_skills)]
    return read_edge_list(path), []


def edges_to_adjacency(edges, nodes):
    index = {n: i for i, n in enumerate(nodes)}
    adj = np.zeros((len(nodes), len(nodes)), dtype=np.int64)
    for s, d in edges:
        adj[index[d], index[s]] = 1
    return adj


def align_graphs(pred_edges, truth_edges, extra_nodes=()):
    """Adjacency matrices for two edge lists over the union of their node labels."""
    from .data import _skill_sort_key

    nodes = {n for e in pred_edges for n in e} | {n for e in truth_edges for n in e} | set(extra_nodes)
    nodes = sorted(nodes, key=_skill_sort_key)
    return edges_to_adjacency(pred_edges, nodes), edges_to_adjacency(truth_edges, nodes), nodes


def to_dot(adj, labels=None, name="prerequisites"):
    """DOT digraph with prerequisite -> dependent arrows."""
    adj = np.asarray(adj)
    labels = [str(x) for x in (range(adj.shape[0]) if labels is None else labels)]
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    lines += [f'  "{label}";' for label in labels]
    lines += [f'  "{s}" -> "{d}";' for s, d in adjacency_to_edges(adj, labels)]
    lines.append("}")
    return "\n".join(lines) + "\n"


def random_graph_f1(truth, n_graphs, rng):
    """Mean structural F1 of random DAGs drawn at the truth's edge density."""
    from .data import sample_dag

    truth = np.asarray(truth)
    c = truth.shape[0]
    density = max(np.count_nonzero(truth) / (c * (c - 1) / 2), 1e-12)
    scores = [structural_f1(sample_dag(c, min(density, 1.0), rng).true_adjacency, truth)["f1"] for _ in range(n_graphs)]
    return float(np.mean(scores))
