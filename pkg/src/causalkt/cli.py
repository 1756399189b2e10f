"""Command-line pipeline: generate, train, extract, evaluate, sweep-kappa."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .data import (
    chain_dag,
    load_responses,
    read_skill_index,
    sample_dag,
    simulate_students,
    write_responses,
    write_skill_index,
)
from .errors import CausalKTError
from .mask import causal_order, extract_adjacency
from .metrics import adjacency_to_edges, align_graphs, read_graph, structural_f1, to_dot, write_edge_list
from .pipeline import kappa_sweep, parse_grid
from .plotting import plot_history, plot_kappa_sweep, plot_structure
from .trainer import (
    TrainConfig,
    evaluate_prediction,
    load_checkpoint,
    save_checkpoint,
    split_by_student,
    structure_snapshot,
    train,
    write_history,
)

RESPONSES = "responses.csv"
SKILL_INDEX = "skill_index.json"
WORLD = "world.json"


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_generate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    dynamics = dict(
        noise_scale=args.noise, mastery_gain=args.gain, guess=args.guess, slip=args.slip, seed=args.seed
    )
    if args.graph == "chain":
        world = chain_dag(args.skills, rng, **dynamics)
    else:
        world = sample_dag(args.skills, args.density, rng, **dynamics)
    sequences = simulate_students(world, args.students, args.steps, rng)
    world.save(out / WORLD)
    write_responses(out / RESPONSES, sequences)
    write_skill_index(out / SKILL_INDEX, {str(i): i for i in range(args.skills)})
    print(_dump({"edges": len(world.edges()), "students": args.students, "out": str(out)}))
    return 0


def _train_config(args):
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(TrainConfig) if getattr(args, f.name) is not None}
    return replace(config, **overrides)


def cmd_train(args):
    data = Path(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _train_config(args)
    sidecar = data / SKILL_INDEX
    skill_index = read_skill_index(sidecar) if sidecar.exists() else None
    sequences, skill_index = load_responses(data / RESPONSES, skill_index)
    write_skill_index(out / SKILL_INDEX, skill_index)
    tr, held = split_by_student(sequences, config.heldout_fraction, config.seed)
    state, history = train(tr, skill_index, config)
    save_checkpoint(out / "checkpoint.json", state, config, skill_index)
    write_history(out / "history.csv", history)
    if history:
        plot_history(history, out / "history.png")
    metrics = {"train_students": len(tr), "heldout_students": len(held)}
    if held:
        metrics["heldout"] = evaluate_prediction(state.model, held, skill_index)
    (out / "metrics.json").write_text(_dump(metrics) + "\n")
    print(_dump(metrics))
    return 0


def _labels(skill_index):
    labels = [None] * len(skill_index)
    for sid, i in skill_index.items():
        labels[i] = sid
    return labels


def cmd_extract(args):
    ckpt = load_checkpoint(args.checkpoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kappa = ckpt.config.kappa if args.kappa is None else args.kappa
    labels = _labels(ckpt.skill_index)
    P, L = structure_snapshot(ckpt.model)
    adj, perm = extract_adjacency(L, P, kappa)
    M = P @ L @ P.T
    write_edge_list(out / "edges.csv", adjacency_to_edges(adj, labels))
    (out / "graph.dot").write_text(to_dot(adj, labels))
    ordering = {"kappa": kappa, "order": [labels[i] for i in causal_order(perm)]}
    (out / "ordering.json").write_text(_dump(ordering) + "\n")
    plot_structure(M, L, adj, labels, out / "structure.png")
    print(_dump({"edges": int(adj.sum()), "kappa": kappa, "out": str(out)}))
    return 0


def cmd_evaluate(args):
    pred_edges, pred_nodes = read_graph(args.pred)
    truth_edges, truth_nodes = read_graph(args.truth)
    pred, truth, _ = align_graphs(pred_edges, truth_edges, set(pred_nodes) | set(truth_nodes))
    print(_dump(structural_f1(pred, truth)))
    return 0


def cmd_sweep(args):
    ckpt = load_checkpoint(args.checkpoint)
    grid = parse_grid(args.grid)
    labels = _labels(ckpt.skill_index)
    truth_edges, truth_nodes = read_graph(args.truth)
    _, truth, nodes = align_graphs([], truth_edges, set(truth_nodes) | set(labels))
    # reorder the truth into the checkpoint's dense index, padding unknown nodes at the end
    position = {n: i for i, n in enumerate(nodes)}
    order = [position[lab] for lab in labels] + [position[n] for n in nodes if n not in ckpt.skill_index]
    truth = truth[np.ix_(order, order)]
    P, L = structure_snapshot(ckpt.model)
    pad = truth.shape[0] - len(labels)
    if pad:
        P = np.pad(P, ((0, pad), (0, pad)))
        P[len(labels):, len(labels):] = np.eye(pad)
        L = np.pad(L, ((0, pad), (0, pad)))
    rows = kappa_sweep(L, P, truth, grid)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kappa", "precision", "recall", "f1"])
    for r in rows:
        writer.writerow([f"{r['kappa']:.6g}", repr(r["precision"]), repr(r["recall"]), repr(r["f1"])])
    sys.stdout.write(buf.getvalue())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "kappa_sweep.csv").write_text(buf.getvalue())
        plot_kappa_sweep(rows, out / "kappa_sweep.png")
    return 0


def _add_train_overrides(parser):
    group = parser.add_argument_group("config overrides")
    for f in fields(TrainConfig):
        default = f.default
        kind = type(default)
        flag = "--" + f.name.replace("_", "-")
        group.add_argument(flag, dest=f.name, type=kind, default=None, help=f"default {default!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="causalkt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate students on a planted prerequisite DAG")
    p.add_argument("--skills", type=int, required=True)
    p.add_argument("--students", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--graph", choices=("random", "chain"), default="random")
    p.add_argument("--gain", type=float, default=1.0, help="mastery gain per practice")
    p.add_argument("--noise", type=float, default=0.1, help="mastery noise scale")
    p.add_argument("--guess", type=float, default=0.1)
    p.add_argument("--slip", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the causal KT model")
    p.add_argument("--data", required=True, help=f"directory holding {RESPONSES} (and optionally {SKILL_INDEX})")
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    p.add_argument("--out", required=True)
    _add_train_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="threshold the learned structure into a prerequisite graph")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="structural precision/recall/F1 of two graphs")
    p.add_argument("--pred", required=True, help="edge list CSV or world JSON")
    p.add_argument("--truth", required=True, help="edge list CSV or world JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-kappa", help="structural F1 across a grid of cutoffs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--grid", default="0.40:0.55:0.005")
    p.add_argument("--out", help="also write kappa_sweep.csv and kappa_sweep.png here")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CausalKTError, OSError, KeyError) as exc:
        print(f"causalkt {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
