"""Minibatch training on the mean negative ELBO with Adam."""

import csv
import json
import logging
import math
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import AdamState, ParamStore, adam_step, save_checkpoint
from .elbo import estimate_and_grads
from .evaluation import PERPLEXITY_DEFINITION, generation_accuracy, perplexity_from_terms
from .model import ModelConfig, init_params
from .rng import stream

log = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "mean_neg_elbo", "gen_accuracy", "perplexity", "wall_ms"]


@dataclass
class TrainConfig:
    d: int = 5
    d_e: int = 5
    d_g: int = 10
    rounds: int = 2
    hidden: int = 16
    node_types: int = 1
    edge_types: int = 1
    lr: float = 0.01
    batch_size: int = 10
    epochs: int = 100
    samples: int = 1
    max_nodes: int = 50
    seed: int = 0
    eval_interval: int = 1
    eval_samples: int = 100
    checkpoint_every: int = 10
    grad_clip: float = 0.0
    threads: int = 1
    record_wall_time: bool = False

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("lr", "grad_clip", "checkpoint_every", "seed", "record_wall_time"):
                continue
            if value < 1:
                raise ValueError(f"{f.name} must be positive, got {value}")
        if self.lr < 0 or self.grad_clip < 0 or self.checkpoint_every < 0:
            raise ValueError("lr, grad_clip and checkpoint_every must be non-negative")

    def model_config(self):
        return ModelConfig(d=self.d, d_e=self.d_e, d_g=self.d_g, rounds=self.rounds,
                           hidden=self.hidden, node_types=self.node_types,
                           edge_types=self.edge_types)


@dataclass
class MetricsRow:
    epoch: int
    mean_neg_elbo: float
    gen_accuracy: float
    perplexity: float
    wall_ms: float = float("nan")

    def csv_fields(self):
        return [str(self.epoch)] + [_fmt(v) for v in
                                    (self.mean_neg_elbo, self.gen_accuracy,
                                     self.perplexity, self.wall_ms)]


def _fmt(value):
    return "" if value is None or math.isnan(value) else repr(float(value))


# -- per-graph work (runs in workers when threads > 1) ---------------------

_WORKER = {}


def _worker_init(graphs, names):
    _WORKER["graphs"] = graphs
    _WORKER["names"] = names


def _params_from_arrays(names, arrays):
    store = ParamStore()
    for name, arr in zip(names, arrays):
        store.add(name, arr)
    return store


def _graph_task(args):
    arrays, index, seed, epoch, samples = args
    params = _params_from_arrays(_WORKER["names"], arrays)
    return _graph_grads(_WORKER["graphs"][index], params, seed, epoch, index, samples)


def _graph_grads(x, params, seed, epoch, index, samples):
    rng = stream(seed, "episode", epoch, index)
    grads, trajectories = estimate_and_grads(x, params, rng, n=samples)
    elbo = math.fsum(s.elbo_term for s in trajectories) / len(trajectories)
    return grads, elbo


class _Runner:
    """Evaluates per-graph gradients in-process or in a process pool.

    Results are always merged in batch order, so the outcome does not
    depend on the number of workers.
    """

    def __init__(self, graphs, params, threads):
        self.graphs = graphs
        self.names = list(params)
        self.pool = None
        if threads > 1:
            self.pool = ProcessPoolExecutor(
                max_workers=threads,
                mp_context=multiprocessing.get_context("fork"),
                initializer=_worker_init,
                initargs=(graphs, self.names),
            )

    def run(self, params, indices, seed, epoch, samples):
        if self.pool is None:
            return [_graph_grads(self.graphs[i], params, seed, epoch, i, samples)
                    for i in indices]
        arrays = [params[n].data for n in self.names]
        tasks = [(arrays, i, seed, epoch, samples) for i in indices]
        return list(self.pool.map(_graph_task, tasks))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


def _merge(results, names):
    acc = {n: np.zeros_like(results[0][0][n]) for n in names}
    for grads, _ in results:
        for n in names:
            acc[n] += grads[n]
    k = len(results)
    return {n: g / k for n, g in acc.items()}


def _clip(grads, cap):
    norm = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
    if cap > 0 and norm > cap:
        return {n: g * (cap / norm) for n, g in grads.items()}
    return grads


def train(dataset, config, out_dir=None, params=None):
    """Train on ``dataset`` (list of graphs); returns ``(params, metrics rows)``.

    With ``out_dir`` set, writes ``metrics.csv``, ``metrics_meta.json`` and
    checkpoints under ``checkpoints/``.
    """
    if not dataset:
        raise ValueError("empty dataset")
    cfg = config
    if params is None:
        params = init_params(cfg.model_config(), stream(cfg.seed, "init"))
    state = AdamState(lr=cfg.lr)
    names = list(params)
    rows = []
    writer = _MetricsWriter(out_dir, cfg) if out_dir is not None else None
    if writer is not None:
        writer.checkpoint(params, 0)
    runner = _Runner(dataset, params, cfg.threads)
    try:
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            order = stream(cfg.seed, "shuffle", epoch).permutation(len(dataset))
            elbos = np.empty(len(dataset))
            for lo in range(0, len(order), cfg.batch_size):
                batch = [int(i) for i in order[lo:lo + cfg.batch_size]]
                results = runner.run(params, batch, cfg.seed, epoch, cfg.samples)
                for i, (_, elbo) in zip(batch, results):
                    elbos[i] = elbo
                adam_step(params, _clip(_merge(results, names), cfg.grad_clip), state)
            sizes = [g.num_nodes for g in dataset]
            accuracy = float("nan")
            if epoch % cfg.eval_interval == 0:
                accuracy = generation_accuracy(params, stream(cfg.seed, "eval", epoch),
                                               n=cfg.eval_samples, max_nodes=cfg.max_nodes)
            wall = (time.perf_counter() - started) * 1e3 if cfg.record_wall_time else float("nan")
            row = MetricsRow(epoch=epoch,
                             mean_neg_elbo=-math.fsum(elbos) / len(elbos),
                             gen_accuracy=accuracy,
                             perplexity=perplexity_from_terms(elbos, sizes),
                             wall_ms=wall)
            rows.append(row)
            log.info("epoch %d  -elbo %.4f  acc %s  ppl %.4f", epoch, row.mean_neg_elbo,
                     _fmt(accuracy) or "-", row.perplexity)
            if writer is not None:
                writer.row(row)
                if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                    writer.checkpoint(params, epoch)
    finally:
        runner.close()
        if writer is not None:
            writer.close(params)
    return params, rows


class _MetricsWriter:
    def __init__(self, out_dir, cfg):
        self.out_dir = out_dir
        os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
        path = os.path.join(out_dir, "metrics.csv")
        self.fh = open(path, "w", newline="")
        self.csv = csv.writer(self.fh, lineterminator="\n")
        self.csv.writerow(METRICS_HEADER)
        with open(os.path.join(out_dir, "metrics_meta.json"), "w") as meta:
            json.dump({"perplexity_definition": PERPLEXITY_DEFINITION,
                       "gen_accuracy": f"fraction of {cfg.eval_samples} prior samples "
                                       "that are valid cycles; blank when not evaluated",
                       "wall_ms": "blank unless record_wall_time is set",
                       "config": asdict(cfg)}, meta, indent=2, sort_keys=True)
            meta.write("\n")

    def row(self, row):
        self.csv.writerow(row.csv_fields())
        self.fh.flush()

    def checkpoint(self, params, epoch):
        save_checkpoint(params, os.path.join(self.out_dir, "checkpoints",
                                             f"epoch_{epoch:04d}.json"))

    def close(self, params):
        self.fh.close()
        save_checkpoint(params, os.path.join(self.out_dir, "final.json"))


def read_metrics(path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(MetricsRow(
                epoch=int(rec["epoch"]),
                mean_neg_elbo=float(rec["mean_neg_elbo"]),
                gen_accuracy=float(rec["gen_accuracy"]) if rec["gen_accuracy"] else float("nan"),
                perplexity=float(rec["perplexity"]),
                wall_ms=float(rec["wall_ms"]) if rec["wall_ms"] else float("nan"),
            ))
    return rows
