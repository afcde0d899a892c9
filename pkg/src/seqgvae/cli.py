"""Command-line entry point: ``seqgvae {dataset,train,eval,sample}``.

Exit codes: 0 success, 2 invalid flags or config, 3 I/O error (missing or
unwritable files), 4 corrupt checkpoint. Diagnostics go to stderr; stdout
carries machine-readable results only.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from . import autodiff as ad
from .dataset import DatasetSpec, build_dataset, load_dataset
from .evaluation import (
    PERPLEXITY_DEFINITION,
    embed_corpus,
    generation_accuracy,
    interpolation_report,
    perplexity,
    read_latent_csv,
    sample_prior,
    write_interpolation_csv,
    write_latent_csv,
)
from .graph import GraphError, is_valid_cycle
from .model import validate_params
from .rng import stream
from .trainer import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CHECKPOINT = 0, 2, 3, 4

log = logging.getLogger("seqgvae")


class UsageError(Exception):
    pass


# -- option tables: (flag, type, default, help) -----------------------------

_DATASET_OPTS = [
    ("min-len", int, 5, "shortest cycle"),
    ("max-len", int, 14, "longest cycle"),
    ("per-length", int, 10, "graphs per cycle length"),
    ("seed", int, 0, "global seed"),
    ("output", str, None, "output JSON-lines path"),
]

_TRAIN_OPTS = [
    ("data", str, None, "dataset JSON-lines path"),
    ("out", str, "run", "run directory"),
    ("d", int, 5, "node / latent dimension"),
    ("d-e", int, 5, "edge embedding dimension"),
    ("d-g", int, 10, "graph embedding dimension"),
    ("rounds", int, 2, "propagation rounds"),
    ("hidden", int, 16, "hidden width of the small networks"),
    ("edge-types", int, 1, "number of edge types"),
    ("node-types", int, 1, "number of node types"),
    ("lr", float, 0.01, "Adam learning rate"),
    ("batch-size", int, 10, "graphs per minibatch"),
    ("epochs", int, 100, "training epochs"),
    ("samples", int, 1, "encoder samples per graph per step"),
    ("max-nodes", int, 50, "node cap when sampling from the prior"),
    ("eval-interval", int, 1, "epochs between accuracy evaluations"),
    ("eval-samples", int, 100, "prior samples per accuracy evaluation"),
    ("checkpoint-every", int, 10, "epochs between checkpoints (0: initial and final only)"),
    ("grad-clip", float, 0.0, "global gradient-norm cap (0: off)"),
    ("record-wall-time", "flag", False, "fill the wall_ms metrics column (breaks byte-identity)"),
    ("seed", int, 0, "global seed"),
    ("threads", int, 1, "worker processes"),
]

_EVAL_OPTS = [
    ("checkpoint", str, None, "checkpoint JSON"),
    ("mode", str, "accuracy", "accuracy | embed | interpolate | perplexity"),
    ("n", int, 100, "prior samples (accuracy)"),
    ("per-length", int, 40, "encoded cycles per length (embed, interpolate)"),
    ("min-len", int, 5, "shortest encoded cycle"),
    ("max-len", int, 14, "longest encoded cycle"),
    ("latent", str, None, "existing latent CSV to use for interpolate"),
    ("points", int, 10, "interpolation points"),
    ("samples", int, 1000, "decoder samples per interpolation point"),
    ("data", str, None, "dataset for perplexity"),
    ("elbo-samples", int, 1, "encoder samples per graph (perplexity)"),
    ("max-nodes", int, 50, "node cap when decoding"),
    ("output", str, None, "output CSV path"),
    ("seed", int, 0, "global seed"),
    ("threads", int, 1, "accepted for uniformity; evaluation runs in one process"),
]

_SAMPLE_OPTS = [
    ("checkpoint", str, None, "checkpoint JSON"),
    ("n", int, 5, "graphs to sample"),
    ("max-nodes", int, 50, "node cap"),
    ("output", str, None, "output path (default: stdout)"),
    ("seed", int, 0, "global seed"),
    ("threads", int, 1, "accepted for uniformity; sampling runs in one process"),
]

_COMMANDS = {
    "dataset": (_DATASET_OPTS, "write the cycle dataset"),
    "train": (_TRAIN_OPTS, "train encoder and decoder"),
    "eval": (_EVAL_OPTS, "evaluate a checkpoint"),
    "sample": (_SAMPLE_OPTS, "sample graphs from the prior"),
}

_SHORT = {"output": "-o", "n": "-n"}
_MODES = ("accuracy", "embed", "interpolate", "perplexity")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="seqgvae", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (opts, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="flat 'key = value' file; flags override it")
        for flag, typ, default, help_text in opts:
            names = [f"--{flag}"] + ([_SHORT[flag]] if flag in _SHORT else [])
            if typ == "flag":
                p.add_argument(*names, action="store_true", help=help_text)
            else:
                p.add_argument(*names, type=typ, help=f"{help_text} (default: {default})")
    return parser


def _key(flag):
    return flag.replace("-", "_")


def read_config_file(path, opts):
    """Parse ``key = value`` lines; keys are flag names (dashes or underscores)."""
    known = {_key(f): (f, t) for f, t, _, _ in opts}
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise OSError(f"config file {path}: {exc.strerror}") from exc
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = _key(key)
            if key not in known:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            _, typ = known[key]
            try:
                if typ == "flag":
                    values[key] = _parse_bool(value)
                else:
                    values[key] = typ(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return values


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def resolve(args, opts):
    """Defaults, then config file, then explicit flags."""
    resolved = {_key(f): d for f, _, d, _ in opts}
    given = vars(args)
    if given.get("config"):
        resolved.update(read_config_file(given["config"], opts))
    for f, _, _, _ in opts:
        k = _key(f)
        if k in given:
            resolved[k] = given[k]
    return resolved


def format_config(values):
    lines = []
    for k in sorted(values):
        v = values[k]
        if v is None:
            continue
        lines.append(f"{k.replace('_', '-')} = {v}")
    return "\n".join(lines) + "\n"


def _require(values, *keys):
    for k in keys:
        if values.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _load_params(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint {path} not found")
    params = ad.load_checkpoint(path)
    validate_params(params)
    return params


# -- commands --------------------------------------------------------------

def cmd_dataset(v):
    _require(v, "output")
    try:
        spec = DatasetSpec(min_len=v["min_len"], max_len=v["max_len"],
                           graphs_per_length=v["per_length"], seed=v["seed"])
    except ValueError as exc:
        raise UsageError(str(exc).replace("min_len", "--min-len").replace(
            "max_len", "--max-len").replace("graphs_per_length", "--per-length")) from exc
    graphs = build_dataset(spec, v["output"])
    print(len(graphs))


def train_config(v):
    names = {f.name for f in fields(TrainConfig)}
    try:
        return TrainConfig(**{k: val for k, val in v.items() if k in names})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_train(v):
    _require(v, "data")
    cfg = train_config(v)
    if not os.path.exists(v["data"]):
        raise FileNotFoundError(f"dataset {v['data']} not found")
    dataset = load_dataset(v["data"])
    os.makedirs(v["out"], exist_ok=True)
    with open(os.path.join(v["out"], "config.txt"), "w") as fh:
        fh.write(format_config(v))
    _, rows = train(dataset, cfg, out_dir=v["out"])
    print(os.path.join(v["out"], "metrics.csv"))
    log.info("trained %d epochs; final -elbo %.4f", len(rows), rows[-1].mean_neg_elbo)


def _default_output(v, name):
    return v["output"] or name


def cmd_eval(v):
    _require(v, "checkpoint")
    mode = v["mode"]
    if mode not in _MODES:
        raise UsageError(f"--mode must be one of {', '.join(_MODES)}")
    lengths = range(v["min_len"], v["max_len"] + 1)
    if v["min_len"] < 3 or not lengths:
        raise UsageError("need 3 <= --min-len <= --max-len")
    params = _load_params(v["checkpoint"])
    rng = stream(v["seed"], "eval", _MODES.index(mode))
    if mode == "accuracy":
        acc = generation_accuracy(params, rng, n=v["n"], max_nodes=v["max_nodes"])
        path = _default_output(v, "accuracy.csv")
        with open(path, "w") as fh:
            fh.write(f"n,accuracy\n{v['n']},{acc!r}\n")
        print(repr(acc))
    elif mode == "embed":
        corpus = embed_corpus(params, rng, per_length=v["per_length"], lengths=lengths)
        path = _default_output(v, "latent.csv")
        write_latent_csv(corpus, path)
        print(path)
    elif mode == "interpolate":
        if v["latent"]:
            if not os.path.exists(v["latent"]):
                raise FileNotFoundError(f"latent CSV {v['latent']} not found")
            corpus = read_latent_csv(v["latent"])
        else:
            corpus = embed_corpus(params, rng, per_length=v["per_length"], lengths=lengths)
        report = interpolation_report(params, rng, corpus, points=v["points"],
                                      samples=v["samples"], max_nodes=v["max_nodes"])
        path = _default_output(v, "interpolation.csv")
        write_interpolation_csv(report, path)
        print(path)
    else:
        _require(v, "data")
        if not os.path.exists(v["data"]):
            raise FileNotFoundError(f"dataset {v['data']} not found")
        value = perplexity(load_dataset(v["data"]), params, rng, n=v["elbo_samples"])
        path = _default_output(v, "perplexity.csv")
        with open(path, "w") as fh:
            fh.write(f"perplexity,definition\n{value!r},{PERPLEXITY_DEFINITION}\n")
        print(repr(value))


def cmd_sample(v):
    _require(v, "checkpoint")
    if v["n"] < 1 or v["max_nodes"] < 1:
        raise UsageError("-n and --max-nodes must be positive")
    params = _load_params(v["checkpoint"])
    results = sample_prior(params, stream(v["seed"], "sample"), v["n"], v["max_nodes"])
    lines = []
    for r in results:
        obj = r.graph.to_dict()
        obj["valid_cycle"] = is_valid_cycle(r.graph)
        lines.append(json.dumps(obj))
    text = "\n".join(lines) + "\n"
    if v["output"]:
        with open(v["output"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


_HANDLERS = {"dataset": cmd_dataset, "train": cmd_train, "eval": cmd_eval, "sample": cmd_sample}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        values = resolve(args, _COMMANDS[args.command][0])
        _HANDLERS[args.command](values)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ad.CheckpointError as exc:
        print(f"error: corrupt checkpoint (field {exc.field}): {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (OSError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
