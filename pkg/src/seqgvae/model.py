"""Model dimensions and parameter initialisation for encoder and decoder."""

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import ParamStore, glorot
from .propnet import init_prop_params, init_readout_params


@dataclass(frozen=True)
class ModelConfig:
    d: int = 5            # node embedding and latent width
    d_e: int = 5          # edge embedding width
    d_g: int = 10         # graph embedding width
    rounds: int = 2       # prop rounds, distinct weights each
    hidden: int = 16      # hidden width of every two-layer network
    node_types: int = 1
    edge_types: int = 1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if int(value) < 1:
                raise ValueError(f"{name} must be positive, got {value}")


def _mlp(store, prefix, n_in, hidden, n_out, rng):
    store.add(f"{prefix}/W1", glorot(rng, (hidden, n_in)))
    store.add(f"{prefix}/b1", np.zeros(hidden))
    store.add(f"{prefix}/W2", glorot(rng, (n_out, hidden)))
    store.add(f"{prefix}/b2", np.zeros(n_out))


def init_params(cfg, rng):
    """Fresh encoder (``phi/*``) and decoder (``theta/*``) parameters."""
    store = ParamStore()
    d, de, dg, h = cfg.d, cfg.d_e, cfg.d_g, cfg.hidden
    # encoder
    store.add("phi/node_embed/W", glorot(rng, (d, cfg.node_types)))
    store.add("phi/node_embed/b", np.zeros(d))
    store.add("phi/edge_embed/W", glorot(rng, (de, cfg.edge_types)))
    store.add("phi/edge_embed/b", np.zeros(de))
    init_prop_params(store, "phi/prop", d, de, cfg.rounds, h, rng)
    _mlp(store, "phi/removal", d, h, 1, rng)
    # decoder
    store.add("theta/edge_embed/W", glorot(rng, (de, cfg.edge_types)))
    store.add("theta/edge_embed/b", np.zeros(de))
    init_prop_params(store, "theta/prop", d, de, cfg.rounds, h, rng)
    init_readout_params(store, "theta/readout", d, dg, rng)
    _mlp(store, "theta/addnode", dg, h, 1, rng)
    _mlp(store, "theta/init_node", dg, h, d, rng)
    _mlp(store, "theta/addedge", 2 * d + dg, h, cfg.edge_types + 1, rng)
    return store


def infer_config(params):
    """Recover the :class:`ModelConfig` a parameter store was built with."""
    rounds = 0
    while params.has_group(f"phi/prop/t{rounds}"):
        rounds += 1
    d, node_types = params["phi/node_embed/W"].shape
    d_e, edge_types = params["phi/edge_embed/W"].shape
    return ModelConfig(
        d=d,
        d_e=d_e,
        d_g=params["theta/readout/transform/W"].shape[0],
        rounds=rounds,
        hidden=params["phi/removal/W1"].shape[0],
        node_types=node_types,
        edge_types=edge_types,
    )


def validate_params(params):
    """Check names and shapes against the layout the store's own dimensions imply."""
    from .autodiff import CheckpointError

    try:
        cfg = infer_config(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot infer model dimensions: {exc}", str(exc).strip("'")) from exc
    reference = init_params(cfg, np.random.default_rng(0))
    for name, t in reference.items():
        if name not in params:
            raise CheckpointError(f"missing parameter {name}", name)
        if params[name].shape != t.shape:
            raise CheckpointError(f"{name} has shape {params[name].shape}, expected {t.shape}", name)
    for name in params:
        if name not in reference:
            raise CheckpointError(f"unexpected parameter {name}", name)
    return cfg
