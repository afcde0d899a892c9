"""Evidence lower bound: Monte Carlo estimate, exhaustive oracle, gradients.

The encoder's latent code is a deterministic function of the sampled
removal order, so the variational density used in the bound is the
discrete ``q(order | x)``. Per trajectory::

    elbo_term = log p(x, order | z) + log N(z; 0, I) - log q(order | x)

Gradients are returned in *loss* convention: they are gradients of the
negative ELBO, ready for a descent optimizer. For the encoder they combine
the score-function term ``grad log q * (elbo_term - 1)`` with the pathwise
term through ``z``; the decoder only sees the pathwise term.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .constructor import teacher_force
from .destructor import encode_given_order, encode_sample, removal_orders

MAX_EXHAUSTIVE_NODES = 6


@dataclass(frozen=True)
class ElboSample:
    log_p_x_pi_given_z: float
    log_p_z: float
    log_q_pi: float

    @property
    def elbo_term(self):
        return self.log_p_x_pi_given_z + self.log_p_z - self.log_q_pi


def _score(x, params, enc):
    dec = teacher_force(enc.z, x, enc.order, params)
    log_pz = ad.gaussian_logpdf(enc.z)
    sample = ElboSample(dec.log_p.item(), log_pz.item(), enc.log_q.item())
    return dec, log_pz, sample


def elbo_sample(x, params, rng):
    _, _, sample = _score(x, params, encode_sample(x, params, rng))
    return sample


def elbo_estimate(x, params, rng, n=1):
    """Mean ELBO term over ``n`` sampled deconstructions, plus the samples."""
    if n < 1:
        raise ValueError("n must be at least 1")
    samples = [elbo_sample(x, params, rng) for _ in range(n)]
    return math.fsum(s.elbo_term for s in samples) / n, samples


def _check_small(x):
    if x.num_nodes > MAX_EXHAUSTIVE_NODES:
        raise ValueError(f"exhaustive ELBO limited to {MAX_EXHAUSTIVE_NODES} nodes, "
                         f"graph has {x.num_nodes}")


def exhaustive_elbo(x, params):
    """Exact expectation of the ELBO term over every removal order."""
    _check_small(x)
    total = []
    for order in removal_orders(x):
        _, _, s = _score(x, params, encode_given_order(x, params, order))
        total.append(math.exp(s.log_q_pi) * s.elbo_term)
    return math.fsum(total)


def _accumulate(acc, grads, weight):
    for name, g in grads.items():
        if weight:
            acc[name] -= weight * g


def _trajectory_grads(x, params, enc_fn):
    """Surrogate-gradient of one trajectory (ascent direction) and its sample."""
    with ad.Tape() as tape:
        enc = enc_fn()
        dec, log_pz, sample = _score(x, params, enc)
        weight = sample.elbo_term - 1.0
        surrogate = ad.add_n([ad.scale(enc.log_q, weight), dec.log_p, log_pz])
        grads = ad.backward(surrogate, tape, params)
    return grads, sample


def estimate_and_grads(x, params, rng, n=1, exact=False):
    """Loss-convention gradient of ``-ELBO`` and the trajectories used.

    ``exact=True`` replaces sampling by a sum over every removal order
    weighted by its probability (small graphs only).
    """
    acc = {name: np.zeros_like(t.data) for name, t in params.items()}
    samples = []
    if exact:
        _check_small(x)
        for order in removal_orders(x):
            grads, s = _trajectory_grads(x, params,
                                         lambda: encode_given_order(x, params, order))
            _accumulate(acc, grads, math.exp(s.log_q_pi))
            samples.append(s)
        return acc, samples
    if n < 1:
        raise ValueError("n must be at least 1")
    for _ in range(n):
        grads, s = _trajectory_grads(x, params, lambda: encode_sample(x, params, rng))
        _accumulate(acc, grads, 1.0 / n)
        samples.append(s)
    return acc, samples


def reinforce_step_grads(x, params, rng, n=1, exact=False):
    """Gradient of ``-ELBO`` for graph ``x`` (see :func:`estimate_and_grads`)."""
    return estimate_and_grads(x, params, rng, n=n, exact=exact)[0]
