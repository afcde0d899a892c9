"""Generation accuracy, perplexity, latent export and latent-space analysis."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from . import autodiff as ad
from .constructor import generate
from .dataset import make_cycle
from .destructor import encode_sample
from .elbo import elbo_estimate
from .graph import cycle_length, is_valid_cycle

PERPLEXITY_DEFINITION = "exp(mean over graphs of -ELBO(x) / node_count(x))"
CDF_LENGTHS = range(3, 21)


def sample_prior(params, rng, n, max_nodes=50):
    """``n`` decoder samples from unit-Gaussian latent draws."""
    d = params["phi/node_embed/W"].shape[0]
    out = []
    for _ in range(n):
        z = ad.constant(rng.standard_normal(d))
        out.append(generate(z, params, rng, max_nodes=max_nodes))
    return out


def generation_accuracy(params, rng, n=100, max_nodes=50):
    """Fraction of ``n`` prior samples that decode to a valid cycle."""
    if n < 1:
        raise ValueError("n must be at least 1")
    valid = sum(is_valid_cycle(r.graph) for r in sample_prior(params, rng, n, max_nodes))
    return valid / n


def perplexity_from_terms(elbo_terms, node_counts):
    per_node = [-e / k for e, k in zip(elbo_terms, node_counts)]
    return math.exp(math.fsum(per_node) / len(per_node))


def perplexity(dataset, params, rng, n=1):
    """Per-node exponentiated negative ELBO (see :data:`PERPLEXITY_DEFINITION`)."""
    if not dataset:
        raise ValueError("empty dataset")
    terms = [elbo_estimate(x, params, rng, n)[0] for x in dataset]
    return perplexity_from_terms(terms, [x.num_nodes for x in dataset])


# -- latent corpus ---------------------------------------------------------

@dataclass
class LatentCorpus:
    graph_ids: list = field(default_factory=list)
    cycle_lens: list = field(default_factory=list)
    z: np.ndarray = None
    orders: list = field(default_factory=list)

    def __len__(self):
        return len(self.graph_ids)


def embed_corpus(params, rng, per_length=40, lengths=range(5, 15)):
    """Encode ``per_length`` fresh cycles of every length."""
    corpus = LatentCorpus()
    zs = []
    gid = 0
    for n in lengths:
        for _ in range(per_length):
            enc = encode_sample(make_cycle(n), params, rng)
            corpus.graph_ids.append(gid)
            corpus.cycle_lens.append(n)
            corpus.orders.append(list(enc.order))
            zs.append(enc.z.data.copy())
            gid += 1
    d = params["phi/node_embed/W"].shape[0]
    corpus.z = np.array(zs).reshape(len(zs), d)
    return corpus


def write_latent_csv(corpus, path):
    d = corpus.z.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["graph_id", "cycle_len"] + [f"z{i}" for i in range(d)] + ["order"])
        for gid, n, z, order in zip(corpus.graph_ids, corpus.cycle_lens, corpus.z, corpus.orders):
            w.writerow([gid, n] + [repr(float(v)) for v in z] + ["-".join(map(str, order))])


def read_latent_csv(path):
    corpus = LatentCorpus()
    zs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        zcols = [i for i, h in enumerate(header) if h.startswith("z")]
        for rec in reader:
            corpus.graph_ids.append(int(rec[0]))
            corpus.cycle_lens.append(int(rec[1]))
            zs.append([float(rec[i]) for i in zcols])
            corpus.orders.append([int(v) for v in rec[-1].split("-")])
    corpus.z = np.array(zs, dtype=np.float64).reshape(len(zs), len(zcols))
    return corpus


# -- PCA / clustering ------------------------------------------------------

@dataclass
class PCAResult:
    mean: np.ndarray
    components: np.ndarray          # rows, unit norm, by decreasing variance
    explained_variance: np.ndarray
    projections: np.ndarray

    @property
    def explained_ratio(self):
        total = self.explained_variance.sum()
        if total == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / total


def pca(points):
    """Principal components from the eigen-decomposition of the sample covariance.

    Each component's sign is fixed so its largest-magnitude entry is positive.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca needs at least two points")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T
    for i, c in enumerate(comps):
        if c[np.argmax(np.abs(c))] < 0:
            comps[i] = -c
    return PCAResult(mean=mean, components=comps, explained_variance=evals,
                     projections=centered @ comps.T)


def largest_cluster(points, factor=3.0):
    """Row indices of the largest single-linkage component.

    Points closer than ``factor`` times the median nearest-neighbour
    distance are linked. Ties go to the component with the smallest index.
    """
    X = np.asarray(points, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("no points")
    if n == 1:
        return np.array([0])
    dist = cdist(X, X)
    nn = np.where(np.eye(n, dtype=bool), np.inf, dist).min(axis=1)
    eps = factor * float(np.median(nn))
    _, labels = connected_components(dist <= eps, directed=False)
    counts = np.bincount(labels)
    best = int(np.argmax(counts))
    return np.flatnonzero(labels == best)


# -- interpolation ---------------------------------------------------------

@dataclass
class InterpolationPoint:
    coord: float
    mean: float
    stderr: float
    n_valid: int
    n_total: int
    cdf: list

    @property
    def invalid_fraction(self):
        return 1.0 - self.n_valid / self.n_total


@dataclass
class InterpolationReport:
    points: list
    axis: np.ndarray
    origin: np.ndarray
    cluster_size: int


def length_stats(lengths, n_total):
    lengths = np.asarray(lengths, dtype=np.float64)
    n_valid = len(lengths)
    if n_valid == 0:
        mean = stderr = float("nan")
    else:
        mean = float(lengths.mean())
        stderr = float(lengths.std(ddof=1) / math.sqrt(n_valid)) if n_valid > 1 else float("nan")
    cdf = [float(np.count_nonzero(lengths <= k) / n_valid) if n_valid else 0.0
           for k in CDF_LENGTHS]
    return mean, stderr, cdf


def interpolation_report(params, rng, corpus, points=10, samples=1000, max_nodes=50):
    """Decode evenly spaced points along the first principal axis of the largest cluster."""
    if len(corpus) == 0:
        raise ValueError("empty latent corpus")
    members = largest_cluster(corpus.z)
    if len(members) < 2:
        raise ValueError(f"largest cluster has {len(members)} point(s); need at least 2")
    fit = pca(corpus.z[members])
    axis = fit.components[0]
    proj = fit.projections[:, 0]
    coords = np.linspace(proj.min(), proj.max(), points)
    out = []
    for c in coords:
        z = ad.constant(fit.mean + c * axis)
        lengths = []
        for _ in range(samples):
            n = cycle_length(generate(z, params, rng, max_nodes=max_nodes).graph)
            if n is not None:
                lengths.append(n)
        mean, stderr, cdf = length_stats(lengths, samples)
        out.append(InterpolationPoint(coord=float(c), mean=mean, stderr=stderr,
                                      n_valid=len(lengths), n_total=samples, cdf=cdf))
    return InterpolationReport(points=out, axis=axis, origin=fit.mean,
                               cluster_size=len(members))


def write_interpolation_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["coord", "mean", "stderr", "n_valid", "n_total"]
                   + [f"cdf_{k}" for k in CDF_LENGTHS])
        for p in report.points:
            w.writerow([repr(p.coord), _num(p.mean), _num(p.stderr), p.n_valid, p.n_total]
                       + [repr(v) for v in p.cdf])


def _num(v):
    return "" if math.isnan(v) else repr(float(v))
