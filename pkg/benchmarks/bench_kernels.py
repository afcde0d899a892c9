"""Compare the compiled and pure-Python kernel backends.

Times each kernel on model-sized inputs, then one full training episode
(encode + teacher-forced decode + backward) on a 10-cycle.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from seqgvae import kernels
from seqgvae.dataset import make_cycle
from seqgvae.elbo import estimate_and_grads
from seqgvae.model import ModelConfig, init_params


def kernel_cases(rng):
    d, h, n, m = 5, 16, 10, 20
    X = rng.normal(size=(m, 2 * d + 5))
    W1, b1 = rng.normal(size=(h, X.shape[1])), rng.normal(size=h)
    W2, b2 = rng.normal(size=(d, h)), rng.normal(size=d)
    H, A = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    gru = [rng.normal(size=(d, d)) if k % 3 != 2 else rng.normal(size=d) for k in range(9)]
    Y, hid = kernels.mlp_forward(X, W1, b1, W2, b2)
    Hn, R, U, C = kernels.gru_forward(H, A, *gru)
    idx = rng.integers(0, n, size=m).astype(np.int64)
    weights = [gru[0], gru[1], gru[3], gru[4], gru[6], gru[7]]
    return {
        "affine_forward": lambda: kernels.affine_forward(X, W1, b1),
        "affine_backward": lambda: kernels.affine_backward(np.ones((m, h)), X, W1),
        "mlp_forward": lambda: kernels.mlp_forward(X, W1, b1, W2, b2),
        "mlp_backward": lambda: kernels.mlp_backward(Y, X, hid, W1, W2),
        "gru_forward": lambda: kernels.gru_forward(H, A, *gru),
        "gru_backward": lambda: kernels.gru_backward(Hn, H, A, R, U, C, *weights),
        "scatter_add": lambda: kernels.scatter_add(Y, idx, n),
        "log_softmax_rows": lambda: kernels.log_softmax_rows(X),
    }


def episode_case():
    params = init_params(ModelConfig(), np.random.default_rng(0))
    g = make_cycle(10)
    rng = np.random.default_rng(1)
    return lambda: estimate_and_grads(g, params, rng)


def best_of(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        cases = kernel_cases(np.random.default_rng(0))
        for name, fn in cases.items():
            results[name, backend] = best_of(fn, args.repeat, 2000)
        results["episode (10-cycle)", backend] = best_of(episode_case(), args.repeat, 10)
    kernels.use_backend(backends[0])
    names = list(dict.fromkeys(k for k, _ in results))
    print(f"{'kernel':<22}" + "".join(f"{b + ' (us)':>16}" for b in backends)
          + ("    speedup" if len(backends) > 1 else ""))
    for name in names:
        row = [results[name, b] * 1e6 for b in backends]
        line = f"{name:<22}" + "".join(f"{v:>16.1f}" for v in row)
        if len(backends) > 1:
            line += f"{row[1] / row[0]:>10.2f}x"
        print(line)


if __name__ == "__main__":
    main()
