"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes match the desk-scale benchmark: a 47-50-25-7 FCNN, one client's
two local epochs at batch 64, and a 7-class weight solve.
"""
import argparse
import time

import numpy as np

from fedmade import kernels as K
from fedmade._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    r = np.random.default_rng(0)
    dims = np.array([47, 50, 25, 7], dtype=np.int64)
    n = K.n_params(dims)
    flat = r.normal(0, 0.1, n)
    X = r.uniform(0, 1, (3000, 47))
    y = r.integers(0, 7, 3000).astype(np.int64)
    order = np.concatenate([r.permutation(3000) for _ in range(2)]).astype(np.int64)
    empty, zeros = np.zeros(0), np.zeros(n)
    P = r.dirichlet(np.ones(7), size=(3, 7)).reshape(3, 49)
    tgt = np.eye(7).ravel()

    def train(fn):
        def go():
            fn(flat.copy(), dims, X, y, order, 3000, 64, K.ADAM, 5e-4, np.zeros(n), np.zeros(n), 0,
               0.9, 0.999, 1e-8, 0.0, zeros, empty)
        return go

    return {
        "forward (3000x47)": (lambda: K.nb_mlp_forward(flat, dims, X), lambda: K.np_mlp_forward(flat, dims, X)),
        "loss+grad (batch 64)": (lambda: K.nb_mlp_loss_grad(flat, dims, X[:64], y[:64], 0.0, zeros, empty),
                                 lambda: K.np_mlp_loss_grad(flat, dims, X[:64], y[:64], 0.0, zeros, empty)),
        "2 epochs adam (3000 rows)": (train(K.nb_train_batches), train(K.np_train_batches)),
        "nnls 500 iters (K=3, 7 cls)": (
            lambda: K.nb_nnls_adam(P, tgt, np.full(3, 1 / 3), 500, 0.01, 0.9, 0.999, 1e-8, 0.0, 501),
            lambda: K.np_nnls_adam(P, tgt, np.full(3, 1 / 3), 500, 0.01, 0.9, 0.999, 1e-8, 0.0, 501)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':<30}{'numba':>12}{'numpy':>12}{'speed-up':>10}")
    for name, (nb, npy) in cases().items():
        a, b = best_of(nb, args.repeat), best_of(npy, args.repeat)
        print(f"{name:<30}{a * 1e3:>10.3f}ms{b * 1e3:>10.3f}ms{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
