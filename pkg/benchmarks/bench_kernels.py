"""Time each numeric kernel under numba and numpy on the same inputs.

    python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 5]

Numba times exclude the first (compiling) call. Outputs of the two
backends are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from emoxplain import _accel, kernels


def _inputs(scale: float, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_items = int(20_000 * scale)
    sizes = rng.integers(5, 15, size=n_items)
    offsets = np.zeros(n_items + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    labels = rng.integers(0, 8, size=int(offsets[-1])).astype(np.int64)
    scores = rng.random((n_items, 8))
    p = rng.dirichlet(np.ones(8), size=n_items)
    q = rng.dirichlet(np.ones(8), size=n_items)
    truth = rng.integers(0, 8, size=n_items).astype(np.int64)
    pred = rng.integers(0, 8, size=n_items).astype(np.int64)

    n_docs, n_feat, nnz = int(4_000 * scale), 2 ** 14, 40
    indptr = np.arange(0, (n_docs + 1) * nnz, nnz, dtype=np.int64)
    indices = rng.integers(0, n_feat, size=n_docs * nnz).astype(np.int64)
    values = rng.random(n_docs * nnz)
    y = rng.integers(0, 8, size=n_docs).astype(np.int64)
    W = rng.normal(0, 0.01, size=(n_feat, 8))
    b = np.zeros(8)
    order = rng.permutation(n_docs).astype(np.int64)

    def sgd(backend):
        W2, b2 = W.copy(), b.copy()
        kernels.sgd_epoch(indptr, indices, values, y, W2, b2, order, 16, 0.5, 1e-5, backend=backend)
        return W2

    return {
        "segment_counts": lambda be: kernels.segment_counts(labels, offsets, 8, backend=be),
        "row_argmax": lambda be: kernels.row_argmax(scores, backend=be),
        "row_top2": lambda be: kernels.row_top2(scores, backend=be),
        "confusion_counts": lambda be: kernels.confusion_counts(truth, pred, 8, backend=be),
        "smoothed_kl_rows": lambda be: kernels.smoothed_kl_rows(p, q, 1e-6, backend=be),
        "sparse_logits": lambda be: kernels.sparse_logits(indptr, indices, values, W, b, backend=be),
        "sgd_epoch": sgd,
    }


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="input size multiplier")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    cases = _inputs(args.scale)
    print(f"{'kernel':<18} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, fn in cases.items():
        a, b = fn("numba"), fn("numpy")  # also compiles
        if not np.allclose(a, b, rtol=1e-9, atol=1e-9):
            raise SystemExit(f"{name}: numba and numpy outputs differ")
        t_nb = _best(lambda: fn("numba"), args.repeat)
        t_np = _best(lambda: fn("numpy"), args.repeat)
        print(f"{name:<18} {t_nb * 1e3:>10.2f} {t_np * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
