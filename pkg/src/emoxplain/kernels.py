"""Hot numeric kernels, each with a numba loop and a vectorized numpy twin.

Public functions dispatch on ``_accel.USE_NUMBA``; pass ``backend="numba"``
or ``backend="numpy"`` to pin one (tests and the benchmark do). Label
arrays are integer indices into the canonical emotion order, so "lowest
index wins" is the canonical tie-break everywhere.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit


def _use_numba(backend: str | None) -> bool:
    if backend is None:
        return _accel.USE_NUMBA
    if backend == "numba":
        if not _accel.HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return True
    if backend == "numpy":
        return False
    raise ValueError(f"unknown kernel backend {backend!r}")


# ---------------------------------------------------------------- counting


@njit
def _segment_counts_nb(labels, offsets, k):
    n = offsets.shape[0] - 1
    out = np.zeros((n, k), dtype=np.int64)
    for i in range(n):
        for j in range(offsets[i], offsets[i + 1]):
            out[i, labels[j]] += 1
    return out


def _segment_counts_np(labels, offsets, k):
    n = offsets.shape[0] - 1
    lengths = np.diff(offsets)
    rows = np.repeat(np.arange(n), lengths)
    flat = np.bincount(rows * k + labels, minlength=n * k)
    return flat.reshape(n, k).astype(np.int64)


def segment_counts(labels, offsets, k: int, backend: str | None = None) -> np.ndarray:
    """Per-segment label counts.

    ``labels[offsets[i]:offsets[i+1]]`` are the labels of segment ``i``;
    returns an ``(n_segments, k)`` int64 matrix.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("label index out of range")
    if _use_numba(backend):
        return _segment_counts_nb(labels, offsets, k)
    return _segment_counts_np(labels, offsets, k)


@njit
def _row_argmax_nb(x):
    n, k = x.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = 0
        for j in range(1, k):
            if x[i, j] > x[i, best]:
                best = j
        out[i] = best
    return out


def row_argmax(x, backend: str | None = None) -> np.ndarray:
    """Row-wise argmax with ties resolved to the lowest column."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if _use_numba(backend):
        return _row_argmax_nb(x)
    return np.argmax(x, axis=1).astype(np.int64)


@njit
def _row_top2_nb(x):
    n, k = x.shape
    out = np.empty((n, 2), dtype=np.int64)
    for i in range(n):
        a = 0
        for j in range(1, k):
            if x[i, j] > x[i, a]:
                a = j
        b = 1 if a == 0 else 0
        for j in range(k):
            if j != a and x[i, j] > x[i, b]:
                b = j
        out[i, 0] = a
        out[i, 1] = b
    return out


def row_top2(x, backend: str | None = None) -> np.ndarray:
    """Indices of the two largest entries per row, descending, ties to the lowest column."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("row_top2 needs a 2-D array with at least two columns")
    if _use_numba(backend):
        return _row_top2_nb(x)
    return np.argsort(-x, axis=1, kind="stable")[:, :2].astype(np.int64)


@njit
def _confusion_nb(truth, pred, k):
    out = np.zeros((k, k), dtype=np.int64)
    for i in range(truth.shape[0]):
        out[truth[i], pred[i]] += 1
    return out


def confusion_counts(truth, pred, k: int, backend: str | None = None) -> np.ndarray:
    truth = np.ascontiguousarray(truth, dtype=np.int64)
    pred = np.ascontiguousarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise ValueError("truth and prediction arrays differ in length")
    if _use_numba(backend):
        return _confusion_nb(truth, pred, k)
    return np.bincount(truth * k + pred, minlength=k * k).reshape(k, k).astype(np.int64)


# ---------------------------------------------------------------- divergence


@njit
def _smoothed_kl_rows_nb(p, q, eps):
    n, k = p.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        sp = 0.0
        sq = 0.0
        for j in range(k):
            sp += p[i, j] + eps
            sq += q[i, j] + eps
        acc = 0.0
        for j in range(k):
            pj = (p[i, j] + eps) / sp
            qj = (q[i, j] + eps) / sq
            acc += pj * np.log(pj / qj)
        out[i] = acc
    return out


def _smoothed_kl_rows_np(p, q, eps):
    ps = p + eps
    qs = q + eps
    ps /= ps.sum(axis=1, keepdims=True)
    qs /= qs.sum(axis=1, keepdims=True)
    return np.sum(ps * np.log(ps / qs), axis=1)


def smoothed_kl_rows(p, q, eps: float, backend: str | None = None) -> np.ndarray:
    """Row-wise KL(p~ || q~) after additive ``eps`` smoothing and renormalization."""
    p = np.ascontiguousarray(np.atleast_2d(p), dtype=np.float64)
    q = np.ascontiguousarray(np.atleast_2d(q), dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    if _use_numba(backend):
        return _smoothed_kl_rows_nb(p, q, float(eps))
    return _smoothed_kl_rows_np(p, q, float(eps))


# ---------------------------------------------------------------- sparse softmax regression
#
# Documents are CSR rows (indptr, indices, values) over hashed features;
# weights are (n_features, k). One call runs a full shuffled epoch of
# minibatch SGD with L2 decay applied to the touched rows only.


@njit
def _sparse_logits_nb(indptr, indices, values, W, b):
    n = indptr.shape[0] - 1
    k = W.shape[1]
    out = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        for c in range(k):
            out[i, c] = b[c]
        for j in range(indptr[i], indptr[i + 1]):
            f = indices[j]
            v = values[j]
            for c in range(k):
                out[i, c] += v * W[f, c]
    return out


def _sparse_logits_np(indptr, indices, values, W, b):
    n = indptr.shape[0] - 1
    k = W.shape[1]
    out = np.tile(b, (n, 1))
    if indices.size:
        rows = np.repeat(np.arange(n), np.diff(indptr))
        np.add.at(out, rows, W[indices] * values[:, None])
    return out.reshape(n, k)


def sparse_logits(indptr, indices, values, W, b, backend: str | None = None) -> np.ndarray:
    if _use_numba(backend):
        return _sparse_logits_nb(indptr, indices, values, W, b)
    return _sparse_logits_np(indptr, indices, values, W, b)


@njit
def _sgd_epoch_nb(indptr, indices, values, y, W, b, order, batch, lr, l2):
    n = order.shape[0]
    k = W.shape[1]
    total = 0.0
    logit = np.empty(k, dtype=np.float64)
    G = np.zeros_like(W)
    seen = np.zeros(W.shape[0], dtype=np.bool_)
    touched = np.empty(indices.shape[0], dtype=np.int64)
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        m = stop - start
        gb = np.zeros(k, dtype=np.float64)
        nt = 0
        for r in range(m):
            i = order[start + r]
            for c in range(k):
                logit[c] = b[c]
            for j in range(indptr[i], indptr[i + 1]):
                f = indices[j]
                v = values[j]
                for c in range(k):
                    logit[c] += v * W[f, c]
            mx = logit[0]
            for c in range(1, k):
                if logit[c] > mx:
                    mx = logit[c]
            z = 0.0
            for c in range(k):
                logit[c] = np.exp(logit[c] - mx)
                z += logit[c]
            total += -np.log(max(logit[y[i]] / z, 1e-300))
            for c in range(k):
                g = logit[c] / z
                if c == y[i]:
                    g -= 1.0
                logit[c] = g / m
                gb[c] += g / m
            for j in range(indptr[i], indptr[i + 1]):
                f = indices[j]
                v = values[j]
                if not seen[f]:
                    seen[f] = True
                    touched[nt] = f
                    nt += 1
                for c in range(k):
                    G[f, c] += v * logit[c]
        for t in range(nt):
            f = touched[t]
            for c in range(k):
                W[f, c] -= lr * (G[f, c] + l2 * W[f, c])
                G[f, c] = 0.0
            seen[f] = False
        for c in range(k):
            b[c] -= lr * gb[c]
    return total / n


def _sgd_epoch_np(indptr, indices, values, y, W, b, order, batch, lr, l2):
    n = order.shape[0]
    k = W.shape[1]
    total = 0.0
    for start in range(0, n, batch):
        rows = order[start:start + batch]
        m = rows.shape[0]
        lo = indptr[rows]
        lengths = indptr[rows + 1] - lo
        starts = np.repeat(lo - np.concatenate(([0], np.cumsum(lengths)[:-1])), lengths)
        pos = starts + np.arange(lengths.sum())
        feat = indices[pos]
        val = values[pos]
        local = np.repeat(np.arange(m), lengths)
        logits = np.tile(b, (m, 1))
        np.add.at(logits, local, W[feat] * val[:, None])
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        yb = y[rows]
        total += float(-np.log(np.maximum(probs[np.arange(m), yb], 1e-300)).sum())
        g = probs
        g[np.arange(m), yb] -= 1.0
        g /= m
        uniq, inv = np.unique(feat, return_inverse=True)
        G = np.zeros((uniq.shape[0], k))
        np.add.at(G, inv, val[:, None] * g[local])
        W[uniq] -= lr * (G + l2 * W[uniq])
        b -= lr * g.sum(axis=0)
    return total / max(n, 1)


def sgd_epoch(indptr, indices, values, y, W, b, order, batch: int, lr: float, l2: float,
              backend: str | None = None) -> float:
    """One epoch of in-place minibatch SGD on softmax cross-entropy; returns mean loss."""
    if _use_numba(backend):
        return float(_sgd_epoch_nb(indptr, indices, values, y, W, b, order, int(batch), float(lr), float(l2)))
    return _sgd_epoch_np(indptr, indices, values, y, W, b, order, int(batch), float(lr), float(l2))
