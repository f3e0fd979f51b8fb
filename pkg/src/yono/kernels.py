"""Hot inner loops, each in a numba-compiled and a pure-numpy flavour.

The public names (``arcface_rows``, ``mean_shift_iterate``) resolve to the
compiled loops unless ``YONO_DISABLE_JIT=1``. Both flavours are importable
under ``*_jit`` / ``*_numpy`` so tests can check they agree.
"""
import math

import numpy as np

from ._jit import USE_JIT, njit

# derivative guard for d/dc arccos at c = +-1
_SQRT_FLOOR = 1e-7


# --------------------------------------------------------------------------
# additive angular margin softmax on a precomputed cosine matrix
# --------------------------------------------------------------------------

def arcface_rows_numpy(cos, target, margin, tau):
    """Per-row margin softmax loss and its derivative w.r.t. ``cos``.

    ``cos`` is (n, C) with entries already clipped to [-1, 1]; ``target`` holds
    column indices. The target logit is ``cos(arccos(c) + margin)``, held at
    -1 once the shifted angle passes pi.
    """
    n = cos.shape[0]
    rows = np.arange(n)
    c_t = cos[rows, target]
    cm, sm = math.cos(margin), math.sin(margin)
    root = np.sqrt(np.maximum(1.0 - c_t * c_t, 0.0))
    inside = c_t >= -cm  # arccos(c) + margin <= pi
    shifted = np.where(inside, c_t * cm - root * sm, -1.0)
    dshift = np.where(inside, cm + c_t * sm / np.maximum(root, _SQRT_FLOOR), 0.0)

    logits = cos / tau
    logits[rows, target] = shifted / tau
    top = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - top)
    s = e.sum(axis=1, keepdims=True)
    loss = (np.log(s[:, 0]) + top[:, 0]) - logits[rows, target]

    g = e / s
    g[rows, target] -= 1.0
    g /= tau
    g[rows, target] *= dshift
    return loss, g


@njit(cache=True)
def arcface_rows_jit(cos, target, margin, tau):
    n, n_cls = cos.shape
    cm = math.cos(margin)
    sm = math.sin(margin)
    loss = np.empty(n)
    g = np.empty((n, n_cls))
    logits = np.empty(n_cls)
    for i in range(n):
        k = target[i]
        c_t = cos[i, k]
        r = 1.0 - c_t * c_t
        root = math.sqrt(r) if r > 0.0 else 0.0
        if c_t >= -cm:
            shifted = c_t * cm - root * sm
            dshift = cm + c_t * sm / max(root, _SQRT_FLOOR)
        else:
            shifted = -1.0
            dshift = 0.0
        top = -np.inf
        for j in range(n_cls):
            v = cos[i, j] / tau
            if j == k:
                v = shifted / tau
            logits[j] = v
            if v > top:
                top = v
        s = 0.0
        for j in range(n_cls):
            e = math.exp(logits[j] - top)
            g[i, j] = e
            s += e
        loss[i] = (math.log(s) + top) - logits[k]
        for j in range(n_cls):
            g[i, j] = g[i, j] / s
        g[i, k] -= 1.0
        for j in range(n_cls):
            g[i, j] /= tau
        g[i, k] *= dshift
    return loss, g


# --------------------------------------------------------------------------
# attentional mean-shift on unit-normalised class embeddings
# --------------------------------------------------------------------------

def mean_shift_iterate_numpy(unit_z, p, lam, iters):
    """``iters`` full-batch steps of attention-weighted mean-shift.

    Returns the new prototype, or a zero vector if a step collapsed to the
    origin (the caller turns that into ``ZeroVector``).
    """
    p = p.copy()
    for _ in range(iters):
        logits = unit_z @ p
        logits = logits - logits.max()
        a = np.exp(logits)
        a /= a.sum()
        p = (1.0 - lam) * p + lam * (a @ unit_z)
        norm = np.sqrt(p @ p)
        if norm <= 1e-12:
            return np.zeros_like(p)
        p = p / norm
    return p


@njit(cache=True)
def mean_shift_iterate_jit(unit_z, p, lam, iters):
    n, m = unit_z.shape
    p = p.copy()
    logits = np.empty(n)
    target = np.empty(m)
    for _ in range(iters):
        top = -np.inf
        for i in range(n):
            acc = 0.0
            for d in range(m):
                acc += unit_z[i, d] * p[d]
            logits[i] = acc
            if acc > top:
                top = acc
        s = 0.0
        for i in range(n):
            logits[i] = math.exp(logits[i] - top)
            s += logits[i]
        target[:] = 0.0
        for i in range(n):
            w = logits[i] / s
            for d in range(m):
                target[d] += w * unit_z[i, d]
        norm2 = 0.0
        for d in range(m):
            p[d] = (1.0 - lam) * p[d] + lam * target[d]
            norm2 += p[d] * p[d]
        norm = math.sqrt(norm2)
        if norm <= 1e-12:
            return np.zeros(m)
        for d in range(m):
            p[d] /= norm
    return p


if USE_JIT:
    arcface_rows = arcface_rows_jit
    mean_shift_iterate = mean_shift_iterate_jit
else:
    arcface_rows = arcface_rows_numpy
    mean_shift_iterate = mean_shift_iterate_numpy
