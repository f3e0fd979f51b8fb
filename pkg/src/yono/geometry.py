"""Unit-sphere primitives used by prototype condensation and synthesis."""
from dataclasses import dataclass

import numpy as np

from .errors import AntipodalAxis, DimensionMismatch, InvalidCosine, InvalidSpec, ZeroVector

NORM_EPS = 1e-12


def normalize(v):
    """Scale ``v`` to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if not norm > NORM_EPS:
        raise ZeroVector(f"cannot normalize vector with norm {norm:.3g}")
    return v / norm


def normalize_rows(x):
    """Row-wise :func:`normalize` for a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if x.size and not np.all(norms > NORM_EPS):
        raise ZeroVector("row with norm below 1e-12")
    return x / norms


def cosine(a, b):
    """Cosine similarity, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if not (na > NORM_EPS and nb > NORM_EPS):
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def angle(a, b):
    return float(np.arccos(cosine(a, b)))


def basis_vector(m, index=0):
    e = np.zeros(m)
    e[index] = 1.0
    return e


def rotation_from_axis(p, u):
    """Proper rotation ``R`` with ``R @ u == p`` acting only on span{u, p}.

    Built as a single Givens-style rotation in the plane spanned by ``u`` and
    the component of ``p`` orthogonal to ``u``; the orthogonal complement of
    that plane is left fixed.
    """
    p = normalize(p)
    u = normalize(u)
    if p.shape != u.shape:
        raise DimensionMismatch(f"axis shapes differ: {p.shape} vs {u.shape}")
    m = p.shape[0]
    c = float(np.clip(u @ p, -1.0, 1.0))
    if c < -1.0 + 1e-9:
        raise AntipodalAxis("p and u are antipodal; rotation plane is undefined")
    resid = p - c * u
    s = np.linalg.norm(resid)
    if s <= 1e-15:
        return np.eye(m)
    q = resid / s
    # s is sin(theta) measured directly, more accurate than sin(arccos(c)) near 0
    R = np.eye(m)
    R += (c - 1.0) * (np.outer(u, u) + np.outer(q, q))
    R += s * (np.outer(q, u) - np.outer(u, q))
    return R


@dataclass(frozen=True)
class TruncatedGaussianSpec:
    """Symmetric truncated normal on ``[mean - kappa*std, mean + kappa*std]``."""

    mean: float
    std: float
    kappa: float = 1.96

    def __post_init__(self):
        if not (self.std > 0 and np.isfinite(self.std)):
            raise InvalidSpec(f"std must be positive, got {self.std}")
        if not self.kappa > 0:
            raise InvalidSpec(f"kappa must be positive, got {self.kappa}")
        lo, hi = self.support
        if not (-1.0 < lo and hi < 1.0):
            raise InvalidSpec(f"support [{lo:.6g}, {hi:.6g}] escapes (-1, 1)")

    @property
    def support(self):
        half = self.kappa * self.std
        return self.mean - half, self.mean + half


def sample_truncated_gaussian(spec, rng, n):
    """Draw ``n`` values by rejection from the untruncated normal."""
    lo, hi = spec.support
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        # oversize the draw by the expected rejection rate
        draw = rng.normal(spec.mean, spec.std, size=int(need * 1.1) + 16)
        keep = draw[(draw >= lo) & (draw <= hi)][:need]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def sample_sphere_neighbors(cosines, m, rng):
    """Unit vectors ``v`` with ``v[0] == cosines[i]`` and isotropic remainder.

    The tail ``v[1:]`` is a standard normal draw rescaled to norm
    ``sqrt(1 - a**2)``, which makes it uniform on that (m-1)-sphere.
    """
    a = np.atleast_1d(np.asarray(cosines, dtype=np.float64))
    if m < 2:
        raise DimensionMismatch("sphere neighbours need m >= 2")
    if np.any(np.abs(a) >= 1.0):
        raise InvalidCosine("first coordinate must satisfy |a| < 1")
    eps = rng.standard_normal((a.size, m - 1))
    norms = np.linalg.norm(eps, axis=1, keepdims=True)
    while np.any(norms <= NORM_EPS):  # measure-zero, but m=2 draws one scalar
        bad = norms[:, 0] <= NORM_EPS
        eps[bad] = rng.standard_normal((int(bad.sum()), m - 1))
        norms = np.linalg.norm(eps, axis=1, keepdims=True)
    v = np.empty((a.size, m))
    v[:, 0] = a
    v[:, 1:] = eps * (np.sqrt(1.0 - a * a)[:, None] / norms)
    return v


def sample_sphere_neighbor(a_tilde, m, rng):
    """Single-vector form of :func:`sample_sphere_neighbors`."""
    return sample_sphere_neighbors([a_tilde], m, rng)[0]
