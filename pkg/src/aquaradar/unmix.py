"""Non-negative least squares and simplex-constrained unmixing.

The active-set solver here is shared with the PARAFAC updates in
:mod:`aquaradar.tensorlab`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensorlab import BLOCK_SIZES, FINGERPRINT_LENGTH, Fingerprint


class MissingComponentError(ValueError):
    pass


class ZeroDictionaryError(ValueError):
    pass


def fnnls(gram, atb, tol=None, max_iter=None):
    """Active-set NNLS in normal-equation form.

    Minimises ``x' G x - 2 b' x`` subject to ``x >= 0`` for a symmetric
    positive semi-definite ``G = A'A`` and ``b = A'y`` (Lawson-Hanson
    iterations, expressed on the Gram matrix as in Bro & de Jong).

    Parameters
    ----------
    gram : ndarray, shape (n, n)
    atb : ndarray, shape (n,)
    tol : float, optional
        Dual-feasibility tolerance; defaults to a multiple of machine
        precision scaled by the problem size.

    Returns
    -------
    x : ndarray, shape (n,)
    """
    gram = np.asarray(gram, dtype=float)
    atb = np.asarray(atb, dtype=float)
    n = atb.shape[0]
    if tol is None:
        tol = 10 * np.finfo(float).eps * n * max(1.0, np.abs(gram).max(initial=0.0)) \
            * max(1.0, np.abs(atb).max(initial=0.0))
    if max_iter is None:
        max_iter = 30 * n

    passive = np.zeros(n, dtype=bool)
    x = np.zeros(n)
    w = atb - gram @ x
    it = 0
    while not passive.all() and w[~passive].max() > tol:
        candidates = np.where(~passive, w, -np.inf)
        passive[int(np.argmax(candidates))] = True
        while True:
            it += 1
            if it > max_iter:
                return x
            s = np.zeros(n)
            idx = np.flatnonzero(passive)
            s[idx] = _solve_sym(gram[np.ix_(idx, idx)], atb[idx])
            if s[idx].min() > 0:
                x = s
                break
            # step back to the feasible boundary and release blocking variables
            blocking = passive & (s <= 0)
            alpha = np.min(x[blocking] / (x[blocking] - s[blocking]))
            x = x + alpha * (s - x)
            passive &= x > tol
            x[~passive] = 0.0
        w = atb - gram @ x
    return x


def _solve_sym(a, b):
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(a, b, rcond=None)[0]


def nnls(a, y):
    """``argmin ||A x - y||`` over ``x >= 0``; returns ``(x, residual_norm)``."""
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float)
    x = fnnls(a.T @ a, a.T @ y)
    return x, float(np.linalg.norm(a @ x - y))


def _subset_masks(n):
    masks = [np.array([(b >> i) & 1 for i in range(n)], dtype=bool) for b in range(1, 2 ** n)]
    return np.array(masks)


_MASKS = {n: _subset_masks(n) for n in range(1, 5)}


def nnls_batch(gram, rhs):
    """Solve many NNLS problems sharing one Gram matrix.

    ``rhs`` has shape ``(n, m)``; column ``j`` is ``A' y_j``. For ``n <= 4``
    every passive set is tried at once for all columns and the best
    primal-feasible candidate is kept, which is the exact optimum; larger
    problems fall back to :func:`fnnls` per column.
    """
    gram = np.asarray(gram, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n, m = rhs.shape
    if n > 4:
        return np.column_stack([fnnls(gram, rhs[:, j]) for j in range(m)])

    masks = _MASKS[n]
    keep = masks[:, :, None] & masks[:, None, :]
    # restrict G to each passive set, padding the rest with the identity
    stack = np.where(keep, gram[None], 0.0) + np.where(masks, 0.0, 1.0)[:, None, :] * np.eye(n)
    try:
        inv = np.linalg.inv(stack)
    except np.linalg.LinAlgError:
        # a singular passive set can be dropped: some optimum always lives on
        # a linearly independent support
        inv = np.empty_like(stack)
        for k, sub in enumerate(stack):
            try:
                inv[k] = np.linalg.inv(sub)
            except np.linalg.LinAlgError:
                inv[k] = np.nan
    inv = np.where(keep, inv, 0.0)
    cand = inv @ rhs  # [subset, n, m]; zero outside each passive set
    # at the unconstrained optimum on the subset, x'Gx - 2b'x = -b'x
    obj = -np.einsum("snm,nm->sm", cand, rhs)
    ok = np.all(cand >= 0, axis=1) & np.isfinite(obj)
    obj = np.where(ok, obj, np.inf)
    best = np.argmin(obj, axis=0)
    x = cand[best, :, np.arange(m)].T
    # the empty passive set (x = 0, objective 0) wins when nothing is better
    return np.where(obj[best, np.arange(m)] < 0.0, x, 0.0)


# --------------------------------------------------------------------------
# dictionary and simplex unmixing


@dataclass(frozen=True)
class Dictionary:
    matrix: np.ndarray
    component_names: tuple[str, ...]

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.component_names):
            raise ValueError("dictionary columns must match component names")

    @property
    def n_components(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class MixEstimate:
    ratios: np.ndarray
    residual: float
    reconstruction: np.ndarray
    kkt_violation: float = 0.0
    objective: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "objective", self.residual ** 2)


def renormalize_blocks(vector, block_sizes=BLOCK_SIZES):
    """Scale each factor sub-vector of a 135-block to unit l2 norm."""
    out = np.array(vector, dtype=float)
    start = 0
    for size in block_sizes:
        seg = out[start:start + size]
        norm = np.linalg.norm(seg)
        if norm > 0:
            out[start:start + size] = seg / norm
        start += size
    return out


def build_dictionary(pure_fingerprints, component_names):
    """Average replicate rank-1 fingerprints into one unit-block column each.

    ``pure_fingerprints`` maps a component name to a list of 135-long
    vectors (or :class:`Fingerprint` objects).
    """
    columns = []
    for name in component_names:
        reps = pure_fingerprints.get(name)
        if not reps:
            raise MissingComponentError(f"no pure fingerprint for component {name!r}")
        vecs = np.array([r.vector if isinstance(r, Fingerprint) else np.asarray(r, float)
                         for r in reps])
        if vecs.shape[1] != FINGERPRINT_LENGTH:
            raise ValueError(f"pure fingerprints must have length {FINGERPRINT_LENGTH}")
        columns.append(renormalize_blocks(vecs.mean(axis=0)))
    return Dictionary(np.column_stack(columns), tuple(component_names))


def reconstruct(dictionary, ratios):
    p = dictionary.matrix if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (p.shape[1],):
        raise ValueError(f"expected {p.shape[1]} ratios, got shape {ratios.shape}")
    return p @ ratios


def simplex_nnls(dictionary, f, kkt_tol=1e-8):
    """Least squares over the probability simplex: ``min ||P c - f||``, ``c >= 0``, ``sum c = 1``.

    A heavily weighted row of ones is appended to ``P`` and solved with
    :func:`fnnls`; the result is renormalised and then polished with an
    equality-constrained active-set pass so the KKT conditions hold to
    ``kkt_tol``.
    """
    p = dictionary.matrix if isinstance(dictionary, Dictionary) else np.asarray(dictionary, float)
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("target vector must be finite")
    pmax = np.abs(p).max(initial=0.0)
    if pmax == 0.0:
        raise ZeroDictionaryError("dictionary is all zeros")
    rho = 1e3 * pmax
    n = p.shape[1]

    aug = np.vstack([p, np.full((1, n), rho)])
    rhs = np.append(f, rho)
    c = fnnls(aug.T @ aug, aug.T @ rhs)
    if c.sum() <= 0:
        c = np.full(n, 1.0 / n)
    c = c / c.sum()

    gram = p.T @ p
    h = p.T @ f
    c = _polish_simplex(gram, h, c, kkt_tol)
    c = np.maximum(c, 0.0)
    c = c / c.sum()

    recon = p @ c
    return MixEstimate(ratios=c, residual=float(np.linalg.norm(recon - f)),
                       reconstruction=recon, kkt_violation=_kkt_violation(gram, h, c))


def _kkt_violation(gram, h, c):
    """Most negative projected gradient over the zero coordinates (0 if none)."""
    grad = 2.0 * (gram @ c - h)
    support = c > 0
    mu = grad[support].mean()
    inactive = grad[~support] - mu
    return float(max(0.0, -inactive.min())) if inactive.size else 0.0


def _polish_simplex(gram, h, c, tol, max_iter=100):
    """Primal active-set iterations for ``min c'Gc - 2h'c`` on the simplex."""
    n = c.size
    support = c > 0
    for _ in range(max_iter):
        idx = np.flatnonzero(support)
        k = idx.size
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = gram[np.ix_(idx, idx)]
        kkt[:k, k] = 1.0
        kkt[k, :k] = 1.0
        sol = _solve_sym(kkt, np.append(h[idx], 1.0))
        target = np.zeros(n)
        target[idx] = sol[:k]
        if target[idx].min() < 0:
            blocking = support & (target < 0)
            alpha = np.min(c[blocking] / (c[blocking] - target[blocking]))
            c = c + alpha * (target - c)
            c[np.abs(c) < 1e-15] = 0.0
            support = c > 0
            continue
        c = target
        grad = 2.0 * (gram @ c - h)
        mu = grad[support].mean()
        slack = np.where(support, np.inf, grad - mu)
        j = int(np.argmin(slack))
        if slack[j] >= -tol:
            return c
        support[j] = True
    return c


def brute_force_simplex(dictionary, f, step=0.01):
    """Exhaustive search over the simplex lattice with spacing ``step`` (C <= 4)."""
    p = dictionary.matrix if isinstance(dictionary, Dictionary) else np.asarray(dictionary, float)
    f = np.asarray(f, dtype=float)
    n = p.shape[1]
    if n > 4:
        raise ValueError("brute-force simplex search is limited to C <= 4")
    m = int(round(1.0 / step))
    if not np.isclose(m * step, 1.0):
        raise ValueError("step must divide 1")
    lattice = np.array(list(_compositions(m, n)), dtype=float) / m
    resid = lattice @ p.T - f
    obj = np.einsum("ij,ij->i", resid, resid)
    best = int(np.argmin(obj))
    c = lattice[best]
    recon = p @ c
    return MixEstimate(ratios=c, residual=float(np.linalg.norm(recon - f)), reconstruction=recon)


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def unmix_fingerprint(dictionary, fingerprint, weights=None):
    """Unmix a rank-k fingerprint block by block.

    Each 135-long block is matched to the dictionary with
    :func:`simplex_nnls`; block estimates are averaged with the PARAFAC
    component weights. All-zero (padding) blocks are skipped.
    """
    vec = fingerprint.vector if isinstance(fingerprint, Fingerprint) else np.asarray(fingerprint, float)
    if weights is None:
        weights = fingerprint.weights if isinstance(fingerprint, Fingerprint) else None
    blocks = vec.reshape(-1, FINGERPRINT_LENGTH)
    if weights is None:
        weights = np.ones(blocks.shape[0])
    weights = np.asarray(weights, dtype=float)[:blocks.shape[0]]

    total = np.zeros(dictionary.n_components)
    resid = 0.0
    wsum = 0.0
    for block, w in zip(blocks, weights):
        if not np.any(block) or w <= 0:
            continue
        est = simplex_nnls(dictionary, block)
        total += w * est.ratios
        resid += w * est.residual
        wsum += w
    if wsum == 0:
        raise ValueError("fingerprint has no non-empty block")
    ratios = total / wsum
    # residual is the weight-averaged per-block residual
    return MixEstimate(ratios=ratios, residual=resid / wsum,
                       reconstruction=reconstruct(dictionary, ratios))
