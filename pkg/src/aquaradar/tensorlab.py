"""Dense three-way tensor algebra and non-negative CP (PARAFAC) decomposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_SIZES = (101, 3, 31)
FINGERPRINT_LENGTH = sum(BLOCK_SIZES)
MAX_RANK = 3


class ZeroTensorError(ValueError):
    pass


def unfold(tensor, mode):
    """Mode-``mode`` matricization (modes are 1, 2, 3).

    Columns are ordered so that ``X_(n) = A_n (A_m ⊙ A_l)^T`` with the
    remaining modes ``l < m`` and ``⊙`` the Khatri-Rao product, e.g.
    ``X_(1) = U (W ⊙ V)^T``.
    """
    tensor = np.asarray(tensor)
    if mode not in (1, 2, 3) or tensor.ndim != 3:
        raise ValueError(f"mode must be 1, 2 or 3 for a 3-way tensor, got {mode}")
    ax = mode - 1
    return np.reshape(np.moveaxis(tensor, ax, 0), (tensor.shape[ax], -1), order="F")


def refold(matrix, mode, shape):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    ax = mode - 1
    moved = [shape[ax]] + [s for i, s in enumerate(shape) if i != ax]
    return np.moveaxis(np.reshape(matrix, moved, order="F"), 0, ax)


def khatri_rao(a, b):
    """Column-wise Kronecker product; column ``j`` is ``kron(a[:, j], b[:, j])``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"khatri_rao needs equal column counts, got {a.shape} and {b.shape}")
    return np.einsum("ik,jk->ijk", a, b).reshape(a.shape[0] * b.shape[0], a.shape[1])


def cp_to_tensor(weights, factors):
    u, v, w = factors
    return np.einsum("r,ir,jr,kr->ijk", np.asarray(weights, float), u, v, w)


@dataclass(frozen=True)
class FactorSet:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    weights: np.ndarray
    fit: float
    history: tuple[float, ...] = ()

    @property
    def rank(self) -> int:
        return self.weights.shape[0]

    @property
    def factors(self):
        return self.U, self.V, self.W

    def to_tensor(self):
        return cp_to_tensor(self.weights, self.factors)


@dataclass(frozen=True)
class Fingerprint:
    vector: np.ndarray
    rank: int
    source_sample: str = ""
    weights: np.ndarray | None = None


def _relative_error(tensor, norm_x, weights, factors):
    return float(np.linalg.norm(tensor - cp_to_tensor(weights, factors)) / norm_x)


def _als(tensor, init, max_iters, tol, nnls_batch):
    u, v, w = (f.copy() for f in init)
    x1, x2, x3 = (unfold(tensor, m) for m in (1, 2, 3))
    norm_x = np.linalg.norm(tensor)

    def error():
        return float(np.linalg.norm(x1 - u @ khatri_rao(w, v).T) / norm_x)

    history = [error()]
    for _ in range(max_iters):
        u = nnls_batch((w.T @ w) * (v.T @ v), khatri_rao(w, v).T @ x1.T).T
        v = nnls_batch((w.T @ w) * (u.T @ u), khatri_rao(w, u).T @ x2.T).T
        w = nnls_batch((v.T @ v) * (u.T @ u), khatri_rao(v, u).T @ x3.T).T
        history.append(error())
        if abs(history[-2] - history[-1]) < tol:
            break
    return (u, v, w), history


def _normalize(factors):
    u, v, w = factors
    rank = u.shape[1]
    weights = np.ones(rank)
    out = []
    for f in (u, v, w):
        norms = np.linalg.norm(f, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        g = f / safe
        # a collapsed component keeps a flat unit column and zero weight
        g[:, norms == 0] = 1.0 / np.sqrt(f.shape[0])
        weights = weights * norms
        out.append(g)
    return weights, out


def _order_components(weights, factors):
    u = factors[0]
    # descending weight, ties broken lexicographically on the U column
    order = sorted(range(len(weights)), key=lambda r: (-weights[r], tuple(u[:, r])))
    return weights[order], [f[:, order] for f in factors]


def parafac(tensor, rank, max_iters=500, tol=1e-8, restarts=5, seed=0):
    """Non-negative rank-``rank`` CP decomposition by alternating NNLS.

    Each factor update solves the row-wise least-squares problem exactly
    under non-negativity, so the relative error never increases. The best of
    ``restarts`` uniform random initialisations (by final fit) is kept.

    Returns
    -------
    FactorSet
        Unit-norm non-negative columns, weights in descending order and
        ``fit = ||X - X_hat|| / ||X||``.
    """
    from .unmix import nnls_batch

    tensor = np.asarray(tensor, dtype=float)
    if tensor.ndim != 3:
        raise ValueError("parafac expects a 3-way tensor")
    if rank not in (1, 2, 3):
        raise ValueError(f"rank must be 1, 2 or 3, got {rank}")
    if not np.all(np.isfinite(tensor)) or tensor.min() < 0:
        raise ValueError("tensor must be finite and non-negative")
    norm_x = np.linalg.norm(tensor)
    if norm_x == 0:
        raise ZeroTensorError("cannot decompose an all-zero tensor")

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = [rng.uniform(size=(n, rank)) for n in tensor.shape]
        factors, history = _als(tensor, init, max_iters, tol, nnls_batch)
        if best is None or history[-1] < best[1][-1]:
            best = (factors, history)

    factors, history = best
    weights, normed = _normalize(factors)
    weights, normed = _order_components(weights, normed)
    fit = _relative_error(tensor, norm_x, weights, normed)
    return FactorSet(U=normed[0], V=normed[1], W=normed[2], weights=weights,
                     fit=fit, history=tuple(history))


def fingerprint(factors: FactorSet, source_sample="", pad_to_rank=None):
    """Concatenate ``[u_1; v_1; w_1; ...; u_k; v_k; w_k]``.

    With ``pad_to_rank`` the vector is zero-padded to that many blocks.
    """
    blocks = [np.concatenate([factors.U[:, r], factors.V[:, r], factors.W[:, r]])
              for r in range(factors.rank)]
    weights = np.asarray(factors.weights, dtype=float)
    if pad_to_rank is not None:
        if pad_to_rank < factors.rank:
            raise ValueError("pad_to_rank smaller than the factor rank")
        blocks += [np.zeros(FINGERPRINT_LENGTH)] * (pad_to_rank - factors.rank)
        weights = np.concatenate([weights, np.zeros(pad_to_rank - factors.rank)])
    return Fingerprint(vector=np.concatenate(blocks), rank=factors.rank,
                       source_sample=source_sample, weights=weights)


def congruence(f1: FactorSet, f2: FactorSet) -> float:
    """Mean Tucker congruence of greedily matched components.

    A pair's score is the product of the absolute cosines of its three mode
    vectors; pairs are matched greedily from the highest score down.
    """
    if f1.rank != f2.rank:
        raise ValueError(f"rank mismatch: {f1.rank} vs {f2.rank}")
    score = np.ones((f1.rank, f2.rank))
    for a, b in zip(f1.factors, f2.factors):
        an = a / np.maximum(np.linalg.norm(a, axis=0), 1e-300)
        bn = b / np.maximum(np.linalg.norm(b, axis=0), 1e-300)
        score *= np.abs(an.T @ bn)
    matched = []
    free_rows, free_cols = set(range(f1.rank)), set(range(f2.rank))
    for flat in np.argsort(-score, axis=None, kind="stable"):
        i, j = divmod(int(flat), f2.rank)
        if i in free_rows and j in free_cols:
            matched.append(score[i, j])
            free_rows.discard(i)
            free_cols.discard(j)
    return float(np.mean(matched))
