"""Incremental QR factorization of a growing set of selected atoms.

Besides ``Q`` and ``R`` the state keeps, for every candidate atom, its
component orthogonal to the current span. Inserting a new orthonormal
direction ``q`` updates all of them with one pass
``C <- C - q (q^T C)``, so scoring the candidates never requires a fresh
orthogonalization.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg


class QRState:
    """Thin QR factors ``A_sel = Q R`` plus residualized candidates.

    Parameters
    ----------
    dim : int
        Length of the embedded vectors.
    candidates : array of shape (dim, p), optional
        Embedded candidate atoms whose residuals are tracked.
    eps : float
        An atom is degenerate when the norm of its residual against the
        current span is at most ``eps`` times its own norm.
    tie_rtol : float
        Scores within this relative distance of the best count as tied.
    """

    def __init__(self, dim: int, candidates: np.ndarray | None = None, eps: float = 1e-10,
                 tie_rtol: float = 1e-12):
        self.dim = int(dim)
        self.eps = float(eps)
        self.tie_rtol = float(tie_rtol)
        self.Q = np.zeros((self.dim, 0))
        self.R = np.zeros((0, 0))
        self.selected: list[int] = []
        self.signs: list[int] = []
        self.flops = 0
        if candidates is not None:
            candidates = np.asarray(candidates, dtype=float)
            if candidates.shape[0] != self.dim:
                raise ValueError("candidate rows must equal the embedding dimension")
            self.cache = candidates.copy()
            self.cand_norms = np.linalg.norm(candidates, axis=0)
            self.available = self.cand_norms > 0
        else:
            self.cache = None
            self.cand_norms = None
            self.available = None

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    def insert(self, atom, index: int | None = None, sign: int = 1) -> bool:
        """Append ``atom`` to the span.

        Uses modified Gram-Schmidt with one reorthogonalization pass. Returns
        ``False`` and leaves the state untouched when the atom is degenerate.
        """
        a = np.asarray(atom, dtype=float).ravel()
        if a.shape[0] != self.dim:
            raise ValueError("atom length does not match the embedding dimension")
        a_norm = np.linalg.norm(a)
        k = self.rank
        v = a.copy()
        coeffs = np.zeros(k)
        for _ in range(2):
            for i in range(k):
                c = self.Q[:, i] @ v
                v -= c * self.Q[:, i]
                coeffs[i] += c
        r_kk = np.linalg.norm(v)
        if a_norm == 0 or r_kk <= self.eps * a_norm:
            return False
        q = v / r_kk
        self.Q = np.column_stack([self.Q, q])
        R = np.zeros((k + 1, k + 1))
        R[:k, :k] = self.R
        R[:k, k] = coeffs
        R[k, k] = r_kk
        self.R = R
        self.selected.append(-1 if index is None else int(index))
        self.signs.append(int(sign))
        if self.cache is not None:
            proj = q @ self.cache
            self.cache -= np.outer(q, proj)
            self.flops += 2 * self.cache.size
            if index is not None:
                self.available[index] = False
        return True

    def coefficients(self, target) -> np.ndarray:
        """``Q^T target``: coordinates of the projection in the ``Q`` basis."""
        return self.Q.T @ np.asarray(target, dtype=float)

    def project(self, target) -> np.ndarray:
        return self.Q @ self.coefficients(target)

    def atom_coefficients(self, q_coords) -> np.ndarray:
        """Back-substitute ``R c = q_coords`` to get coefficients on the selected atoms."""
        if self.rank == 0:
            return np.zeros(0)
        return scipy.linalg.solve_triangular(self.R, np.asarray(q_coords, dtype=float), lower=False)

    def residual_norms(self) -> np.ndarray:
        n = np.linalg.norm(self.cache, axis=0)
        self.flops += self.cache.size
        return n

    def select(self, residual) -> tuple[int, int, float] | None:
        """Best candidate for ``residual``.

        Scores ``|<r, a_perp>| / ||a_perp||`` over candidates that are not yet
        selected and whose residual norm exceeds ``eps`` times their norm.
        Ties (scores within ``tie_rtol`` of the best, relative) go to the
        lowest index, so roundoff cannot decide between atoms that are equal
        in exact arithmetic. Returns ``(index, sign, score)`` or
        ``None`` when no candidate is eligible.
        """
        if self.cache is None:
            raise ValueError("state was built without candidates")
        norms = self.residual_norms()
        eligible = self.available & (norms > self.eps * self.cand_norms)
        if not eligible.any():
            return None
        corr = np.asarray(residual, dtype=float) @ self.cache
        self.flops += self.cache.size
        scores = np.full(corr.shape, -np.inf)
        scores[eligible] = np.abs(corr[eligible]) / norms[eligible]
        best = scores.max()
        j = int(np.flatnonzero(scores >= best * (1 - self.tie_rtol))[0])
        return j, (1 if corr[j] >= 0 else -1), float(scores[j])


def qr_insert(state: QRState, embedded_atom, index: int | None = None, sign: int = 1) -> bool:
    return state.insert(embedded_atom, index=index, sign=sign)
