"""Weighted geometry of the coupled objective.

A pair ``u = (u1, u2)`` of functions evaluated on the ``N`` sample points
(labeled first, then unlabeled) has squared star norm

    (1/N) sum_L u1^2 + (1/N) sum_U (u1 - u2)^2 + (lambda/N) sum_L u2^2.

The form is only positive semidefinite. Instead of working with equivalence
classes we map every pair to the Euclidean vector

    [u1_L, u1_U - u2_U, sqrt(lambda) u2_L] / sqrt(N)

of length ``2n + m``. Dot products of embedded vectors equal star inner
products, and the null space of the form is mapped to zero, so projections
in the quotient space become ordinary least squares.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StarSpace:
    n: int
    m: int
    lam: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one labeled sample")
        if self.m < 0:
            raise ValueError("unlabeled count must be nonnegative")
        if not (self.lam >= 0) or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")

    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def embed_dim(self) -> int:
        return 2 * self.n + self.m

    @property
    def weights(self) -> np.ndarray:
        """Row weights of the embedded coordinates (f rows, agreement rows, g rows)."""
        N = self.N
        return np.concatenate([
            np.full(self.n, 1.0 / N),
            np.full(self.m, 1.0 / N),
            np.full(self.n, self.lam / N),
        ])

    @property
    def radius(self) -> float:
        """Bound on the embedded norm of any atom with unit pooled norm."""
        return max(1.0, math.sqrt(self.lam))

    def labeled(self) -> slice:
        return slice(0, self.n)

    def unlabeled(self) -> slice:
        return slice(self.n, self.N)


def make_star_space(n: int, m: int, lam: float) -> StarSpace:
    return StarSpace(int(n), int(m), float(lam))


@dataclass(frozen=True)
class PairedVec:
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        u1 = np.asarray(self.u1, dtype=float).ravel()
        u2 = np.asarray(self.u2, dtype=float).ravel()
        if u1.shape != u2.shape:
            raise ValueError("paired components must have equal length")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)


def _check(u: PairedVec, S: StarSpace):
    if u.u1.shape[0] != S.N:
        raise ValueError(f"paired vector has length {u.u1.shape[0]}, star space expects N={S.N}")


def star_dot(u: PairedVec, v: PairedVec, S: StarSpace) -> float:
    """Star inner product evaluated from its three defining sums."""
    _check(u, S)
    _check(v, S)
    L, U = S.labeled(), S.unlabeled()
    first = np.dot(u.u1[L], v.u1[L])
    agree = np.dot(u.u1[U] - u.u2[U], v.u1[U] - v.u2[U])
    rich = S.lam * np.dot(u.u2[L], v.u2[L])
    return float((first + agree + rich) / S.N)


def star_norm(u: PairedVec, S: StarSpace) -> float:
    return math.sqrt(max(star_dot(u, u, S), 0.0))


def embed(u: PairedVec, S: StarSpace) -> np.ndarray:
    _check(u, S)
    L, U = S.labeled(), S.unlabeled()
    root = math.sqrt(S.N)
    return np.concatenate([u.u1[L], u.u1[U] - u.u2[U], math.sqrt(S.lam) * u.u2[L]]) / root


def embed_atom(block: str, values, S: StarSpace) -> np.ndarray:
    """Embed ``(psi, 0)`` for an f-atom or ``(0, phi)`` for a g-atom.

    ``values`` may be a length-``N`` vector or an ``N x p`` matrix of atoms.
    """
    a = np.asarray(values, dtype=float)
    if a.shape[0] != S.N:
        raise ValueError(f"atom values have {a.shape[0]} rows, expected N={S.N}")
    L, U = S.labeled(), S.unlabeled()
    root = math.sqrt(S.N)
    zeros = np.zeros((S.n,) + a.shape[1:])
    if block == "f":
        parts = [a[L], a[U], zeros]
    elif block == "g":
        parts = [zeros, -a[U], math.sqrt(S.lam) * a[L]]
    else:
        raise ValueError(f"block must be 'f' or 'g', got {block!r}")
    return np.concatenate(parts, axis=0) / root


def make_target(y_labeled, S: StarSpace) -> np.ndarray:
    """Embedded target ``(Y, Y)``; unlabeled coordinates are exactly zero."""
    y = np.asarray(y_labeled, dtype=float).ravel()
    if y.shape[0] != S.n:
        raise ValueError(f"expected {S.n} labels, got {y.shape[0]}")
    root = math.sqrt(S.N)
    return np.concatenate([y / root, np.zeros(S.m), math.sqrt(S.lam) * y / root])


def objective_value(f_vals, g_vals, y_labeled, S: StarSpace) -> float:
    """Penalized coupled objective on the sample points, normalized by ``N``."""
    f = np.asarray(f_vals, dtype=float).ravel()
    g = np.asarray(g_vals, dtype=float).ravel()
    y = np.asarray(y_labeled, dtype=float).ravel()
    if f.shape[0] != S.N or g.shape[0] != S.N or y.shape[0] != S.n:
        raise ValueError("objective inputs do not match the star space sizes")
    L, U = S.labeled(), S.unlabeled()
    total = np.sum((y - f[L]) ** 2) + np.sum((g[U] - f[U]) ** 2) + S.lam * np.sum((y - g[L]) ** 2)
    return float(total / S.N)
