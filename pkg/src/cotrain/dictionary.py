"""Finite dictionaries of atoms evaluated on the sample points.

Three kinds are supported:

``raw``
    coordinate atoms ``x_j`` plus, by default, a constant atom.
``random_projection``
    ``x -> x @ p`` for Gaussian directions ``p`` drawn from a seeded generator.
``rbf``
    ``x -> exp(-gamma ||x - c||^2)`` with centers taken from the labeled rows
    and a capped random subset of the unlabeled rows.

An ``explicit`` dictionary wraps atom values supplied directly; it cannot be
evaluated on new points.

f-dictionaries are built on the deployment features only, g-dictionaries on
``Z = (X, W)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .dataset import Dataset

KINDS = ("raw", "random_projection", "rbf", "explicit")


def median_heuristic(points) -> float:
    """``1 / median`` of the pairwise squared Euclidean distances."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("median heuristic needs at least two points")
    med = float(np.median(pdist(pts, "sqeuclidean")))
    if med <= 0:
        raise ValueError("all sampled points coincide; bandwidth undefined")
    return 1.0 / med


@dataclass(frozen=True)
class Dictionary:
    """Atoms of one block.

    ``atoms`` holds normalized values on the ``N`` training points (labeled
    first). It may be ``None`` for a dictionary restored from JSON, which can
    still be evaluated on new features. ``scales`` are the divisors applied
    to the raw atom functions.
    """

    block: str
    kind: str
    params: dict
    scales: np.ndarray
    atoms: np.ndarray | None = None
    seed: int | None = None
    dropped: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.block not in ("f", "g"):
            raise ValueError(f"block must be 'f' or 'g', got {self.block!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}")

    @property
    def size(self) -> int:
        return int(np.asarray(self.scales).shape[0])

    def evaluate_raw(self, features) -> np.ndarray:
        F = np.asarray(features, dtype=float)
        if self.kind == "raw":
            cols = np.asarray(self.params["columns"], dtype=int)
            out = np.ones((F.shape[0], cols.shape[0]))
            mask = cols >= 0
            out[:, mask] = F[:, cols[mask]]
            return out
        if self.kind == "random_projection":
            return F @ np.asarray(self.params["projection"], dtype=float)
        if self.kind == "explicit":
            raise ValueError("explicit dictionaries are only defined on their training points")
        centers = np.asarray(self.params["centers"], dtype=float)
        return np.exp(-self.params["gamma"] * cdist(F, centers, "sqeuclidean"))

    def evaluate(self, features) -> np.ndarray:
        """Normalized atom values on arbitrary feature rows."""
        return self.evaluate_raw(features) / self.scales

    def subset(self, idx) -> "Dictionary":
        idx = np.asarray(idx, dtype=int)
        params = dict(self.params)
        if self.kind == "raw":
            params["columns"] = np.asarray(params["columns"])[idx]
        elif self.kind == "random_projection":
            params["projection"] = np.asarray(params["projection"])[:, idx]
        elif self.kind == "rbf":
            params["centers"] = np.asarray(params["centers"])[idx]
        return replace(self, params=params, scales=np.asarray(self.scales)[idx],
                       atoms=None if self.atoms is None else self.atoms[:, idx], dropped=())

    def to_json(self) -> dict:
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v) for k, v in self.params.items()}
        return {"block": self.block, "kind": self.kind, "seed": self.seed, "params": params,
                "scales": np.asarray(self.scales).tolist(), "meta": self.meta}

    @classmethod
    def from_values(cls, values, block: str = "f") -> "Dictionary":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] == 0:
            raise ValueError("empty dictionary")
        return cls(block=block, kind="explicit", params={}, scales=np.ones(values.shape[1]), atoms=values)

    @classmethod
    def from_json(cls, obj: dict) -> "Dictionary":
        params = dict(obj["params"])
        for key in ("columns", "projection", "centers"):
            if key in params:
                params[key] = np.asarray(params[key], dtype=int if key == "columns" else float)
        return cls(block=obj["block"], kind=obj["kind"], params=params,
                   scales=np.asarray(obj["scales"], dtype=float), seed=obj.get("seed"), meta=obj.get("meta", {}))


def build_dictionary(kind: str, params: dict | None, ds: Dataset, block: str = "f") -> Dictionary:
    """Construct a dictionary and evaluate it on all ``N`` sample points.

    Recognized ``params``: ``seed`` (required for the random kinds),
    ``constant`` (``raw`` only: append a constant atom, default true),
    ``count`` (number of projections), ``gamma`` / ``gamma_scale``,
    ``max_unlabeled_centers`` (default 500) and ``bandwidth_sample``
    (default 600) for ``rbf``.
    """
    params = dict(params or {})
    if block not in ("f", "g"):
        raise ValueError(f"block must be 'f' or 'g', got {block!r}")
    F = ds.x_all if block == "f" else ds.z_all
    d = F.shape[1]
    seed = params.get("seed")
    meta: dict = {}
    if kind == "raw":
        cols = list(range(d))
        if params.get("constant", True):
            cols.append(-1)
        stored = {"columns": np.asarray(cols, dtype=int)}
    elif kind == "random_projection":
        if seed is None:
            raise ValueError("random_projection dictionaries need a seed")
        count = int(params.get("count", 2048))
        if count < 1:
            raise ValueError("empty dictionary requested")
        rng = np.random.default_rng(seed)
        stored = {"projection": rng.standard_normal((d, count))}
    elif kind == "rbf":
        if seed is None:
            raise ValueError("rbf dictionaries need a seed")
        rng = np.random.default_rng(seed)
        cap = int(params.get("max_unlabeled_centers", 500))
        unl = np.sort(rng.choice(ds.m, size=min(cap, ds.m), replace=False)) if ds.m else np.empty(0, int)
        centers = np.vstack([F[: ds.n], F[ds.n + unl]])
        gamma = params.get("gamma")
        if gamma is None:
            sample_cap = int(params.get("bandwidth_sample", 600))
            rows = np.sort(rng.choice(ds.N, size=min(sample_cap, ds.N), replace=False))
            gamma = median_heuristic(F[rows])
            meta["median_heuristic_gamma"] = gamma
        gamma = float(gamma) * float(params.get("gamma_scale", 1.0))
        stored = {"centers": centers, "gamma": gamma}
    else:
        raise ValueError(f"unknown dictionary kind {kind!r}")

    dic = Dictionary(block=block, kind=kind, params=stored, scales=np.ones(_count(kind, stored)),
                     seed=seed, meta=meta)
    values = dic.evaluate_raw(F)
    if values.shape[1] == 0:
        raise ValueError("empty dictionary")
    return replace(dic, atoms=values)


def _count(kind, stored) -> int:
    if kind == "raw":
        return len(stored["columns"])
    if kind == "random_projection":
        return stored["projection"].shape[1]
    return stored["centers"].shape[0]


def normalize_atoms(dic: Dictionary, zero_tol: float = 1e-12) -> Dictionary:
    """Scale every atom to unit pooled empirical norm ``sqrt(mean(a^2))``.

    Atoms whose norm does not exceed ``zero_tol`` are dropped; their original
    indices are listed in ``dropped``.
    """
    if dic.atoms is None:
        raise ValueError("dictionary has no evaluated atoms")
    norms = np.sqrt(np.mean(dic.atoms ** 2, axis=0))
    keep = np.flatnonzero(norms > zero_tol)
    if keep.size == 0:
        raise ValueError("all atoms are zero")
    sub = dic.subset(keep)
    scales = np.asarray(sub.scales) * norms[keep]
    dropped = tuple(int(j) for j in np.flatnonzero(norms <= zero_tol))
    return replace(sub, scales=scales, atoms=sub.atoms / norms[keep], dropped=dropped)
