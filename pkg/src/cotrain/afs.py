"""Alternating forward selection over two dictionaries in the star space.

Every iteration adds at most one atom to the deployment block ``f`` and one
to the rich-view block ``g``. After each addition the current residual is
projected onto the whole span selected so far for that block, so both
blocks behave like orthogonal matching pursuit run in alternation on the
shared residual.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .dictionary import Dictionary
from .linear_coupled import fit_ridge
from .qr import QRState
from .star_space import embed_atom, make_star_space, make_target, objective_value


@dataclass(frozen=True)
class AFSConfig:
    eps_proj: float = 1e-10
    residual_tol: float = 1e-12

    def __post_init__(self):
        if self.eps_proj <= 0 or self.residual_tol < 0:
            raise ValueError("tolerances must be positive")


@dataclass
class AFSTrace:
    """Per-iteration diagnostics.

    ``residual_norm[k]`` is the star norm of the residual entering iteration
    ``k + 1`` (so it has one more entry than ``alpha``); ``objective[k]`` is
    the coupled objective of the model at that point, computed from the
    fitted values rather than from the embedding.
    """

    alpha: list[float] = field(default_factory=list)
    beta: list[float] = field(default_factory=list)
    residual_norm: list[float] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    selected_f: list[int] = field(default_factory=list)
    selected_g: list[int] = field(default_factory=list)
    scan_flops: list[int] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.alpha)

    def rows(self) -> list[dict]:
        out = []
        for k in range(self.iterations):
            out.append({
                "iteration": k + 1,
                "alpha": self.alpha[k],
                "beta": self.beta[k],
                "residual_norm": self.residual_norm[k],
                "next_residual_norm": self.residual_norm[k + 1],
                "objective": self.objective[k],
                "selected_f": self.selected_f[k],
                "selected_g": self.selected_g[k],
                "scan_flops": self.scan_flops[k],
            })
        return out


@dataclass(frozen=True)
class AFSModel:
    """Sparse pair ``f = sum c_f psi``, ``g = sum c_g phi``.

    ``dict_f`` and ``dict_g`` are restricted to the selected atoms, in
    selection order. ``signs`` record the orientation under which each atom
    was picked; the coefficients refer to the unsigned atoms.
    """

    dict_f: Dictionary | None
    dict_g: Dictionary | None
    coef_f: np.ndarray
    coef_g: np.ndarray
    selected_f: tuple[int, ...]
    selected_g: tuple[int, ...]
    signs_f: tuple[int, ...]
    signs_g: tuple[int, ...]
    lam: float
    iterations: int

    def predict_f(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.dict_f is None:
            return np.zeros(X.shape[0])
        return self.dict_f.evaluate(X) @ self.coef_f

    def predict_g(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if self.dict_g is None:
            return np.zeros(Z.shape[0])
        return self.dict_g.evaluate(Z) @ self.coef_g

    def fitted_f(self) -> np.ndarray:
        """Values of ``f`` on the training points it was fit on."""
        return _fitted(self.dict_f, self.coef_f)

    def fitted_g(self) -> np.ndarray:
        return _fitted(self.dict_g, self.coef_g)

    @property
    def atomic_norm_f(self) -> float:
        return float(np.abs(self.coef_f).sum())

    @property
    def atomic_norm_g(self) -> float:
        return float(np.abs(self.coef_g).sum())

    def to_json(self) -> str:
        return json.dumps({
            "lambda": self.lam,
            "iterations": self.iterations,
            "f": _block_json(self.dict_f, self.coef_f, self.selected_f, self.signs_f),
            "g": _block_json(self.dict_g, self.coef_g, self.selected_g, self.signs_g),
        })

    @classmethod
    def from_json(cls, text: str) -> "AFSModel":
        obj = json.loads(text)
        f, g = obj["f"], obj["g"]
        return cls(
            dict_f=Dictionary.from_json(f["dictionary"]) if f["dictionary"] else None,
            dict_g=Dictionary.from_json(g["dictionary"]) if g["dictionary"] else None,
            coef_f=np.asarray(f["coef"], dtype=float),
            coef_g=np.asarray(g["coef"], dtype=float),
            selected_f=tuple(f["selected"]), selected_g=tuple(g["selected"]),
            signs_f=tuple(f["signs"]), signs_g=tuple(g["signs"]),
            lam=float(obj["lambda"]), iterations=int(obj["iterations"]),
        )


def _fitted(dic, coef):
    if dic is None:
        raise ValueError("no atoms selected")
    if dic.atoms is None:
        raise ValueError("dictionary carries no training-point values")
    return dic.atoms @ coef


def _block_json(dic, coef, selected, signs):
    return {"dictionary": dic.to_json() if dic is not None else None,
            "coef": np.asarray(coef).tolist(), "selected": list(selected), "signs": list(signs)}


def _check_dictionary(dic: Dictionary, block: str, N: int):
    if dic.block != block:
        raise ValueError(f"expected a {block}-block dictionary, got block {dic.block!r}")
    if dic.atoms is None or dic.atoms.shape[0] != N:
        raise ValueError(f"{block}-dictionary must be evaluated on all {N} sample points")


def run_afs(ds: Dataset, dict_f: Dictionary, dict_g: Dictionary, lam: float, K: int,
            cfg: AFSConfig | None = None) -> tuple[AFSModel, AFSTrace]:
    """Run up to ``K`` alternating selection iterations starting from ``(0, 0)``.

    Candidate atoms are scored by ``|<r, a_perp>| / ||a_perp||`` where
    ``a_perp`` is the atom's component orthogonal to the span already chosen
    for its block. Atoms whose orthogonal component is at most ``eps_proj``
    of their norm are skipped. Stops early once the residual star norm is at
    most ``residual_tol * max(1, ||target||)`` or neither block has an
    eligible candidate left.
    """
    cfg = cfg or AFSConfig()
    if K < 1:
        raise ValueError("K must be at least 1")
    S = make_star_space(ds.n, ds.m, lam)
    _check_dictionary(dict_f, "f", S.N)
    _check_dictionary(dict_g, "g", S.N)

    target = make_target(ds.y_labeled, S)
    Ef = embed_atom("f", dict_f.atoms, S)
    Eg = embed_atom("g", dict_g.atoms, S)
    qf = QRState(S.embed_dim, Ef, cfg.eps_proj)
    qg = QRState(S.embed_dim, Eg, cfg.eps_proj)
    tf = np.zeros(0)  # accumulated f in Q_f coordinates
    tg = np.zeros(0)

    trace = AFSTrace()
    residual = target.copy()
    tol = cfg.residual_tol * max(1.0, float(np.linalg.norm(target)))

    def values(state, t, atoms):
        if state.rank == 0:
            return np.zeros(S.N)
        return atoms[:, state.selected] @ state.atom_coefficients(t)

    def record_state():
        trace.residual_norm.append(float(np.linalg.norm(residual)))
        trace.objective.append(objective_value(values(qf, tf, dict_f.atoms), values(qg, tg, dict_g.atoms),
                                               ds.y_labeled, S))

    record_state()
    if trace.residual_norm[0] <= tol:
        trace.stop_reason = "zero_target"
        return _assemble(dict_f, dict_g, qf, qg, tf, tg, lam, 0), trace

    for k in range(1, K + 1):
        flops_before = qf.flops + qg.flops

        pick = qf.select(residual)
        if pick is None and k == 1:
            raise ValueError("no eligible f-atom in the first iteration")
        added_f = pick is not None and qf.insert(Ef[:, pick[0]], index=pick[0], sign=pick[1])
        coords = qf.coefficients(residual)
        tf = np.concatenate([tf, np.zeros(qf.rank - tf.shape[0])]) + coords
        residual = residual - qf.Q @ coords
        alpha = float(np.linalg.norm(coords))

        pick_g = qg.select(residual)
        added_g = pick_g is not None and qg.insert(Eg[:, pick_g[0]], index=pick_g[0], sign=pick_g[1])
        coords = qg.coefficients(residual)
        tg = np.concatenate([tg, np.zeros(qg.rank - tg.shape[0])]) + coords
        residual = residual - qg.Q @ coords
        beta = float(np.linalg.norm(coords))

        trace.alpha.append(alpha)
        trace.beta.append(beta)
        trace.selected_f.append(qf.selected[-1] if added_f else -1)
        trace.selected_g.append(qg.selected[-1] if added_g else -1)
        trace.scan_flops.append(qf.flops + qg.flops - flops_before)
        record_state()

        if trace.residual_norm[-1] <= tol:
            trace.stop_reason = "residual_tol"
            break
        if not added_f and not added_g:
            trace.stop_reason = "no_candidates"
            break
    else:
        trace.stop_reason = "max_iters"
    return _assemble(dict_f, dict_g, qf, qg, tf, tg, lam, trace.iterations), trace


def _assemble(dict_f, dict_g, qf, qg, tf, tg, lam, iterations) -> AFSModel:
    sub_f = dict_f.subset(qf.selected) if qf.rank else None
    sub_g = dict_g.subset(qg.selected) if qg.rank else None
    return AFSModel(
        dict_f=sub_f, dict_g=sub_g,
        coef_f=qf.atom_coefficients(tf), coef_g=qg.atom_coefficients(tg),
        selected_f=tuple(qf.selected), selected_g=tuple(qg.selected),
        signs_f=tuple(qf.signs), signs_g=tuple(qg.signs),
        lam=float(lam), iterations=int(iterations),
    )


def _training_values(dic: Dictionary, features) -> np.ndarray:
    if dic.atoms is not None and dic.atoms.shape[0] == features.shape[0]:
        return dic.atoms
    return dic.evaluate(features)


def ridge_refit(ds: Dataset, model: AFSModel, alpha_refit: float = 1e-3) -> AFSModel:
    """Refit the f coefficients on the selected f-atoms.

    Targets are the labels on labeled rows and the current ``g`` on
    unlabeled rows, with unit weights and no intercept. ``g`` is unchanged.
    """
    if model.dict_f is None:
        raise ValueError("model has no selected f-atoms to refit")
    feats = _training_values(model.dict_f, ds.x_all)
    if model.dict_g is None:
        g_u = np.zeros(ds.m)
    else:
        g_u = (_training_values(model.dict_g, ds.z_all) @ model.coef_g)[ds.n:]
    targets = np.concatenate([ds.y_labeled, g_u])
    coef = fit_ridge(feats, targets, np.ones(ds.N), alpha_refit, intercept=False)
    return replace(model, coef_f=coef)


def excess_residual(trace: AFSTrace, reference_objective: float) -> np.ndarray:
    """``a_k = ||r_k||^2 - reference`` for ``k = 1 .. K + 1``.

    ``reference_objective`` is the objective of a comparison pair that lives
    in the dictionaries (for example a planted sparse solution).
    """
    return np.square(np.asarray(trace.residual_norm)) - float(reference_objective)


def envelope_ratio(excess, warmup: int = 5) -> float:
    """Ratio of ``max_{k >= warmup} a_k k / log(k + 1)`` to the same maximum over ``k <= warmup``.

    A sublinear ``O(log k / k)`` decay keeps this ratio bounded; the check
    used by the tests requires it to be at most 4.
    """
    a = np.asarray(excess, dtype=float)
    if a.shape[0] < warmup:
        raise ValueError(f"need at least {warmup} iterations for the envelope check")
    k = np.arange(1, a.shape[0] + 1)
    scaled = a * k / np.log(k + 1)
    head = scaled[:warmup].max()
    if head <= 0:
        return 0.0 if scaled[warmup - 1:].max() <= 0 else np.inf
    return float(scaled[warmup - 1:].max() / head)
