"""Closed-form linear solvers: coupled objective and the linear baselines.

All design matrices carry an explicit leading column of ones whose
coefficient is never penalized.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import Dataset

VIEWS = ("X", "W", "XW")


def add_intercept(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return np.hstack([np.ones((a.shape[0], 1)), a])


def fit_ridge(features, targets, weights, alpha: float, intercept: bool = True) -> np.ndarray:
    """Weighted ridge regression.

    Minimizes ``sum_i w_i (t_i - x_i^T c)^2 + alpha * ||c_{-0}||^2`` where the
    first coefficient is left unpenalized when ``intercept`` is true. Rank
    deficient problems return the minimum-norm minimizer.
    """
    X = np.asarray(features, dtype=float)
    t = np.asarray(targets, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != t.shape[0] or w.shape != t.shape:
        raise ValueError("features, targets and weights disagree in length")
    if X.shape[0] < 1:
        raise ValueError("need at least one row")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    keep = w > 0
    sw = np.sqrt(w[keep])
    A = X[keep] * sw[:, None]
    b = t[keep] * sw
    p = X.shape[1]
    if alpha > 0:
        pen = np.sqrt(alpha) * np.eye(p)
        if intercept:
            pen = pen[1:]
        A = np.vstack([A, pen])
        b = np.concatenate([b, np.zeros(pen.shape[0])])
    if A.shape[0] == 0:
        return np.zeros(p)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef


@dataclass(frozen=True)
class RidgeConfig:
    alpha_f: float = 1e-8
    alpha_g: float = 1e-8

    def __post_init__(self):
        if self.alpha_f < 0 or self.alpha_g < 0:
            raise ValueError("ridge parameters must be nonnegative")


@dataclass(frozen=True)
class LinearModel:
    """Affine predictor ``[1, features] @ coef`` on one feature view."""

    coef: np.ndarray
    view: str = "X"

    def __post_init__(self):
        if self.view not in VIEWS:
            raise ValueError(f"unknown feature view {self.view!r}")
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=float))


@dataclass(frozen=True)
class LinearCoupledModel:
    beta: np.ndarray
    gamma: np.ndarray
    lam: float
    ridge: RidgeConfig
    degenerate: bool = False

    @property
    def f(self) -> LinearModel:
        return LinearModel(self.beta, "X")

    @property
    def g(self) -> LinearModel:
        return LinearModel(self.gamma, "XW")


def _view_matrix(view: str, X, W):
    if view == "X":
        return np.asarray(X, dtype=float)
    if W is None:
        raise ValueError(f"view {view!r} needs privileged features")
    if view == "W":
        return np.asarray(W, dtype=float)
    return np.hstack([np.asarray(X, dtype=float), np.asarray(W, dtype=float)])


def predict(model, X, W=None) -> np.ndarray:
    """Evaluate a linear model on deployment features (and ``W`` if its view needs it)."""
    if isinstance(model, LinearCoupledModel):
        model = model.f
    F = _view_matrix(model.view, X, W)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if F.shape[1] + 1 != model.coef.shape[0]:
        raise ValueError(f"model expects {model.coef.shape[0] - 1} features, got {F.shape[1]}")
    return add_intercept(F) @ model.coef


def coupled_objective(beta, gamma, ds: Dataset, lam: float, ridge: RidgeConfig) -> float:
    """Unnormalized penalized objective of the linear coupled model."""
    xl, xu = add_intercept(ds.x_labeled), add_intercept(ds.x_unlabeled)
    zl, zu = add_intercept(ds.z_labeled), add_intercept(ds.z_unlabeled)
    y = ds.y_labeled
    return float(
        np.sum((y - xl @ beta) ** 2)
        + np.sum((xu @ beta - zu @ gamma) ** 2)
        + lam * np.sum((y - zl @ gamma) ** 2)
        + ridge.alpha_f * np.sum(beta[1:] ** 2)
        + ridge.alpha_g * np.sum(gamma[1:] ** 2)
    )


def coupled_normal_system(ds: Dataset, lam: float, ridge: RidgeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Block normal equations ``H [beta; gamma] = rhs`` of the coupled objective.

    With ``A = Xbar`` and ``B = Zbar`` (labeled ``L``, unlabeled ``U``)::

        H = [[A_L'A_L + A_U'A_U + a_f P,   -A_U'B_U                     ],
             [-B_U'A_U,                     B_U'B_U + lam B_L'B_L + a_g P]]
        rhs = [A_L'y ; lam B_L'y]

    where ``P`` is the identity with a zero in the intercept slot.
    """
    xl, xu = add_intercept(ds.x_labeled), add_intercept(ds.x_unlabeled)
    zl, zu = add_intercept(ds.z_labeled), add_intercept(ds.z_unlabeled)
    y = ds.y_labeled
    p, q = xl.shape[1], zl.shape[1]
    pf = np.eye(p)
    pf[0, 0] = 0.0
    pg = np.eye(q)
    pg[0, 0] = 0.0
    H = np.empty((p + q, p + q))
    H[:p, :p] = xl.T @ xl + xu.T @ xu + ridge.alpha_f * pf
    H[:p, p:] = -(xu.T @ zu)
    H[p:, :p] = H[:p, p:].T
    H[p:, p:] = zu.T @ zu + lam * (zl.T @ zl) + ridge.alpha_g * pg
    rhs = np.concatenate([xl.T @ y, lam * (zl.T @ y)])
    return H, rhs


def _stacked_min_norm(ds: Dataset, lam: float, ridge: RidgeConfig) -> np.ndarray:
    xl, xu = add_intercept(ds.x_labeled), add_intercept(ds.x_unlabeled)
    zl, zu = add_intercept(ds.z_labeled), add_intercept(ds.z_unlabeled)
    p, q = xl.shape[1], zl.shape[1]
    rows = [
        np.hstack([xl, np.zeros((ds.n, q))]),
        np.hstack([xu, -zu]),
        np.hstack([np.zeros((ds.n, p)), np.sqrt(lam) * zl]),
        np.hstack([np.sqrt(ridge.alpha_f) * np.eye(p)[1:], np.zeros((p - 1, q))]),
        np.hstack([np.zeros((q - 1, p)), np.sqrt(ridge.alpha_g) * np.eye(q)[1:]]),
    ]
    rhs = np.concatenate([ds.y_labeled, np.zeros(ds.m), np.sqrt(lam) * ds.y_labeled, np.zeros(p + q - 2)])
    sol, *_ = np.linalg.lstsq(np.vstack(rows), rhs, rcond=None)
    return sol


def solve_coupled_linear(ds: Dataset, lam: float, ridge: RidgeConfig | None = None) -> LinearCoupledModel:
    """Global minimizer of the linear coupled objective.

    The symmetric positive semidefinite block system is factored by
    Cholesky. When both ridges are exactly zero a diagonal jitter of
    ``1e-12 * trace / dim`` is added first. If the factorization still fails
    the minimum-norm least-squares solution is returned. ``degenerate`` on
    the result flags a numerically singular system.
    """
    ridge = ridge or RidgeConfig()
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    H, rhs = coupled_normal_system(ds, lam, ridge)
    dim = H.shape[0]
    p = ds.dx + 1
    eig = np.linalg.eigvalsh(H)
    degenerate = bool(eig[0] <= 1e-12 * max(eig[-1], np.finfo(float).tiny))
    Hs = H
    if ridge.alpha_f == 0 and ridge.alpha_g == 0:
        Hs = H + (1e-12 * np.trace(H) / dim) * np.eye(dim)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hs), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        degenerate = True
        sol = _stacked_min_norm(ds, lam, ridge)
    return LinearCoupledModel(sol[:p], sol[p:], float(lam), ridge, degenerate)


def solve_baseline(ds: Dataset, alpha_f: float = 1e-8) -> LinearModel:
    """Labeled-only ridge regression on the deployment features."""
    coef = fit_ridge(add_intercept(ds.x_labeled), ds.y_labeled, np.ones(ds.n), alpha_f)
    return LinearModel(coef, "X")


def _teacher(ds: Dataset, view: str, alpha: float) -> tuple[LinearModel, np.ndarray, np.ndarray]:
    wl = ds.w_labeled
    fl = _view_matrix(view, ds.x_labeled, wl)
    coef = fit_ridge(add_intercept(fl), ds.y_labeled, np.ones(ds.n), alpha)
    model = LinearModel(coef, view)
    return model, predict(model, ds.x_labeled, wl), predict(model, ds.x_unlabeled, ds.w_unlabeled)


def solve_two_stage(ds: Dataset, alpha_teacher: float = 1e-8, alpha_student: float = 1e-8):
    """Teacher on ``(X, W)``, pseudo-label the unlabeled rows, student on ``X``.

    Returns ``(teacher, student)``.
    """
    teacher, _, pseudo = _teacher(ds, "XW", alpha_teacher)
    feats = add_intercept(ds.x_all)
    targets = np.concatenate([ds.y_labeled, pseudo])
    student = LinearModel(fit_ridge(feats, targets, np.ones(ds.N), alpha_student), "X")
    return teacher, student


def solve_gen_distill(ds: Dataset, teacher_view: str = "XW", alpha_T: float = 1e-8, alpha_S: float = 1e-8,
                      a_L: float = 0.0, a_U: float = 1.0) -> LinearModel:
    """Squared-loss generalized distillation with soft teacher targets.

    The student minimizes::

        sum_L (y - x'b)^2 + a_L sum_L (q - x'b)^2 + a_U sum_U (q - x'b)^2 + alpha_S ||b_{-0}||^2
    """
    if teacher_view not in ("W", "XW"):
        raise ValueError("teacher view must be 'W' or 'XW'")
    if a_L < 0 or a_U < 0:
        raise ValueError("distillation weights must be nonnegative")
    if teacher_view == "W" and ds.dw == 0:
        raise ValueError("teacher view 'W' needs privileged features")
    _, q_l, q_u = _teacher(ds, teacher_view, alpha_T)
    xl, xu = add_intercept(ds.x_labeled), add_intercept(ds.x_unlabeled)
    feats = np.vstack([xl, xl, xu])
    targets = np.concatenate([ds.y_labeled, q_l, q_u])
    weights = np.concatenate([np.ones(ds.n), np.full(ds.n, float(a_L)), np.full(ds.m, float(a_U))])
    return LinearModel(fit_ridge(feats, targets, weights, alpha_S), "X")
