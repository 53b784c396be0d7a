"""Alternating coupled training with pluggable weighted-regression fitters.

Each full iteration performs an f-step (fit the deployment model on the
labeled responses plus the current rich-view predictions on unlabeled rows,
all with unit weight) followed by a g-step (fit the rich-view model on the
labeled responses with weight ``lambda`` plus the current deployment
predictions on unlabeled rows with weight one).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from scipy.special import expit

from .dataset import Dataset
from .linear_coupled import add_intercept, fit_ridge


class Fitter(Protocol):
    """Weighted least-squares fitting capability.

    ``penalty`` is optional; when present it returns the regularization term
    the fitter adds to its weighted squared error, so that the loop can
    report the exact objective each block update minimizes.
    """

    def fit(self, features: np.ndarray, targets: np.ndarray, weights: np.ndarray) -> Any: ...

    def predict(self, predictor: Any, features: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class RidgeFitter:
    """Exact weighted ridge fitter with an unpenalized intercept."""

    alpha: float = 1e-8

    def fit(self, features, targets, weights):
        return fit_ridge(add_intercept(features), targets, weights, self.alpha)

    def predict(self, predictor, features):
        return add_intercept(features) @ predictor

    def penalty(self, predictor) -> float:
        return float(self.alpha * np.sum(np.asarray(predictor)[1:] ** 2))


@dataclass(frozen=True)
class CoupledConfig:
    max_iters: int = 15
    patience: int = 2
    disagreement_tol: float = 1e-4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class CoupledTrace:
    objective: list[float] = field(default_factory=list)
    disagreement: list[float] = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""
    metadata: dict = field(default_factory=dict)


def _penalty(fitter, predictor) -> float:
    pen = getattr(fitter, "penalty", None)
    return pen(predictor) if pen is not None else 0.0


def disagreement(f_predictor, g_predictor, ds: Dataset, fitter_f=None, fitter_g=None) -> float:
    """Mean squared gap ``(1/m) sum_U (g(Z) - f(X))^2`` on the unlabeled rows.

    Predictors are either callables (``f(X)``, ``g(Z)``) or fitter outputs,
    in which case the corresponding fitters must be passed.
    """
    if ds.m == 0:
        raise ValueError("disagreement needs unlabeled rows")
    fu = fitter_f.predict(f_predictor, ds.x_unlabeled) if fitter_f else f_predictor(ds.x_unlabeled)
    gu = fitter_g.predict(g_predictor, ds.z_unlabeled) if fitter_g else g_predictor(ds.z_unlabeled)
    return float(np.mean((np.asarray(gu) - np.asarray(fu)) ** 2))


def run_coupled_square(ds: Dataset, lam: float, fitter_f: Fitter, fitter_g: Fitter,
                       cfg: CoupledConfig | None = None):
    """Alternate f- and g-updates of the square-loss coupled objective.

    Returns ``(f_predictor, g_predictor, trace)``. ``trace.objective[k]`` is
    the penalized objective (including fitter penalties) divided by ``N``
    after iteration ``k + 1``.
    """
    cfg = cfg or CoupledConfig()
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if ds.m == 0 and lam == 0:
        raise ValueError("with no unlabeled rows and lambda=0 the objective does not involve g")
    x_all, z_all = ds.x_all, ds.z_all
    n, m, N = ds.n, ds.m, ds.N
    y = ds.y_labeled
    f_weights = np.ones(N)
    g_weights = np.concatenate([np.full(n, float(lam)), np.ones(m)])

    f_pred = fitter_f.fit(ds.x_labeled, y, np.ones(n))
    g_pred = fitter_g.fit(z_all, np.zeros(N), np.ones(N))

    def objective(fp, gp, f_vals, g_vals):
        total = (np.sum((y - f_vals[:n]) ** 2) + np.sum((g_vals[n:] - f_vals[n:]) ** 2)
                 + lam * np.sum((y - g_vals[:n]) ** 2))
        return float((total + _penalty(fitter_f, fp) + _penalty(fitter_g, gp)) / N)

    trace = CoupledTrace(metadata={
        "lambda": float(lam), "max_iters": cfg.max_iters, "patience": cfg.patience,
        "disagreement_tol": cfg.disagreement_tol, "f_init": "labeled baseline", "g_init": "fit to g0 = 0",
    })
    prev = None
    if m:
        prev = float(np.mean((fitter_g.predict(g_pred, ds.z_unlabeled)
                              - fitter_f.predict(f_pred, ds.x_unlabeled)) ** 2))
    calm = 0
    trace.stop_reason = "max_iters"
    for k in range(cfg.max_iters):
        g_vals = fitter_g.predict(g_pred, z_all)
        f_pred = fitter_f.fit(x_all, np.concatenate([y, g_vals[n:]]), f_weights)
        f_vals = fitter_f.predict(f_pred, x_all)
        g_pred = fitter_g.fit(z_all, np.concatenate([y, f_vals[n:]]), g_weights)
        g_vals = fitter_g.predict(g_pred, z_all)

        trace.objective.append(objective(f_pred, g_pred, f_vals, g_vals))
        trace.iterations = k + 1
        if not m:
            continue
        dis = float(np.mean((g_vals[n:] - f_vals[n:]) ** 2))
        trace.disagreement.append(dis)
        change = abs(dis - prev) / max(abs(prev), np.finfo(float).tiny)
        calm = calm + 1 if change < cfg.disagreement_tol else 0
        prev = dis
        if calm >= cfg.patience:
            trace.stop_reason = "disagreement stabilized"
            break
    return f_pred, g_pred, trace


# --- cross-entropy variant -------------------------------------------------

_CLIP = 1e-12


@dataclass(frozen=True)
class LogisticConfig:
    outer: int = 5
    inner: int = 150
    lr: float = 0.02
    alpha_f: float = 1e-4
    alpha_g: float = 1e-1
    baseline_steps: int = 500
    baseline_lr: float = 0.05
    teacher_steps: int = 700
    teacher_lr: float = 0.03


def cross_entropy(a, p) -> np.ndarray:
    """``CE(a, p) = -a log p - (1 - a) log(1 - p)`` with ``p`` clamped away from 0 and 1."""
    p = np.clip(p, _CLIP, 1 - _CLIP)
    return -(a * np.log(p) + (1 - a) * np.log1p(-p))


def _weighted_ce_and_grad(coef, feats, soft, weights, alpha):
    """Value and gradient of ``sum_i w_i CE(a_i, sigmoid(x_i'c)) + alpha/2 ||c_{-0}||^2``.

    ``soft`` targets are held fixed.
    """
    z = feats @ coef
    # CE(a, sigmoid(z)) = log(1 + e^z) - a z, evaluated without forming 1 - p
    value = float(np.sum(weights * (np.logaddexp(0.0, z) - soft * z)) + 0.5 * alpha * np.sum(coef[1:] ** 2))
    grad = feats.T @ (weights * (expit(z) - soft))
    grad[1:] += alpha * coef[1:]
    return value, grad


def f_block_objective(beta, gamma, ds: Dataset, cfg: LogisticConfig | None = None, with_grad: bool = False):
    """Deployment-model objective of the cross-entropy coupled variant for fixed ``gamma``."""
    cfg = cfg or LogisticConfig()
    feats = add_intercept(ds.x_all)
    soft = np.concatenate([ds.y_labeled, expit(add_intercept(ds.z_unlabeled) @ gamma)])
    value, grad = _weighted_ce_and_grad(np.asarray(beta, float), feats, soft, np.ones(ds.N), cfg.alpha_f)
    return (value, grad) if with_grad else value


def g_block_objective(gamma, beta, ds: Dataset, lam: float, cfg: LogisticConfig | None = None,
                      with_grad: bool = False):
    """Rich-view objective of the cross-entropy coupled variant for fixed ``beta``."""
    cfg = cfg or LogisticConfig()
    feats = add_intercept(np.vstack([ds.z_labeled, ds.z_unlabeled]))
    soft = np.concatenate([ds.y_labeled, expit(add_intercept(ds.x_unlabeled) @ beta)])
    weights = np.concatenate([np.full(ds.n, float(lam)), np.ones(ds.m)])
    value, grad = _weighted_ce_and_grad(np.asarray(gamma, float), feats, soft, weights, cfg.alpha_g)
    return (value, grad) if with_grad else value


def _descend(coef, feats, soft, weights, alpha, steps, lr):
    # steps on the objective divided by the total sample weight; same minimizer
    scale = float(np.sum(weights))
    if scale <= 0:
        scale = 1.0
    for _ in range(steps):
        _, grad = _weighted_ce_and_grad(coef, feats, soft, weights, alpha)
        coef = coef - lr * grad / scale
    return coef


def fit_logistic(features, targets, weights=None, alpha: float = 0.0, steps: int = 500, lr: float = 0.05,
                 init=None) -> np.ndarray:
    """Gradient-descent logistic regression on (possibly soft) targets with an intercept."""
    feats = add_intercept(features)
    t = np.asarray(targets, float)
    w = np.ones(t.shape[0]) if weights is None else np.asarray(weights, float)
    coef = np.zeros(feats.shape[1]) if init is None else np.asarray(init, float).copy()
    return _descend(coef, feats, t, w, alpha, steps, lr)


def _check_binary(ds: Dataset):
    if not np.all(np.isin(ds.y_labeled, (0.0, 1.0))):
        raise ValueError("cross-entropy coupled training needs labels in {0, 1}")


def logistic_baseline(ds: Dataset, cfg: LogisticConfig | None = None) -> np.ndarray:
    cfg = cfg or LogisticConfig()
    _check_binary(ds)
    return fit_logistic(ds.x_labeled, ds.y_labeled, alpha=cfg.alpha_f, steps=cfg.baseline_steps,
                        lr=cfg.baseline_lr)


def logistic_two_stage(ds: Dataset, cfg: LogisticConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Soft-label Two-Stage: teacher on ``Z``, student on pooled ``X`` with teacher probabilities."""
    cfg = cfg or LogisticConfig()
    _check_binary(ds)
    gamma = fit_logistic(ds.z_labeled, ds.y_labeled, alpha=cfg.alpha_g, steps=cfg.teacher_steps,
                         lr=cfg.teacher_lr)
    soft = expit(add_intercept(ds.z_unlabeled) @ gamma)
    beta = fit_logistic(ds.x_all, np.concatenate([ds.y_labeled, soft]), alpha=cfg.alpha_f,
                        steps=cfg.teacher_steps, lr=cfg.teacher_lr)
    return gamma, beta


def run_coupled_logistic(ds: Dataset, lam: float, cfg: LogisticConfig | None = None):
    """Cross-entropy analogue of the alternating updates.

    ``beta`` starts from the labeled logistic baseline and ``gamma`` from
    zero. Each of ``cfg.outer`` iterations runs ``cfg.inner`` gradient steps
    on the f-block objective and then on the g-block objective. Steps are
    taken on each objective divided by its total sample weight (``N`` for
    the f-block, ``m + lambda n`` for the g-block), which rescales the step
    size without moving the minimizer.

    Returns ``(beta, gamma, trace)`` where the trace objective is the sum of
    the two block objectives after each outer iteration.
    """
    cfg = cfg or LogisticConfig()
    _check_binary(ds)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    beta = logistic_baseline(ds, cfg)
    gamma = np.zeros(ds.dx + ds.dw + 1)
    xf = add_intercept(ds.x_all)
    zf = add_intercept(np.vstack([ds.z_labeled, ds.z_unlabeled]))
    xu, zu = add_intercept(ds.x_unlabeled), add_intercept(ds.z_unlabeled)
    g_weights = np.concatenate([np.full(ds.n, float(lam)), np.ones(ds.m)])
    trace = CoupledTrace(metadata={"lambda": float(lam), "outer": cfg.outer, "inner": cfg.inner, "lr": cfg.lr,
                                   "alpha_f": cfg.alpha_f, "alpha_g": cfg.alpha_g})
    trace.stop_reason = "outer iterations"
    for k in range(cfg.outer):
        soft_u = expit(zu @ gamma)
        beta = _descend(beta, xf, np.concatenate([ds.y_labeled, soft_u]), np.ones(ds.N), cfg.alpha_f,
                        cfg.inner, cfg.lr)
        soft_f = expit(xu @ beta)
        gamma = _descend(gamma, zf, np.concatenate([ds.y_labeled, soft_f]), g_weights, cfg.alpha_g,
                         cfg.inner, cfg.lr)
        obj = f_block_objective(beta, gamma, ds, cfg) + g_block_objective(gamma, beta, ds, lam, cfg)
        trace.objective.append(obj)
        if ds.m:
            trace.disagreement.append(float(np.mean((expit(zu @ gamma) - expit(xu @ beta)) ** 2)))
        trace.iterations = k + 1
    return beta, gamma, trace


__all__ = [
    "Fitter", "RidgeFitter", "CoupledConfig", "CoupledTrace", "disagreement", "run_coupled_square",
    "LogisticConfig", "cross_entropy", "f_block_objective", "g_block_objective", "fit_logistic",
    "logistic_baseline", "logistic_two_stage", "run_coupled_logistic",
]
