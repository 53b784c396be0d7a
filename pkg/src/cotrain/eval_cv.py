"""Metrics, labeled-only cross-validation for the coupling weight, lambda sweeps
and a few diagnostics for synthetic experiments.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata
from sklearn.model_selection import GroupKFold, KFold, StratifiedKFold

from .afs import AFSConfig, ridge_refit, run_afs
from .coupled_loop import LogisticConfig, logistic_baseline, logistic_two_stage, run_coupled_logistic
from .dataset import Dataset
from .dictionary import build_dictionary, normalize_atoms
from .linear_coupled import (
    RidgeConfig, add_intercept, predict, solve_baseline, solve_coupled_linear, solve_gen_distill,
    solve_two_stage,
)

METRICS = ("mse", "est_err_vs_mu", "brier", "zero_one", "auroc")
BRIER_CLIP = 1e-6
CSV_HEADER = ("method", "lambda", "seed", "fold", "metric", "value")


def _binary(truth: np.ndarray, kind: str):
    if not np.all(np.isin(truth, (0.0, 1.0))):
        raise ValueError(f"{kind} needs labels in {{0, 1}}")


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the midrank (Mann-Whitney) formula."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC is undefined when only one class is present")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def metric(kind: str, predictions, truth) -> float:
    """Evaluate one metric.

    ``truth`` holds labels, except for ``est_err_vs_mu`` where it holds the
    true conditional mean on the same rows. Probabilities are clipped to
    ``[1e-6, 1 - 1e-6]`` before the Brier score. ``zero_one`` predicts class
    1 when the probability is at least 1/2.
    """
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError("predictions and truth differ in length")
    if p.size == 0:
        raise ValueError("empty evaluation set")
    if kind in ("mse", "est_err_vs_mu"):
        return float(np.mean((p - t) ** 2))
    if kind == "brier":
        _binary(t, kind)
        return float(np.mean((np.clip(p, BRIER_CLIP, 1 - BRIER_CLIP) - t) ** 2))
    if kind == "zero_one":
        _binary(t, kind)
        return float(np.mean((p >= 0.5).astype(float) != t))
    if kind == "auroc":
        _binary(t, kind)
        return auroc(p, t)
    raise ValueError(f"unknown metric {kind!r}")


# --- trainers --------------------------------------------------------------

Predictor = Callable[[np.ndarray], np.ndarray]


def _train_baseline(ds, lam, opts):
    model = solve_baseline(ds, opts.get("alpha_f", 1e-8))
    return lambda X: predict(model, X)


def _train_two_stage(ds, lam, opts):
    _, student = solve_two_stage(ds, opts.get("alpha_g", 1e-8), opts.get("alpha_f", 1e-8))
    return lambda X: predict(student, X)


def _train_coupled(ds, lam, opts):
    ridge = RidgeConfig(opts.get("alpha_f", 1e-8), opts.get("alpha_g", 1e-8))
    model = solve_coupled_linear(ds, lam, ridge)
    return lambda X: predict(model.f, X)


def _train_gen_distill(ds, lam, opts):
    model = solve_gen_distill(ds, opts.get("teacher_view", "XW"), opts.get("alpha_g", 1e-8),
                              opts.get("alpha_f", 1e-8), opts.get("a_L", 0.0), opts.get("a_U", 1.0))
    return lambda X: predict(model, X)


def _logistic_cfg(opts) -> LogisticConfig:
    keys = LogisticConfig.__dataclass_fields__
    return LogisticConfig(**{k: v for k, v in opts.items() if k in keys})


def _train_coupled_logistic(ds, lam, opts):
    beta, _, _ = run_coupled_logistic(ds, lam, _logistic_cfg(opts))
    return lambda X: expit(add_intercept(X) @ beta)


def _train_logistic_baseline(ds, lam, opts):
    beta = logistic_baseline(ds, _logistic_cfg(opts))
    return lambda X: expit(add_intercept(X) @ beta)


def _train_logistic_two_stage(ds, lam, opts):
    _, beta = logistic_two_stage(ds, _logistic_cfg(opts))
    return lambda X: expit(add_intercept(X) @ beta)


def _train_afs(ds, lam, opts):
    kind = opts.get("dictionary", "raw")
    params = dict(opts.get("dictionary_params", {}))
    params.setdefault("seed", opts.get("seed", 0))
    dict_f = normalize_atoms(build_dictionary(kind, params, ds, "f"))
    dict_g = normalize_atoms(build_dictionary(kind, params, ds, "g"))
    model, _ = run_afs(ds, dict_f, dict_g, lam, int(opts.get("K", 20)), AFSConfig())
    if opts.get("refit", True) and model.dict_f is not None:
        model = ridge_refit(ds, model, opts.get("alpha_refit", 1e-3))
    return model.predict_f


TRAINERS: dict[str, Callable[[Dataset, float, dict], Predictor]] = {
    "baseline": _train_baseline,
    "two_stage": _train_two_stage,
    "coupled": _train_coupled,
    "gen_distill": _train_gen_distill,
    "coupled_logistic": _train_coupled_logistic,
    "logistic_baseline": _train_logistic_baseline,
    "logistic_two_stage": _train_logistic_two_stage,
    "afs": _train_afs,
}
# methods whose fit does not depend on lambda
LAMBDA_FREE = {"baseline", "two_stage", "gen_distill", "logistic_baseline", "logistic_two_stage"}


def get_trainer(name: str):
    try:
        return TRAINERS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(TRAINERS)}") from None


# --- results ---------------------------------------------------------------

@dataclass
class SweepResult:
    """Long-format result rows ``(method, lambda, seed, fold, metric, value)``."""

    rows: list[tuple] = field(default_factory=list)

    def add(self, method: str, lam: float, seed, fold, metric_name: str, value: float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite {metric_name} for {method} at lambda={lam}")
        self.rows.append((method, float(lam), seed, fold, metric_name, float(value)))

    def extend(self, other: "SweepResult"):
        self.rows.extend(other.rows)

    def sorted(self) -> "SweepResult":
        def key(r):
            return (r[0], r[1], str(r[2]), str(r[3]), r[4])
        return SweepResult(sorted(self.rows, key=key))

    def values(self, method: str, metric_name: str) -> dict[float, list[float]]:
        out: dict[float, list[float]] = {}
        for r in self.rows:
            if r[0] == method and r[4] == metric_name:
                out.setdefault(r[1], []).append(r[5])
        return dict(sorted(out.items()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.sorted().rows:
                w.writerow([r[0], repr(r[1]), r[2], r[3], r[4], repr(r[5])])

    @classmethod
    def from_csv(cls, path) -> "SweepResult":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != CSV_HEADER:
                raise ValueError(f"unexpected header {header}")
            return cls([(r[0], float(r[1]), r[2], r[3], r[4], float(r[5])) for r in reader])


@dataclass
class CVReport:
    grid: list[float]
    scores: np.ndarray  # shape (len(grid), folds)
    metric: str
    method: str
    selected: float
    tie: bool
    folds: list[np.ndarray]

    @property
    def fold_mean(self) -> np.ndarray:
        return self.scores.mean(axis=1)

    def to_result(self, seed=None) -> SweepResult:
        res = SweepResult()
        for i, lam in enumerate(self.grid):
            for j in range(self.scores.shape[1]):
                res.add(self.method, lam, seed, j, self.metric, self.scores[i, j])
            res.add(self.method, lam, seed, "mean", self.metric, self.fold_mean[i])
        return res


def _default_metric(ds: Dataset) -> str:
    return "brier" if ds.kind == "binary" else "mse"


def make_folds(ds: Dataset, folds: int, seed: int, groups=None, stratify: bool = False) -> list[np.ndarray]:
    """Held-out labeled index sets, fixed by ``(seed, folds, groups/labels)``."""
    if folds < 2:
        raise ValueError("need at least two folds")
    if folds > ds.n:
        raise ValueError(f"{folds} folds requested but only {ds.n} labeled rows")
    idx = np.arange(ds.n)
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape[0] != ds.n:
            raise ValueError("one group label per labeled row is required")
        if np.unique(groups).size < folds:
            raise ValueError(f"{np.unique(groups).size} groups cannot fill {folds} folds")
        # GroupKFold is deterministic; permute group identities by seed so the seed matters
        uniq, inv = np.unique(groups, return_inverse=True)
        perm = np.random.default_rng(seed).permutation(uniq.size)
        splitter = GroupKFold(n_splits=folds).split(idx, groups=perm[inv])
    elif stratify:
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed).split(idx, ds.y_labeled)
    else:
        splitter = KFold(n_splits=folds, shuffle=True, random_state=seed).split(idx)
    return [np.sort(test) for _, test in splitter]


def cv_select_lambda(ds: Dataset, grid, trainer: str = "coupled", folds: int = 5, seed: int = 0,
                     groups=None, stratify: bool = False, metric_kind: str | None = None,
                     options: dict | None = None, tie_rtol: float = 1e-12) -> CVReport:
    """Choose the coupling weight by cross-validation on labeled rows only.

    Each fold trains on the remaining labeled rows plus the full unlabeled
    pool and scores the held-out labeled rows. The fold partition does not
    depend on lambda. Among fold means within ``tie_rtol`` (relative) of the
    minimum, the smallest lambda is selected; the tolerance never drops
    below ``tie_rtol`` times the mean squared label (for mse) or one. For AUROC larger is better.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty lambda grid")
    if any(g < 0 for g in grid):
        raise ValueError("lambda values must be nonnegative")
    metric_kind = metric_kind or _default_metric(ds)
    if metric_kind == "est_err_vs_mu":
        raise ValueError("est_err_vs_mu needs a synthetic truth and cannot be used for cross-validation")
    options = options or {}
    train = get_trainer(trainer)
    held_sets = make_folds(ds, folds, seed, groups=groups, stratify=stratify)
    scores = np.empty((len(grid), len(held_sets)))
    for j, held in enumerate(held_sets):
        sub = ds.subset_labeled(np.setdiff1d(np.arange(ds.n), held))
        for i, lam in enumerate(grid):
            pred = train(sub, lam, options)(ds.x_labeled[held])
            scores[i, j] = metric(metric_kind, pred, ds.y_labeled[held])
    means = scores.mean(axis=1)
    loss = -means if metric_kind == "auroc" else means
    best = loss.min()
    # the floor keeps roundoff-level scores (a perfect fit) from splitting ties
    floor = float(np.mean(ds.y_labeled ** 2)) if metric_kind == "mse" else 1.0
    tied = np.flatnonzero(loss <= best + tie_rtol * max(abs(best), floor))
    return CVReport(grid=grid, scores=scores, metric=metric_kind, method=trainer,
                    selected=grid[int(tied[0])], tie=bool(tied.size > 1), folds=held_sets)


def lambda_sweep(ds_train: Dataset, ds_test: Dataset, grid, trainer: str = "coupled",
                 metric_kind: str | list[str] = "mse", truth_test=None, seed=None,
                 options: dict | None = None, references: bool = True) -> SweepResult:
    """Train at each lambda and score on ``ds_test``.

    ``ds_test`` holds the test rows as its labeled block. ``truth_test`` is
    the true conditional mean on those rows, needed for ``est_err_vs_mu``.
    With ``references`` the labeled-only baseline (reported at lambda=0) and
    the Two-Stage student (reported at lambda=inf) are appended.
    """
    kinds = [metric_kind] if isinstance(metric_kind, str) else list(metric_kind)
    options = options or {}
    res = SweepResult()
    X = ds_test.x_labeled

    def score(method, lam, predictor):
        pred = predictor(X)
        for kind in kinds:
            if kind == "est_err_vs_mu":
                if truth_test is None:
                    raise ValueError("est_err_vs_mu requires the true conditional mean")
                res.add(method, lam, seed, "test", kind, metric(kind, pred, truth_test))
            else:
                res.add(method, lam, seed, "test", kind, metric(kind, pred, ds_test.y_labeled))

    train = get_trainer(trainer)
    for lam in sorted(float(g) for g in grid):
        score(trainer, lam, train(ds_train, lam, options))
    if references:
        if ds_train.kind == "binary" and trainer == "coupled_logistic":
            base, two = "logistic_baseline", "logistic_two_stage"
        else:
            base, two = "baseline", "two_stage"
        score(base, 0.0, get_trainer(base)(ds_train, 0.0, options))
        score(two, math.inf, get_trainer(two)(ds_train, math.inf, options))
    return res


# --- diagnostics -----------------------------------------------------------

def gamma_factor(n: int, m: int, lam: float, rho: float) -> float:
    """``1 - m^2 rho^2 / (N (m + n lam))``; bounded below by ``n / N``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if n < 1 or m < 0 or lam < 0:
        raise ValueError("need n >= 1, m >= 0, lambda >= 0")
    if m == 0:
        return 1.0
    # a single division keeps the corner cases exact (e.g. 16 / 80 == 0.2)
    denom = (n + m) * (m + n * lam)
    return (denom - m * m * rho * rho) / denom


def coupled_population_g(mu, eta, n: int, m: int, lam: float):
    """Population rich-view minimizer: ``w_mu * mu + (1 - w_mu) * eta`` with ``w_mu = m / (m + n lam)``."""
    w = m / (m + n * lam)
    return lambda X, Z: w * mu(X) + (1 - w) * eta(Z)


def rho_star_mc(hat_f: Callable, hat_g: Callable, truth, lam: float, n: int, m: int,
                mc_samples: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo residual alignment between the fitted pair and the population pair.

    ``truth`` must provide ``mu(X)``, ``eta(Z)`` and ``sample(count, rng)``
    returning ``(X, W)``. The f residual is ``hat_f - mu`` and the g residual
    is ``hat_g - g_star`` evaluated on fresh draws. A zero denominator gives 0.
    """
    if mc_samples < 100:
        raise ValueError("mc_samples must be at least 100")
    rng = np.random.default_rng(seed)
    X, W = truth.sample(mc_samples, rng)
    Z = np.hstack([X, W])
    g_star = coupled_population_g(truth.mu, truth.eta, n, m, lam)(X, Z)
    ef = np.asarray(hat_f(X), float) - truth.mu(X)
    eg = np.asarray(hat_g(Z), float) - g_star
    den = math.sqrt(float(np.mean(ef ** 2)) * float(np.mean(eg ** 2)))
    if den == 0.0:
        return 0.0
    return float(min(1.0, abs(float(np.mean(ef * eg))) / den))
