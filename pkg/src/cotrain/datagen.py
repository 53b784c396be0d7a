"""Synthetic generators with known conditional means.

Each generator returns ``(Dataset, Truth)``. Labeled, unlabeled and test rows
come from separate child streams of one ``SeedSequence``, so changing one
block size never perturbs the others.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .dataset import Dataset


@dataclass
class Truth:
    """Population quantities of a generator.

    ``mu`` maps deployment features to ``E[Y | X]`` (``None`` when it has no
    closed form), ``eta`` maps ``Z = (X, W)`` to ``E[Y | Z]`` for regression
    generators or to the noiseless logit for the binary one. ``sample``
    draws fresh ``(X, W)`` rows from the labeled distribution.
    """

    mu: Callable[[np.ndarray], np.ndarray] | None
    eta: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray]]
    params: dict
    x_test: np.ndarray
    w_test: np.ndarray
    y_test: np.ndarray
    kind: str = "regression"
    metadata: dict = field(default_factory=dict)

    @property
    def mu_test(self) -> np.ndarray:
        if self.mu is None:
            raise ValueError("this generator has no closed-form conditional mean")
        return self.mu(self.x_test)

    def test_dataset(self) -> Dataset:
        """Test rows as the labeled block of a dataset with no unlabeled rows."""
        return Dataset(self.x_test, self.w_test, self.y_test, np.empty((0, self.x_test.shape[1])),
                       np.empty((0, self.w_test.shape[1])), kind=self.kind)


def _streams(seed: int):
    params, lab, unl, test = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(params), np.random.default_rng(lab),
            np.random.default_rng(unl), np.random.default_rng(test))


def _unit(rng, d: int) -> np.ndarray:
    if d == 0:
        return np.zeros(0)
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _check_sizes(n, m, n_test):
    if n < 1 or m < 0 or n_test < 0:
        raise ValueError("need n >= 1, m >= 0 and n_test >= 0")


def _assemble(parts, kind="regression") -> Dataset:
    (xl, wl, yl), (xu, wu, yu) = parts
    return Dataset(xl, wl, yl, xu, wu, kind=kind, y_unlabeled=yu)


# --- linear Gaussian -------------------------------------------------------

@dataclass(frozen=True)
class LinearGaussianConfig:
    """``Y = beta'X + theta'W + eps`` with ``(X, W)`` jointly Gaussian.

    Without an explicit ``cov`` both blocks are standard normal and
    ``corr(X_i, W_i) = rho`` for ``i < min(dx, dw)``; the remaining ``W``
    coordinates are independent of ``X``. Unspecified ``beta`` and ``theta``
    directions are drawn uniformly on the sphere from the seed and scaled
    to ``beta_norm`` and ``theta_norm``.
    """

    dx: int = 5
    dw: int = 20
    rho: float = 0.5
    beta: tuple | None = None
    theta: tuple | None = None
    beta_norm: float = 1.0
    theta_norm: float = 1.0
    sigma: float = 1.0
    cov: tuple | None = None

    def covariance(self) -> np.ndarray:
        d = self.dx + self.dw
        if self.cov is not None:
            cov = np.asarray(self.cov, dtype=float)
            if cov.shape != (d, d):
                raise ValueError(f"covariance must be {d}x{d}")
        else:
            cov = np.eye(d)
            for i in range(min(self.dx, self.dw)):
                cov[i, self.dx + i] = cov[self.dx + i, i] = self.rho
        if not np.allclose(cov, cov.T):
            raise ValueError("covariance must be symmetric")
        return cov


def gen_linear_gaussian(cfg: LinearGaussianConfig | None = None, n: int = 50, m: int = 2000,
                        n_test: int = 5000, seed: int = 0) -> tuple[Dataset, Truth]:
    cfg = cfg or LinearGaussianConfig()
    _check_sizes(n, m, n_test)
    if cfg.sigma < 0:
        raise ValueError("noise sd must be nonnegative")
    cov = cfg.covariance()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    rp, rl, ru, rt = _streams(seed)
    beta = np.asarray(cfg.beta, float) if cfg.beta is not None else cfg.beta_norm * _unit(rp, cfg.dx)
    theta = np.asarray(cfg.theta, float) if cfg.theta is not None else cfg.theta_norm * _unit(rp, cfg.dw)
    if beta.shape != (cfg.dx,) or theta.shape != (cfg.dw,):
        raise ValueError("beta/theta lengths do not match dx/dw")
    dx = cfg.dx
    # E[W | X = x] = S_wx S_xx^{-1} x
    cond = cov[dx:, :dx] @ np.linalg.inv(cov[:dx, :dx])
    mu_coef = beta + cond.T @ theta

    def sample(count, rng):
        zz = rng.standard_normal((count, cov.shape[0])) @ chol.T
        return zz[:, :dx], zz[:, dx:]

    def draw(count, rng):
        x, w = sample(count, rng)
        return x, w, x @ beta + w @ theta + cfg.sigma * rng.standard_normal(count)

    lab, unl, test = draw(n, rl), draw(m, ru), draw(n_test, rt)
    truth = Truth(
        mu=lambda X: np.asarray(X, float) @ mu_coef,
        eta=lambda Z: np.asarray(Z, float)[:, :dx] @ beta + np.asarray(Z, float)[:, dx:] @ theta,
        sample=sample,
        params={"beta": beta, "theta": theta, "mu_coef": mu_coef, "cov": cov, "sigma": cfg.sigma},
        x_test=test[0], w_test=test[1], y_test=test[2],
        metadata={"generator": "linear_gaussian", "seed": seed, "n": n, "m": m, "n_test": n_test,
                  "rho": cfg.rho, "theta_norm": float(np.linalg.norm(theta))},
    )
    return _assemble((lab, unl)), truth


# --- controlled privileged signal -----------------------------------------

@dataclass(frozen=True)
class ControlledConfig:
    """``W = (W_sig, V)`` with ``W_sig = rho X A + sqrt(1 - rho^2) H``.

    ``Y = X'beta + alpha H'theta + eps``; the deployment target is
    ``X'beta`` because ``H`` is independent of ``X``. ``V`` holds
    ``d_noise`` pure-noise privileged columns.
    """

    dx: int = 10
    q: int = 3
    d_noise: int = 0
    rho_xw: float = 0.7
    alpha: float = 1.0
    sigma: float = 1.0
    A: tuple | None = None
    beta: tuple | None = None
    theta: tuple | None = None


def gen_controlled(cfg: ControlledConfig | None = None, n: int = 100, m: int = 20000,
                   n_test: int = 10000, seed: int = 0) -> tuple[Dataset, Truth]:
    cfg = cfg or ControlledConfig()
    _check_sizes(n, m, n_test)
    if not 0.0 <= cfg.rho_xw <= 1.0:
        raise ValueError("rho_xw must lie in [0, 1]")
    if cfg.d_noise < 0 or cfg.q < 1 or cfg.dx < 1:
        raise ValueError("need dx >= 1, q >= 1, d_noise >= 0")
    if cfg.sigma < 0:
        raise ValueError("noise sd must be nonnegative")
    rp, rl, ru, rt = _streams(seed)
    if cfg.A is not None:
        A = np.asarray(cfg.A, float)
        if A.shape != (cfg.dx, cfg.q):
            raise ValueError("A must be dx x q")
    else:
        A = rp.standard_normal((cfg.dx, cfg.q))
    A = A / np.linalg.norm(A, axis=0)
    beta = np.asarray(cfg.beta, float) if cfg.beta is not None else _unit(rp, cfg.dx)
    theta = np.asarray(cfg.theta, float) if cfg.theta is not None else _unit(rp, cfg.q)
    rho, dx, q = cfg.rho_xw, cfg.dx, cfg.q
    resid = np.sqrt(1.0 - rho * rho)

    def latent(count, rng):
        x = rng.standard_normal((count, dx))
        h = rng.standard_normal((count, q))
        v = rng.standard_normal((count, cfg.d_noise))
        return x, h, np.hstack([rho * x @ A + resid * h, v])

    def sample(count, rng):
        x, _, w = latent(count, rng)
        return x, w

    def draw(count, rng):
        x, h, w = latent(count, rng)
        return x, w, x @ beta + cfg.alpha * h @ theta + cfg.sigma * rng.standard_normal(count)

    def eta(Z):
        Z = np.asarray(Z, float)
        x, wsig = Z[:, :dx], Z[:, dx:dx + q]
        if resid == 0.0:
            return x @ beta
        return x @ beta + cfg.alpha * ((wsig - rho * x @ A) / resid) @ theta

    lab, unl, test = draw(n, rl), draw(m, ru), draw(n_test, rt)
    truth = Truth(
        mu=lambda X: np.asarray(X, float) @ beta, eta=eta, sample=sample,
        params={"A": A, "beta": beta, "theta": theta, "alpha": cfg.alpha, "rho_xw": rho, "sigma": cfg.sigma},
        x_test=test[0], w_test=test[1], y_test=test[2],
        metadata={"generator": "controlled", "seed": seed, "n": n, "m": m, "n_test": n_test,
                  "dx": dx, "q": q, "d_noise": cfg.d_noise},
    )
    return _assemble((lab, unl)), truth


# --- binary logit diagnostic ----------------------------------------------

@dataclass(frozen=True)
class LogitDiagConfig:
    """Two correlated views driven by one shared latent factor ``s``.

    Each coordinate is ``scale * (corr * s + sqrt(1 - corr^2) * e)`` with
    independent standard normal ``e``. ``s`` is standard normal for labeled
    and test rows and shifted by ``unlabeled_mean`` in the unlabeled pool.
    The label logit is ``b_x'X + b_w'W + noise_sd * xi``; unspecified
    coefficient vectors are drawn on the sphere and scaled by
    ``coef_x_norm`` / ``coef_w_norm``.
    """

    dx: int = 5
    dw: int = 40
    corr: float = 0.95
    x_scale: float = 1.0
    w_scale: float = 1.05
    noise_sd: float = 0.70
    unlabeled_mean: float = 1.0
    coef_x: tuple | None = None
    coef_w: tuple | None = None
    coef_x_norm: float = 1.0
    coef_w_norm: float = 1.0


def gen_logit_diag(cfg: LogitDiagConfig | None = None, n: int = 50, m: int = 3000,
                   n_test: int = 6000, seed: int = 0) -> tuple[Dataset, Truth]:
    cfg = cfg or LogitDiagConfig()
    _check_sizes(n, m, n_test)
    if cfg.x_scale <= 0 or cfg.w_scale <= 0:
        raise ValueError("view scales must be positive")
    if not 0.0 <= cfg.corr <= 1.0:
        raise ValueError("correlation strength must lie in [0, 1]")
    if cfg.noise_sd < 0:
        raise ValueError("logit noise sd must be nonnegative")
    rp, rl, ru, rt = _streams(seed)
    bx = np.asarray(cfg.coef_x, float) if cfg.coef_x is not None else cfg.coef_x_norm * _unit(rp, cfg.dx)
    bw = np.asarray(cfg.coef_w, float) if cfg.coef_w is not None else cfg.coef_w_norm * _unit(rp, cfg.dw)
    c, e = cfg.corr, np.sqrt(1.0 - cfg.corr ** 2)

    def views(count, rng, shift=0.0):
        s = shift + rng.standard_normal((count, 1))
        x = cfg.x_scale * (c * s + e * rng.standard_normal((count, cfg.dx)))
        w = cfg.w_scale * (c * s + e * rng.standard_normal((count, cfg.dw)))
        return x, w

    def clean_logit(Z):
        Z = np.asarray(Z, float)
        return Z[:, :cfg.dx] @ bx + Z[:, cfg.dx:] @ bw

    def draw(count, rng, shift=0.0):
        x, w = views(count, rng, shift)
        logit = clean_logit(np.hstack([x, w])) + cfg.noise_sd * rng.standard_normal(count)
        return x, w, (rng.random(count) < expit(logit)).astype(float)

    lab, unl, test = draw(n, rl), draw(m, ru, cfg.unlabeled_mean), draw(n_test, rt)
    truth = Truth(
        mu=None, eta=clean_logit, sample=lambda count, rng: views(count, rng),
        params={"coef_x": bx, "coef_w": bw},
        x_test=test[0], w_test=test[1], y_test=test[2], kind="binary",
        metadata={"generator": "logit_diag", "seed": seed, "n": n, "m": m, "n_test": n_test,
                  "cross_view_form": "shared scalar latent factor mixed with weight corr",
                  "unlabeled_mean_interpretation": "mean shift of the latent factor in the unlabeled pool",
                  "corr": cfg.corr, "x_scale": cfg.x_scale, "w_scale": cfg.w_scale,
                  "noise_sd": cfg.noise_sd, "unlabeled_mean": cfg.unlabeled_mean},
    )
    return _assemble((lab, unl), kind="binary"), truth


PRESETS = {
    "linear_gaussian": (gen_linear_gaussian, LinearGaussianConfig, {"n": 50, "m": 2000, "n_test": 5000}),
    "controlled": (gen_controlled, ControlledConfig, {"n": 100, "m": 20000, "n_test": 10000}),
    "logit_diag": (gen_logit_diag, LogitDiagConfig, {"n": 50, "m": 3000, "n_test": 6000}),
}


def generate(preset: str, seed: int, sizes: dict | None = None, config: dict | None = None):
    """Run a named generator with default sizes overridden by ``sizes``."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    fn, cfg_cls, default_sizes = PRESETS[preset]
    sz = {**default_sizes, **(sizes or {})}
    cfg = cfg_cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in (config or {}).items()})
    return fn(cfg, sz["n"], sz["m"], sz["n_test"], seed)
