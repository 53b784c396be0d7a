from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from cotrain.dataset import Dataset


def random_dataset(rng, n=15, m=40, dx=3, dw=2, noise=0.5, kind="regression") -> Dataset:
    xl = rng.standard_normal((n, dx))
    wl = rng.standard_normal((n, dw))
    xu = rng.standard_normal((m, dx))
    wu = rng.standard_normal((m, dw))
    coef = rng.standard_normal(dx + dw)
    y = np.hstack([xl, wl]) @ coef + noise * rng.standard_normal(n)
    if kind == "binary":
        y = (y > 0).astype(float)
    return Dataset(xl, wl, y, xu, wu, kind=kind)


def numeric_minimum(fun, x0, grad=None):
    """Tight L-BFGS run used as an independent oracle for quadratic objectives."""
    res = minimize(fun, x0, jac=grad, method="L-BFGS-B",
                   options={"maxiter": 20000, "maxcor": 50, "ftol": 1e-15, "gtol": 1e-11})
    return res.x, res.fun


def planted_afs_instance(seed=0, n=60, m=200, dx=6, dw=4, size=256, true_atoms=5):
    """Sparse instance whose coupled objective has an exact zero in the dictionaries.

    The f-dictionary holds ``size`` Gaussian-kernel atoms on ``x``. The
    g-dictionary holds ``size`` atoms on ``(x, w)``, the first ``true_atoms``
    of which are exact copies of the planted f-atoms. Labels equal the
    planted ``f0``, so ``(f0, g0 = f0)`` attains objective zero.
    """
    from cotrain.dictionary import Dictionary, build_dictionary, normalize_atoms

    rng = np.random.default_rng(seed)
    xl, xu = rng.standard_normal((n, dx)), rng.standard_normal((m, dx))
    wl, wu = rng.standard_normal((n, dw)), rng.standard_normal((m, dw))
    shell = Dataset(xl, wl, np.zeros(n), xu, wu)
    dict_f = normalize_atoms(build_dictionary("rbf", {"seed": seed + 1, "max_unlabeled_centers": size - n},
                                              shell, "f"))
    planted = rng.choice(size, size=true_atoms, replace=False)
    coef = rng.choice([-1.0, 1.0], size=true_atoms) * rng.uniform(0.5, 1.5, size=true_atoms)
    f0 = dict_f.atoms[:, planted] @ coef
    other = normalize_atoms(build_dictionary(
        "rbf", {"seed": seed + 2, "max_unlabeled_centers": size - true_atoms - n}, shell, "g"))
    dict_g = Dictionary.from_values(np.column_stack([dict_f.atoms[:, planted], other.atoms]), block="g")
    ds = Dataset(xl, wl, f0[:n], xu, wu)
    return ds, dict_f, dict_g, f0
