"""Coupled training of a deployment model and a privileged-view model with unlabeled data."""
from .dataset import ColumnSpec, DataError, Dataset, load_csv, make_semisupervised_split, standardize, write_csv
from .linear_coupled import (
    LinearCoupledModel, LinearModel, RidgeConfig, fit_ridge, predict, solve_baseline, solve_coupled_linear,
    solve_gen_distill, solve_two_stage,
)
from .coupled_loop import CoupledConfig, LogisticConfig, RidgeFitter, run_coupled_logistic, run_coupled_square
from .star_space import PairedVec, StarSpace, embed, embed_atom, make_star_space, make_target, objective_value, star_dot
from .dictionary import Dictionary, build_dictionary, normalize_atoms
from .qr import QRState, qr_insert
from .afs import AFSConfig, AFSModel, AFSTrace, envelope_ratio, excess_residual, ridge_refit, run_afs
from .eval_cv import CVReport, SweepResult, cv_select_lambda, gamma_factor, lambda_sweep, metric, rho_star_mc
from .datagen import (
    ControlledConfig, LinearGaussianConfig, LogitDiagConfig, Truth, gen_controlled, gen_linear_gaussian,
    gen_logit_diag, generate,
)

__version__ = "0.1.0"
