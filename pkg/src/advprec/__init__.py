"""Adversarially perturbed precision-matrix estimation."""

from .adversary import (
    PerturbationSpec,
    adversarial_loss,
    expansion_terms,
    surrogate_linf,
    surrogate_loss,
    worst_case,
    worst_case_l2,
    worst_case_linf_exact,
)
from .estimator_l2 import fit_l2, objective_l2, reference_solver_l2, wasserstein_objective
from .estimator_linf import SolverConfig, build_penalty, fit_linf, kkt_residual, weighted_glasso
from .metrics import bic, classification_metrics, confusion, select_parameter
from .synth import ModelKind, make_model, sample_gaussian

__version__ = "0.1.0"

__all__ = [
    "ModelKind",
    "PerturbationSpec",
    "SolverConfig",
    "adversarial_loss",
    "bic",
    "build_penalty",
    "classification_metrics",
    "confusion",
    "expansion_terms",
    "fit_l2",
    "fit_linf",
    "kkt_residual",
    "make_model",
    "objective_l2",
    "reference_solver_l2",
    "sample_gaussian",
    "select_parameter",
    "surrogate_linf",
    "surrogate_loss",
    "wasserstein_objective",
    "weighted_glasso",
    "worst_case",
    "worst_case_l2",
    "worst_case_linf_exact",
]
