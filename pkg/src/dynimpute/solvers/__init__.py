"""Numerical fitting primitives."""
from .cox import CoxFit, cox_loglik, fit_cox_breslow
from .forest import ForestFit, fit_forest
from .glm import GlmFit, fit_glm, linear_predictor
from .mixed import MixedFit, blup_for_new, fit_random_intercept, posterior_modes
from .pmm import DonorPool, pmm_draw

__all__ = [
    "CoxFit", "cox_loglik", "fit_cox_breslow",
    "ForestFit", "fit_forest",
    "GlmFit", "fit_glm", "linear_predictor",
    "MixedFit", "blup_for_new", "fit_random_intercept", "posterior_modes",
    "DonorPool", "pmm_draw",
]
