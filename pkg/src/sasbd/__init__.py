"""Short-and-sparse blind deconvolution on the sphere.

Recover a short kernel ``a0`` and a sparse map ``x0`` from ``y = a0 * x0``
(cyclic convolution), up to a signed shift, by minimizing a smoothed
marginalized objective over the sphere and refining the result with
homotopy alternating minimization.
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .datagen import InstanceSpec, PlantedInstance, load_instance, make_instance, save_instance
from .minimize import MinimizeConfig, accelerated_rgd, curvilinear_search, init_a0, make_context
from .objective import ObjectiveContext, eval_phi_rho, min_eigpair, rgrad_phi_rho
from .refine import RefineConfig, refine_loop
from .shiftspace import beta_of, is_success, max_corr
from .signal import Kernel, Observation, SparseMap, cconv, ccorr
from .surrogate import SurrogateParams, prox_rho

__all__ = [
    "__version__",
    "backend_name",
    "InstanceSpec",
    "PlantedInstance",
    "make_instance",
    "save_instance",
    "load_instance",
    "MinimizeConfig",
    "make_context",
    "init_a0",
    "curvilinear_search",
    "accelerated_rgd",
    "ObjectiveContext",
    "eval_phi_rho",
    "rgrad_phi_rho",
    "min_eigpair",
    "RefineConfig",
    "refine_loop",
    "beta_of",
    "max_corr",
    "is_success",
    "Kernel",
    "Observation",
    "SparseMap",
    "cconv",
    "ccorr",
    "SurrogateParams",
    "prox_rho",
]
