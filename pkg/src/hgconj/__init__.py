"""Numerical linearizing conjugacies near hyperbolic equilibria of autonomous ODEs."""
from .conjugacy import (GlobalConjugacy, LocalConjugacy, build_global, build_local, global_H,
                        global_h, inverse_H, local_H, simplified_h)
from .cutoff import CutoffSpec, alpha, w_hat
from .errors import *  # noqa: F401,F403
from .field_model import (AnalyticExample, VectorField, builtin_examples, get_example,
                          load_field, nonlinear_part, polynomial_field, random_hyperbolic_field)
from .flow_engine import certify_dominance_ball, flow, flow_until_ball, in_region_of_attraction
from .quadrature import QuadratureConfig, quad_expdecay
from .spectral import split_spectrum
from .verification import VerificationReport

__version__ = "0.1.0"
