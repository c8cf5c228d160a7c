"""Self-shrinkers, Gaussian entropy, stability spectra and perturbed mean curvature flows."""
from .geometry import (
    Cone, End, PlanarCurve, ProfileCurve, SpaceTimePoint, SurfaceSampleSet, geometric_data,
    resample, shrinker_residual,
)
from .kernels import BACKEND
from .shrinkers import asymptotic_cone, canonical_shrinker, find_conical_specimen
from .entropy import f_functional
from .spectrum import build_perturbation, lowest_eigenpair, weighted_poincare_test
from .flow import Controller, FlowTrace, run
from .topo import theorem_pipeline

__version__ = "0.1.0"
