"""Upsilon transforms of Levy measures: kernels, domains, identities, simulation."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"

from . import errors, identities, levy, numkit, pathsim, stable, upsilon  # noqa: E402
from .levy import LevyMeasure, class_membership, make_measure  # noqa: E402
from .pathsim import SimConfig, ecf_residual, simulate_y  # noqa: E402
from .stable import stable_density, stable_laplace  # noqa: E402
from .upsilon import (  # noqa: E402
    classify_dilation_domain,
    in_domain,
    make_dilation,
    transform,
    transform_density,
)

__all__ = [
    "LevyMeasure", "SimConfig", "class_membership", "classify_dilation_domain",
    "ecf_residual", "errors", "identities", "in_domain", "levy", "make_dilation",
    "make_measure", "numkit", "pathsim", "simulate_y", "stable", "stable_density",
    "stable_laplace", "transform", "transform_density", "upsilon",
]
