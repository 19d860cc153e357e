"""Numerical toolkit for Brownian motion, harmonic measure and the Dirichlet
problem at infinity on Cartan-Hadamard surfaces given in polar coordinates."""

__version__ = "0.1.0"

from .criteria import (  # noqa: F401
    ConvergenceVerdict,
    DpiCertificate,
    doyle_transience,
    dpi_certificate,
    flat_singularity_test,
    milnor_transience,
    radial_dpi_check,
    radial_transience,
    sector_integral,
)
from .jacobi import JacobiSolution, TailModel, check_comparison, fit_tail, solve_log_jacobi  # noqa: F401
from .surface import (  # noqa: F401
    ConstantNegative,
    CurvatureModel,
    Exponential,
    Flat,
    LogLaw,
    PowerLaw,
    Tabulated,
    build_model,
    curvature_at,
    radial_model,
)
