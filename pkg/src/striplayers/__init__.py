"""Numerical construction of half-plane layers and one-handle surfaces.

Pipeline: solve the maximal surface equation on a serrated strip cell
(``maxsolve``), build the conjugate one-forms and integrate them into a
minimal surface mesh (``conjugation``), then verify symmetries, periods,
handle geometry and embeddedness (``analysis``).
"""

from .domain import (
    AdmissibilityError,
    ConstructionError,
    DomainError,
    ExhaustionPolygon,
    HandleParams,
    JoinPath,
    LayerParams,
    StripDomain,
    exhaustion_domain,
    join_path,
)

__version__ = "0.1.0"
