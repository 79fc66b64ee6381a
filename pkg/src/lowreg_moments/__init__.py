"""Second-moment low-regularity schemes for dispersive equations with random data."""

from .trees import KDV, NLS, get_spec
from .forests import COMPLEX, REAL, paired_forest_classes
from .scheme import assemble_scheme, stabilize, to_physical
from .spectral import GridSpec, SpectralField, step

__all__ = [
    "COMPLEX",
    "GridSpec",
    "KDV",
    "NLS",
    "REAL",
    "SpectralField",
    "assemble_scheme",
    "get_spec",
    "paired_forest_classes",
    "stabilize",
    "step",
    "to_physical",
]
