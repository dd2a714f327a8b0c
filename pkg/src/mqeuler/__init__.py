"""Mathai-Quillen Euler integrals and vertex local indices for flat plane bundles on the torus."""

from .atlas import Atlas, Chart, Disk
from .covering import BumpProfile, TransversalCovering, VertexRecord, vertices
from .euler_mq import euler_total_flat, euler_total_general
from .flat_bundle import FlatBundle, GeneralBundle, from_holonomy, line_bundle
from .graded_forms import GeneratorSet, GradedElement
from .local_index import LocalIndexResult, TSchedule, nu_at_T, nu_extrapolated, nu_scale_free

__version__ = "0.1.0"

__all__ = [
    "Atlas",
    "Chart",
    "Disk",
    "BumpProfile",
    "TransversalCovering",
    "VertexRecord",
    "vertices",
    "euler_total_flat",
    "euler_total_general",
    "FlatBundle",
    "GeneralBundle",
    "from_holonomy",
    "line_bundle",
    "GeneratorSet",
    "GradedElement",
    "LocalIndexResult",
    "TSchedule",
    "nu_at_T",
    "nu_extrapolated",
    "nu_scale_free",
]
