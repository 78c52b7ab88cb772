"""Simulation and synthesis toolkit for path-encoded entangled quNit experiments."""

from .linalg import (
    StateVector,
    Unitary,
    dft_matrix,
    distance_up_to_global_phase,
    entanglement_entropy,
    fidelity,
    haar_random_unitary,
    is_unitary,
)
from .mesh import (
    Imperfections,
    MeshSettings,
    MziSetting,
    compile_unitary,
    forward_unitary,
    mzi_unitary,
    nearest_realizable,
    reflectivity_bounds,
)
from .source import DriftModel, SourceConfig, accidental_rate, apply_drift, entangled_state

__version__ = "0.1.0"
