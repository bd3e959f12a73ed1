"""Cross-platform comparison of quantum states from randomized measurements."""

from .circuits import Circuit, Gate, apply_circuit, build_ghz, sample_qv_circuit
from .estimate import (
    FidelityEstimate,
    bootstrap_fidelity,
    estimate_fidelity,
    fidelity,
    overlap_protocol1,
    overlap_protocol2,
    purity_protocol1,
    purity_protocol2,
    subsystem_restrict,
)
from .measure import MeasurementDataset, acquire_dataset, ingest_dataset
from .platforms import NoiseModel, PlatformProfile, exact_fidelity, exact_overlap

__version__ = "0.1.0"
