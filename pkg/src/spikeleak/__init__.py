"""Gradient-inversion attacks against ANN and spiking-network federated clients."""

from . import attacks, data_ingest, evalkit, experiments, fl, models, spike_codec, tensor_core
from .errors import (
    DimensionError,
    DivergedError,
    FormatError,
    ProtocolError,
    SpikeLeakError,
    UsageError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "DivergedError",
    "FormatError",
    "ProtocolError",
    "SpikeLeakError",
    "UsageError",
    "ValidationError",
    "attacks",
    "data_ingest",
    "evalkit",
    "experiments",
    "fl",
    "models",
    "spike_codec",
    "tensor_core",
]
