"""Bit-exact asymmetrically-quantized bit-slice GEMM with an analytical
accelerator performance model."""

from .gemm import (
    EQ5,
    EQ6,
    GemmOperands,
    GemmResult,
    WorkloadCounters,
    aqs_gemm,
    count_workload,
    dense_int_gemm_oracle,
    prepare_operands,
)
from .quant import CalibStats, QuantParams, calibrate, quantize_asymmetric, quantize_symmetric
from .rle import CompressedPlane, compress_plane, decompress_plane
from .sim import (
    HardwareConfig,
    SimLayerReport,
    closed_form_workloads,
    simulate_layer,
    sweep,
    synthetic_operands,
    unit_problem_operands,
)
from .slicing import SlicedMatrix, reconstruct, slice_activation, slice_sbr
from .tensorio import Matrix, load_matrix, save_matrix

__version__ = "0.1.0"

__all__ = [
    "EQ5", "EQ6", "GemmOperands", "GemmResult", "WorkloadCounters", "aqs_gemm",
    "count_workload", "dense_int_gemm_oracle", "prepare_operands",
    "CalibStats", "QuantParams", "calibrate", "quantize_asymmetric", "quantize_symmetric",
    "CompressedPlane", "compress_plane", "decompress_plane",
    "HardwareConfig", "SimLayerReport", "closed_form_workloads", "simulate_layer",
    "sweep", "synthetic_operands", "unit_problem_operands",
    "SlicedMatrix", "reconstruct", "slice_activation", "slice_sbr",
    "Matrix", "load_matrix", "save_matrix",
]
