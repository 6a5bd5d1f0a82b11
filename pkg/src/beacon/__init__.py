"""Per-channel weight quantization by cosine alignment on integer grids."""

from .core import (
    BeaconConfig,
    ChannelResult,
    QuantizedMatrix,
    beacon_channel,
    beacon_matrix,
    export_scales,
    from_quantized_file,
    greedy_init,
    order_columns,
    refine_sweep,
    to_quantized_file,
)
from .errors import (
    BadMagic,
    BeaconError,
    CodeOutOfRange,
    DimensionMismatch,
    EmptyInput,
    FormatError,
    InvariantViolation,
    NonFiniteData,
    NonPositiveScale,
    RankDeficientWarning,
    ShortCalibration,
    TooLarge,
    TrailingData,
    TruncatedFile,
    UnsupportedBits,
    UnsupportedDtype,
    UnsupportedVersion,
    ZeroQuantizedOutput,
    ZeroVector,
)
from .geometry import (
    ReducedPair,
    cosine,
    optimal_scale,
    reduce_inputs,
    residual_identity,
    thin_qr,
)
from .grid import IntegerGrid, RTNConfig, dequantize, requantize, rtn_quantize, zero_point
from .harness import EvalReport, SyntheticSpec, evaluate, gen_synthetic
from .oracle import (
    OracleResult,
    exhaustive_best,
    rtn_refit,
    score_codes,
    verify_fixed_point,
)
from .tensor_io import (
    QuantizedMatrixFile,
    read_quantized,
    read_tensor,
    write_quantized,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagic",
    "BeaconConfig",
    "BeaconError",
    "ChannelResult",
    "CodeOutOfRange",
    "DimensionMismatch",
    "EmptyInput",
    "EvalReport",
    "FormatError",
    "IntegerGrid",
    "InvariantViolation",
    "NonFiniteData",
    "NonPositiveScale",
    "OracleResult",
    "QuantizedMatrix",
    "QuantizedMatrixFile",
    "RTNConfig",
    "RankDeficientWarning",
    "ReducedPair",
    "ShortCalibration",
    "SyntheticSpec",
    "TooLarge",
    "TrailingData",
    "TruncatedFile",
    "UnsupportedBits",
    "UnsupportedDtype",
    "UnsupportedVersion",
    "ZeroQuantizedOutput",
    "ZeroVector",
    "beacon_channel",
    "beacon_matrix",
    "cosine",
    "dequantize",
    "evaluate",
    "exhaustive_best",
    "export_scales",
    "from_quantized_file",
    "gen_synthetic",
    "greedy_init",
    "optimal_scale",
    "order_columns",
    "read_quantized",
    "read_tensor",
    "reduce_inputs",
    "refine_sweep",
    "requantize",
    "residual_identity",
    "rtn_quantize",
    "rtn_refit",
    "score_codes",
    "thin_qr",
    "to_quantized_file",
    "verify_fixed_point",
    "write_quantized",
    "write_tensor",
    "zero_point",
]
