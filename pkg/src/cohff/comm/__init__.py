"""Everything that crosses the wire between agents."""

from .budget import CommBudget, enforce_budget, fitting_rate
from .codec import (
    BadMagic, DecodeError, IndexOutOfRange, MalformedMessage, Truncated, V2XMessage, VersionMismatch,
    decode_message, dump_message, encode_message, hexdump,
)
from .condition import PoseAwareCondition, reference_shift
from .sparsify import (
    PlaneMask, SparsePlanePayload, apply_mask_and_sparsify, densify, gated_plane, kept_count,
    payload_from_dense, topk_cells,
)
from .volume import (
    MB, communication_volume, dense_voxel_bytes, index_overhead_bytes, message_volume_ratio,
    plane_volume_ratio, to_mb, two_plane_bytes,
)

__all__ = [
    "BadMagic", "CommBudget", "DecodeError", "IndexOutOfRange", "MB", "MalformedMessage", "PlaneMask",
    "PoseAwareCondition", "SparsePlanePayload", "Truncated", "V2XMessage", "VersionMismatch",
    "apply_mask_and_sparsify", "communication_volume", "decode_message", "dense_voxel_bytes", "densify",
    "dump_message", "encode_message", "enforce_budget", "fitting_rate", "gated_plane", "hexdump",
    "index_overhead_bytes", "kept_count", "message_volume_ratio", "payload_from_dense",
    "plane_volume_ratio", "reference_shift", "to_mb", "topk_cells", "two_plane_bytes",
]
