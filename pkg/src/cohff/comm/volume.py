"""Communication-volume accounting. CV counts f32 feature bytes of kept cells only."""

from __future__ import annotations

from .sparsify import kept_count

FLOAT_BYTES = 4
INDEX_BYTES = 4
MB = 1024 ** 2


def _payloads(items):
    for it in items:
        if hasattr(it, "payloads"):
            yield from it.payloads
        else:
            yield it


def payload_bytes(payload) -> int:
    return payload.kept * payload.features * FLOAT_BYTES


def communication_volume(items) -> int:
    """Feature bytes over payloads or messages (headers and indices excluded)."""
    return sum(payload_bytes(p) for p in _payloads(items))


def index_overhead_bytes(items) -> int:
    return sum(p.kept * INDEX_BYTES for p in _payloads(items))


def to_mb(n_bytes: float) -> float:
    return n_bytes / MB


def dense_voxel_bytes(dims, features: int) -> int:
    """Hypothetical message carrying the full (X, Y, Z, F) f32 volume."""
    X, Y, Z = dims
    return X * Y * Z * features * FLOAT_BYTES


def two_plane_bytes(dims, features: int) -> int:
    """Dense xz + yz planes in f32."""
    X, Y, Z = dims
    return (X * Z + Y * Z) * features * FLOAT_BYTES


def plane_volume_ratio(rate: float, n_cells: int) -> float:
    """Closed-form CV(r) / CV(0) for one plane of ``n_cells`` cells."""
    return kept_count(n_cells, rate) / n_cells


def message_volume_ratio(rate: float, dims) -> float:
    """CV(r) / CV(0) for an xz + yz message on grid ``dims``."""
    X, Y, Z = dims
    return (kept_count(X * Z, rate) + kept_count(Y * Z, rate)) / (X * Z + Y * Z)
