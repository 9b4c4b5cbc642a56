"""Generative manufacturing configuration engine (Python bindings)."""

from ._core import (
    ASSET_TYPES,
    CAPACITY_CLASSES,
    MAX_PER_CELL,
    STATIONS,
    CheckpointError,
    Error,
    InvalidInput,
    IoError,
    Model,
    capacity,
    daydream,
    decode,
    encode,
    format_class,
    frechet_distance,
    parse_inquiry,
    schedule,
)

__all__ = [
    "ASSET_TYPES",
    "CAPACITY_CLASSES",
    "MAX_PER_CELL",
    "STATIONS",
    "CheckpointError",
    "Error",
    "InvalidInput",
    "IoError",
    "Model",
    "capacity",
    "daydream",
    "decode",
    "encode",
    "format_class",
    "frechet_distance",
    "parse_inquiry",
    "schedule",
]
