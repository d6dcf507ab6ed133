#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Model Container Module for the Masked RBM toolkit
This module reads and writes the MRBM model container.

Layout (little-endian):
    b"MRBM" | u16 format version | u32 header length | UTF-8 JSON header | tensor data
The header lists every tensor as {name, dtype: "f32", shape, offset}, with
offsets relative to the start of the tensor data.
"""

import hashlib
import json
import logging
import os
import struct

import numpy as np

from src.rbm.params import BetaRbmParams, BinaryShapeParams, MixedRbmParams
from src.utils.errors import FormatError

# Configure logging
logger = logging.getLogger(__name__)

MAGIC = b"MRBM"
FORMAT_VERSION = 1
PREFIX = struct.Struct("<4sHI")
KIND_BETA = "beta-rbm"
KIND_MIXED = "mixed-rbm"


def _named_tensors(params):
    if isinstance(params, MixedRbmParams):
        tensors = [(f"shape.{k}", v) for k, v in params.shape.blocks().items()]
        tensors += [(f"appearance.{k}", v) for k, v in params.appearance.blocks().items()]
        return KIND_MIXED, tensors
    if isinstance(params, BetaRbmParams):
        return KIND_BETA, list(params.blocks().items())
    raise TypeError(f"Cannot serialize {type(params).__name__}")


def serialize_model(params, metadata=None):
    """Encode parameters into container bytes.

    Args:
        params (BetaRbmParams or MixedRbmParams): The model.
        metadata (dict, optional): JSON-serializable provenance data.

    Returns:
        bytes: The container.
    """
    kind, tensors = _named_tensors(params)
    entries, chunks, offset = [], [], 0
    for name, value in tensors:
        data = np.ascontiguousarray(value, dtype="<f4").tobytes()
        entries.append({"name": name, "dtype": "f32", "shape": list(np.shape(value)), "offset": offset})
        chunks.append(data)
        offset += len(data)
    header = {"kind": kind, "metadata": metadata or {}, "tensors": entries}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)


def parse_header(blob):
    """Decode the header of container bytes.

    Returns:
        tuple: (header dict, byte offset of the tensor data).
    """
    if len(blob) < PREFIX.size:
        raise FormatError("Container is truncated")
    magic, version, header_length = PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"Bad magic bytes {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported container version {version}")
    start = PREFIX.size + header_length
    if start > len(blob):
        raise FormatError("Header length exceeds container size")
    try:
        header = json.loads(blob[PREFIX.size : start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed container header: {e}") from e
    if not isinstance(header, dict) or "tensors" not in header or "kind" not in header:
        raise FormatError("Container header lacks 'kind' or 'tensors'")
    return header, start


def parse_model(blob):
    """Decode container bytes into parameters.

    Returns:
        tuple: (params, header dict).
    """
    header, start = parse_header(blob)
    data = blob[start:]
    tensors = {}
    for entry in header["tensors"]:
        if entry.get("dtype") != "f32":
            raise FormatError(f"Tensor {entry.get('name')}: unsupported dtype {entry.get('dtype')}")
        shape = tuple(int(s) for s in entry["shape"])
        size = 4 * int(np.prod(shape, dtype=np.int64))
        offset = int(entry["offset"])
        if offset < 0 or offset + size > len(data):
            raise FormatError(f"Tensor {entry['name']} runs past the end of the container")
        tensors[entry["name"]] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=offset).reshape(shape).astype(np.float64)

    try:
        if header["kind"] == KIND_BETA:
            params = BetaRbmParams(**{name: tensors[name] for name in BetaRbmParams.BLOCKS})
        elif header["kind"] == KIND_MIXED:
            shape = BinaryShapeParams(**{name: tensors[f"shape.{name}"] for name in BinaryShapeParams.BLOCKS})
            appearance = BetaRbmParams(**{name: tensors[f"appearance.{name}"] for name in BetaRbmParams.BLOCKS})
            params = MixedRbmParams(shape=shape, appearance=appearance)
        else:
            raise FormatError(f"Unknown model kind {header['kind']!r}")
    except KeyError as e:
        raise FormatError(f"Container is missing tensor {e}") from e
    return params, header


def write_model(path, params, metadata=None):
    """Write parameters to a container file."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(serialize_model(params, metadata))
    logger.info(f"Wrote model to {path}")


def read_model(path):
    """Read a container file.

    Returns:
        tuple: (params, header dict).
    """
    if not os.path.isfile(path):
        raise FormatError(f"Model file not found: {path}")
    with open(path, "rb") as f:
        return parse_model(f.read())


def file_digest(path):
    """SHA-256 of a file, used for report provenance."""
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
