"""SFNM checkpoint container.

Layout (little-endian):
    "SFNM" | version u8 | dtype code u8 | header length u32 | header JSON
    | tensor count u32 | per tensor: name length u16, name, rank u8, extents u32 × rank, scalars

The header JSON holds the ModelConfig under "model" and the training split under "split"
(null for a model that was never trained).
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from ..binio import DTYPE_CODES, ByteReader, ByteWriter, dtype_code
from ..config import ModelConfig
from ..errors import ExtentOverflowError, FormatError
from .backbone import SfNetModel, build_model
from .pca import PcaModel

logger = logging.getLogger("sfnet.model")

MAGIC = b"SFNM"
VERSION = 1
MAX_RANK = 8


def _table(model: SfNetModel) -> list[tuple[str, np.ndarray]]:
    entries = [(name, t.data) for name, t in model.named_tensors()]
    entries += [
        ("pca.mean", model.pca.mean),
        ("pca.components", model.pca.components),
        ("pca.explained_variance", model.pca.explained_variance),
    ]
    return entries


def encode_checkpoint(model: SfNetModel) -> bytes:
    dtype = model.config.precision.dtype
    code = dtype_code(dtype)
    wire = DTYPE_CODES[code]
    out = ByteWriter()
    out.raw(MAGIC)
    out.u8(VERSION)
    out.u8(code)
    split = None
    if model.split_seed is not None:
        split = {"seed": model.split_seed, "train_fraction": model.train_fraction}
    header = {"model": model.config.model_dump(mode="json"), "split": split}
    raw_header = json.dumps(header, sort_keys=True).encode("utf-8")
    out.u32(len(raw_header))
    out.raw(raw_header)
    table = _table(model)
    out.u32(len(table))
    for name, arr in table:
        out.text(name)
        out.u8(arr.ndim)
        for extent in arr.shape:
            out.u32(extent)
        out.array(arr, wire)
    return out.getvalue()


def decode_checkpoint(payload: bytes) -> SfNetModel:
    reader = ByteReader(payload, "SFNM checkpoint")
    reader.magic(MAGIC)
    version = reader.u8()
    if version != VERSION:
        raise FormatError(f"SFNM checkpoint: unsupported version {version}")
    code = reader.u8()
    if code not in DTYPE_CODES:
        raise FormatError(f"SFNM checkpoint: unknown dtype code {code}")
    wire = DTYPE_CODES[code]
    raw_header = reader.take(reader.u32())
    try:
        header = json.loads(raw_header.decode("utf-8"))
        config = ModelConfig(**header["model"])
        split = header["split"]
        if split is not None:
            split = (int(split["seed"]), float(split["train_fraction"]))
    except (ValueError, TypeError, KeyError, ValidationError) as exc:
        raise FormatError(f"SFNM checkpoint: invalid header ({exc})") from exc
    if config.precision.dtype != wire.newbyteorder("="):
        raise FormatError("SFNM checkpoint: dtype code disagrees with the stored precision")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.text()
        rank = reader.u8()
        if rank > MAX_RANK:
            raise ExtentOverflowError(f"SFNM checkpoint: tensor '{name}' has rank {rank}")
        shape = tuple(reader.u32() for _ in range(rank))
        tensors[name] = reader.array(shape, wire)
    reader.finish()

    try:
        pca = PcaModel(tensors.pop("pca.mean"), tensors.pop("pca.components"),
                       tensors.pop("pca.explained_variance"))
        aux_channels = tensors["aux_stem.kernels"].shape[1]
    except KeyError as exc:
        raise FormatError(f"SFNM checkpoint: missing tensor {exc}") from exc

    model = build_model(config, pca, aux_channels)
    expected = dict(model.named_tensors())
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise FormatError(f"SFNM checkpoint: tensor table mismatch (missing={missing}, unexpected={extra})")
    for name, t in expected.items():
        if tensors[name].shape != t.shape:
            raise FormatError(
                f"SFNM checkpoint: '{name}' has shape {list(tensors[name].shape)}, expected {list(t.shape)}"
            )
        t.assign(tensors[name])
    if split is not None:
        model.split_seed, model.train_fraction = split
    return model


def save_checkpoint(model: SfNetModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode_checkpoint(model)
    path.write_bytes(payload)
    logger.info("checkpoint.save path=%s bytes=%d", path, len(payload))


def load_checkpoint(path: str | Path) -> SfNetModel:
    model = decode_checkpoint(Path(path).read_bytes())
    logger.info("checkpoint.load path=%s", path)
    return model
