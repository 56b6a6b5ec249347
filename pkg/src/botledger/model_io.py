"""Binary model file serialization.

Layout, little-endian throughout:

    bytes 0-3   magic b"BOTW"
    bytes 4-7   format version (u32)
    bytes 8-11  metadata length in bytes (u32)
    ...         metadata: canonical UTF-8 JSON (model config, feature
                schema, window config, training summary)
    ...         raw float64 tensors, C order, in a fixed sequence:
                W_x, W_h, b, bn_gamma, bn_beta, bn_running_mean,
                bn_running_var, W_out, b_out

Tensor shapes are implied by the metadata's model config, so the reader can
verify the payload length exactly.  Unknown magic or version is rejected
rather than guessed at.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import WindowConfig
from .network import ModelConfig, ModelParams
from .schema import FeatureSchema

MAGIC = b"BOTW"
FORMAT_VERSION = 1

# Field order of the tensor payload; b_out travels as a one-element array.
TENSOR_FIELDS = (
    "W_x",
    "W_h",
    "b",
    "bn_gamma",
    "bn_beta",
    "bn_running_mean",
    "bn_running_var",
    "W_out",
    "b_out",
)


@dataclass(frozen=True)
class ModelBundle:
    """Everything needed to score a log exactly as the model was trained."""

    params: ModelParams
    config: ModelConfig
    schema: FeatureSchema
    window_config: WindowConfig
    training_summary: dict


def _tensor_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, d = cfg.hidden_dim, cfg.input_dim
    return {
        "W_x": (4 * h, d),
        "W_h": (4 * h, h),
        "b": (4 * h,),
        "bn_gamma": (d,),
        "bn_beta": (d,),
        "bn_running_mean": (d,),
        "bn_running_var": (d,),
        "W_out": (h,),
        "b_out": (1,),
    }


def save_model(path: str | Path, bundle: ModelBundle) -> None:
    metadata = {
        "model_config": bundle.config.to_dict(),
        "feature_schema": bundle.schema.to_dict(),
        "window_config": bundle.window_config.to_dict(),
        "training_summary": bundle.training_summary,
    }
    meta_bytes = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    shapes = _tensor_shapes(bundle.config)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for name in TENSOR_FIELDS:
            value = getattr(bundle.params, name)
            arr = np.asarray(value, dtype="<f8").reshape(shapes[name])
            fh.write(arr.tobytes(order="C"))


def load_model(path: str | Path) -> ModelBundle:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if len(blob) < 12:
        raise DataError(f"model file {path} is truncated")
    if blob[:4] != MAGIC:
        raise DataError(f"model file {path} has wrong magic (not a model file)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise DataError(
            f"model file {path} has unsupported format version {version}"
        )
    (meta_len,) = struct.unpack("<I", blob[8:12])
    meta_end = 12 + meta_len
    if len(blob) < meta_end:
        raise DataError(f"model file {path} is truncated inside metadata")
    try:
        metadata = json.loads(blob[12:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"model file {path} has corrupt metadata: {exc}") from exc
    for key in ("model_config", "feature_schema", "window_config", "training_summary"):
        if key not in metadata:
            raise DataError(f"model file {path} metadata lacks {key!r}")

    config = ModelConfig.from_dict(metadata["model_config"])
    schema = FeatureSchema.from_dict(metadata["feature_schema"])
    window_config = WindowConfig.from_dict(metadata["window_config"])

    shapes = _tensor_shapes(config)
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 8
    payload = blob[meta_end:]
    if len(payload) != expected:
        raise DataError(
            f"model file {path} tensor payload is {len(payload)} bytes, expected {expected}"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name in TENSOR_FIELDS:
        shape = shapes[name]
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(
            payload, dtype="<f8", count=count, offset=offset
        ).reshape(shape).copy()
        offset += count * 8
    params = ModelParams(
        W_x=tensors["W_x"],
        W_h=tensors["W_h"],
        b=tensors["b"],
        bn_gamma=tensors["bn_gamma"],
        bn_beta=tensors["bn_beta"],
        bn_running_mean=tensors["bn_running_mean"],
        bn_running_var=tensors["bn_running_var"],
        W_out=tensors["W_out"],
        b_out=float(tensors["b_out"][0]),
    )
    return ModelBundle(
        params=params,
        config=config,
        schema=schema,
        window_config=window_config,
        training_summary=metadata["training_summary"],
    )
