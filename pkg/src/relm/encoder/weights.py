"""Encoder weight container, random initialization and JSON persistence.

The file layout is:

    {"config": {...}, "layers": [[{"shape": [r, c], "data": [...]}, ...], ...]}

with ``data`` holding row-major float values.  Python's JSON writer emits
shortest round-trip float literals, so save followed by load reproduces
every weight bitwise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import EncoderConfig, ShapeMismatch


class FormatError(ValueError):
    """Raised for unreadable or structurally wrong weight files."""


class ShapeError(ValueError):
    """Raised when declared shapes disagree with data or the layer chain."""


@dataclass
class GnnWeights:
    """Per-layer, per-hop weight matrices plus the generating config."""

    config: EncoderConfig
    layers: list[list[np.ndarray]]

    def __post_init__(self) -> None:
        cfg = self.config
        if len(self.layers) != cfg.num_layers:
            raise ShapeError(
                f"expected {cfg.num_layers} layers, got {len(self.layers)}"
            )
        for layer, (in_dim, out_dim) in enumerate(cfg.layer_dims()):
            hops = self.layers[layer]
            if len(hops) != cfg.hops_per_layer + 1:
                raise ShapeError(
                    f"layer {layer} needs {cfg.hops_per_layer + 1} hop matrices, "
                    f"got {len(hops)}"
                )
            for k, w in enumerate(hops):
                if w.shape != (in_dim, out_dim):
                    raise ShapeError(
                        f"layer {layer} hop {k} has shape {w.shape}, "
                        f"expected {(in_dim, out_dim)}"
                    )

    def copy(self) -> "GnnWeights":
        return GnnWeights(
            config=self.config,
            layers=[[w.copy() for w in hops] for hops in self.layers],
        )

    def fingerprint(self) -> str:
        """Stable hash of config plus weight bytes, for index staleness checks."""
        digest = hashlib.sha256()
        digest.update(json.dumps(_config_to_dict(self.config), sort_keys=True).encode())
        for hops in self.layers:
            for w in hops:
                digest.update(np.ascontiguousarray(w, dtype=np.float64).tobytes())
        return digest.hexdigest()


def random_init(config: EncoderConfig, seed: int) -> GnnWeights:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), per hop matrix."""
    rng = np.random.default_rng(seed)
    layers = []
    for in_dim, out_dim in config.layer_dims():
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        layers.append(
            [
                rng.uniform(-bound, bound, size=(in_dim, out_dim))
                for _ in range(config.hops_per_layer + 1)
            ]
        )
    return GnnWeights(config=config, layers=layers)


def _config_to_dict(config: EncoderConfig) -> dict:
    return {
        "feature_dim": config.feature_dim,
        "embed_dim": config.embed_dim,
        "num_layers": config.num_layers,
        "hops_per_layer": config.hops_per_layer,
        "activation": config.activation,
    }


def _config_from_dict(data: dict) -> EncoderConfig:
    expected = {"feature_dim", "embed_dim", "num_layers", "hops_per_layer", "activation"}
    if not isinstance(data, dict) or set(data) != expected:
        raise FormatError(
            f"weight config must have exactly the keys {sorted(expected)}"
        )
    try:
        return EncoderConfig(**data)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad encoder config: {exc}") from exc


def save_weights(weights: GnnWeights, path: str | Path) -> None:
    payload = {
        "config": _config_to_dict(weights.config),
        "layers": [
            [
                {"shape": list(w.shape), "data": [float(v) for v in w.ravel()]}
                for w in hops
            ]
            for hops in weights.layers
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> GnnWeights:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"weight file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or set(payload) != {"config", "layers"}:
        raise FormatError("weight file must have exactly 'config' and 'layers'")
    config = _config_from_dict(payload["config"])
    raw_layers = payload["layers"]
    if not isinstance(raw_layers, list):
        raise FormatError("'layers' must be a list")
    layers = []
    for layer_idx, hops in enumerate(raw_layers):
        if not isinstance(hops, list):
            raise FormatError(f"layer {layer_idx} must be a list of matrices")
        matrices = []
        for hop_idx, entry in enumerate(hops):
            if not isinstance(entry, dict) or set(entry) != {"shape", "data"}:
                raise FormatError(
                    f"layer {layer_idx} hop {hop_idx} must have 'shape' and 'data'"
                )
            shape = entry["shape"]
            data = entry["data"]
            if (
                not isinstance(shape, list)
                or len(shape) != 2
                or not all(isinstance(s, int) and s > 0 for s in shape)
            ):
                raise FormatError(
                    f"layer {layer_idx} hop {hop_idx} shape must be two positive ints"
                )
            if not isinstance(data, list) or len(data) != shape[0] * shape[1]:
                raise ShapeError(
                    f"layer {layer_idx} hop {hop_idx} declares shape {shape} "
                    f"but carries {len(data) if isinstance(data, list) else '?'} values"
                )
            try:
                w = np.array(data, dtype=np.float64).reshape(shape)
            except (TypeError, ValueError) as exc:
                raise FormatError(
                    f"layer {layer_idx} hop {hop_idx} data is not numeric: {exc}"
                ) from exc
            matrices.append(w)
        layers.append(matrices)
    try:
        return GnnWeights(config=config, layers=layers)
    except ShapeError:
        raise
    except ShapeMismatch as exc:
        raise ShapeError(str(exc)) from exc
