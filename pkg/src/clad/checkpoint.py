"""Binary checkpoint format.

Layout: ``b"CLOSR1\\n"``, a little-endian uint32 header length, the UTF-8
JSON header, then every parameter tensor as little-endian float32 in
declaration order (row-major), then one centroid vector per head if present.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from clad.data import FeatureScaler
from clad.errors import DataError
from clad.inference import CentroidSet
from clad.model import ModelConfig, NetworkParameters

MAGIC = b"CLOSR1\n"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass(eq=False)
class Checkpoint:
    params: NetworkParameters
    class_names: tuple[str, ...]
    scaler: FeatureScaler
    centroids: CentroidSet | None = None
    head_classes: tuple[int, ...] = (0,)
    loss: dict = field(default_factory=dict)
    run_config: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "model_config": self.params.config.to_dict(),
            "class_names": list(self.class_names),
            "scaler": self.scaler.to_dict(),
            "centroids_present": self.centroids is not None,
            "head_classes": list(self.head_classes),
            "loss": self.loss,
            "run_config": self.run_config,
        }


def round_to_f32(p: NetworkParameters) -> NetworkParameters:
    """Parameters as they will read back from a checkpoint."""
    return NetworkParameters(p.config, [t.astype(_F32).astype(np.float64) for t in p.tensors])


def to_bytes(ck: Checkpoint) -> bytes:
    header = json.dumps(ck.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    parts += [np.ascontiguousarray(t, dtype=_F32).tobytes() for t in ck.params.tensors]
    if ck.centroids is not None:
        parts += [np.ascontiguousarray(v, dtype=_F32).tobytes() for v in ck.centroids.vectors]
    return b"".join(parts)


def save(ck: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ck))


def from_bytes(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise DataError("not a checkpoint (bad magic bytes)")
    off = len(MAGIC)
    if len(blob) < off + 4:
        raise DataError("checkpoint truncated")
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    if off + hlen > len(blob):
        raise DataError("checkpoint truncated")
    try:
        header = json.loads(blob[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt checkpoint header: {exc}") from None
    off += hlen
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {header.get('format_version')}")
    cfg = ModelConfig(**header["model_config"])

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        if off + 4 * n > len(blob):
            raise DataError("checkpoint truncated")
        arr = np.frombuffer(blob, dtype=_F32, count=n, offset=off).astype(np.float64).reshape(shape)
        off += 4 * n
        return arr

    params = NetworkParameters(cfg, [take(s) for s in cfg.shapes()])
    head_classes = tuple(header.get("head_classes", range(cfg.n_heads)))
    centroids = None
    if header["centroids_present"]:
        centroids = CentroidSet([take((cfg.f_o,)) for _ in range(cfg.n_heads)], "centroid", head_classes)
    if off != len(blob):
        raise DataError("checkpoint has trailing bytes")
    return Checkpoint(
        params=params,
        class_names=tuple(header["class_names"]),
        scaler=FeatureScaler.from_dict(header["scaler"]),
        centroids=centroids,
        head_classes=head_classes,
        loss=header.get("loss", {}),
        run_config=header.get("run_config", {}),
    )


def load(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such checkpoint: {path}")
    return from_bytes(path.read_bytes())
