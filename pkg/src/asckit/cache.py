"""Binary feature cache holding extracted spectrogram tensors.

Layout (all little-endian):
  magic "ASCF" | version u16 | frontend id u8 | F u32 | T u32 | C u32
  then one record per segment:
  label u8 | tag length u8 | tag UTF-8 bytes | F*T*C float32 row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IOFailure, ShapeMismatch
from .frontend import FRONTENDS

_MAGIC = b"ASCF"
_VERSION = 1
_FRONTEND_IDS = {name: i for i, name in enumerate(FRONTENDS)}


@dataclass
class FeatureSet:
    """In-memory view of a feature cache."""

    frontend: str
    features: np.ndarray  # [N, F, T, C] float32
    labels: np.ndarray  # [N] int
    devices: list[str]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


def write_cache(path, frontend: str, records) -> int:
    """Write (features [F,T,C], label, device_tag) records; returns count."""
    if frontend not in _FRONTEND_IDS:
        raise IOFailure(f"unknown frontend {frontend!r}")
    count = 0
    dims = None
    with open(path, "wb") as fh:
        for features, label, device in records:
            feats = np.asarray(features, dtype="<f4")
            if feats.ndim != 3:
                raise ShapeMismatch(f"expected F x T x C features, got {feats.shape}")
            if dims is None:
                dims = feats.shape
                fh.write(_MAGIC)
                fh.write(struct.pack("<HB3I", _VERSION, _FRONTEND_IDS[frontend], *dims))
            elif feats.shape != dims:
                raise ShapeMismatch(f"record shape {feats.shape} != cache dims {dims}")
            tag = str(device).encode("utf-8")
            if len(tag) > 255:
                raise IOFailure(f"device tag too long: {device!r}")
            fh.write(struct.pack("<BB", int(label), len(tag)))
            fh.write(tag)
            fh.write(feats.tobytes())
            count += 1
        if dims is None:
            raise IOFailure("refusing to write an empty feature cache")
    return count


def read_cache(path) -> FeatureSet:
    """Load a feature cache written by write_cache."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 19 or raw[:4] != _MAGIC:
        raise IOFailure(f"{path}: not a feature cache")
    version, frontend_id, f_dim, t_dim, c_dim = struct.unpack_from("<HB3I", raw, 4)
    if version != _VERSION:
        raise IOFailure(f"{path}: unsupported cache version {version}")
    names = {i: n for n, i in _FRONTEND_IDS.items()}
    if frontend_id not in names:
        raise IOFailure(f"{path}: unknown frontend id {frontend_id}")
    rec_floats = f_dim * t_dim * c_dim
    feats, labels, devices = [], [], []
    pos = 19
    while pos < len(raw):
        if pos + 2 > len(raw):
            raise IOFailure(f"{path}: truncated record header")
        label, tag_len = struct.unpack_from("<BB", raw, pos)
        pos += 2
        tag = raw[pos : pos + tag_len].decode("utf-8")
        pos += tag_len
        end = pos + rec_floats * 4
        if end > len(raw):
            raise IOFailure(f"{path}: truncated record payload")
        block = np.frombuffer(raw, dtype="<f4", count=rec_floats, offset=pos)
        feats.append(block.reshape(f_dim, t_dim, c_dim))
        labels.append(label)
        devices.append(tag)
        pos = end
    return FeatureSet(
        frontend=names[frontend_id],
        features=np.stack(feats),
        labels=np.asarray(labels, dtype=np.int64),
        devices=devices,
    )
