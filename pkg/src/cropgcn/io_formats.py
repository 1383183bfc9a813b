"""Little-endian binary containers for scenes, label rasters and feature tensors.

Scene (``.scs``)::

    0   4   magic "SCS1"
    4   1   flags (bit 0: validity mask present)
    5   16  u32 T, B, H, W
    21  ... f32 reflectance [t][b][y][x]
        ... u8 validity [t][y][x]            (only when flag bit 0 is set)

Label (``.msk``)::

    0   4   magic "MSK1"
    4   8   u32 H, W
    12  ... u8 values in {0, 1, 255}

Tensor (``.tns``)::

    0   4   magic "TNS1"
    4   4   u32 rank
    8   4r  u32 dims[rank]
    ... f32 payload, C order
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .preprocess import SceneSeries

SCENE_MAGIC = b"SCS1"
LABEL_MAGIC = b"MSK1"
TENSOR_MAGIC = b"TNS1"
SCENE_HEADER = 21
LABEL_HEADER = 12


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _need(data: bytes, end: int, what: str) -> None:
    if len(data) < end:
        raise FormatError(f"truncated {what}: need {end} bytes, file has {len(data)}", offset=len(data))


def _no_trailing(data: bytes, end: int) -> None:
    if len(data) > end:
        raise FormatError(f"{len(data) - end} unexpected trailing bytes", offset=end)


def scene_file_size(t: int, b: int, h: int, w: int, with_validity: bool = False) -> int:
    return SCENE_HEADER + 4 * t * b * h * w + (t * h * w if with_validity else 0)


def scene_to_bytes(scene: SceneSeries) -> bytes:
    t, b, h, w = scene.images.shape
    flags = 1 if scene.validity is not None else 0
    parts = [SCENE_MAGIC, struct.pack("<B4I", flags, t, b, h, w), scene.images.astype("<f4").tobytes()]
    if scene.validity is not None:
        parts.append(scene.validity.astype(np.uint8).tobytes())
    return b"".join(parts)


def scene_from_bytes(data: bytes, name: str = "") -> SceneSeries:
    _need(data, SCENE_HEADER, "scene header")
    if data[:4] != SCENE_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {SCENE_MAGIC!r}", offset=0)
    flags, t, b, h, w = struct.unpack_from("<B4I", data, 4)
    if flags & ~1:
        raise FormatError(f"unknown flag bits {flags:#04x}", offset=4)
    if min(t, b, h, w) < 1:
        raise FormatError(f"scene dimensions must be positive, got T={t} B={b} H={h} W={w}", offset=5)
    n = t * b * h * w
    end = SCENE_HEADER + 4 * n
    _need(data, end, "reflectance payload")
    images = np.frombuffer(data, dtype="<f4", count=n, offset=SCENE_HEADER).reshape(t, b, h, w)
    if not np.isfinite(images).all():
        bad = int(np.flatnonzero(~np.isfinite(images.ravel()))[0])
        raise FormatError("non-finite reflectance value", offset=SCENE_HEADER + 4 * bad)
    validity = None
    if flags & 1:
        v_end = end + t * h * w
        _need(data, v_end, "validity mask")
        raw = np.frombuffer(data, dtype=np.uint8, count=t * h * w, offset=end)
        if np.any(raw > 1):
            bad = int(np.flatnonzero(raw > 1)[0])
            raise FormatError(f"validity byte {raw[bad]} is not 0 or 1", offset=end + bad)
        validity = raw.reshape(t, h, w).astype(bool)
        end = v_end
    _no_trailing(data, end)
    return SceneSeries(images.astype(np.float64), validity=validity, name=name)


def write_scene(path, scene: SceneSeries) -> None:
    atomic_write(path, scene_to_bytes(scene))


def read_scene(path) -> SceneSeries:
    path = Path(path)
    return scene_from_bytes(path.read_bytes(), name=path.stem)


def label_to_bytes(label) -> bytes:
    label = np.asarray(label)
    if label.ndim != 2:
        raise InputError(f"label must be 2-D, got shape {label.shape}")
    if not np.isin(label, (0, 1, 255)).all():
        raise InputError("label values must be 0, 1 or 255")
    h, w = label.shape
    return LABEL_MAGIC + struct.pack("<2I", h, w) + label.astype(np.uint8).tobytes()


def label_from_bytes(data: bytes) -> np.ndarray:
    _need(data, LABEL_HEADER, "label header")
    if data[:4] != LABEL_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {LABEL_MAGIC!r}", offset=0)
    h, w = struct.unpack_from("<2I", data, 4)
    end = LABEL_HEADER + h * w
    _need(data, end, "label payload")
    _no_trailing(data, end)
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=LABEL_HEADER)
    bad = ~np.isin(raw, (0, 1, 255))
    if bad.any():
        pos = int(np.flatnonzero(bad)[0])
        raise FormatError(f"invalid label value {raw[pos]}", offset=LABEL_HEADER + pos)
    return raw.reshape(h, w).copy()


def write_label(path, label) -> None:
    atomic_write(path, label_to_bytes(label))


def read_label(path) -> np.ndarray:
    return label_from_bytes(Path(path).read_bytes())


def tensor_to_bytes(tensor) -> bytes:
    arr = np.asarray(tensor)
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim) + np.asarray(arr.shape, dtype="<u4").tobytes()
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    _need(data, 8, "tensor header")
    if data[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {TENSOR_MAGIC!r}", offset=0)
    (rank,) = struct.unpack_from("<I", data, 4)
    _need(data, 8 + 4 * rank, "tensor dims")
    dims = tuple(int(d) for d in np.frombuffer(data, dtype="<u4", count=rank, offset=8))
    start = 8 + 4 * rank
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    end = start + 4 * n
    _need(data, end, "tensor payload")
    _no_trailing(data, end)
    return np.frombuffer(data, dtype="<f4", count=n, offset=start).reshape(dims).astype(np.float64)


def write_tensor(path, tensor) -> None:
    atomic_write(path, tensor_to_bytes(tensor))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


def load_labeled_scene(scene_path, label_path=None) -> SceneSeries:
    """Read a scene and attach the label stored next to it (same stem, ``.msk``)."""
    scene_path = Path(scene_path)
    label_path = Path(label_path) if label_path else scene_path.with_suffix(".msk")
    scene = read_scene(scene_path)
    label = read_label(label_path)
    return SceneSeries(scene.images, scene.validity, label, name=scene.name)
