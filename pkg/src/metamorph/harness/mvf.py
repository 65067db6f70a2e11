"""MVF container: one grid field per file, bit-exact roundtrips.

Layout: magic ``MVF1``, little-endian uint32 header length, UTF-8 JSON
header, raw little-endian float64 payload in row-major node order. The
header carries the manifold kind (or a deformation tag), the grid shape
and the payload length in bytes; readers validate the header before
touching the payload.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import MetamorphError
from ..field import Deformation, GridSpec, ManifoldImage
from ..manifold import ManifoldKind

MAGIC = b"MVF1"


class FormatError(MetamorphError, ValueError):
    """Malformed or truncated MVF file."""


def _encode(header: dict, payload: np.ndarray) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    if len(body) != header["payload_len"]:
        raise FormatError("payload length does not match header")
    return MAGIC + struct.pack("<I", len(head)) + head + body


def _decode(blob: bytes):
    if blob[:4] != MAGIC:
        raise FormatError("bad magic (not an MVF file)")
    if len(blob) < 8:
        raise FormatError("truncated header")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise FormatError("truncated header")
    header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    body = blob[8 + hlen :]
    if header.get("endianness") != "little" or header.get("dtype") != "f64":
        raise FormatError("unsupported payload encoding")
    if len(body) != header["payload_len"]:
        raise FormatError(
            f"payload length {len(body)} does not match header {header['payload_len']}"
        )
    payload = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return header, payload


def image_bytes(img: ManifoldImage) -> bytes:
    header = {
        "content": "image",
        "kind": img.kind.to_json(),
        "shape": list(img.grid.shape),
        "payload_len": img.values.size * 8,
        "endianness": "little",
        "dtype": "f64",
    }
    return _encode(header, img.values)


def write_image(img: ManifoldImage, path: str | os.PathLike):
    with open(path, "wb") as fh:
        fh.write(image_bytes(img))


def read_image(path: str | os.PathLike) -> ManifoldImage:
    with open(path, "rb") as fh:
        header, payload = _decode(fh.read())
    if header.get("content") != "image":
        raise FormatError(f"expected an image file, found {header.get('content')!r}")
    kind = ManifoldKind.from_json(header["kind"])
    grid = GridSpec(tuple(header["shape"]))
    return ManifoldImage(grid, kind, payload.reshape(grid.shape + (kind.payload_dim,)))


def write_deformation(defm: Deformation, path: str | os.PathLike):
    header = {
        "content": "deformation",
        "epsilon": defm.epsilon,
        "shape": list(defm.grid.shape),
        "payload_len": defm.displacement.size * 8,
        "endianness": "little",
        "dtype": "f64",
    }
    with open(path, "wb") as fh:
        fh.write(_encode(header, defm.displacement))


def read_deformation(path: str | os.PathLike) -> Deformation:
    with open(path, "rb") as fh:
        header, payload = _decode(fh.read())
    if header.get("content") != "deformation":
        raise FormatError(f"expected a deformation file, found {header.get('content')!r}")
    grid = GridSpec(tuple(header["shape"]))
    u = payload.reshape(grid.shape + (grid.ndim,))
    return Deformation(grid, u, epsilon=float(header["epsilon"]), validate=False)
