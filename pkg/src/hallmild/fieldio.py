"""Binary field files with a JSON sidecar.

Layout (little endian):

    magic   4s   b"HMF1"
    version u32  1
    layout  u32  0 = spatial, 1 = space-time
    n       u32  grid points per axis
    ncomp   u32  components
    L       f64  box length
    [n_t u32, T f64]            space-time only
    coefficients complex128     C order, shape ([n_t,] ncomp, n, n, n)

The sidecar ``<file>.json`` carries free-form metadata and the sha256 of the
binary file.
"""

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .spectral import Grid, SpaceTimeField, SpectralVectorField

MAGIC = b"HMF1"
VERSION = 1
_HEAD = struct.Struct("<4sIIIId")
_TIME = struct.Struct("<Id")


class FieldFormatError(ValueError):
    pass


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_bytes(path, data):
    """Write to a temporary file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_field(field):
    if isinstance(field, SpaceTimeField):
        c = field.coeffs
        head = _HEAD.pack(MAGIC, VERSION, 1, field.grid.n, c.shape[1], field.grid.box_length)
        head += _TIME.pack(field.n_t, field.t_final)
    elif isinstance(field, SpectralVectorField):
        c = field.coeffs.reshape((-1,) + field.grid.shape)
        head = _HEAD.pack(MAGIC, VERSION, 0, field.grid.n, c.shape[0], field.grid.box_length)
    else:
        raise TypeError(f"cannot encode {type(field).__name__}")
    return head + np.ascontiguousarray(c, dtype="<c16").tobytes()


def decode_field(data):
    if len(data) < _HEAD.size:
        raise FieldFormatError("file too short for a field header")
    magic, version, layout, n, ncomp, box = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FieldFormatError(f"unsupported version {version}")
    offset = _HEAD.size
    grid = Grid(int(n), float(box))
    if layout == 1:
        if len(data) < offset + _TIME.size:
            raise FieldFormatError("truncated space-time header")
        n_t, t_final = _TIME.unpack_from(data, offset)
        offset += _TIME.size
        shape = (n_t, ncomp, n, n, n)
    elif layout == 0:
        shape = (ncomp, n, n, n)
    else:
        raise FieldFormatError(f"unknown layout tag {layout}")
    count = int(np.prod(shape))
    if len(data) != offset + 16 * count:
        raise FieldFormatError(f"payload size {len(data) - offset} does not match shape {shape}")
    c = np.frombuffer(data, dtype="<c16", count=count, offset=offset).reshape(shape).astype(np.complex128)
    if layout == 1:
        return SpaceTimeField(grid, np.linspace(0.0, t_final, n_t), c)
    return SpectralVectorField(grid, c)


def write_field(path, field, meta=None):
    """Write the binary file and its sidecar; returns the sha256 of the binary."""
    atomic_write_bytes(path, encode_field(field))
    digest = sha256_file(path)
    side = {"format": "HMF1", "sha256": digest}
    side.update(meta or {})
    atomic_write_text(path + ".json", json.dumps(side, indent=2, sort_keys=True) + "\n")
    return digest


def read_field(path):
    with open(path, "rb") as fh:
        return decode_field(fh.read())


def read_meta(path):
    side = path + ".json"
    if not os.path.exists(side):
        return {}
    with open(side, encoding="utf-8") as fh:
        return json.load(fh)
