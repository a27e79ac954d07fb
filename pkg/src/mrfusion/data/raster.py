"""Flat binary raster container.

Layout: magic "MRRAST1\\n", one ASCII header line "h w c dtype\\n" with
dtype f32 or i32, then the row-major little-endian payload, nothing after.
Round trips are bitwise lossless.
"""

import numpy as np

MAGIC = b"MRRAST1\n"
_DTYPE_TAGS = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4")}
_MAX_EXTENT = 1 << 31


class RasterFormatError(ValueError):
    pass


def write_raster(path, array):
    """Store (H, W, C) or (H, W) float or integer data; floats become f32,
    integers i32 (range-checked)."""
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise RasterFormatError(f"raster must be 2D or 3D, got {arr.shape}")
    if arr.size == 0:
        raise RasterFormatError(f"empty raster {arr.shape}")
    if arr.dtype.kind == "f":
        tag = "f32"
    elif arr.dtype.kind in "iu":
        tag = "i32"
        if arr.size and (arr.min() < -(2 ** 31) or arr.max() >= 2 ** 31):
            raise RasterFormatError("integer raster exceeds 32-bit range")
    else:
        raise RasterFormatError(f"unsupported raster dtype {arr.dtype}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{h} {w} {c} {tag}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr, dtype=_DTYPE_TAGS[tag]).tobytes())


def read_raster(path):
    """Returns (H, W, C) float32 or int32 data."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise RasterFormatError(f"bad magic in {path}")
        header = bytearray()
        while not header.endswith(b"\n"):
            byte = fh.read(1)
            if not byte:
                raise RasterFormatError(f"unterminated header in {path}")
            header += byte
            if len(header) > 128:
                raise RasterFormatError(f"oversized header in {path}")
        fields = header.decode("ascii", errors="replace").split()
        if len(fields) != 4:
            raise RasterFormatError(f"malformed header {bytes(header)!r}")
        try:
            h, w, c = (int(v) for v in fields[:3])
        except ValueError:
            raise RasterFormatError(f"non-integer extents in {path}") from None
        tag = fields[3]
        if tag not in _DTYPE_TAGS:
            raise RasterFormatError(f"unknown dtype tag {tag!r}")
        if min(h, w, c) < 1 or max(h, w, c) >= _MAX_EXTENT or \
                h * w * c >= _MAX_EXTENT:
            raise RasterFormatError(f"extent overflow {h}x{w}x{c}")
        dtype = _DTYPE_TAGS[tag]
        expected = h * w * c * dtype.itemsize
        payload = fh.read(expected)
        if len(payload) != expected:
            raise RasterFormatError(
                f"truncated payload in {path}: got {len(payload)} of "
                f"{expected} bytes")
        if fh.read(1):
            raise RasterFormatError(f"trailing bytes after payload in {path}")
    native = np.float32 if tag == "f32" else np.int32
    return np.frombuffer(payload, dtype=dtype).reshape(h, w, c).astype(native)
