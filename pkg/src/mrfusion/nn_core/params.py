"""Named parameter store and binary checkpoint I/O.

Checkpoint layout (all integers little-endian u64, values little-endian
float32, C order):

    b"MRFW1"
    count
    count * [ name_len, name (UTF-8), rank, rank * extent, raw values ]
    flag byte: 0 = no optimizer state, 1 = present
    if present:
        step
        entry_count
        entry_count * [ name_len, name, raw m values, raw v values ]

Optimizer entries cover exactly the trainable parameters; their shapes are
looked up from the main section, so names must match. Writing is ordered by
parameter registration, which makes checkpoints byte-identical across runs
with identical seeds.
"""

import struct

import numpy as np

MAGIC = b"MRFW1"


class CheckpointError(ValueError):
    pass


class ParamSet:
    """Flat dict of named arrays plus Adam state for the trainable ones."""

    def __init__(self):
        self.values = {}
        self.trainable = []
        self.adam_m = {}
        self.adam_v = {}
        self.step = 0

    def add(self, name, value, trainable=True):
        if name in self.values:
            raise ValueError(f"duplicate parameter {name!r}")
        self.values[name] = value
        if trainable:
            self.trainable.append(name)
            self.adam_m[name] = np.zeros_like(value)
            self.adam_v[name] = np.zeros_like(value)
        return value

    def copy_values(self):
        """Deep copy of all values, for best-epoch snapshots."""
        return {name: v.copy() for name, v in self.values.items()}

    def set_values(self, snapshot):
        for name, v in snapshot.items():
            self.values[name] = v.copy()

    def n_parameters(self):
        return sum(v.size for v in self.values.values())

    # -- checkpoint I/O ----------------------------------------------------

    def save(self, path, with_optimizer=True):
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(self.values)))
            for name, value in self.values.items():
                _write_name(fh, name)
                fh.write(struct.pack("<Q", value.ndim))
                for extent in value.shape:
                    fh.write(struct.pack("<Q", extent))
                fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())
            if with_optimizer:
                fh.write(b"\x01")
                fh.write(struct.pack("<Q", self.step))
                fh.write(struct.pack("<Q", len(self.trainable)))
                for name in self.trainable:
                    _write_name(fh, name)
                    fh.write(np.ascontiguousarray(
                        self.adam_m[name], dtype="<f4").tobytes())
                    fh.write(np.ascontiguousarray(
                        self.adam_v[name], dtype="<f4").tobytes())
            else:
                fh.write(b"\x00")

    def load(self, path):
        """Restore values (and optimizer state, if stored) in place.

        The checkpoint must carry exactly this set's parameter names with
        matching shapes; anything else raises CheckpointError.
        """
        values, opt = read_checkpoint(path)
        if set(values) != set(self.values):
            missing = sorted(set(self.values) - set(values))
            extra = sorted(set(values) - set(self.values))
            raise CheckpointError(
                f"parameter names mismatch (missing {missing}, extra {extra})")
        for name, stored in values.items():
            if stored.shape != self.values[name].shape:
                raise CheckpointError(
                    f"{name}: stored shape {stored.shape} != "
                    f"expected {self.values[name].shape}")
            self.values[name] = stored
        if opt is not None:
            step, m, v = opt
            if set(m) != set(self.trainable):
                raise CheckpointError("optimizer state names mismatch")
            self.step = step
            self.adam_m = m
            self.adam_v = v


def _write_name(fh, name):
    raw = name.encode("utf-8")
    fh.write(struct.pack("<Q", len(raw)))
    fh.write(raw)


def _read_exact(fh, n, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return raw


def _read_u64(fh, what):
    return struct.unpack("<Q", _read_exact(fh, 8, what))[0]


def _read_name(fh):
    n = _read_u64(fh, "name length")
    if n > 4096:
        raise CheckpointError(f"implausible name length {n}")
    return _read_exact(fh, n, "name").decode("utf-8")


def read_checkpoint(path):
    """Parse a checkpoint file.

    Returns (values, optimizer) where values is {name: float32 array} in
    file order and optimizer is None or (step, m_dict, v_dict).
    """
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"bad magic in {path}")
        count = _read_u64(fh, "parameter count")
        values = {}
        for _ in range(count):
            name = _read_name(fh)
            rank = _read_u64(fh, "rank")
            if rank > 8:
                raise CheckpointError(f"implausible rank {rank} for {name!r}")
            shape = tuple(_read_u64(fh, "extent") for _ in range(rank))
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read_exact(fh, 4 * size, f"values of {name!r}")
            values[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        flag = _read_exact(fh, 1, "optimizer flag")
        if flag == b"\x00":
            return values, None
        if flag != b"\x01":
            raise CheckpointError(f"bad optimizer flag byte {flag!r}")
        step = _read_u64(fh, "step")
        n_entries = _read_u64(fh, "optimizer entry count")
        m, v = {}, {}
        for _ in range(n_entries):
            name = _read_name(fh)
            if name not in values:
                raise CheckpointError(f"optimizer entry {name!r} has no value")
            size = values[name].size
            shape = values[name].shape
            m[name] = np.frombuffer(
                _read_exact(fh, 4 * size, f"m of {name!r}"),
                dtype="<f4").reshape(shape).copy()
            v[name] = np.frombuffer(
                _read_exact(fh, 4 * size, f"v of {name!r}"),
                dtype="<f4").reshape(shape).copy()
        return values, (step, m, v)
