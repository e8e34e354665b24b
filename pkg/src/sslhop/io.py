"""Dataset ingestion, config files, and the binary model / feature formats.

Model file layout (little-endian)::

    magic      8 bytes  b"SSLHOP01"
    n_sections u64
    table      n_sections x (tag 4 bytes, offset u64, length u64)
    sections   CONF, TREE and optionally HEAD, back to back

Inside sections every real is a float64, every count a u64, and vectors and
matrices are prefixed by their u64 dimensions.
"""
import gzip
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import SSLError
from .llsr import LLSRModel
from .pixelhop import AGGREGATIONS, ChannelNode, HopConfig, HopTree, HopUnit, Status
from .saab import SaabKernels

MODEL_MAGIC = b"SSLHOP01"
FEATURE_MAGIC = b"SSLFEA01"
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray  # (n, height, width, channels), values in [0, 1]
    labels: np.ndarray | None = None
    class_count: int | None = None

    def __len__(self):
        return self.images.shape[0]


# ---------------------------------------------------------------- datasets

def _read_bytes(path):
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    try:
        with opener(path, "rb") as f:
            return f.read()
    except (OSError, EOFError) as exc:
        raise SSLError(f"cannot read {path}: {exc}") from None


def _parse_idx(raw, magic, ndim):
    if len(raw) < 4 + 4 * ndim or struct.unpack(">I", raw[:4])[0] != magic:
        raise SSLError("not an IDX file")
    dims = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    body = raw[4 + 4 * ndim :]
    count = int(np.prod(dims, dtype=np.int64))
    if len(body) != count:
        raise SSLError("truncated IDX file" if len(body) < count else "trailing bytes in IDX file")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path=None):
    """Read an IDX3 image file (and optional IDX1 labels); gzip is detected automatically."""
    pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES, 3)
    images = (pixels.astype(np.float64) / 255.0)[..., None]
    if labels_path is None:
        return Dataset(images)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS, 1).astype(np.int64)
    if labels.shape[0] != images.shape[0]:
        raise SSLError("label count mismatch")
    k = int(labels.max()) + 1 if labels.size else 0
    return Dataset(images, labels, k)


def _read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise SSLError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise SSLError(f"{path}: not a binary 8-bit PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval < 256:
        raise SSLError(f"{path}: only 8-bit PGM is supported")
    body = raw[pos + 1 : pos + 1 + width * height]
    if len(body) != width * height:
        raise SSLError(f"{path}: truncated PGM data")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).astype(np.float64) / maxval


def load_directory(root):
    """One subdirectory per class (sorted by name -> label), 8-bit ``.pgm`` files inside."""
    root = Path(root)
    classes = sorted(p for p in root.iterdir() if p.is_dir())
    if not classes:
        raise SSLError(f"{root}: no class subdirectories")
    images, labels = [], []
    for label, cls in enumerate(classes):
        for path in sorted(cls.glob("*.pgm")):
            images.append(_read_pgm(path))
            labels.append(label)
    if images and any(im.shape != images[0].shape for im in images):
        raise SSLError("images must share identical dimensions")
    arr = np.stack(images)[..., None] if images else np.empty((0, 0, 0, 1))
    return Dataset(arr, np.asarray(labels, dtype=np.int64), len(classes))


def load_dataset(images_path, labels_path=None):
    if Path(images_path).is_dir():
        if labels_path is not None:
            raise SSLError("--labels is not used with a directory dataset")
        return load_directory(images_path)
    return load_idx(images_path, labels_path)


# ---------------------------------------------------------------- config

def parse_config(text):
    """``key=value`` lines; keys are HopConfig fields plus ``head.ridge``.

    Returns ``(HopConfig, ridge)`` where ridge is None for the automatic choice.
    """
    types = {f.name: f.type for f in fields(HopConfig)}
    values, ridge = {}, None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SSLError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "head.ridge":
                ridge = None if value == "auto" else float(value)
            elif key not in types:
                raise SSLError(f"config line {lineno}: unknown key {key!r}")
            elif key == "aggregation":
                values[key] = value
            elif types[key] is int:
                values[key] = int(value)
            else:
                values[key] = float(value)
        except ValueError:
            raise SSLError(f"config line {lineno}: bad value for {key!r}") from None
    return HopConfig(**values), ridge


def format_config(config, ridge=None):
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(config)]
    lines.append(f"head.ridge={'auto' if ridge is None else repr(float(ridge))}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- binary helpers

class _Writer:
    def __init__(self):
        self.parts = []

    def u64(self, v):
        self.parts.append(struct.pack("<Q", v))

    def i64(self, v):
        self.parts.append(struct.pack("<q", v))

    def f64(self, v):
        self.parts.append(struct.pack("<d", v))

    def u8(self, v):
        self.parts.append(struct.pack("<B", v))

    def text(self, s):
        data = s.encode("utf-8")
        self.u64(len(data))
        self.parts.append(data)

    def vector(self, v):
        v = np.asarray(v, dtype="<f8")
        self.u64(v.shape[0])
        self.parts.append(v.tobytes())

    def matrix(self, m):
        m = np.asarray(m, dtype="<f8")
        self.u64(m.shape[0])
        self.u64(m.shape[1])
        self.parts.append(np.ascontiguousarray(m).tobytes())

    def getvalue(self):
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def _take(self, n):
        if self.pos + n > len(self.data):
            raise SSLError("truncated model file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u64(self):
        return struct.unpack("<Q", self._take(8))[0]

    def i64(self):
        return struct.unpack("<q", self._take(8))[0]

    def f64(self):
        return struct.unpack("<d", self._take(8))[0]

    def u8(self):
        return self._take(1)[0]

    def text(self):
        return bytes(self._take(self.u64())).decode("utf-8")

    def vector(self):
        n = self.u64()
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def matrix(self):
        rows, cols = self.u64(), self.u64()
        return np.frombuffer(self._take(8 * rows * cols), dtype="<f8").astype(np.float64).reshape(rows, cols)

    def done(self):
        if self.pos != len(self.data):
            raise SSLError("corrupt model file: trailing bytes in section")


# ---------------------------------------------------------------- model file

def _write_config(w, config):
    w.u64(config.num_levels)
    w.u64(config.window)
    w.u64(config.stride)
    w.u64(config.pool)
    w.f64(config.energy_forward)
    w.f64(config.energy_cutoff)
    w.text(config.aggregation)
    w.u64(config.patch_cap)


def _read_config(r):
    kw = dict(num_levels=r.u64(), window=r.u64(), stride=r.u64(), pool=r.u64(),
              energy_forward=r.f64(), energy_cutoff=r.f64(), aggregation=r.text(), patch_cap=r.u64())
    if kw["aggregation"] not in AGGREGATIONS:
        raise SSLError("corrupt model file: bad aggregation")
    return HopConfig(**kw)


def _write_tree(w, tree):
    w.u64(len(tree.units))
    for unit in tree.units:
        w.u64(unit.unit_id)
        w.u64(unit.level)
        w.i64(-1 if unit.parent is None else unit.parent[0])
        w.i64(-1 if unit.parent is None else unit.parent[1])
        for s in unit.input_shape:
            w.u64(s)
        k = unit.kernels
        w.u64(k.dim)
        w.vector(k.dc_kernel)
        w.u64(k.ac_kernels.shape[0])
        w.vector(k.ac_kernels.reshape(-1))
        w.vector(k.residual_mean)
        w.vector(k.energies)
        w.u64(len(unit.channels))
        for ch in unit.channels:
            w.u64(ch.kernel_index)
            w.f64(ch.local_ratio)
            w.f64(ch.global_ratio)
            w.u8(ch.status.value)
            w.i64(-1 if ch.child_unit is None else ch.child_unit)
    w.u64(len(tree.feature_layout))
    for entry in tree.feature_layout:
        for v in entry:
            w.u64(v)


def _read_tree(r, config):
    units = []
    for _ in range(r.u64()):
        unit_id, level = r.u64(), r.u64()
        pu, pk = r.i64(), r.i64()
        shape = (r.u64(), r.u64(), r.u64())
        dim = r.u64()
        dc = r.vector()
        n_ac = r.u64()
        ac = r.vector()
        if dc.shape[0] != dim or ac.shape[0] != n_ac * dim:
            raise SSLError("corrupt model file: kernel shape")
        kernels = SaabKernels(dim, dc, ac.reshape(n_ac, dim), r.vector(), r.vector())
        unit = HopUnit(unit_id, level, None if pu < 0 else (pu, pk), shape, kernels)
        for _ in range(r.u64()):
            k, local, glob, status, child = r.u64(), r.f64(), r.f64(), r.u8(), r.i64()
            try:
                status = Status(status)
            except ValueError:
                raise SSLError("corrupt model file: bad channel status") from None
            unit.channels.append(ChannelNode(level, unit_id, k, local, glob, status,
                                             None if child < 0 else child))
        units.append(unit)
    layout = [(r.u64(), r.u64(), r.u64(), r.u64()) for _ in range(r.u64())]
    if not units:
        raise SSLError("corrupt model file: empty tree")
    return HopTree(config, units, layout)


def _write_head(w, head):
    w.f64(head.ridge)
    w.matrix(head.weights)
    w.vector(head.intercept)
    w.vector(head.feature_mean)
    w.vector(head.feature_scale)


def _read_head(r):
    ridge = r.f64()
    weights = r.matrix()
    head = LLSRModel(weights, r.vector(), ridge, r.vector(), r.vector())
    k, d = weights.shape
    if head.intercept.shape != (k,) or head.feature_mean.shape != (d,) or head.feature_scale.shape != (d,):
        raise SSLError("corrupt model file: head shape")
    return head


def serialize_model(tree, head=None):
    sections = []
    for tag, writer, obj in ((b"CONF", _write_config, tree.config), (b"TREE", _write_tree, tree),
                             (b"HEAD", _write_head, head)):
        if obj is None:
            continue
        w = _Writer()
        writer(w, obj)
        sections.append((tag, w.getvalue()))
    offset = len(MODEL_MAGIC) + 8 + 20 * len(sections)
    out = [MODEL_MAGIC, struct.pack("<Q", len(sections))]
    for tag, body in sections:
        out.append(tag + struct.pack("<QQ", offset, len(body)))
        offset += len(body)
    out.extend(body for _, body in sections)
    return b"".join(out)


def deserialize_model(data):
    """Return ``(tree, head)``; head is None when the file carries no decision head."""
    if len(data) < 16 or data[:8] != MODEL_MAGIC:
        raise SSLError("not a model file")
    (count,) = struct.unpack("<Q", data[8:16])
    if 16 + 20 * count > len(data):
        raise SSLError("truncated model file")
    sections, expected = {}, 16 + 20 * count
    for i in range(count):
        base = 16 + 20 * i
        tag = bytes(data[base : base + 4])
        offset, length = struct.unpack("<QQ", data[base + 4 : base + 20])
        if offset != expected or offset + length > len(data):
            raise SSLError("truncated model file")
        sections[tag] = data[offset : offset + length]
        expected = offset + length
    if expected != len(data) or b"CONF" not in sections or b"TREE" not in sections:
        raise SSLError("corrupt model file: section table")
    r = _Reader(sections[b"CONF"])
    config = _read_config(r)
    r.done()
    r = _Reader(sections[b"TREE"])
    tree = _read_tree(r, config)
    r.done()
    head = None
    if b"HEAD" in sections:
        r = _Reader(sections[b"HEAD"])
        head = _read_head(r)
        r.done()
    return tree, head


def save_model(path, tree, head=None):
    Path(path).write_bytes(serialize_model(tree, head))


def load_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SSLError(f"cannot read model {path}: {exc.strerror}") from None
    return deserialize_model(data)


# ---------------------------------------------------------------- feature file

def serialize_features(matrix):
    m = np.asarray(matrix, dtype="<f8")
    return FEATURE_MAGIC + struct.pack("<QQ", *m.shape) + np.ascontiguousarray(m).tobytes()


def deserialize_features(data):
    if len(data) < 24 or data[:8] != FEATURE_MAGIC:
        raise SSLError("not a feature file")
    rows, cols = struct.unpack("<QQ", data[8:24])
    if len(data) != 24 + 8 * rows * cols:
        raise SSLError("truncated feature file")
    return np.frombuffer(data[24:], dtype="<f8").astype(np.float64).reshape(rows, cols)
