"""Multi-level channel-wise PixelHop++ tree: fitting, feature extraction and reporting.

Level 1 fits one Saab unit on m x m x C windows of the input images. Every
channel whose global energy ratio exceeds ``energy_forward`` is max-pooled
and fed to its own single-channel unit at the next level; channels below
``energy_cutoff`` are dropped and everything else is a leaf whose responses
go into the feature vector.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import SSLError
from .kernels import extract_patches_batch, max_pool_batch
from .linalg import as_response_map
from .saab import SaabKernels, apply_saab, energy_ratios, fit_saab

AGGREGATIONS = ("flatten", "spatial_max", "spatial_mean")
TRANSFORM_CHUNK = 64


class Status(Enum):
    INTERMEDIATE = 0
    LEAF = 1
    DISCARDED = 2

    def __str__(self):
        return self.name.lower()


@dataclass(frozen=True)
class HopConfig:
    num_levels: int = 3
    window: int = 5
    stride: int = 1
    pool: int = 2
    energy_forward: float = 0.005
    energy_cutoff: float = 0.001
    aggregation: str = "flatten"
    patch_cap: int = 0  # 0 = fit every unit on all of its patches

    def __post_init__(self):
        for name in ("num_levels", "window", "stride", "pool"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise SSLError(f"{name} must be a positive integer")
        if not 0.0 < self.energy_forward <= 1.0:
            raise SSLError("energy_forward must lie in (0, 1]")
        if not 0.0 <= self.energy_cutoff <= 1.0:
            raise SSLError("energy_cutoff must lie in [0, 1]")
        if self.energy_cutoff > self.energy_forward:
            raise SSLError("energy_cutoff must not exceed energy_forward")
        if self.aggregation not in AGGREGATIONS:
            raise SSLError(f"unknown aggregation {self.aggregation!r}")
        if self.patch_cap < 0:
            raise SSLError("patch_cap must be nonnegative")


@dataclass(frozen=True)
class ChannelNode:
    level: int
    unit_id: int
    kernel_index: int
    local_ratio: float
    global_ratio: float
    status: Status
    child_unit: int | None = None


@dataclass(eq=False)
class HopUnit:
    unit_id: int
    level: int
    parent: tuple[int, int] | None  # (unit_id, kernel_index) of the feeding channel
    input_shape: tuple[int, int, int]
    kernels: SaabKernels
    channels: list[ChannelNode] = field(default_factory=list)


@dataclass(eq=False)
class HopTree:
    config: HopConfig
    units: list[HopUnit]
    feature_layout: list[tuple[int, int, int, int]]  # (unit_id, kernel_index, height, width)

    @property
    def input_shape(self):
        return self.units[0].input_shape

    @property
    def channels(self):
        return [ch for unit in self.units for ch in unit.channels]

    @property
    def feature_length(self):
        if self.config.aggregation == "flatten":
            return sum(h * w for _, _, h, w in self.feature_layout)
        return len(self.feature_layout)


def extract_patches(response_map, window, stride):
    """Valid-mode m x m windows of one map, flattened (row, col, channel), row-major scan."""
    m = as_response_map(response_map)
    if window < 1 or stride < 1:
        raise SSLError("window and stride must be positive")
    if window > min(m.shape[0], m.shape[1]):
        raise SSLError("window exceeds input")
    return extract_patches_batch(m[None], window, stride)


def max_pool(response_map, pool):
    """Non-overlapping pool x pool maximum per channel; trailing rows/columns are dropped."""
    m = as_response_map(response_map)
    if pool < 1:
        raise SSLError("pool must be positive")
    if m.shape[0] < pool or m.shape[1] < pool:
        raise SSLError("input too small to pool")
    return max_pool_batch(m[None], pool)[0]


def classify(global_ratio, level, config):
    if global_ratio < config.energy_cutoff:
        return Status.DISCARDED
    if global_ratio > config.energy_forward and level < config.num_levels:
        return Status.INTERMEDIATE
    return Status.LEAF


def receptive_fields(config):
    """Side length of the input region seen by one response at each level."""
    side, jump, sides = 1, 1, []
    for level in range(1, config.num_levels + 1):
        side += (config.window - 1) * jump
        jump *= config.stride
        sides.append(side)
        if level < config.num_levels:
            side += (config.pool - 1) * jump
            jump *= config.pool
    return sides


def _as_batch(images):
    if isinstance(images, np.ndarray) and images.ndim == 4:
        batch = images.astype(np.float64, copy=False)
    else:
        maps = [np.asarray(im, dtype=np.float64) for im in images]
        maps = [m[:, :, None] if m.ndim == 2 else m for m in maps]
        if not maps:
            return np.empty((0, 0, 0, 0))
        if any(m.shape != maps[0].shape or m.ndim != 3 for m in maps):
            raise SSLError("images must share identical dimensions")
        batch = np.stack(maps)
    if not np.all(np.isfinite(batch)):
        raise SSLError("non-finite input")
    return np.ascontiguousarray(batch)


def _output_side(side, config):
    if side < config.window:
        return 0
    return (side - config.window) // config.stride + 1


def fit_hoptree(images, config):
    batch = _as_batch(images)
    if batch.shape[0] < 2:
        raise SSLError("insufficient samples")
    n = batch.shape[0]
    units = []
    # units waiting to be fitted at the current level: (parent, parent_global, maps)
    pending = [(None, 1.0, batch)]
    for level in range(1, config.num_levels + 1):
        next_pending = []
        for parent, parent_global, maps in pending:
            unit_id = len(units)
            _, h, w, c = maps.shape
            oh, ow = _output_side(h, config), _output_side(w, config)
            if oh < 1 or ow < 1 or (level < config.num_levels and min(oh, ow) < config.pool):
                raise SSLError("architecture too deep for input size")
            patches = extract_patches_batch(maps, config.window, config.stride)
            kernels = fit_saab(_subsample(patches, config.patch_cap, unit_id))
            try:
                local = energy_ratios(kernels)
            except SSLError:
                kernels = SaabKernels(kernels.dim, kernels.dc_kernel, kernels.ac_kernels[:0],
                                      kernels.residual_mean, kernels.energies[:1] * 0.0)
                local = np.ones(1)
            unit = HopUnit(unit_id, level, parent, (h, w, c), kernels)
            forward = []
            for k, ratio in enumerate(local):
                g = float(ratio) * parent_global
                status = classify(g, level, config)
                if status is Status.INTERMEDIATE:
                    forward.append((k, g))
                unit.channels.append(ChannelNode(level, unit_id, k, float(ratio), g, status))
            units.append(unit)
            if forward:
                resp = apply_saab(patches, kernels, [k for k, _ in forward]).reshape(n, oh, ow, -1)
                pooled = max_pool_batch(resp, config.pool)
                for j, (k, g) in enumerate(forward):
                    next_pending.append(((unit_id, k), g, np.ascontiguousarray(pooled[..., j : j + 1])))
        # children are numbered in the order they were queued
        first_child = len(units)
        for offset, (parent, _, _) in enumerate(next_pending):
            _link_child(units[parent[0]], parent[1], first_child + offset)
        pending = next_pending
        if not pending:
            break
    return HopTree(config, units, _feature_layout(units, config))


def _link_child(unit, kernel_index, child_id):
    ch = unit.channels[kernel_index]
    unit.channels[kernel_index] = ChannelNode(ch.level, ch.unit_id, ch.kernel_index,
                                              ch.local_ratio, ch.global_ratio, ch.status, child_id)


def _subsample(patches, cap, seed):
    if not cap or patches.shape[0] <= cap:
        return patches
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(patches.shape[0], size=cap, replace=False))
    return patches[idx]


def _feature_layout(units, config):
    layout = []
    for unit in units:
        h, w, _ = unit.input_shape
        oh, ow = _output_side(h, config), _output_side(w, config)
        if unit.level < config.num_levels:
            oh, ow = oh // config.pool, ow // config.pool
        for ch in unit.channels:
            if ch.status is Status.LEAF:
                layout.append((unit.unit_id, ch.kernel_index, oh, ow))
    return layout


def _transform_batch(batch, tree):
    config = tree.config
    n = batch.shape[0]
    inputs = {0: batch}
    leaf_maps = {}
    for unit in tree.units:
        maps = inputs.pop(unit.unit_id)
        live = [ch for ch in unit.channels if ch.status is not Status.DISCARDED]
        if not live:
            continue
        _, h, w, _ = maps.shape
        oh, ow = _output_side(h, config), _output_side(w, config)
        patches = extract_patches_batch(maps, config.window, config.stride)
        resp = apply_saab(patches, unit.kernels, [ch.kernel_index for ch in live]).reshape(n, oh, ow, -1)
        if unit.level < config.num_levels:
            resp = max_pool_batch(resp, config.pool)
        for j, ch in enumerate(live):
            if ch.status is Status.LEAF:
                leaf_maps[unit.unit_id, ch.kernel_index] = resp[..., j]
            elif ch.child_unit is not None:
                inputs[ch.child_unit] = np.ascontiguousarray(resp[..., j : j + 1])
    parts = []
    for unit_id, k, _, _ in tree.feature_layout:
        fmap = leaf_maps[unit_id, k]
        if config.aggregation == "flatten":
            parts.append(fmap.reshape(n, -1))
        elif config.aggregation == "spatial_max":
            parts.append(fmap.max(axis=(1, 2))[:, None])
        else:
            parts.append(fmap.mean(axis=(1, 2))[:, None])
    if not parts:
        return np.empty((n, 0))
    return np.concatenate(parts, axis=1)


def _thread_count():
    value = os.environ.get("SSLHOP_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise SSLError("SSLHOP_THREADS must be an integer") from None
    return os.cpu_count() or 1


def transform_batch(images, tree, threads=None):
    """Feature matrix (one row per image) in ``tree.feature_layout`` order.

    Images are processed in fixed-size chunks so the output bytes do not
    depend on the number of worker threads.
    """
    batch = _as_batch(images)
    if batch.shape[0] == 0:
        return np.empty((0, tree.feature_length))
    if batch.shape[1:] != tuple(tree.input_shape):
        raise SSLError("input shape differs from training shape")
    chunks = [batch[i : i + TRANSFORM_CHUNK] for i in range(0, batch.shape[0], TRANSFORM_CHUNK)]
    threads = threads or _thread_count()
    if threads == 1 or len(chunks) == 1:
        rows = [_transform_batch(c, tree) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: _transform_batch(c, tree), chunks))
    return np.concatenate(rows, axis=0)


def transform(image, tree):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise SSLError("input shape differs from training shape")
    return transform_batch(image[None], tree, threads=1)[0]


def parameter_count(tree):
    total = 0
    for unit in tree.units:
        live = sum(ch.status is not Status.DISCARDED for ch in unit.channels)
        total += unit.kernels.dim * live + unit.kernels.dim
    return total


def describe(tree):
    """Deterministic text report: per-level summary, parameter count, one line per channel."""
    config = tree.config
    lines = [f"units\t{len(tree.units)}", f"parameters\t{parameter_count(tree)}"]
    lines.append("summary\tlevel\tunits\tintermediate\tleaf\tdiscarded\tmin_global_ratio"
                 "\tmax_global_ratio\tcumulative_discarded_energy")
    discarded_energy = 0.0
    for level in range(1, config.num_levels + 1):
        units = [u for u in tree.units if u.level == level]
        chans = [ch for u in units for ch in u.channels]
        counts = {s: sum(ch.status is s for ch in chans) for s in Status}
        discarded_energy += sum(ch.global_ratio for ch in chans if ch.status is Status.DISCARDED)
        ratios = [ch.global_ratio for ch in chans]
        lo = f"{min(ratios):.9g}" if ratios else "-"
        hi = f"{max(ratios):.9g}" if ratios else "-"
        lines.append(f"summary\t{level}\t{len(units)}\t{counts[Status.INTERMEDIATE]}\t{counts[Status.LEAF]}"
                     f"\t{counts[Status.DISCARDED]}\t{lo}\t{hi}\t{discarded_energy:.9g}")
    lines.append("level\tunit\tkernel\tstatus\tlocal_ratio\tglobal_ratio")
    for ch in tree.channels:
        lines.append(f"{ch.level}\t{ch.unit_id}\t{ch.kernel_index}\t{ch.status}"
                     f"\t{ch.local_ratio:.9g}\t{ch.global_ratio:.9g}")
    return "\n".join(lines) + "\n"
