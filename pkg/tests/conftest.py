from pathlib import Path

import numpy as np
import pytest

from sslhop import Status, apply_saab
from sslhop.kernels import extract_patches_batch, max_pool_batch

DATA = Path(__file__).parent / "data"
DIGITS = {
    "train_images": DATA / "digits-train-images-idx3-ubyte.gz",
    "train_labels": DATA / "digits-train-labels-idx1-ubyte.gz",
    "test_images": DATA / "digits-test-images-idx3-ubyte.gz",
    "test_labels": DATA / "digits-test-labels-idx1-ubyte.gz",
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def smooth_images(rng, n, side, channels=1):
    """Random images with spatial correlation, so energy spectra are non-flat."""
    noise = rng.normal(size=(n, side + 2, side + 2, channels))
    img = (noise[:, :-2, :-2] + noise[:, 1:-1, 1:-1] + noise[:, 2:, 2:]
           + noise[:, 2:, :-2] + noise[:, :-2, 2:])
    return img + rng.normal(size=(n, 1, 1, channels))


def unit_inputs(tree, images):
    """Recompute every unit's training input maps by walking the tree from the images."""
    config = tree.config
    inputs = {0: np.asarray(images, dtype=np.float64)}
    for unit in tree.units:
        maps = inputs[unit.unit_id]
        n, h, w, _ = maps.shape
        oh = (h - config.window) // config.stride + 1
        ow = (w - config.window) // config.stride + 1
        patches = extract_patches_batch(maps, config.window, config.stride)
        for ch in unit.channels:
            if ch.child_unit is not None:
                resp = apply_saab(patches, unit.kernels, [ch.kernel_index]).reshape(n, oh, ow, 1)
                inputs[ch.child_unit] = max_pool_batch(resp, config.pool)
    return inputs


def assert_tree_invariants(tree, images):
    """Structural and energy invariants every fitted tree must satisfy."""
    config = tree.config
    by_id = {u.unit_id: u for u in tree.units}
    inputs = unit_inputs(tree, images)
    for unit in tree.units:
        assert [ch.kernel_index for ch in unit.channels] == list(range(unit.kernels.n_kernels))
        local = np.array([ch.local_ratio for ch in unit.channels])
        np.testing.assert_allclose(local.sum(), 1.0, atol=1e-10)
        parent_global = 1.0 if unit.parent is None else by_id[unit.parent[0]].channels[unit.parent[1]].global_ratio
        for ch in unit.channels:
            assert ch.global_ratio == ch.local_ratio * parent_global
            assert ch.global_ratio <= parent_global
            if ch.global_ratio < config.energy_cutoff:
                assert ch.status is Status.DISCARDED
            elif ch.global_ratio > config.energy_forward and unit.level < config.num_levels:
                assert ch.status is Status.INTERMEDIATE
                assert ch.child_unit is not None and by_id[ch.child_unit].parent == (unit.unit_id, ch.kernel_index)
            else:
                assert ch.status is Status.LEAF
            if ch.status is not Status.INTERMEDIATE:
                assert ch.child_unit is None
        # energy conservation against the unit's own training patches
        patches = extract_patches_batch(inputs[unit.unit_id], config.window, config.stride)
        centered = patches - patches.mean(axis=0)
        trace = np.einsum("ij,ij->", centered, centered) / (patches.shape[0] - 1)
        energy = unit.kernels.energies.sum()
        residuals = centered - np.outer(centered.mean(axis=1) * np.sqrt(patches.shape[1]),
                                        unit.kernels.dc_kernel)
        sv = np.linalg.svd(residuals, compute_uv=False)
        dropped = max(0.0, float(np.sum(sv**2) / (patches.shape[0] - 1)) - energy + unit.kernels.energies[0])
        assert abs(energy - trace) <= 1e-9 * max(trace, 1e-300) + dropped + 1e-12 * max(trace, 1.0)
    assert tree.feature_layout == sorted(tree.feature_layout, key=lambda e: (by_id[e[0]].level, e[0], e[1]))
    leaves = [(ch.unit_id, ch.kernel_index) for ch in tree.channels if ch.status is Status.LEAF]
    assert [(u, k) for u, k, _, _ in tree.feature_layout] == leaves


ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, description) before asserting."""
    entry = {}

    def start(number, description):
        entry.update(number=number, description=description)

    yield start
    if entry:
        failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
        ACCEPTANCE.append((entry["number"], entry["description"], not failed))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, ok in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {description}")
