import io
import struct
import subprocess
import sys

import numpy as np
import pytest

from sslhop.cli import main
from sslhop.io import deserialize_features, load_idx, load_model
from sslhop.pixelhop import Status, transform_batch


def write_idx(tmp_path, name, pixels, labels=None):
    pixels = np.asarray(pixels, dtype=np.uint8)
    img = tmp_path / f"{name}-images"
    img.write_bytes(struct.pack(">IIII", 0x803, *pixels.shape) + pixels.tobytes())
    if labels is None:
        return str(img), None
    lab = tmp_path / f"{name}-labels"
    lab.write_bytes(struct.pack(">II", 0x801, len(labels)) + bytes(labels))
    return str(img), str(lab)


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def small(tmp_path, rng):
    """A separable 3-class toy set: bright stripe at a class-specific row band."""
    n = 30
    labels = [i % 3 for i in range(n)]
    pixels = rng.integers(0, 60, size=(n, 10, 10))
    for i, c in enumerate(labels):
        pixels[i, 3 * c : 3 * c + 3] += 180
    images, lab = write_idx(tmp_path, "small", pixels, labels)
    config = tmp_path / "cfg.txt"
    config.write_text("num_levels=2\nwindow=3\nstride=1\npool=2\nenergy_forward=0.05\n"
                      "energy_cutoff=0.002\naggregation=flatten\nhead.ridge=auto\n")
    return dict(images=images, labels=lab, config=str(config), dir=tmp_path, pixels=pixels, y=labels)


def train(small, out="model.bin"):
    path = str(small["dir"] / out)
    code, stdout = run("train", "--config", small["config"], "--images", small["images"],
                       "--labels", small["labels"], "--out", path)
    assert code == 0
    return path, stdout


class TestTrain:
    def test_writes_model_and_reports(self, small):
        path, stdout = train(small)
        tree, head = load_model(path)
        assert head is not None and head.n_classes == 3
        assert stdout.startswith("units\t")
        assert stdout.splitlines()[-1].startswith("training_accuracy ")

    def test_deterministic(self, small):
        a, out_a = train(small, "a.bin")
        b, out_b = train(small, "b.bin")
        assert open(a, "rb").read() == open(b, "rb").read()
        assert out_a == out_b

    def test_degenerate_config_on_constant_images(self, tmp_path):
        images, labels = write_idx(tmp_path, "const", np.full((4, 6, 6), 77), [0, 1, 0, 1])
        cfg = tmp_path / "cfg"
        cfg.write_text("num_levels=2\nwindow=2\nenergy_forward=1.0\nenergy_cutoff=1.0\n")
        out = tmp_path / "m"
        code, _ = run("train", "--config", str(cfg), "--images", images, "--labels", labels, "--out", str(out))
        assert code == 0
        tree, head = load_model(out)
        assert len(tree.units) == 1 and tree.units[0].kernels.n_kernels == 1
        assert tree.units[0].channels[0].status is Status.LEAF
        from sslhop.io import serialize_model
        assert serialize_model(tree, head) == out.read_bytes()

    def test_unknown_config_key(self, small, capsys):
        (small["dir"] / "bad.txt").write_text("energy_foward=0.1\n")
        code, _ = run("train", "--config", str(small["dir"] / "bad.txt"), "--images", small["images"],
                      "--labels", small["labels"], "--out", str(small["dir"] / "m"))
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert err[-1].startswith("sslhop: error:") and "energy_foward" in err[-1]


class TestPredictEvaluate:
    def test_two_point_example(self, tmp_path):
        images, labels = write_idx(tmp_path, "two", [np.zeros((2, 2)), np.full((2, 2), 255)], [0, 1])
        cfg = tmp_path / "cfg"
        cfg.write_text("num_levels=1\nwindow=2\nhead.ridge=0\n")
        model = str(tmp_path / "m")
        assert run("train", "--config", str(cfg), "--images", images, "--labels", labels, "--out", model)[0] == 0
        code, out = run("predict", "--model", model, "--images", images)
        assert code == 0
        rows = [l.split("\t") for l in out.splitlines()]
        assert [r[:2] for r in rows] == [["0", "0"], ["1", "1"]]

    def test_evaluate_matches_predict_lines(self, small):
        path, _ = train(small)
        _, pred_out = run("predict", "--model", path, "--images", small["images"])
        code, eval_out = run("evaluate", "--model", path, "--images", small["images"], "--labels", small["labels"])
        assert code == 0
        lines = eval_out.splitlines()
        predicted = [int(l.split("\t")[1]) for l in pred_out.splitlines()]
        assert lines[: len(predicted)] == pred_out.splitlines()
        acc = np.mean(np.array(predicted) == np.array(small["y"]))
        assert lines[len(predicted)] == f"accuracy {acc:.9g}"
        confusion = np.array([[int(v) for v in l.split("\t")] for l in lines[len(predicted) + 1 :]])
        assert confusion.shape == (3, 3) and confusion.sum() == len(predicted)
        assert np.trace(confusion) == sum(p == y for p, y in zip(predicted, small["y"]))

    def test_score_format(self, small):
        path, _ = train(small)
        _, out = run("predict", "--model", path, "--images", small["images"])
        fields = out.splitlines()[0].split("\t")
        assert len(fields) == 2 + 3
        for f in fields[2:]:
            assert f == f"{float(f):.9g}"

    def test_empty_dataset(self, small, tmp_path, capsys):
        path, _ = train(small)
        images, _ = write_idx(tmp_path, "empty", np.zeros((0, 10, 10)))
        code, out = run("predict", "--model", path, "--images", images)
        assert code == 1 and out == ""
        assert "empty dataset" in capsys.readouterr().err

    def test_shape_mismatch(self, small, tmp_path, capsys):
        path, _ = train(small)
        images, _ = write_idx(tmp_path, "big", np.zeros((2, 12, 12)))
        code, out = run("predict", "--model", path, "--images", images)
        assert code == 1 and out == ""
        assert capsys.readouterr().err.strip().endswith("input shape differs from training shape")


class TestInspectExtract:
    def test_inspect(self, small):
        path, train_out = train(small)
        code, out = run("inspect", "--model", path)
        assert code == 0
        lines = out.splitlines()
        assert "energy_forward=0.05" in lines and "energy_cutoff=0.002" in lines
        report = out[out.index("units\t"):]
        assert train_out.startswith(report)

    def test_parameter_recount(self, small):
        path, _ = train(small)
        _, out = run("inspect", "--model", path)
        channels = [l.split("\t") for l in out.splitlines() if l[:1].isdigit()]
        tree, _ = load_model(path)
        dims = {u.unit_id: u.kernels.dim for u in tree.units}
        live = {}
        for level, unit, kernel, status, *_ in channels:
            live.setdefault(int(unit), 0)
            live[int(unit)] += status != "discarded"
        expected = sum(dims[u] * (live[u] + 1) for u in dims)
        assert f"parameters\t{expected}" in out.splitlines()

    def test_extract(self, small):
        path, _ = train(small)
        feat = small["dir"] / "f.bin"
        assert run("extract", "--model", path, "--images", small["images"], "--out", str(feat))[0] == 0
        tree, _ = load_model(path)
        expected = transform_batch(load_idx(small["images"]).images, tree)
        np.testing.assert_array_equal(deserialize_features(feat.read_bytes()), expected)

    def test_unreadable_model(self, tmp_path, capsys):
        code, out = run("inspect", "--model", str(tmp_path / "missing"))
        assert code == 1 and out == ""
        (tmp_path / "junk").write_bytes(b"junk")
        assert run("inspect", "--model", str(tmp_path / "junk"))[0] == 1


def test_module_entry_point(small):
    path, _ = train(small)
    proc = subprocess.run([sys.executable, "-m", "sslhop", "inspect", "--model", path],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stderr.startswith("sslhop ")
    assert "sslhop" not in proc.stdout.splitlines()[0]
    proc = subprocess.run([sys.executable, "-m", "sslhop", "inspect", "--model", path + "x"],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    assert len(proc.stderr.strip().splitlines()) == 2  # banner + one diagnostic
