import json
import struct

import numpy as np
import pytest

from liferec.checkpoint import MAGIC, load_checkpoint, load_params, read_checkpoint, save_checkpoint
from liferec.errors import CheckpointError
from liferec.harness import BenchmarkConfig, CurriculumRunner
from liferec.model import param_count


def cfg(**kw):
    base = dict(distribution="copy", hidden=8, hidden_expanded=12, k=5, m=20, max_levels=3, eval_batches=2,
                lr=0.01, use_gem=True, use_expansion=True, c=58, expansion_budget=100, seed=0)
    base.update(kw)
    return BenchmarkConfig(**base)


def same_state(a, b):
    return (np.array_equal(a.params.flatten(), b.params.flatten())
            and a.history == b.history and a.batches_seen == b.batches_seen
            and [r.to_dict() for r in a.log.records] == [r.to_dict() for r in b.log.records])


@pytest.mark.parametrize("cut", [3, 20, 57, 125, 133])
def test_resume_is_bit_exact(tmp_path, cut):
    full = CurriculumRunner(cfg())
    full.run()
    part = CurriculumRunner(cfg())
    part.run(max_batches=cut)
    path = tmp_path / "ck.bin"
    part.save(path)
    resumed = CurriculumRunner.load(path)
    resumed.run()
    assert same_state(full, resumed)
    assert resumed.log.expansions == full.log.expansions


def test_ten_batches_after_reload(tmp_path):
    a = CurriculumRunner(cfg(m=40))
    a.run(max_batches=5)
    path = tmp_path / "ck.bin"
    save_checkpoint(a, path)
    b = load_checkpoint(path)
    a.run(max_batches=10)
    b.run(max_batches=10)
    assert same_state(a, b)
    for k in a.adam.m:
        assert np.array_equal(a.adam.m[k], b.adam.m[k]) and np.array_equal(a.adam.v[k], b.adam.v[k])
    assert a.adam.step == b.adam.step == 15


def test_manifest_layout(tmp_path):
    r = CurriculumRunner(cfg())
    r.run(max_batches=15)
    path = tmp_path / "ck.bin"
    r.save(path)
    raw = path.read_bytes()
    assert raw[:8] == b"LIFEREC1" == MAGIC
    (n,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + n])
    assert manifest["params_count"] == param_count(8, 8, 7)
    assert manifest["config"] == r.config.to_dict()
    offset = 0
    for e in manifest["arrays"]:
        assert e["offset"] == offset
        offset += e["rows"] * e["cols"] * 8
    assert offset == manifest["payload_bytes"] == len(raw) - 16 - n
    W_ih = next(e for e in manifest["arrays"] if e["name"] == "params/W_ih")
    start = 16 + n + W_ih["offset"]
    stored = np.frombuffer(raw[start:start + r.params.W_ih.nbytes], "<f8").reshape(r.params.W_ih.shape)
    assert np.array_equal(stored, r.params.W_ih)


def test_post_expansion_checkpoint_reports_new_width(tmp_path):
    r = CurriculumRunner(cfg())
    r.run(max_batches=30)
    assert r.params.hidden == 12
    path = tmp_path / "ck.bin"
    r.save(path)
    assert load_params(path).hidden == 12
    assert read_checkpoint(path)[0]["hidden"] == 12


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="nothere.bin"):
        load_checkpoint(tmp_path / "nothere.bin")


@pytest.fixture
def saved(tmp_path):
    r = CurriculumRunner(cfg())
    r.run(max_batches=8)
    path = tmp_path / "ck.bin"
    r.save(path)
    return path


def test_bad_magic(saved):
    raw = bytearray(saved.read_bytes())
    raw[:8] = b"LIFEREC0"
    saved.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(saved)


def test_truncation(saved):
    raw = saved.read_bytes()
    for cut in (12, 40, len(raw) - 8):
        saved.write_bytes(raw[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(saved)


def test_shape_disagreement(saved):
    raw = saved.read_bytes()
    (n,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + n])
    manifest["hidden"] = 9
    head = json.dumps(manifest).encode()
    saved.write_bytes(raw[:8] + struct.pack("<Q", len(head)) + head + raw[16 + n:])
    with pytest.raises(CheckpointError, match="disagree"):
        load_checkpoint(saved)


def test_version_mismatch(saved):
    raw = saved.read_bytes()
    (n,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + n])
    manifest["format"] = "LIFEREC2"
    head = json.dumps(manifest).encode()
    saved.write_bytes(raw[:8] + struct.pack("<Q", len(head)) + head + raw[16 + n:])
    with pytest.raises(CheckpointError, match="format"):
        load_checkpoint(saved)
