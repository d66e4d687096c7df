"""Binary checkpoints of a curriculum run.

Layout::

    b"LIFEREC1"                       8-byte magic
    uint64 little-endian              manifest length in bytes
    manifest                          UTF-8 JSON
    payload                           little-endian float64 arrays

The manifest lists every array as ``{name, rows, cols, offset}`` with
``offset`` counted in bytes from the start of the payload, and echoes the
config, counters, optimizer scalars, memory layout, run log and the RNG
scheme. Training data is drawn from counter-seeded generators, so the
counters plus the seed fully determine every future random draw.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ShapeError
from .gem import EpisodicMemory
from .model import PARAM_NAMES, LstmParams, SequenceBatch
from .numcore import AdamState

MAGIC = b"LIFEREC1"
_DTYPE = np.dtype("<f8")


def _write(path, manifest: dict, arrays: dict):
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype=_DTYPE))
        if a.ndim != 2:
            raise ShapeError(f"checkpoint array {name} must be 2-D")
        entries.append({"name": name, "rows": a.shape[0], "cols": a.shape[1], "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    manifest = dict(manifest, arrays=entries, payload_bytes=offset)
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for c in chunks:
            fh.write(c)


def read_checkpoint(path):
    """Return ``(manifest, arrays)`` after validating framing and sizes."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}, expected {MAGIC!r}")
    if len(raw) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + n:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[16 : 16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest ({exc})") from None
    payload = raw[16 + n :]
    if len(payload) != manifest.get("payload_bytes"):
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, manifest says {manifest.get('payload_bytes')}")
    arrays = {}
    for e in manifest["arrays"]:
        size = e["rows"] * e["cols"] * _DTYPE.itemsize
        if e["offset"] + size > len(payload):
            raise CheckpointError(f"{path}: array {e['name']} runs past the payload")
        arrays[e["name"]] = np.frombuffer(payload, _DTYPE, e["rows"] * e["cols"], e["offset"]).reshape(e["rows"], e["cols"]).copy()
    return manifest, arrays


def save_checkpoint(runner, path):
    arrays = {f"params/{k}": getattr(runner.params, k) for k in PARAM_NAMES}
    for k in sorted(runner.adam.m):
        arrays[f"adam_m/{k}"] = runner.adam.m[k]
        arrays[f"adam_v/{k}"] = runner.adam.v[k]
    memory = []
    for task_id, batch in runner.memory:
        T, B, d = batch.inputs.shape
        Tp, _, o = batch.targets.shape
        arrays[f"memory/{task_id}/inputs"] = batch.inputs.reshape(T * B, d)
        arrays[f"memory/{task_id}/targets"] = batch.targets.reshape(Tp * B, o)
        memory.append({"task_id": task_id, "steps": T, "batch": B, "out_steps": Tp,
                       "target_kind": batch.target_kind, "emit_offset": batch.emit_offset})
    arrays["history"] = np.asarray(runner.history, dtype=np.float64).reshape(1, -1)
    adam = runner.adam
    manifest = {
        "format": MAGIC.decode(),
        "run_id": runner.run_id,
        "config": runner.config.to_dict(),
        "hidden": runner.params.hidden,
        "params_count": runner.params.n_params,
        "counters": {
            "level": runner.level,
            "phase": runner.phase,
            "phase_batches": runner.phase_batches,
            "level_batches": runner.level_batches,
            "expanded_at_level": runner.expanded_at_level,
            "expansions": runner.expansions,
            "batches_seen": runner.batches_seen,
            "done": runner.done,
        },
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "rng": {"bit_generator": "PCG64", "scheme": "counter-seeded [seed, stream, level, index]",
                "seed": runner.config.seed},
        "memory": memory,
        "runlog": runner.log.to_dict(),
    }
    _write(path, manifest, arrays)


def load_params(path) -> LstmParams:
    manifest, arrays = read_checkpoint(path)
    return _params_from(manifest, arrays, path)


def _params_from(manifest, arrays, path) -> LstmParams:
    try:
        params = LstmParams(**{k: arrays[f"params/{k}"] for k in PARAM_NAMES})
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing array {exc}") from None
    except ShapeError as exc:
        raise CheckpointError(f"{path}: inconsistent parameter shapes ({exc})") from None
    if params.hidden != manifest.get("hidden") or params.n_params != manifest.get("params_count"):
        raise CheckpointError(f"{path}: parameter shapes disagree with manifest")
    return params


def load_checkpoint(path, corpus=None):
    """Rebuild a :class:`~liferec.harness.CurriculumRunner` from ``path``."""
    from .harness import BenchmarkConfig, CurriculumRunner, RunLog

    manifest, arrays = read_checkpoint(path)
    if manifest.get("format") != MAGIC.decode():
        raise CheckpointError(f"{path}: unsupported format {manifest.get('format')!r}")
    config = BenchmarkConfig(**manifest["config"])
    runner = CurriculumRunner(config, manifest["run_id"], corpus=corpus)
    runner.params = _params_from(manifest, arrays, path)
    a = manifest["adam"]
    runner.adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
    for k in PARAM_NAMES:
        if f"adam_m/{k}" in arrays:
            m, v = arrays[f"adam_m/{k}"], arrays[f"adam_v/{k}"]
            if m.shape != getattr(runner.params, k).shape or v.shape != m.shape:
                raise CheckpointError(f"{path}: optimizer moment {k} has shape {m.shape}")
            runner.adam.m[k], runner.adam.v[k] = m, v
    runner.memory = EpisodicMemory()
    for e in manifest["memory"]:
        tid = e["task_id"]
        x = arrays[f"memory/{tid}/inputs"]
        y = arrays[f"memory/{tid}/targets"]
        try:
            batch = SequenceBatch(
                x.reshape(e["steps"], e["batch"], -1), y.reshape(e["out_steps"], e["batch"], -1),
                e["target_kind"], e["emit_offset"],
            )
        except (ValueError, ShapeError) as exc:
            raise CheckpointError(f"{path}: memory batch {tid} malformed ({exc})") from None
        runner.memory.remember(tid, batch)
    c = manifest["counters"]
    runner.level = c["level"]
    runner.phase = c["phase"]
    runner.phase_batches = c["phase_batches"]
    runner.level_batches = c["level_batches"]
    runner.expanded_at_level = c["expanded_at_level"]
    runner.expansions = c["expansions"]
    runner.batches_seen = c["batches_seen"]
    runner.done = c["done"]
    runner.history = [float(x) for x in arrays["history"].ravel()]
    runner.log = RunLog.from_dict(manifest["runlog"])
    return runner
