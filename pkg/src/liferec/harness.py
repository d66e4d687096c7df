"""Curriculum benchmark engine.

Training is online: each minibatch is generated from a counter-based seed
``(seed, stream, level, index)`` and never reused, so the data stream is the
same for every model variant under one seed and a run can be resumed from a
checkpoint without storing generator state.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .expand import NOISE_MODES, NoiseSpec, widen_lstm
from .gem import EpisodicMemory, GemConfig, gem_project, task_gradients
from .model import LstmParams, init_params, loss_and_grads, sequence_accuracy, forward_sequence
from .numcore import AdamState, adam_step, clip_by_global_norm
from .tasks import DISTRIBUTIONS, IO_WIDTHS, MAX_LEVEL, StrokeCorpus, load_strokes, make_batch, normalize_distribution, synth_strokes

log = logging.getLogger(__name__)

STREAM_INIT, STREAM_TRAIN, STREAM_EVAL, STREAM_EXPAND, STREAM_STROKES = range(5)
DEFAULT_THRESHOLDS = {"copy": 80.0, "recall": 75.0, "ssmnist": 75.0}


def stream_rng(seed: int, stream: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, *counters])


@dataclass
class BenchmarkConfig:
    distribution: str = "copy"
    hidden: int = 128
    hidden_expanded: int = 256
    k: int = 100
    m: int = 10000
    c: Optional[float] = None
    batch_size: int = 10
    expansion_budget: int = 20000
    max_levels: int = MAX_LEVEL
    eval_batches: int = 10
    lr: float = 0.001
    clip: float = 1.0
    use_gem: bool = False
    use_expansion: bool = False
    max_expansions: int = 1
    gamma: float = 0.5
    qp_max_iters: int = 1000
    eta: float = 0.01
    mode: str = "preconditioned"
    stroke_path: Optional[str] = None
    stroke_per_class: int = 100
    early_stop: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def threshold(self) -> float:
        return DEFAULT_THRESHOLDS[self.distribution] if self.c is None else float(self.c)

    @property
    def gem(self) -> GemConfig:
        return GemConfig(gamma=self.gamma, qp_max_iters=self.qp_max_iters)

    @property
    def noise(self) -> NoiseSpec:
        return NoiseSpec(mode=self.mode, eta=self.eta)

    def expansion_width(self, n_done: int, current: int) -> int:
        """Target width of the next expansion: first to ``hidden_expanded``, then by the same ratio."""
        if n_done == 0:
            return self.hidden_expanded
        return int(round(current * self.hidden_expanded / self.hidden))

    def validate(self):
        try:
            self.distribution = normalize_distribution(self.distribution)
        except ContractError:
            raise ConfigError("distribution", f"must be one of {DISTRIBUTIONS}") from None
        positive = ("hidden", "k", "m", "batch_size", "max_levels", "eval_batches", "qp_max_iters")
        for key in positive:
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be >= 1")
        if self.k > self.m:
            raise ConfigError("k", f"running-average window {self.k} exceeds m={self.m}")
        if not 0 < self.threshold < 100:
            raise ConfigError("c", "threshold must lie strictly between 0 and 100")
        if self.max_levels > MAX_LEVEL:
            raise ConfigError("max_levels", f"at most {MAX_LEVEL}")
        if self.lr <= 0:
            raise ConfigError("lr", "must be > 0")
        if self.clip <= 0:
            raise ConfigError("clip", "must be > 0")
        if self.gamma < 0:
            raise ConfigError("gamma", "must be >= 0")
        if self.eta < 0:
            raise ConfigError("eta", "must be >= 0")
        if self.mode not in NOISE_MODES:
            raise ConfigError("mode", f"must be one of {NOISE_MODES}")
        if self.use_expansion:
            if self.hidden_expanded <= self.hidden:
                raise ConfigError("hidden_expanded", "must exceed hidden when expansion is enabled")
            if self.max_expansions < 1:
                raise ConfigError("max_expansions", "must be >= 1 when expansion is enabled")
            if self.expansion_budget < self.k:
                raise ConfigError("expansion_budget", f"must be >= k={self.k}")

    def to_dict(self) -> dict:
        return asdict(self)


def check_learned(history: Sequence[float], k: int, c: float) -> bool:
    """Mean of the last ``k`` per-batch accuracies reaches ``c`` percent."""
    if len(history) < k:
        raise ContractError(f"need {k} accuracies, have {len(history)}")
    # fsum keeps a window of exactly-c accuracies from rounding below c
    return math.fsum(history[-k:]) / k >= c / 100.0


@dataclass
class MetricsRecord:
    run_id: str
    distribution: str
    level: int
    event: str
    current_acc: float
    prev_accs: List[float]
    future_accs: List[float]
    prev_mean: Optional[float]
    future_mean: Optional[float]
    params_count: int
    batches_seen: int
    seed: int
    running_acc: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate_metrics(accs: np.ndarray, level: int, **meta) -> MetricsRecord:
    accs = [float(a) for a in accs]
    prev, future = accs[: level - 1], accs[level:]
    return MetricsRecord(
        level=level,
        current_acc=accs[level - 1],
        prev_accs=prev,
        future_accs=future,
        prev_mean=float(np.mean(prev)) if prev else None,
        future_mean=float(np.mean(future)) if future else None,
        **meta,
    )


@dataclass
class RunLog:
    run_id: str
    distribution: str
    seed: int
    config: dict
    records: List[MetricsRecord] = field(default_factory=list)
    expansions: List[dict] = field(default_factory=list)
    termination_reason: Optional[str] = None
    levels_completed: int = 0
    wall_clock: float = 0.0
    gem_projections: int = 0
    qp_nonconverged: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [r.to_dict() for r in self.records]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunLog":
        d = dict(d)
        d["records"] = [MetricsRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    @property
    def final(self) -> Optional[MetricsRecord]:
        return self.records[-1] if self.records else None


def load_corpus(config: BenchmarkConfig) -> Optional[StrokeCorpus]:
    if config.distribution != "ssmnist":
        return None
    if config.stroke_path:
        return load_strokes(config.stroke_path)
    return synth_strokes(config.stroke_per_class, stream_rng(config.seed, STREAM_STROKES))


def eval_batches(config: BenchmarkConfig, level: int, corpus=None):
    return [
        make_batch(config.distribution, level, config.batch_size, stream_rng(config.seed, STREAM_EVAL, level, j), corpus)
        for j in range(config.eval_batches)
    ]


def evaluate_all(params: LstmParams, config: BenchmarkConfig, corpus=None, levels=None) -> np.ndarray:
    """Mean accuracy per level over fixed, freshly generated evaluation batches."""
    levels = range(1, config.max_levels + 1) if levels is None else levels
    out = []
    for level in levels:
        accs = [sequence_accuracy(forward_sequence(params, b), b) for b in eval_batches(config, level, corpus)]
        out.append(float(np.mean(accs)))
    return np.array(out)


class CurriculumRunner:
    """Resumable state machine for one benchmark run.

    Each level trains ``m`` batches and then runs the learned-check. On
    failure the model may be widened and trained for ``expansion_budget``
    more batches before a second check; a final failure ends the run.
    """

    def __init__(self, config: BenchmarkConfig, run_id: Optional[str] = None, corpus=None):
        self.config = config
        self.run_id = run_id or f"{config.distribution}-s{config.seed}"
        self.corpus = corpus if corpus is not None else load_corpus(config)
        d, o = IO_WIDTHS[config.distribution]
        self.params = init_params(config.hidden, d, o, stream_rng(config.seed, STREAM_INIT))
        self.adam = AdamState(lr=config.lr)
        self.memory = EpisodicMemory()
        self.level = 1
        self.phase = "train"
        self.phase_batches = 0
        self.level_batches = 0
        self.expanded_at_level = False
        self.expansions = 0
        self.batches_seen = 0
        self.history: List[float] = []
        self.done = False
        self.log = RunLog(self.run_id, config.distribution, config.seed, config.to_dict())

    # -- data ---------------------------------------------------------------

    def train_batch(self, level: int, index: int):
        rng = stream_rng(self.config.seed, STREAM_TRAIN, level, index)
        return make_batch(self.config.distribution, level, self.config.batch_size, rng, self.corpus)

    # -- steps --------------------------------------------------------------

    def _phase_length(self) -> int:
        return self.config.m if self.phase == "train" else self.config.expansion_budget

    def train_step(self) -> float:
        cfg = self.config
        batch = self.train_batch(self.level, self.level_batches)
        _, grads, logits = loss_and_grads(self.params, batch)
        acc = sequence_accuracy(logits, batch)
        grads = clip_by_global_norm(grads, cfg.clip)
        if cfg.use_gem and len(self.memory):
            g = self.params.flatten_like(grads)
            G = task_gradients(self.params, self.memory, cfg.clip)
            g_proj, info = gem_project(g, G, cfg.gem, return_info=True)
            if info["qp"] is not None:
                self.log.gem_projections += 1
                if not info["qp"].converged:
                    self.log.qp_nonconverged += 1
            if g_proj is not g:
                grads = self.params.unflatten(g_proj)
        adam_step(self.params.as_dict(), grads, self.adam)
        self.history.append(acc)
        self.level_batches += 1
        self.phase_batches += 1
        self.batches_seen += 1
        return acc

    def _phase_finished(self) -> bool:
        if self.phase_batches >= self._phase_length():
            return True
        cfg = self.config
        return cfg.early_stop and len(self.history) >= cfg.k and check_learned(self.history, cfg.k, cfg.threshold)

    def _record(self, event: str):
        accs = evaluate_all(self.params, self.config, self.corpus)
        rec = aggregate_metrics(
            accs, self.level,
            run_id=self.run_id, distribution=self.config.distribution, event=event,
            params_count=self.params.n_params, batches_seen=self.batches_seen, seed=self.config.seed,
            running_acc=float(np.mean(self.history[-self.config.k :])),
        )
        self.log.records.append(rec)
        log.info("level %d %s: current %.3f prev %s", self.level, event, rec.current_acc, rec.prev_mean)
        return rec

    def _expand(self):
        cfg = self.config
        new_hidden = cfg.expansion_width(self.expansions, self.params.hidden)
        probes = eval_batches(cfg, self.level, self.corpus)[:2]
        student, report = widen_lstm(
            self.params, new_hidden, cfg.noise, stream_rng(cfg.seed, STREAM_EXPAND, self.expansions),
            probe_batches=probes,
        )
        self.params = student
        self.adam.reset()
        self.expansions += 1
        self.expanded_at_level = True
        self.phase = "expand"
        self.phase_batches = 0
        self.log.expansions.append({"level": self.level, "batches_seen": self.batches_seen, **report.to_dict()})
        log.info("expanded %d -> %d at level %d", report.old_hidden, report.new_hidden, self.level)

    def resolve(self):
        """Apply the learned-check at the end of a phase."""
        cfg = self.config
        if check_learned(self.history, cfg.k, cfg.threshold):
            self.memory.remember(self.level, self.train_batch(self.level, self.level_batches - 1))
            self._record("expanded" if self.expanded_at_level else "learned")
            self.log.levels_completed += 1
            self.level += 1
            self.phase, self.phase_batches, self.level_batches = "train", 0, 0
            self.expanded_at_level = False
            self.history = []
            if self.level > cfg.max_levels:
                self._finish("completed")
        elif cfg.use_expansion and self.expansions < cfg.max_expansions:
            self._expand()
        else:
            self._record("failed")
            self._finish("failed")

    def _finish(self, reason: str):
        self.done = True
        self.log.termination_reason = reason

    def run(self, max_batches: Optional[int] = None) -> RunLog:
        """Advance until the run ends or ``max_batches`` more batches were trained."""
        start = time.perf_counter()
        trained = 0
        while not self.done:
            if self._phase_finished():
                self.resolve()
                continue
            if max_batches is not None and trained >= max_batches:
                break
            self.train_step()
            trained += 1
        self.log.wall_clock += time.perf_counter() - start
        return self.log

    # -- persistence --------------------------------------------------------

    def save(self, path):
        from .checkpoint import save_checkpoint

        save_checkpoint(self, path)

    @classmethod
    def load(cls, path, corpus=None) -> "CurriculumRunner":
        from .checkpoint import load_checkpoint

        return load_checkpoint(path, corpus=corpus)


def run_curriculum(config: BenchmarkConfig, run_id: Optional[str] = None, corpus=None) -> RunLog:
    return CurriculumRunner(config, run_id, corpus).run()


# -- reports ----------------------------------------------------------------

def heatmap_rows(runlog: RunLog):
    """Rows for completed levels, truncated to the square of those levels."""
    rows = [r for r in runlog.records if r.event in ("learned", "expanded")]
    n = len(rows)
    out = []
    for r in rows:
        accs = r.prev_accs + [r.current_acc] + r.future_accs
        out.append((r.level, accs[:n]))
    return out


def summary_table(runlog: RunLog) -> str:
    expanded = {e["level"] for e in runlog.expansions}
    lines = [
        f"run {runlog.run_id}  distribution={runlog.distribution}  seed={runlog.seed}",
        f"levels completed: {runlog.levels_completed}  termination: {runlog.termination_reason}",
        "",
        f"{'Task Id':>8} | {'event':>8} | {'current':>8} | {'running':>8} | {'previous':>8} | {'future':>8} | {'params':>8}",
        "-" * 78,
    ]

    def pct(x):
        return "-" if x is None else f"{100 * x:.2f}"

    for r in runlog.records:
        tid = f"{r.level}{' *' if r.level in expanded else ''}"
        lines.append(
            f"{tid:>8} | {r.event:>8} | {pct(r.current_acc):>8} | {pct(r.running_acc):>8} | "
            f"{pct(r.prev_mean):>8} | {pct(r.future_mean):>8} | {r.params_count:>8}"
        )
    lines += ["", "* denotes the task at which the model expanded."]
    return "\n".join(lines) + "\n"


def emit_reports(runlog: RunLog, out_dir) -> dict:
    """Write metrics.jsonl, heatmap.csv and summary.txt; returns their paths.

    Every JSONL record carries the run config under ``config``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.jsonl", "heatmap": out / "heatmap.csv", "summary": out / "summary.txt"}
    with open(paths["metrics"], "w", encoding="utf-8") as fh:
        for r in runlog.records:
            fh.write(json.dumps(dict(r.to_dict(), config=runlog.config), sort_keys=True) + "\n")
    rows = heatmap_rows(runlog)
    with open(paths["heatmap"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trained_level"] + [str(i + 1) for i in range(len(rows))])
        for level, accs in rows:
            w.writerow([level] + [f"{a:.6f}" for a in accs])
    paths["summary"].write_text(summary_table(runlog), encoding="utf-8")
    return paths
