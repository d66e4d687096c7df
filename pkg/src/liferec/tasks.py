"""Seeded batch generators for Copy, Associative Recall and stroke-sequence digits."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ContractError, DataError, StrokeParseError
from .model import SequenceBatch

DISTRIBUTIONS = ("copy", "recall", "ssmnist")
MAX_LEVEL = 20
ITEM_LENGTH = 3

# (input width, output width)
IO_WIDTHS = {"copy": (8, 7), "recall": (10, 8), "ssmnist": (4, 10)}


def normalize_distribution(name: str) -> str:
    key = str(name).strip().lower().replace("_", "").replace("-", "")
    aliases = {"copy": "copy", "recall": "recall", "associativerecall": "recall", "ssmnist": "ssmnist"}
    if key not in aliases:
        raise ContractError(f"unknown task distribution {name!r}")
    return aliases[key]


def level_param(distribution: str, level: int) -> int:
    """Difficulty at a curriculum level: sequence length, item count or digit count."""
    dist = normalize_distribution(distribution)
    if not 1 <= level <= MAX_LEVEL:
        raise ContractError(f"level must be in 1..{MAX_LEVEL}, got {level}")
    if dist == "ssmnist":
        return level
    return 5 + 3 * (level - 1)


@dataclass(frozen=True)
class LevelSpec:
    distribution: str
    level: int

    @property
    def size(self) -> int:
        return level_param(self.distribution, self.level)


def gen_copy_batch(length: int, batch: int, rng: np.random.Generator) -> SequenceBatch:
    """7 random bits per step, a delimiter flag, then ``length`` blank steps to answer in."""
    if length < 1:
        raise ContractError("copy length must be >= 1")
    L = length
    bits = rng.integers(0, 2, size=(L, batch, 7)).astype(np.float64)
    x = np.zeros((2 * L + 1, batch, 8))
    x[:L, :, :7] = bits
    x[L, :, 7] = 1.0
    return SequenceBatch(x, bits, "bitwise", L + 1)


def gen_recall_batch(items: int, batch: int, rng: np.random.Generator) -> SequenceBatch:
    """List of 3-vector items separated by item delimiters, then a bracketed query.

    Layout per example (channel 8 = item delimiter, 9 = query delimiter)::

        D v v v D v v v ... D   Q q q q Q   _ _ _

    The target is the item that follows the queried one.
    """
    if items < 2:
        raise ContractError("recall needs at least 2 items")
    n, k = items, ITEM_LENGTH
    content = rng.integers(0, 2, size=(n, k, batch, 8)).astype(np.float64)
    query = rng.integers(0, n - 1, size=batch)
    list_len = n * (k + 1) + 1
    T = list_len + (k + 2) + k
    x = np.zeros((T, batch, 10))
    for i in range(n):
        start = i * (k + 1)
        x[start, :, 8] = 1.0
        x[start + 1 : start + 1 + k, :, :8] = content[i]
    x[list_len - 1, :, 8] = 1.0
    q0 = list_len
    cols = np.arange(batch)
    x[q0, :, 9] = 1.0
    x[q0 + 1 : q0 + 1 + k, :, :8] = content[query, :, cols].transpose(1, 0, 2)
    x[q0 + k + 1, :, 9] = 1.0
    targets = content[query + 1, :, cols].transpose(1, 0, 2).copy()
    return SequenceBatch(x, targets, "bitwise", T - k)


# -- strokes ----------------------------------------------------------------

@dataclass
class StrokeCorpus:
    """Per-digit lists of (n, 4) integer arrays of (dx, dy, eos, eod) rows."""

    samples: Dict[int, List[np.ndarray]]

    def __post_init__(self):
        for label, seqs in self.samples.items():
            for seq in seqs:
                validate_stroke_sequence(seq, label)

    def __len__(self):
        return sum(len(v) for v in self.samples.values())

    def __eq__(self, other):
        if not isinstance(other, StrokeCorpus) or sorted(self.samples) != sorted(other.samples):
            return False
        for k, seqs in self.samples.items():
            o = other.samples[k]
            if len(seqs) != len(o) or any(not np.array_equal(a, b) for a, b in zip(seqs, o)):
                return False
        return True

    def mean_length(self) -> float:
        lengths = [len(s) for seqs in self.samples.values() for s in seqs]
        return float(np.mean(lengths))


def validate_stroke_sequence(seq: np.ndarray, label: int = -1) -> None:
    seq = np.asarray(seq)
    if not 0 <= int(label) <= 9 and label != -1:
        raise DataError(f"digit label {label} outside 0..9")
    if seq.ndim != 2 or seq.shape[1] != 4 or len(seq) == 0:
        raise DataError(f"stroke sequence must be a non-empty n x 4 array, got {seq.shape}")
    if not np.isin(seq[:, :2], (-1, 0, 1)).all():
        raise DataError("dx, dy must be -1, 0 or 1")
    if not np.isin(seq[:, 2:], (0, 1)).all():
        raise DataError("eos, eod must be 0 or 1")
    if seq[-1, 3] != 1:
        raise DataError("sequence must end with eod = 1")
    if seq[:, 3].sum() != 1:
        raise DataError("sequence must contain exactly one eod flag")


# Stylized glyphs on a 4 x 6 grid, y pointing up; each entry is a list of strokes.
_GLYPHS = {
    0: [[(2, 6), (0, 5), (0, 1), (2, 0), (4, 1), (4, 5), (2, 6)]],
    1: [[(1, 5), (2, 6), (2, 0)]],
    2: [[(0, 5), (1, 6), (3, 6), (4, 5), (4, 4), (0, 0), (4, 0)]],
    3: [[(0, 6), (4, 6), (2, 3), (4, 2), (4, 1), (3, 0), (0, 0)]],
    4: [[(3, 0), (3, 6)], [(0, 6), (0, 2), (4, 2)]],
    5: [[(4, 6), (0, 6), (0, 3), (3, 3), (4, 2), (4, 1), (3, 0), (0, 0)]],
    6: [[(4, 6), (1, 5), (0, 3), (0, 1), (1, 0), (3, 0), (4, 1), (4, 2), (3, 3), (0, 3)]],
    7: [[(0, 6), (4, 6), (1, 0)], [(1, 3), (3, 3)]],
    8: [[(2, 3), (0, 4), (0, 5), (2, 6), (4, 5), (4, 4), (2, 3), (0, 2), (0, 1), (2, 0), (4, 1), (4, 2), (2, 3)]],
    9: [[(4, 3), (1, 3), (0, 4), (0, 5), (1, 6), (3, 6), (4, 5), (4, 0)]],
}


def _raster(p0, p1) -> List[tuple]:
    (x0, y0), (x1, y1) = p0, p1
    n = max(abs(x1 - x0), abs(y1 - y0))
    steps, prev = [], (x0, y0)
    for i in range(1, n + 1):
        cur = (int(round(x0 + (x1 - x0) * i / n)), int(round(y0 + (y1 - y0) * i / n)))
        steps.append((cur[0] - prev[0], cur[1] - prev[1]))
        prev = cur
    return steps


def _glyph_steps(label: int, scale: float) -> np.ndarray:
    rows = []
    pen = None
    for stroke in _GLYPHS[label]:
        pts = [(int(round(x * scale)), int(round(y * scale))) for x, y in stroke]
        if pen is not None:
            rows += [(dx, dy, 0, 0) for dx, dy in _raster(pen, pts[0])]
        for a, b in zip(pts[:-1], pts[1:]):
            rows += [(dx, dy, 0, 0) for dx, dy in _raster(a, b)]
        if rows:
            rows[-1] = rows[-1][:2] + (1, 0)
        pen = pts[-1]
    rows[-1] = rows[-1][:2] + (1, 1)
    return np.array(rows, dtype=np.int64)


def _glyph_length(label: int) -> int:
    pts = [p for stroke in _GLYPHS[label] for p in stroke]
    return sum(max(abs(b[0] - a[0]), abs(b[1] - a[1])) for a, b in zip(pts[:-1], pts[1:]))


def synth_strokes(per_class: int, rng: np.random.Generator, mean_length: int = 40, perturb: float = 0.1) -> StrokeCorpus:
    """Synthetic stroke corpus: jittered renderings of a fixed glyph per digit.

    Each sample rescales its glyph to about ``mean_length`` unit moves with
    +-10% jitter, then re-draws a fraction ``perturb`` of the offsets. No
    step is ever (0, 0).
    """
    samples: Dict[int, List[np.ndarray]] = {}
    for label in range(10):
        base = mean_length / _glyph_length(label)
        seqs = []
        for _ in range(per_class):
            seq = _glyph_steps(label, base * rng.uniform(0.9, 1.1))
            flip = rng.random(seq.shape[0]) < perturb
            if flip.any():
                rows = np.flatnonzero(flip)
                col = rng.integers(0, 2, size=rows.size)
                seq[rows, col] = rng.integers(-1, 2, size=rows.size)
                # a null move would be indistinguishable from padding
                null = rows[(seq[rows, 0] == 0) & (seq[rows, 1] == 0)]
                seq[null, col[np.isin(rows, null)]] = rng.choice([-1, 1], size=null.size)
            seqs.append(seq)
        samples[label] = seqs
    return StrokeCorpus(samples)


def write_strokes(corpus: StrokeCorpus, path, header: Optional[str] = None) -> None:
    lines = []
    if header:
        lines += [f"# {line}" for line in header.splitlines()]
    for label in sorted(corpus.samples):
        for seq in corpus.samples[label]:
            body = ";".join(",".join(str(int(v)) for v in row) for row in seq)
            lines.append(f"{label}|{body}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_strokes(path) -> StrokeCorpus:
    """Parse ``label|dx,dy,eos,eod;...`` lines; ``#`` lines and blanks are skipped."""
    samples: Dict[int, List[np.ndarray]] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        label_s, sep, body = line.partition("|")
        if not sep:
            raise StrokeParseError(lineno, "missing '|' separator")
        try:
            label = int(label_s)
            rows = [tuple(int(v) for v in quad.split(",")) for quad in body.split(";")]
        except ValueError as exc:
            raise StrokeParseError(lineno, f"non-integer field ({exc})") from None
        if any(len(r) != 4 for r in rows):
            raise StrokeParseError(lineno, "every stroke step needs 4 fields")
        if not 0 <= label <= 9:
            raise StrokeParseError(lineno, f"label {label} outside 0..9")
        seq = np.array(rows, dtype=np.int64)
        try:
            validate_stroke_sequence(seq, label)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        samples.setdefault(label, []).append(seq)
    return StrokeCorpus(samples)


def gen_ssmnist_batch(digits: int, batch: int, corpus: StrokeCorpus, rng: np.random.Generator) -> SequenceBatch:
    """Concatenated digit stroke sequences followed by one blank decode step per digit.

    Examples of different length are left-padded with all-zero steps so the
    decode steps line up at the end of the batch.
    """
    if digits < 1:
        raise ContractError("need at least one digit")
    missing = [d for d in range(10) if not corpus.samples.get(d)]
    if missing:
        raise DataError(f"stroke corpus has no samples for digits {missing}")
    labels = rng.integers(0, 10, size=(batch, digits))
    streams = []
    for b in range(batch):
        parts = []
        for lab in labels[b]:
            pool = corpus.samples[int(lab)]
            parts.append(pool[rng.integers(len(pool))])
        streams.append(np.concatenate(parts, axis=0))
    longest = max(len(s) for s in streams)
    T = longest + digits
    x = np.zeros((T, batch, 4))
    for b, s in enumerate(streams):
        x[longest - len(s) : longest, b] = s
    targets = np.zeros((digits, batch, 10))
    targets[np.arange(digits)[:, None], np.arange(batch)[None, :], labels.T] = 1.0
    return SequenceBatch(x, targets, "digit-class", longest)


def make_batch(distribution: str, level: int, batch: int, rng: np.random.Generator,
               corpus: Optional[StrokeCorpus] = None) -> SequenceBatch:
    dist = normalize_distribution(distribution)
    size = level_param(dist, level)
    if dist == "copy":
        return gen_copy_batch(size, batch, rng)
    if dist == "recall":
        return gen_recall_batch(size, batch, rng)
    if corpus is None:
        raise DataError("ssmnist batches need a stroke corpus")
    return gen_ssmnist_batch(size, batch, corpus, rng)
