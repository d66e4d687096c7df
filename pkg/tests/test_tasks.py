import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liferec.errors import ContractError, DataError, StrokeParseError
from liferec.tasks import (
    IO_WIDTHS, LevelSpec, StrokeCorpus, gen_copy_batch, gen_recall_batch, gen_ssmnist_batch, level_param,
    load_strokes, make_batch, synth_strokes, validate_stroke_sequence, write_strokes,
)


@pytest.fixture(scope="module")
def corpus():
    return synth_strokes(20, np.random.default_rng(0))


def test_level_schedule():
    assert level_param("copy", 1) == 5
    assert level_param("copy", 20) == 62
    assert level_param("recall", 1) == 5
    assert level_param("ssmnist", 7) == 7
    assert LevelSpec("recall", 3).size == 11
    for bad in (0, 21):
        with pytest.raises(ContractError):
            level_param("copy", bad)
    with pytest.raises(ContractError):
        level_param("addition", 1)


# -- copy --------------------------------------------------------------------

def test_copy_layout():
    b = gen_copy_batch(5, 10, np.random.default_rng(0))
    assert (b.steps, b.targets.shape[0], b.input_width, b.output_width) == (11, 5, 8, 7)
    np.testing.assert_array_equal(b.inputs[:, :, 7].sum(axis=0), 1.0)
    assert (b.inputs[5, :, 7] == 1).all()
    np.testing.assert_array_equal(b.inputs[:5, :, :7], b.targets)
    assert not b.inputs[6:].any()
    assert b.target_kind == "bitwise"


def test_copy_deterministic_and_fresh():
    a = gen_copy_batch(8, 10, np.random.default_rng([0, 1, 1, 0]))
    b = gen_copy_batch(8, 10, np.random.default_rng([0, 1, 1, 0]))
    c = gen_copy_batch(8, 10, np.random.default_rng([0, 1, 1, 1]))
    np.testing.assert_array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.inputs, c.inputs)


# -- recall ------------------------------------------------------------------

def decode_recall(x):
    """Read items and query back out of one example's input, independent of the generator."""
    item_marks = np.flatnonzero(x[:, 8])
    items = [x[s + 1:e, :8] for s, e in zip(item_marks[:-1], item_marks[1:])]
    q = np.flatnonzero(x[:, 9])
    return items, x[q[0] + 1:q[1], :8]


@pytest.mark.parametrize("n", [2, 5, 8])
def test_recall_target_is_successor(n):
    b = gen_recall_batch(n, 10, np.random.default_rng(n))
    assert b.targets.shape == (3, 10, 8)
    for j in range(10):
        items, query = decode_recall(b.inputs[:, j])
        assert len(items) == n and all(it.shape == (3, 8) for it in items)
        hits = [i for i, it in enumerate(items) if np.array_equal(it, query)]
        assert hits and hits[0] < n - 1
        if len(hits) == 1:
            np.testing.assert_array_equal(b.targets[:, j], items[hits[0] + 1])


def test_recall_query_never_last():
    b = gen_recall_batch(2, 200, np.random.default_rng(0))
    for j in range(200):
        items, query = decode_recall(b.inputs[:, j])
        np.testing.assert_array_equal(query, items[0])


def test_recall_emits_after_query():
    b = gen_recall_batch(5, 4, np.random.default_rng(1))
    assert b.input_width == 10
    assert not b.inputs[b.emit_offset:].any()
    assert b.emit_offset + 3 == b.steps


def test_recall_needs_two_items():
    with pytest.raises(ContractError):
        gen_recall_batch(1, 3, np.random.default_rng(0))


# -- strokes -----------------------------------------------------------------

def test_synth_counts_and_lengths(corpus):
    assert len(synth_strokes(100, np.random.default_rng(1))) == 1000
    assert 36 <= corpus.mean_length() <= 44
    for seqs in corpus.samples.values():
        for s in seqs:
            assert s[-1, 3] == 1 and s[:, 3].sum() == 1
            assert np.isin(s[:, :2], (-1, 0, 1)).all()
            assert np.abs(s[:, :2]).sum(axis=1).min() > 0


def test_stroke_roundtrip(corpus, tmp_path):
    path = tmp_path / "strokes.txt"
    write_strokes(corpus, path, header="test corpus")
    assert path.read_text().startswith("# test corpus")
    assert load_strokes(path) == corpus


def test_stroke_parse_error_line_number(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# header\n3|0,1,0,0;1,1,1,1\n4|0,x,0,1\n")
    with pytest.raises(StrokeParseError) as err:
        load_strokes(path)
    assert err.value.lineno == 3


def test_stroke_invariant_violations(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("3|0,2,0,1\n")
    with pytest.raises(DataError):
        load_strokes(path)
    for seq in ([[0, 1, 0, 0]], [[0, 1, 0, 1], [1, 0, 0, 1]]):
        with pytest.raises(DataError):
            validate_stroke_sequence(np.array(seq), 3)


# -- ssmnist -----------------------------------------------------------------

def test_ssmnist_single_digit(corpus):
    b = gen_ssmnist_batch(1, 10, corpus, np.random.default_rng(0))
    assert b.targets.shape == (1, 10, 10)
    np.testing.assert_array_equal(b.targets.sum(axis=-1), 1.0)


@pytest.mark.parametrize("digits", [1, 3, 6])
def test_ssmnist_eod_count_and_order(corpus, digits):
    b = gen_ssmnist_batch(digits, 10, corpus, np.random.default_rng(digits))
    np.testing.assert_array_equal(b.inputs[:, :, 3].sum(axis=0), digits)
    assert b.steps == b.emit_offset + digits
    assert not b.inputs[b.emit_offset:].any()
    labels = b.targets.argmax(axis=-1)
    # every digit's strokes match some template of the labelled class, in order
    for j in range(10):
        x = b.inputs[: b.emit_offset, j]
        start = np.flatnonzero(np.abs(x).sum(axis=1))[0]
        ends = np.flatnonzero(x[:, 3]) + 1
        for d, (s, e) in enumerate(zip([start, *ends[:-1]], ends)):
            piece = x[s:e].astype(np.int64)
            assert any(np.array_equal(piece, t) for t in corpus.samples[labels[d, j]])


def test_ssmnist_mean_length(corpus):
    b = gen_ssmnist_batch(4, 200, corpus, np.random.default_rng(0))
    lengths = (np.abs(b.inputs[: b.emit_offset]).sum(axis=2) > 0).sum(axis=0)
    assert 0.9 * 160 <= lengths.mean() <= 1.1 * 160


def test_ssmnist_missing_class():
    small = StrokeCorpus({d: [np.array([[1, 0, 1, 1]])] for d in range(9)})
    with pytest.raises(DataError):
        gen_ssmnist_batch(2, 3, small, np.random.default_rng(0))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["copy", "recall", "ssmnist"]), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_make_batch_invariants(dist, level, seed):
    corpus = synth_strokes(2, np.random.default_rng(7)) if dist == "ssmnist" else None
    b = make_batch(dist, level, 3, np.random.default_rng(seed), corpus)
    assert (b.input_width, b.output_width) == IO_WIDTHS[dist]
    if b.target_kind == "bitwise":
        assert np.isin(b.targets, (0.0, 1.0)).all()
    else:
        np.testing.assert_array_equal(b.targets.sum(axis=-1), 1.0)
    assert b.targets.shape[0] <= b.steps
