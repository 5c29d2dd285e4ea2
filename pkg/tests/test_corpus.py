import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from lcmdiar.corpus import (
    FeatureMatrix,
    ReferenceLabels,
    SpeechMarks,
    apply_speech_marks,
    load_features,
    make_grid,
    read_speech_marks,
    write_features,
    write_speech_marks,
)
from lcmdiar.errors import DataError, FormatError, ParameterError, ParseError, RangeError, TruncationError
from lcmdiar.synth import ConversationSpec, random_chain, synthesize_conversation


def test_empty_feature_file_round_trips(tmp_path):
    path = tmp_path / "empty.fmx"
    write_features(FeatureMatrix(np.zeros((0, 20)), 0.01), path)
    f = load_features(path)
    assert f.frames == 0 and f.dim == 20
    assert path.stat().st_size == 20


def test_feature_round_trip_is_bit_exact(tmp_path, rng):
    m = FeatureMatrix(rng.standard_normal((37, 5)).astype(np.float32), 0.01)
    write_features(m, tmp_path / "a.fmx")
    back = load_features(tmp_path / "a.fmx")
    assert back.data.tobytes() == m.data.tobytes()
    assert back.frame_shift == pytest.approx(0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 30), st.integers(1, 6), st.integers(0, 2**31))
def test_feature_round_trip_property(tmp_path_factory, frames, dim, seed):
    data = np.random.default_rng(seed).standard_normal((frames, dim)).astype(np.float32) * 1e3
    path = tmp_path_factory.mktemp("fmx") / "x.fmx"
    write_features(FeatureMatrix(data, 0.025), path)
    back = load_features(path)
    assert_array_equal(back.data, data)
    assert back.data.dtype == np.float32


def test_truncated_payload_is_rejected(tmp_path, rng):
    path = tmp_path / "t.fmx"
    write_features(FeatureMatrix(rng.standard_normal((4, 3)), 0.01), path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(TruncationError):
        load_features(path)


def test_bad_magic_and_version(tmp_path, rng):
    path = tmp_path / "b.fmx"
    write_features(FeatureMatrix(rng.standard_normal((2, 2)), 0.01), path)
    raw = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_features(path)
    raw[4] = 9
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        load_features(path)


def test_nan_payload_is_a_data_error(tmp_path):
    data = np.zeros((3, 2), dtype="<f4")
    data[1, 1] = np.nan
    path = tmp_path / "n.fmx"
    import struct
    path.write_bytes(struct.pack("<4sIIII", b"FMX1", 1, 3, 2, 10000) + data.tobytes())
    with pytest.raises(DataError):
        load_features(path)


def test_speech_marks_whole_span_is_identity():
    f = FeatureMatrix(np.arange(200.0).reshape(100, 2), 0.01)
    out = apply_speech_marks(f, SpeechMarks(((0.0, 1.0),)))
    assert_array_equal(out.data, f.data)
    assert_array_equal(out.frame_index, np.arange(100))


def test_speech_marks_empty_and_half():
    f = FeatureMatrix(np.zeros((100, 2)), 0.01)
    assert apply_speech_marks(f, SpeechMarks(())).frames == 0
    assert apply_speech_marks(f, SpeechMarks(((0.0, 0.5),))).frames == 50


def test_speech_marks_keep_original_times():
    f = FeatureMatrix(np.arange(100.0)[:, None], 0.01)
    out = apply_speech_marks(f, SpeechMarks(((0.1, 0.2), (0.5, 0.53))))
    assert_array_equal(out.frame_index, list(range(10, 20)) + [50, 51, 52])
    assert_array_equal(out.data[:, 0], out.frame_index)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1.5), min_size=0, max_size=8), st.integers(1, 150))
def test_speech_mark_frame_count_matches_brute_force(cuts, frames):
    cuts = sorted(set(round(c, 4) for c in cuts if c <= frames * 0.01))
    ivs = [(a, b) for a, b in zip(cuts[::2], cuts[1::2]) if a < b]
    f = FeatureMatrix(np.zeros((frames, 1)), 0.01)
    out = apply_speech_marks(f, SpeechMarks(tuple(ivs)))
    centers = (np.arange(frames) + 0.5) * 0.01
    expected = sum(1 for c in centers if any(a <= c < b for a, b in ivs))
    assert out.frames == expected


def test_speech_mark_outside_span():
    f = FeatureMatrix(np.zeros((100, 2)), 0.01)
    with pytest.raises(RangeError):
        apply_speech_marks(f, SpeechMarks(((0.5, 1.5),)))


def test_speech_marks_file(tmp_path):
    marks = SpeechMarks(((0.0, 1.25), (2.5, 3.0)))
    write_speech_marks(marks, tmp_path / "m.txt")
    assert read_speech_marks(tmp_path / "m.txt").intervals == marks.intervals
    (tmp_path / "bad.txt").write_text("0.0 1.0\n1.5 oops\n")
    with pytest.raises(ParseError) as err:
        read_speech_marks(tmp_path / "bad.txt")
    assert err.value.lineno == 2
    with pytest.raises(ParameterError):
        SpeechMarks(((1.0, 2.0), (1.5, 3.0)))


def test_grid_examples():
    assert make_grid(100, 10).M == 10
    g = make_grid(101, 10)
    assert g.M == 11 and g.lengths()[-1] == 1
    assert make_grid(0, 10).M == 0
    with pytest.raises(ParameterError):
        make_grid(10, 0)


@given(st.integers(0, 5000), st.integers(1, 64))
def test_grid_covers_every_frame_once(n, seg_len):
    g = make_grid(n, seg_len)
    assert g.lengths().sum() == n
    assert g.M == -(-n // seg_len)
    counts = np.bincount(g.frame_to_segment, minlength=g.M)
    assert_array_equal(counts, g.lengths())


def test_synthetic_conversation_contract():
    chain = random_chain(dim=3, n_components=4, rank=5, speaker_rank=2, seed=0)
    spec = ConversationSpec(n_speakers=2, duration=60.0, mean_turn=3.0)
    f1, ref1 = synthesize_conversation(spec, chain, seed=4)
    f2, ref2 = synthesize_conversation(spec, chain, seed=4)
    assert f1.data.tobytes() == f2.data.tobytes() and ref1 == ref2
    assert f1.frames == 6000
    turns = sorted(ref1.turns)
    assert turns[0].start == 0.0 and turns[-1].end == pytest.approx(60.0)
    for a, b in zip(turns, turns[1:]):
        assert a.end == b.start
    mono, ref = synthesize_conversation(ConversationSpec(1, 5.0), chain, seed=1)
    assert ref.speakers == ["S0"]


def test_reference_labels_rename():
    ref = ReferenceLabels(((0, 1, "a"), (1, 2, "b")))
    assert ref.rename({"a": "x"}).speakers == ["b", "x"]
    with pytest.raises(ParameterError):
        ReferenceLabels(((1, 1, "a"),))
