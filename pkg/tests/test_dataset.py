"""CSV ingestion, feature derivation, and timing vectors."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pohmm.dataset import (
    KeystrokeEvent,
    group_sessions,
    load_csv,
    save_csv,
    synthesize_events,
    timing_vector,
    to_sequences,
)


def _write(tmp_path, text, name="events.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


HEADER = "user,session,key,t_press,t_release\n"


def test_empty_data_section(tmp_path):
    assert load_csv(_write(tmp_path, HEADER)) == []


def test_two_row_roundtrip(tmp_path):
    text = HEADER + "u1,s1,a,0,60\nu1,s1,b,100,180\n"
    events = load_csv(_write(tmp_path, text))
    assert len(events) == 2
    assert events[0] == KeystrokeEvent("u1", "s1", "a", 0.0, 60.0)
    assert events[1].key == "b" and events[1].t_release == 180.0
    out = tmp_path / "back.csv"
    save_csv(events, out)
    assert load_csv(out) == events


def test_missing_column_named(tmp_path):
    with pytest.raises(ValueError, match="missing column: t_release"):
        load_csv(_write(tmp_path, "user,session,key,t_press\nu,s,a,0\n"))


def test_bad_rows_rejected_with_warning(tmp_path, caplog):
    text = HEADER + "u,s,a,100,50\nu,s,b,0,30\nu,s,c,40,junk\nu,s,d,50,90\n"
    with caplog.at_level("WARNING"):
        events = load_csv(_write(tmp_path, text))
    assert [e.key for e in events] == ["b", "d"]
    assert any("line 2" in r.message for r in caplog.records)
    assert any("line 4" in r.message for r in caplog.records)


def test_to_sequences_hand_example(tmp_path):
    text = HEADER + (
        "u,s,a,0,60\n"
        "u,s,b,100,180\n"
        "u,s,c,250,300\n"
    )
    seqs = to_sequences(load_csv(_write(tmp_path, text)))
    assert len(seqs) == 1
    seq = seqs[0]
    # first keystroke carries no interval: labels are keystrokes 2..3
    assert seq.labels == ("b", "c")
    assert_allclose(seq.features[:, 0], [100.0, 150.0])
    assert_allclose(seq.features[:, 1], [80.0, 50.0])


def test_clamping_to_one_ms(tmp_path):
    text = HEADER + "u,s,a,0,0\nu,s,b,0,0\n"
    seqs = to_sequences(load_csv(_write(tmp_path, text)))
    assert_allclose(seqs[0].features, [[1.0, 1.0]])


def test_truncation(tmp_path):
    rows = "".join(f"u,s,k{i},{i*100},{i*100+40}\n" for i in range(8))
    seqs = to_sequences(load_csv(_write(tmp_path, HEADER + rows)), max_keystrokes=5)
    assert seqs[0].n == 4  # 5 keystrokes -> 4 intervals


def test_short_sessions_skipped(tmp_path, caplog):
    text = HEADER + "u,s1,a,0,10\nu,s2,a,0,10\nu,s2,b,50,70\n"
    with caplog.at_level("WARNING"):
        seqs = to_sequences(load_csv(_write(tmp_path, text)))
    assert [s.session for s in seqs] == ["s2"]
    assert any("s1" in r.message for r in caplog.records)


def test_sequences_sorted_and_sized(tmp_path):
    text = HEADER + (
        "u2,s1,a,0,10\nu2,s1,b,20,30\n"
        "u1,s2,a,0,10\nu1,s2,b,20,30\nu1,s2,c,40,50\n"
        "u1,s1,a,0,10\nu1,s1,b,20,30\n"
    )
    seqs = to_sequences(load_csv(_write(tmp_path, text)))
    assert [(s.user, s.session, s.n) for s in seqs] == [
        ("u1", "s1", 1),
        ("u1", "s2", 2),
        ("u2", "s1", 1),
    ]


def test_extra_feature_columns(tmp_path):
    text = "user,session,key,t_press,t_release,f0,f1\n" + (
        "u,s,a,0,60,1.5,-2.0\n"
        "u,s,b,100,180,2.5,-3.0\n"
    )
    seqs = to_sequences(load_csv(_write(tmp_path, text)))
    assert seqs[0].features.shape == (1, 4)
    assert_allclose(seqs[0].features[0], [100.0, 80.0, 2.5, -3.0])


def test_timing_vector_21_features(tmp_path):
    rows = "".join(f"u,s,k{i},{i*100},{i*100+40}\n" for i in range(11))
    events = load_csv(_write(tmp_path, HEADER + rows))
    sessions = group_sessions(events)
    vec = timing_vector(sessions[("u", "s")])
    assert vec.shape == (21,)
    assert vec[0] == 0.0
    assert_allclose(vec[1:11], 100.0)
    assert_allclose(vec[11:], 40.0)


def test_synthesize_roundtrip(tmp_path):
    text = HEADER + "u,s,a,0,60\nu,s,b,100,180\nu,s,c,250,300\n"
    seqs = to_sequences(load_csv(_write(tmp_path, text)))
    events = synthesize_events(seqs[0])
    back = to_sequences(events)
    assert back[0].labels == seqs[0].labels
    assert_allclose(back[0].features, seqs[0].features)


def test_release_before_press_rejected_in_type():
    with pytest.raises(ValueError):
        KeystrokeEvent("u", "s", "a", 100.0, 50.0)
