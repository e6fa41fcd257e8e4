"""Keystroke event log ingestion and timing-feature extraction.

The on-disk format is a UTF-8 CSV with header
``user,session,key,t_press,t_release`` (timestamps in milliseconds,
integer or decimal) plus optional extra numeric columns ``f0..fk`` that
are carried through as additional per-event features.

Each session becomes one observation sequence.  Per keystroke ``n`` the
press-press interval is ``tau_n = press_n - press_(n-1)`` and the hold
duration is ``d_n = release_n - press_n``; the first keystroke has no
interval, so a session of L keystrokes yields a sequence of L - 1 steps
whose step ``k`` carries (tau, d, extras...) of keystroke ``k + 1``.
Intervals and durations are clamped to >= 1 ms before any log-domain use
(coarse timers can collapse adjacent timestamps).
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .model import ObservationSequence

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("user", "session", "key", "t_press", "t_release")
CLAMP_MS = 1.0


@dataclass
class KeystrokeEvent:
    user: str
    session: str
    key: str
    t_press: float
    t_release: float
    extras: tuple = ()

    def __post_init__(self):
        if self.t_release < self.t_press:
            raise ValueError("t_release must be >= t_press")


@dataclass
class LabeledSequence:
    """One session's observation sequence with raw event-type labels.

    Labels stay unencoded so the same sequence can be scored under models
    with different alphabets (unknown labels map to the marginal
    fallback).
    """

    user: str
    session: str
    labels: tuple
    features: np.ndarray

    def __post_init__(self):
        self.labels = tuple(str(s) for s in self.labels)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        self.features = feats
        if len(self.labels) != self.features.shape[0]:
            raise ValueError("labels and features must have equal length")

    @property
    def n(self):
        return len(self.labels)

    def encode(self, alphabet):
        """Bind to a model alphabet; labels outside it become novel ids."""
        return ObservationSequence(alphabet.encode(self.labels), self.features)


def load_csv(path):
    """Parse a keystroke event log; invalid rows are skipped with a warning."""
    events = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("missing column: user (empty file)") from None
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise ValueError(f"missing column: {col}")
        pos = {col: header.index(col) for col in REQUIRED_COLUMNS}
        extra_cols = [
            (i, name) for i, name in enumerate(header) if name.startswith("f") and name[1:].isdigit()
        ]
        extra_cols.sort(key=lambda item: int(item[1][1:]))

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t_press = float(row[pos["t_press"]])
                t_release = float(row[pos["t_release"]])
                extras = tuple(float(row[i]) for i, _ in extra_cols)
            except (ValueError, IndexError):
                log.warning("line %d: unparseable row skipped", lineno)
                continue
            if t_release < t_press:
                log.warning("line %d: t_release < t_press, row rejected", lineno)
                continue
            events.append(
                KeystrokeEvent(
                    user=row[pos["user"]],
                    session=row[pos["session"]],
                    key=row[pos["key"]],
                    t_press=t_press,
                    t_release=t_release,
                    extras=extras,
                )
            )
    return events


def save_csv(events, path):
    """Write events back in the canonical column order."""
    n_extra = len(events[0].extras) if events else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(REQUIRED_COLUMNS) + [f"f{i}" for i in range(n_extra)])
        for ev in events:
            writer.writerow(
                [ev.user, ev.session, ev.key, repr(float(ev.t_press)), repr(float(ev.t_release))]
                + [repr(float(x)) for x in ev.extras]
            )


def group_sessions(events):
    """Group events by (user, session), keeping input order within a session."""
    sessions = {}
    for ev in events:
        sessions.setdefault((ev.user, ev.session), []).append(ev)
    return dict(sorted(sessions.items()))


def to_sequences(events, max_keystrokes=None):
    """Derive per-session observation sequences, ordered by (user, session).

    Sessions are optionally truncated to their first ``max_keystrokes``
    keystrokes; sessions with fewer than two keystrokes are skipped.
    """
    out = []
    for (user, session), rows in group_sessions(events).items():
        if max_keystrokes is not None:
            rows = rows[:max_keystrokes]
        if len(rows) < 2:
            log.warning("session (%s, %s) has < 2 keystrokes, skipped", user, session)
            continue
        press = np.array([ev.t_press for ev in rows])
        release = np.array([ev.t_release for ev in rows])
        tau = np.maximum(np.diff(press), CLAMP_MS)
        dur = np.maximum(release - press, CLAMP_MS)[1:]
        cols = [tau, dur]
        if rows[0].extras:
            extras = np.array([ev.extras for ev in rows], dtype=np.float64)[1:]
            cols.extend(extras.T)
        out.append(
            LabeledSequence(
                user=user,
                session=session,
                labels=tuple(ev.key for ev in rows[1:]),
                features=np.column_stack(cols),
            )
        )
    return out


def timing_vector(session_events, max_keystrokes=None):
    """Fixed-length timing vector of one session.

    For L keystrokes: L press-press latencies (the first defined as 0,
    there being no session-start marker in the format) followed by the
    first L - 1 hold durations, then any extra sensor features column by
    column.  An 11-keystroke sample yields the classic 21 timing
    features.
    """
    rows = session_events[:max_keystrokes] if max_keystrokes else list(session_events)
    if len(rows) < 2:
        raise ValueError("timing vector needs at least 2 keystrokes")
    press = np.array([ev.t_press for ev in rows])
    release = np.array([ev.t_release for ev in rows])
    latencies = np.concatenate([[0.0], np.maximum(np.diff(press), CLAMP_MS)])
    durations = np.maximum(release - press, CLAMP_MS)[:-1]
    parts = [latencies, durations]
    if rows[0].extras:
        extras = np.array([ev.extras for ev in rows], dtype=np.float64)
        parts.append(extras.flatten(order="F"))
    return np.concatenate(parts)


def synthesize_events(seq, t0=0.0):
    """Reconstruct keystroke events from a (tau, d, ...) labeled sequence.

    The inverse of :func:`to_sequences` up to the anchoring first
    keystroke, which carries no interval of its own.
    """
    if seq.features.shape[1] < 2:
        raise ValueError("need interval and duration features to synthesize events")
    tau = seq.features[:, 0]
    dur = seq.features[:, 1]
    extras = tuple(seq.features[0, 2:]) if seq.features.shape[1] > 2 else ()
    events = [
        KeystrokeEvent(
            user=seq.user,
            session=seq.session,
            key=seq.labels[0],
            t_press=t0,
            t_release=t0 + dur[0],
            extras=extras,
        )
    ]
    t = t0
    for k in range(seq.n):
        t += tau[k]
        extras_k = tuple(seq.features[k, 2:]) if seq.features.shape[1] > 2 else ()
        events.append(
            KeystrokeEvent(
                user=seq.user,
                session=seq.session,
                key=seq.labels[k],
                t_press=t,
                t_release=t + dur[k],
                extras=extras_k,
            )
        )
    return events
