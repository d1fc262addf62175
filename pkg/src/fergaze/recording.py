"""Session recordings: parsing, serialization, unit conversion and kinematics.

A session file is a UTF-8 line format::

    # participant_id: P01
    # age: 29
    MSG 0 TRIALID 1
    0 512.0 384.0 900.0 512.0 384.0 905.0
    MSG 200 STEP 1
    200 300.5 210.0 901.2 . . .
    ...
    MSG 15200 END

Sample lines are ``<t_ms> <lx> <ly> <lpupil> <rx> <ry> <rpupil>``; an eye
without data is written as ``. . .``.  ``# key: value`` header lines carry
participant metadata and ``MSG <t> END`` optionally closes a trial.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .aoi import TrialManifest

NOMINAL_STEP_MS = {1: 10000.0, 2: 2000.0, 3: 3000.0}
STENCIL_HALF = 2  # 5-sample central difference
SAMPLE_FIELDS = ("lx", "ly", "lpupil", "rx", "ry", "rpupil")


class SessionFormatError(ValueError):
    """A line of a session file could not be parsed."""

    def __init__(self, lineno: int, message: str, field: str | None = None):
        self.lineno = lineno
        self.field = field
        super().__init__(f"line {lineno}: {message}")


class SessionStructureError(ValueError):
    """Markers are missing, misordered, or inconsistent with the protocol."""


@dataclass(frozen=True)
class ScreenGeometry:
    resolution_px: tuple[int, int] = (1024, 768)
    physical_size_cm: tuple[float, float] = (36.576, 27.432)
    viewing_distance_cm: float = 70.0
    sampling_rate_hz: float = 1000.0

    def __post_init__(self):
        values = (*self.resolution_px, *self.physical_size_cm, self.viewing_distance_cm)
        if any(not (v > 0) for v in values):
            raise ValueError(f"screen geometry values must be positive: {self}")
        if not self.sampling_rate_hz >= 250:
            raise ValueError(
                f"sampling_rate_hz must be >= 250, got {self.sampling_rate_hz}")

    @property
    def sample_interval_ms(self) -> float:
        return 1000.0 / self.sampling_rate_hz

    @property
    def center_px(self) -> tuple[float, float]:
        return self.resolution_px[0] / 2, self.resolution_px[1] / 2

    def to_dict(self) -> dict:
        return {
            "resolution_px": list(self.resolution_px),
            "physical_size_cm": list(self.physical_size_cm),
            "viewing_distance_cm": self.viewing_distance_cm,
            "sampling_rate_hz": self.sampling_rate_hz,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScreenGeometry":
        known = {"resolution_px", "physical_size_cm", "viewing_distance_cm", "sampling_rate_hz"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        kw = dict(d)
        for key in ("resolution_px", "physical_size_cm"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


def load_geometry(path) -> ScreenGeometry:
    with open(path, encoding="utf-8") as fh:
        return ScreenGeometry.from_dict(json.load(fh))


@dataclass(frozen=True)
class ParticipantMeta:
    participant_id: str = "unknown"
    age: float | None = None
    drift_error_deg: float = 0.0
    education: str | None = None
    eyes_test_score: float | None = None

    def __post_init__(self):
        if self.drift_error_deg < 0:
            raise ValueError("drift_error_deg must be >= 0")


class GazeSample(NamedTuple):
    t_ms: float
    left: tuple[float, float, float]
    right: tuple[float, float, float]
    validity: tuple[bool, bool]


@dataclass(frozen=True)
class InterestPeriod:
    step_index: int
    start_ms: float
    end_ms: float

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True, eq=False)
class SampleArrays:
    """Column arrays for a run of samples.

    ``left``/``right`` are ``(n, 3)`` arrays of x, y, pupil; rows of an
    invalid eye hold NaN.
    """

    t_ms: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __len__(self):
        return len(self.t_ms)

    @property
    def valid(self) -> np.ndarray:
        """``(n, 2)`` boolean validity for left and right eye."""
        return np.column_stack([np.isfinite(self.left[:, 0]), np.isfinite(self.right[:, 0])])

    def slice(self, start: int, stop: int) -> "SampleArrays":
        return SampleArrays(self.t_ms[start:stop], self.left[start:stop], self.right[start:stop])

    def sample(self, i: int) -> GazeSample:
        lv, rv = self.valid[i]
        return GazeSample(float(self.t_ms[i]), tuple(map(float, self.left[i])),
                          tuple(map(float, self.right[i])), (bool(lv), bool(rv)))

    def binocular_xy(self) -> np.ndarray:
        """Mean position of the valid eyes, NaN where neither eye is valid."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(np.stack([self.left[:, :2], self.right[:, :2]]), axis=0)

    def binocular_pupil(self) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(np.stack([self.left[:, 2], self.right[:, 2]]), axis=0)

    def equals(self, other: "SampleArrays") -> bool:
        return all(np.array_equal(a, b, equal_nan=True) for a, b in
                   ((self.t_ms, other.t_ms), (self.left, other.left), (self.right, other.right)))


@dataclass(frozen=True, eq=False)
class Trial:
    trial_id: int
    periods: tuple[InterestPeriod, InterestPeriod, InterestPeriod]
    samples: SampleArrays
    manifest: "TrialManifest | None" = None
    end_marker_ms: float | None = None

    def period(self, step: int) -> InterestPeriod:
        return self.periods[step - 1]

    def period_bounds(self, step: int) -> tuple[int, int]:
        """Index range ``[i0, i1)`` of the samples inside an interest period."""
        p = self.period(step)
        t = self.samples.t_ms
        return int(np.searchsorted(t, p.start_ms, "left")), int(np.searchsorted(t, p.end_ms, "left"))

    def period_samples(self, step: int) -> SampleArrays:
        return self.samples.slice(*self.period_bounds(step))


@dataclass(frozen=True, eq=False)
class SessionRecording:
    participant: ParticipantMeta
    geometry: ScreenGeometry
    trials: tuple[Trial, ...]

    def trial(self, trial_id: int) -> Trial:
        for tr in self.trials:
            if tr.trial_id == trial_id:
                return tr
        raise KeyError(trial_id)

    def without_warmup(self, n: int = 6) -> "SessionRecording":
        """Drop the first ``n`` trials (in recording order)."""
        return replace(self, trials=self.trials[n:])


# ---------------------------------------------------------------------------
# parsing

def _num(tok: str, lineno: int, name: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise SessionFormatError(lineno, f"field {name} not numeric", name) from None
    if not math.isfinite(v):
        raise SessionFormatError(lineno, f"field {name} not finite", name)
    return v


def _eye(toks: Sequence[str], lineno: int, names: Sequence[str]) -> tuple[float, float, float]:
    if toks[0] == "." or toks[1] == ".":
        return (math.nan, math.nan, math.nan)
    x, y = _num(toks[0], lineno, names[0]), _num(toks[1], lineno, names[1])
    p = _num(toks[2], lineno, names[2]) if toks[2] != "." else math.nan
    if p < 0:
        raise SessionFormatError(lineno, f"field {names[2]} negative", names[2])
    return (x, y, p)


def parse_sample_line(line: str, lineno: int = 1) -> GazeSample:
    toks = line.split()
    if len(toks) != 7:
        raise SessionFormatError(lineno, f"expected 7 fields, got {len(toks)}")
    t = _num(toks[0], lineno, "t_ms")
    left = _eye(toks[1:4], lineno, SAMPLE_FIELDS[:3])
    right = _eye(toks[4:7], lineno, SAMPLE_FIELDS[3:])
    return GazeSample(t, left, right, (not math.isnan(left[0]), not math.isnan(right[0])))


_META_FIELDS = {
    "participant_id": str, "age": float, "drift_error_deg": float,
    "education": str, "eyes_test_score": float,
}


class _TrialBuilder:
    def __init__(self, trial_id, lineno):
        self.trial_id = trial_id
        self.lineno = lineno
        self.steps: dict[int, float] = {}
        self.end_ms: float | None = None
        self.rows: list[tuple] = []


def parse_session(lines: Iterable[str], geometry: ScreenGeometry,
                  manifests: Mapping[int, "TrialManifest"] | Sequence["TrialManifest"] | None = None,
                  participant: ParticipantMeta | None = None,
                  duration_tolerance: float | None = 0.05) -> SessionRecording:
    """Parse a session stream into a :class:`SessionRecording`.

    Parameters
    ----------
    lines : iterable of str
        Session file lines.
    geometry : ScreenGeometry
    manifests : mapping or sequence of TrialManifest, optional
        Attached to trials by ``trial_id``; every trial must have one when given.
    participant : ParticipantMeta, optional
        Overrides metadata read from ``#`` header lines.
    duration_tolerance : float or None
        Relative tolerance on the nominal 10 s / 2 s / 3 s step durations and
        on the per-period sample count.  ``None`` disables both checks.
    """
    meta: dict = {}
    trials: list[_TrialBuilder] = []
    cur: _TrialBuilder | None = None
    last_sample_t = -math.inf

    def marker_time(tok, lineno):
        t = _num(tok, lineno, "t_ms")
        if t < last_sample_t:
            raise SessionFormatError(lineno, f"timestamp {t:g} before previous sample {last_sample_t:g}", "t_ms")
        return t

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            key = key.strip()
            if sep and key in _META_FIELDS:
                try:
                    meta[key] = _META_FIELDS[key](value.strip())
                except ValueError:
                    raise SessionFormatError(lineno, f"field {key} not numeric", key) from None
            continue
        toks = line.split()
        if toks[0] == "MSG":
            if len(toks) < 3:
                raise SessionFormatError(lineno, "truncated MSG line")
            t = marker_time(toks[1], lineno)
            kind = toks[2]
            if kind == "TRIALID":
                if len(toks) != 4:
                    raise SessionFormatError(lineno, "TRIALID needs one argument")
                try:
                    tid = int(toks[3])
                except ValueError:
                    raise SessionFormatError(lineno, "field trial_id not an integer", "trial_id") from None
                if any(b.trial_id == tid for b in trials):
                    raise SessionStructureError(f"trial {tid}: duplicate TRIALID (line {lineno})")
                cur = _TrialBuilder(tid, lineno)
                trials.append(cur)
            elif kind == "STEP":
                if cur is None:
                    raise SessionStructureError(f"line {lineno}: STEP marker before any TRIALID")
                if len(toks) != 4 or toks[3] not in ("1", "2", "3"):
                    raise SessionFormatError(lineno, "STEP must be 1, 2 or 3", "step")
                step = int(toks[3])
                if step in cur.steps:
                    raise SessionStructureError(f"trial {cur.trial_id}: duplicate STEP {step} marker")
                if step != len(cur.steps) + 1:
                    raise SessionStructureError(f"trial {cur.trial_id}: STEP {step} marker out of order")
                cur.steps[step] = t
            elif kind == "END":
                if cur is None:
                    raise SessionStructureError(f"line {lineno}: END marker before any TRIALID")
                cur.end_ms = t
            else:
                raise SessionFormatError(lineno, f"unknown message {kind!r}", "msg")
            continue
        if cur is None:
            raise SessionStructureError(f"line {lineno}: sample outside any trial")
        if cur.end_ms is not None:
            raise SessionStructureError(f"trial {cur.trial_id}: sample after END (line {lineno})")
        s = parse_sample_line(line, lineno)
        if s.t_ms <= last_sample_t:
            raise SessionFormatError(lineno, f"timestamp {s.t_ms:g} not after {last_sample_t:g}", "t_ms")
        last_sample_t = s.t_ms
        cur.rows.append((s.t_ms, *s.left, *s.right))

    if participant is None:
        participant = ParticipantMeta(**meta)
    if manifests is not None and not isinstance(manifests, Mapping):
        manifests = {m.trial_id: m for m in manifests}
    built = [_finish_trial(b, geometry, manifests, duration_tolerance) for b in trials]
    return SessionRecording(participant, geometry, tuple(built))


def _finish_trial(b: _TrialBuilder, geometry, manifests, tol) -> Trial:
    missing = [k for k in (1, 2, 3) if k not in b.steps]
    if missing:
        raise SessionStructureError(
            f"trial {b.trial_id}: missing STEP {', '.join(map(str, missing))} marker")
    arr = np.array(b.rows, dtype=float).reshape(-1, 7)
    t = arr[:, 0]
    dt = geometry.sample_interval_ms
    if b.end_ms is not None:
        end = b.end_ms
    elif len(t):
        end = float(t[-1]) + dt
    else:
        raise SessionStructureError(f"trial {b.trial_id}: no samples and no END marker")
    bounds = [b.steps[1], b.steps[2], b.steps[3], end]
    if end <= bounds[2]:
        raise SessionStructureError(f"trial {b.trial_id}: trial ends before STEP 3 starts")
    periods = tuple(InterestPeriod(k, bounds[k - 1], bounds[k]) for k in (1, 2, 3))
    if tol is not None:
        for p in periods:
            nominal = NOMINAL_STEP_MS[p.step_index]
            if abs(p.duration_ms - nominal) > tol * nominal:
                raise SessionStructureError(
                    f"trial {b.trial_id}: step {p.step_index} lasts {p.duration_ms:g} ms, "
                    f"expected {nominal:g} ms ± {tol:.0%}")
            n = int(np.count_nonzero((t >= p.start_ms) & (t < p.end_ms)))
            expected = p.duration_ms / dt
            if abs(n - expected) > tol * expected:
                raise SessionStructureError(
                    f"trial {b.trial_id}: step {p.step_index} has {n} samples, "
                    f"expected about {expected:g}")
    samples = SampleArrays(t, arr[:, 1:4], arr[:, 4:7])
    manifest = None
    if manifests is not None:
        if b.trial_id not in manifests:
            raise SessionStructureError(f"trial {b.trial_id}: no manifest entry")
        manifest = manifests[b.trial_id]
    return Trial(b.trial_id, periods, samples, manifest, b.end_ms)


def read_session(path, geometry: ScreenGeometry, manifests=None, **kw) -> SessionRecording:
    with open(path, encoding="utf-8") as fh:
        return parse_session(fh, geometry, manifests, **kw)


# ---------------------------------------------------------------------------
# serialization

def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return f"{v:.1f}"
    return repr(float(v))


def _fmt_t(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(float(v))


def _fmt_eye(row) -> str:
    if math.isnan(row[0]):
        return ". . ."
    p = "." if math.isnan(row[2]) else _fmt(row[2])
    return f"{_fmt(row[0])} {_fmt(row[1])} {p}"


def iter_session_lines(rec: SessionRecording) -> Iterator[str]:
    """Yield the canonical text form of ``rec`` (without line terminators)."""
    meta = rec.participant
    for key in _META_FIELDS:
        value = getattr(meta, key)
        if value is not None:
            yield f"# {key}: {value}"
    for tr in rec.trials:
        s = tr.samples
        t = s.t_ms
        first = float(t[0]) if len(t) else tr.periods[0].start_ms
        yield f"MSG {_fmt_t(min(first, tr.periods[0].start_ms))} TRIALID {tr.trial_id}"
        step_at = {p.step_index: p.start_ms for p in tr.periods}
        next_step = 1
        for i in range(len(t)):
            while next_step <= 3 and step_at[next_step] <= t[i]:
                yield f"MSG {_fmt_t(step_at[next_step])} STEP {next_step}"
                next_step += 1
            yield f"{_fmt_t(t[i])} {_fmt_eye(s.left[i])} {_fmt_eye(s.right[i])}"
        while next_step <= 3:
            yield f"MSG {_fmt_t(step_at[next_step])} STEP {next_step}"
            next_step += 1
        if tr.end_marker_ms is not None:
            yield f"MSG {_fmt_t(tr.end_marker_ms)} END"


def serialize_session(rec: SessionRecording) -> str:
    return "\n".join(iter_session_lines(rec)) + "\n"


def write_session(rec: SessionRecording, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in iter_session_lines(rec):
            fh.write(line)
            fh.write("\n")


# ---------------------------------------------------------------------------
# units and kinematics

def deg_per_px(geometry: ScreenGeometry) -> tuple[float, float]:
    """Visual degrees subtended by one pixel at screen center, per axis."""
    d = geometry.viewing_distance_cm
    out = []
    for size_cm, n_px in zip(geometry.physical_size_cm, geometry.resolution_px):
        pitch = size_cm / n_px
        out.append(math.degrees(math.atan(pitch / d)))
    return out[0], out[1]


def px_to_deg(xy: np.ndarray, geometry: ScreenGeometry) -> np.ndarray:
    """Convert ``(..., 2)`` pixel positions to degrees relative to screen center."""
    scale = np.asarray(deg_per_px(geometry))
    return (np.asarray(xy, dtype=float) - np.asarray(geometry.center_px)) * scale


@dataclass(frozen=True, eq=False)
class KinematicSeries:
    """Per-eye position, velocity and acceleration for one interest period.

    Arrays are indexed ``[eye, sample, axis]`` with eye 0 = left, 1 = right.
    Units: degrees, deg/s, deg/s^2.  Entries that are not ``valid`` are NaN.
    """

    t_ms: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    valid: np.ndarray  # (2, n) bool
    trial_id: int | None = None
    period: InterestPeriod | None = None
    sampling_rate_hz: float = 1000.0

    def __len__(self):
        return len(self.t_ms)

    @property
    def valid_binocular(self) -> np.ndarray:
        return self.valid[0] & self.valid[1]

    def speed(self) -> np.ndarray:
        return np.hypot(self.velocity[..., 0], self.velocity[..., 1])

    def acc_magnitude(self) -> np.ndarray:
        return np.hypot(self.acceleration[..., 0], self.acceleration[..., 1])


def _central_diff(x: np.ndarray, ok: np.ndarray, rate: float) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    out = np.full_like(x, np.nan)
    good = np.zeros(n, dtype=bool)
    h = STENCIL_HALF
    if n < 2 * h + 1:
        return out, good
    out[h:n - h] = (x[2 * h:] + x[h + 1:n - h + 1] - x[h - 1:n - h - 1] - x[:n - 2 * h]) * (rate / 6.0)
    win = np.lib.stride_tricks.sliding_window_view(ok, 2 * h + 1)
    good[h:n - h] = win.all(axis=1)
    out[~good] = np.nan
    return out, good


def samples_kinematics(samples: SampleArrays, geometry: ScreenGeometry, *,
                       trial_id=None, period=None) -> KinematicSeries:
    """Kinematics of one contiguous run of samples (usually one period)."""
    rate = geometry.sampling_rate_hz
    n = len(samples)
    pos = np.stack([px_to_deg(samples.left[:, :2], geometry), px_to_deg(samples.right[:, :2], geometry)])
    ok = np.isfinite(pos[..., 0])
    vel = np.full_like(pos, np.nan)
    acc = np.full_like(pos, np.nan)
    valid = np.zeros((2, n), dtype=bool)
    if n < 4 * STENCIL_HALF + 1:
        where = f"trial {trial_id} step {period.step_index}" if period is not None else "series"
        warnings.warn(f"{where}: {n} samples is shorter than the kinematic window; all flagged invalid",
                      RuntimeWarning, stacklevel=2)
    else:
        for e in range(2):
            v, vok = _central_diff(pos[e], ok[e], rate)
            a, aok = _central_diff(np.nan_to_num(v), vok, rate)
            good = vok & aok
            vel[e][good] = v[good]
            acc[e][good] = a[good]
            valid[e] = good
    return KinematicSeries(samples.t_ms, pos, vel, acc, valid, trial_id, period, rate)


def compute_kinematics(recording: SessionRecording) -> dict[tuple[int, int], KinematicSeries]:
    """Velocity and acceleration for every (trial, step) of a recording."""
    out = {}
    for tr in recording.trials:
        for p in tr.periods:
            out[tr.trial_id, p.step_index] = samples_kinematics(
                tr.period_samples(p.step_index), recording.geometry,
                trial_id=tr.trial_id, period=p)
    return out


# ---------------------------------------------------------------------------
# face assets

@dataclass(frozen=True, eq=False)
class Landmarks68:
    face_id: str
    points: np.ndarray  # (68, 2) in source-image pixels
    image_size: tuple[float, float] = (200.0, 200.0)


def _load_landmarks(obj: Mapping, default_size) -> dict[str, Landmarks68]:
    top_size = obj.get("_image_size", default_size)
    out = {}
    for face_id, value in obj.items():
        if face_id.startswith("_"):
            continue
        size = top_size
        if isinstance(value, Mapping):
            size = value.get("image_size", top_size)
            value = value["points"]
        pts = np.asarray(value, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"{face_id}: landmarks must be [x, y] pairs")
        if len(pts) != 68:
            raise ValueError(f"{face_id}: expected 68 landmarks, got {len(pts)}")
        out[face_id] = Landmarks68(face_id, pts, (float(size[0]), float(size[1])))
    return out


def _load_embeddings(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0] == "face_id":
                continue
            vec = np.array([float(v) for v in row[1:]])
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(
                    f"{row[0]}: embedding has {len(vec)} dimensions, expected {dim} (ragged file)")
            out[row[0]] = vec
    return out


def load_face_assets(landmark_file, embedding_file=None, default_image_size=(200.0, 200.0)):
    """Load per-face landmarks and (optionally) embedding vectors.

    Landmarks are JSON ``{face_id: [[x, y] x 68]}``; an optional top-level
    ``"_image_size": [w, h]`` gives the source-image size (default 200x200).
    Embeddings are CSV ``face_id,v0,...``, all rows sharing one dimension.
    """
    if isinstance(landmark_file, Mapping):
        obj = landmark_file
    else:
        with open(landmark_file, encoding="utf-8") as fh:
            obj = json.load(fh)
    landmarks = _load_landmarks(obj, default_image_size)
    embeddings = _load_embeddings(embedding_file) if embedding_file is not None else {}
    return landmarks, embeddings


def embedding_dimension(embeddings: Mapping[str, np.ndarray]) -> int | None:
    dims = {len(v) for v in embeddings.values()}
    if len(dims) > 1:
        raise ValueError("ragged embedding dimensions")
    return dims.pop() if dims else None


def write_landmarks(landmarks: Mapping[str, Landmarks68], path) -> None:
    sizes = {lm.image_size for lm in landmarks.values()}
    obj: dict = {}
    if len(sizes) == 1:
        obj["_image_size"] = list(sizes.pop())
        for fid, lm in landmarks.items():
            obj[fid] = lm.points.tolist()
    else:
        for fid, lm in landmarks.items():
            obj[fid] = {"points": lm.points.tolist(), "image_size": list(lm.image_size)}
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")
