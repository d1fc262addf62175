"""Microsaccade detection, dispersion-based fixations and per-fixation feature rows."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .aoi import NONE, AoiAssignment, AoiMap, assign_fixation, build_aoi_map
from .recording import (KinematicSeries, SampleArrays, ScreenGeometry, SessionRecording, Trial,
                        px_to_deg, samples_kinematics)
from .tables import format_csv

AMPLITUDE_PRESETS = {
    "standard": (0.01, 1.0),
    "narrow": (0.01, 0.1),
}
EYES = ("left", "right", "binocular")


@dataclass(frozen=True)
class MicrosaccadeParams:
    """Detector thresholds.  Durations in ms; ``refractory`` in samples.

    ``period_guard`` is the number of samples skipped at the start and end of
    every scanned period (defaults to ``refractory``).
    """

    velocity_threshold: float = 15.0
    acc_threshold: float = 5000.0
    min_duration: float = 10.0
    max_duration: float = 100.0
    amplitude_range: tuple[float, float] = AMPLITUDE_PRESETS["standard"]
    refractory: int = 100
    period_guard: int | None = None

    def __post_init__(self):
        if not 0 < self.min_duration <= self.max_duration:
            raise ValueError("need 0 < min_duration <= max_duration")
        lo, hi = self.amplitude_range
        if not lo < hi:
            raise ValueError("amplitude_range min must be below max")
        if self.velocity_threshold <= 0 or self.acc_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.refractory < 0 or (self.period_guard is not None and self.period_guard < 0):
            raise ValueError("refractory and period_guard must be >= 0")

    @property
    def guard(self) -> int:
        return self.refractory if self.period_guard is None else self.period_guard

    @classmethod
    def from_dict(cls, d: Mapping) -> "MicrosaccadeParams":
        kw = dict(d)
        preset = kw.pop("amplitude_preset", None)
        if preset is not None:
            kw["amplitude_range"] = AMPLITUDE_PRESETS[preset]
        if "amplitude_range" in kw:
            kw["amplitude_range"] = tuple(kw["amplitude_range"])
        return cls(**kw)


@dataclass(frozen=True)
class Microsaccade:
    start_ms: float
    end_ms: float
    duration_ms: float
    amplitude_deg: float
    peak_velocity_deg_s: float
    eye: str
    trial_id: int | None = None
    step: int | None = None


def _runs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return np.flatnonzero(d == 1), np.flatnonzero(d == -1)


def detect_microsaccades(kin: KinematicSeries, params: MicrosaccadeParams = MicrosaccadeParams(),
                         eye: str = "binocular") -> list[Microsaccade]:
    """Velocity/acceleration threshold detector over one interest period.

    A candidate is a run of samples where every considered eye exceeds both
    the speed and the acceleration threshold.  The first sub-threshold sample
    closes the run; the run is accepted when its duration and the displacement
    between its first and closing sample fall in range.  Detection is
    suppressed for ``params.refractory`` samples after an accepted event and
    for ``params.guard`` samples at both ends of the period.
    """
    if eye not in EYES:
        raise ValueError(f"eye must be one of {EYES}")
    eyes = (0, 1) if eye == "binocular" else (EYES.index(eye),)
    n = len(kin)
    dt = 1000.0 / kin.sampling_rate_hz
    step = kin.period.step_index if kin.period is not None else None
    if n * dt < params.min_duration:
        warnings.warn(f"trial {kin.trial_id} step {step}: period shorter than min_duration",
                      RuntimeWarning, stacklevel=2)
        return []
    valid = kin.valid[list(eyes)].all(axis=0)
    speed = kin.speed()
    accm = kin.acc_magnitude()
    with np.errstate(invalid="ignore"):
        exceed = valid.copy()
        for e in eyes:
            exceed &= (speed[e] > params.velocity_threshold) & (accm[e] > params.acc_threshold)

    starts, ends = _runs(exceed)
    guard = params.guard
    scan_stop = n - guard
    next_free = guard
    out: list[Microsaccade] = []
    for s, e in zip(starts, ends):
        if e >= scan_stop:
            break
        s_eff = max(int(s), next_free)
        if s_eff >= e:
            continue
        if not valid[e] or (s_eff == s and s > 0 and not valid[s - 1]):
            continue  # run touches a tracking gap
        dur = float(e - s_eff) * dt
        if not params.min_duration <= dur <= params.max_duration:
            continue
        disp = [float(np.hypot(*(kin.position[k, e] - kin.position[k, s_eff]))) for k in eyes]
        amp = float(np.mean(disp))
        lo, hi = params.amplitude_range
        if not lo <= amp <= hi:
            continue
        peak = float(np.max(np.mean(speed[list(eyes), s_eff:e], axis=0)))
        out.append(Microsaccade(float(kin.t_ms[s_eff]), float(kin.t_ms[e]), dur, amp, peak, eye,
                                kin.trial_id, step))
        next_free = int(e) + 1 + params.refractory
    return out


# ---------------------------------------------------------------------------
# fixations

@dataclass(frozen=True)
class FixationParams:
    max_dispersion_deg: float = 1.0
    min_duration_ms: float = 60.0


@dataclass(frozen=True)
class FixationEvent:
    trial_id: int
    step_index: int
    start_ms: float
    end_ms: float
    duration_ms: float
    centroid_px: tuple[float, float]
    index: int
    avg_pupil: float
    assignment: AoiAssignment | None = None


def _dispersion_end(xd, yd, i, j0, stop, thr, chunk=256):
    """First index ``j >= j0`` such that samples ``[i, j]`` exceed ``thr`` (or ``stop``)."""
    xmin, xmax = xd[i:j0].min(), xd[i:j0].max()
    ymin, ymax = yd[i:j0].min(), yd[i:j0].max()
    j = j0
    while j < stop:
        k = min(stop, j + chunk)
        cxmin = np.minimum.accumulate(np.concatenate([[xmin], xd[j:k]]))[1:]
        cxmax = np.maximum.accumulate(np.concatenate([[xmax], xd[j:k]]))[1:]
        cymin = np.minimum.accumulate(np.concatenate([[ymin], yd[j:k]]))[1:]
        cymax = np.maximum.accumulate(np.concatenate([[ymax], yd[j:k]]))[1:]
        over = np.flatnonzero((cxmax - cxmin) + (cymax - cymin) > thr)
        if len(over):
            return j + int(over[0])
        xmin, xmax, ymin, ymax = cxmin[-1], cxmax[-1], cymin[-1], cymax[-1]
        j = k
    return stop


def detect_fixation_intervals(samples: SampleArrays, geometry: ScreenGeometry,
                              params: FixationParams = FixationParams()) -> list[tuple[int, int]]:
    """Dispersion-threshold (I-DT) fixations as sample index ranges ``[i, j)``.

    Uses the mean of the valid eyes; samples with no valid eye split the scan.
    """
    xy = px_to_deg(samples.binocular_xy(), geometry)
    ok = np.isfinite(xy[:, 0])
    dt = geometry.sample_interval_ms
    minlen = max(1, math.ceil(params.min_duration_ms / dt - 1e-9))
    thr = params.max_dispersion_deg
    xd, yd = xy[:, 0], xy[:, 1]
    out = []
    for a, b in zip(*_runs(ok)):
        i = int(a)
        while i + minlen <= b:
            wx, wy = xd[i:i + minlen], yd[i:i + minlen]
            if (wx.max() - wx.min()) + (wy.max() - wy.min()) > thr:
                i += 1
                continue
            j = _dispersion_end(xd, yd, i, i + minlen, int(b), thr)
            out.append((i, j))
            i = j
    return out


def _fixation_from_range(trial: Trial, samples: SampleArrays, i: int, j: int, step: int,
                         dt: float) -> tuple:
    part = samples.slice(i, j)
    xy = part.binocular_xy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        c = np.nanmean(xy, axis=0)
        pupil = float(np.nanmean(part.binocular_pupil()))
    start = float(part.t_ms[0])
    end = float(part.t_ms[-1]) + dt
    return start, end, (float(c[0]), float(c[1])), pupil


def detect_fixations(recording: SessionRecording, maps: Mapping[tuple[int, int], AoiMap] | None = None,
                     params: FixationParams = FixationParams(),
                     assign_kw: Mapping | None = None) -> dict[int, list[FixationEvent]]:
    """Fixations of every trial, split at interest-period boundaries and assigned to AOIs."""
    geom = recording.geometry
    dt = geom.sample_interval_ms
    out = {}
    for tr in recording.trials:
        raw = []
        for p in tr.periods:
            ps = tr.period_samples(p.step_index)
            for i, j in detect_fixation_intervals(ps, geom, params):
                raw.append((p.step_index, *_fixation_from_range(tr, ps, i, j, p.step_index, dt)))
        out[tr.trial_id] = _finalize(tr, raw, maps, assign_kw)
    return out


def fixations_from_intervals(recording: SessionRecording,
                             intervals: Mapping[int, Sequence[tuple[float, float]]],
                             maps: Mapping[tuple[int, int], AoiMap] | None = None,
                             assign_kw: Mapping | None = None) -> dict[int, list[FixationEvent]]:
    """Build fixation events from externally supplied ``(start_ms, end_ms)`` intervals.

    Each interval must lie inside one interest period of its trial.
    """
    dt = recording.geometry.sample_interval_ms
    out = {}
    for tr in recording.trials:
        raw = []
        for start, end in sorted(intervals.get(tr.trial_id, ())):
            step = next((p.step_index for p in tr.periods
                         if p.start_ms <= start and end <= p.end_ms), None)
            if step is None:
                raise ValueError(f"trial {tr.trial_id}: fixation {start:g}-{end:g} ms "
                                 "does not fit inside one interest period")
            t = tr.samples.t_ms
            i, j = int(np.searchsorted(t, start)), int(np.searchsorted(t, end))
            if j <= i:
                raise ValueError(f"trial {tr.trial_id}: fixation {start:g}-{end:g} ms has no samples")
            _, _, c, pupil = _fixation_from_range(tr, tr.samples, i, j, step, dt)
            raw.append((step, float(start), float(end), c, pupil))
        out[tr.trial_id] = _finalize(tr, raw, maps, assign_kw)
    return out


def _finalize(tr: Trial, raw, maps, assign_kw) -> list[FixationEvent]:
    events = []
    for k, (step, start, end, c, pupil) in enumerate(sorted(raw, key=lambda r: r[1]), start=1):
        assignment = None
        if maps is not None:
            assignment = assign_fixation(c, maps[tr.trial_id, step], **(assign_kw or {}))
        events.append(FixationEvent(tr.trial_id, step, start, end, end - start, c, k, pupil, assignment))
    if not events:
        warnings.warn(f"trial {tr.trial_id}: no fixations", RuntimeWarning, stacklevel=3)
    return events


def build_session_maps(recording: SessionRecording, landmarks) -> dict[tuple[int, int], AoiMap]:
    maps = {}
    for tr in recording.trials:
        if tr.manifest is None:
            raise ValueError(f"trial {tr.trial_id}: no manifest attached")
        m1 = build_aoi_map(tr.manifest, landmarks, 1, recording.geometry)
        maps[tr.trial_id, 1] = m1
        maps[tr.trial_id, 2] = AoiMap(2, m1.faces, m1.word, m1.target_face_index)
        maps[tr.trial_id, 3] = build_aoi_map(tr.manifest, landmarks, 3, recording.geometry)
    return maps


# ---------------------------------------------------------------------------
# per-fixation features

def microsaccade_rates(fixation: FixationEvent, events_left: Iterable[Microsaccade],
                       events_right: Iterable[Microsaccade],
                       events_binocular: Iterable[Microsaccade]) -> tuple[float, float, float]:
    """Binocular rate (Hz), mean monocular rate (Hz) and mean binocular duration (ms).

    An event belongs to the fixation containing its onset.
    """
    if fixation.duration_ms <= 0:
        raise ValueError("fixation duration must be positive")

    def inside(evs):
        return [e for e in evs if fixation.start_ms <= e.start_ms < fixation.end_ms]

    secs = fixation.duration_ms / 1000.0
    b = inside(events_binocular)
    nl, nr = len(inside(events_left)), len(inside(events_right))
    avg_dur = float(np.mean([e.duration_ms for e in b])) if b else 0.0
    return len(b) / secs, (nl + nr) / 2 / secs, avg_dur


@dataclass(frozen=True)
class FeatureRow:
    participant_id: str
    trial_id: int
    interest_period_index: int
    fixation_index_in_trial: int
    avg_pupil_au: float
    avg_monocular_ms_rate_hz: float
    binocular_ms_rate_hz: float
    binocular_ms_avg_duration_ms: float
    fixation_duration_ms: float
    emotion_of_fixated_face: str
    roi_label: str
    target_emotion: str
    face_region: str

    def as_tuple(self) -> tuple:
        return (self.participant_id, self.trial_id, self.interest_period_index,
                self.fixation_index_in_trial, self.avg_pupil_au, self.avg_monocular_ms_rate_hz,
                self.binocular_ms_rate_hz, self.binocular_ms_avg_duration_ms,
                self.fixation_duration_ms, self.emotion_of_fixated_face, self.roi_label,
                self.target_emotion, self.face_region)


NUMERIC_FEATURES = {
    "Fixation index in trial": "fixation_index_in_trial",
    "Average pupil size": "avg_pupil_au",
    "Average of both eyes microsaccade's rate": "avg_monocular_ms_rate_hz",
    "Binocular microsaccade's rate": "binocular_ms_rate_hz",
    "Binocular microsaccade average duration": "binocular_ms_avg_duration_ms",
    "Fixation duration": "fixation_duration_ms",
}
NUMERIC_KIND = {
    "Fixation index in trial": "Fixation", "Average pupil size": "Pupil",
    "Average of both eyes microsaccade's rate": "Microsaccade",
    "Binocular microsaccade's rate": "Microsaccade",
    "Binocular microsaccade average duration": "Microsaccade", "Fixation duration": "Fixation",
}
CATEGORICAL_FEATURES = {
    "Emotions": "emotion_of_fixated_face",
    "RoI Label": "roi_label",
    "Target Emotion": "target_emotion",
    "Face Region": "face_region",
    "Participant ID": "participant_id",
    "Interest Period Index": "interest_period_index",
}
FACE_FIELDS = {"emotion_of_fixated_face", "roi_label", "face_region"}


@dataclass
class SessionEvents:
    """Fixations and microsaccades of one recording."""

    fixations: dict[int, list[FixationEvent]]
    microsaccades: dict[tuple[int, int, str], list[Microsaccade]] = field(default_factory=dict)

    def trial_microsaccades(self, trial_id: int, eye: str) -> list[Microsaccade]:
        out = []
        for step in (1, 2, 3):
            out.extend(self.microsaccades.get((trial_id, step, eye), []))
        return out


def extract_events(recording: SessionRecording, maps=None,
                   params: MicrosaccadeParams = MicrosaccadeParams(),
                   fixation_params: FixationParams = FixationParams(),
                   fixations: Mapping[int, list[FixationEvent]] | None = None) -> SessionEvents:
    """Run fixation and microsaccade detection over every trial and period."""
    if fixations is None:
        fixations = detect_fixations(recording, maps, fixation_params)
    ms = {}
    for tr in recording.trials:
        for p in tr.periods:
            kin = samples_kinematics(tr.period_samples(p.step_index), recording.geometry,
                                     trial_id=tr.trial_id, period=p)
            for eye in EYES:
                ms[tr.trial_id, p.step_index, eye] = detect_microsaccades(kin, params, eye)
    return SessionEvents(dict(fixations), ms)


def fixation_feature_rows(recording: SessionRecording, maps=None,
                          params: MicrosaccadeParams = MicrosaccadeParams(),
                          events: SessionEvents | None = None) -> list[FeatureRow]:
    """One :class:`FeatureRow` per fixation with the six numeric and categorical variables."""
    if events is None:
        events = extract_events(recording, maps, params)
    pid = recording.participant.participant_id
    rows = []
    for tr in recording.trials:
        fixes = events.fixations.get(tr.trial_id, [])
        if not fixes:
            continue
        man = tr.manifest
        evs = {eye: events.trial_microsaccades(tr.trial_id, eye) for eye in EYES}
        for fx in fixes:
            brate, mrate, bdur = microsaccade_rates(fx, evs["left"], evs["right"], evs["binocular"])
            a = fx.assignment
            if a is not None and a.face_index is not None and man is not None:
                emotion, roi, group = man.faces[a.face_index].emotion, a.region, a.group
            else:
                emotion = roi = group = NONE
            rows.append(FeatureRow(pid, tr.trial_id, fx.step_index, fx.index, fx.avg_pupil,
                                   mrate, brate, bdur, fx.duration_ms, emotion, roi,
                                   man.target_emotion if man is not None else NONE, group))
    return rows


def features_csv(rows: Sequence[FeatureRow]) -> str:
    return format_csv("features", (r.as_tuple() for r in rows))


def read_feature_rows(path) -> list[FeatureRow]:
    from .tables import read_csv

    out = []
    for d in read_csv(path, "features"):
        out.append(FeatureRow(
            d["Participant ID"], int(d["trial"]), int(d["Interest Period Index"]),
            int(d["Fixation index in trial"]), float(d["Average pupil size"]),
            float(d["Average of both eyes microsaccade's rate"]),
            float(d["Binocular microsaccade's rate"]),
            float(d["Binocular microsaccade average duration"]), float(d["Fixation duration"]),
            d["Emotions"], d["RoI Label"], d["Target Emotion"], d["Face Region"]))
    return out


def events_csv(events: SessionEvents) -> str:
    rows = []
    for (tid, step, eye), evs in sorted(events.microsaccades.items(),
                                        key=lambda kv: (kv[0][0], kv[0][1], EYES.index(kv[0][2]))):
        for e in evs:
            rows.append((tid, step, eye, e.start_ms, e.end_ms, e.duration_ms, e.amplitude_deg,
                         e.peak_velocity_deg_s))
    return format_csv("events", rows)


def fixations_csv(fixations: Mapping[int, list[FixationEvent]]) -> str:
    rows = []
    for tid in sorted(fixations):
        for f in fixations[tid]:
            a = f.assignment or AoiAssignment(NONE)
            rows.append((tid, f.step_index, f.index, f.start_ms, f.end_ms, f.duration_ms,
                         f.centroid_px[0], f.centroid_px[1], f.avg_pupil, a.main_aoi, a.is_target,
                         a.region, a.group, a.distance_px, a.tie))
    return format_csv("fixations", rows)
