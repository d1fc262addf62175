"""Synthetic sessions with known ground truth.

Scanpaths are piecewise-constant fixations joined by instantaneous jumps.
Microsaccades are injected as short circular-arc pulses whose speed and
centripetal acceleration are set analytically, so every detector threshold
is crossed (or not) by construction.  Time that the dwell profile leaves to
``none`` is rendered as tracking loss.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .aoi import (EMOTIONS, GROUPS, NONE, REGION_GROUP, REGIONS, AoiMap, FaceSpec, Rect,
                  TrialManifest, build_aoi_map, corner_slots, dump_manifests)
from .modeling.features import Dataset, ScanFixation, spatial_block, task1_features
from .recording import (NOMINAL_STEP_MS, InterestPeriod, Landmarks68, ParticipantMeta, SampleArrays,
                        ScreenGeometry, SessionRecording, Trial, deg_per_px, write_landmarks,
                        write_session)
from .tables import format_csv

# observed average dwell per step, as fractions
DEFAULT_DWELL = {
    1: {"target": 0.235, "nontarget": 0.235, "word": 0.0},
    2: {"target": 0.102, "nontarget": 0.071, "word": 0.684},
    3: {"target": 0.409, "nontarget": 0.157, "word": 0.115},
}

# observed dwell per target emotion (percent): step1 face, step2 no/yes/word, step3 no/yes/word
_EMOTION_DWELL_ROWS = {
    "angry": (23.8, 7.3, 10.9, 68.6, 15.8, 42.2, 11.9),
    "disgust": (23.5, 7.7, 11.1, 69.8, 14.9, 45.3, 11.4),
    "fear": (25.3, 7.5, 8.6, 69.0, 17.8, 34.9, 10.8),
    "happy": (21.4, 6.7, 11.0, 68.2, 14.4, 43.8, 12.1),
    "sad": (23.0, 6.2, 11.4, 65.8, 14.8, 38.5, 11.3),
    "surprise": (23.9, 7.3, 8.4, 68.9, 16.8, 40.9, 11.5),
}

# step-1 eye / nose / mouth dwell per face emotion, used as group weights
DEFAULT_GROUP_WEIGHTS = {
    "angry": (0.083, 0.083, 0.071),
    "disgust": (0.085, 0.082, 0.067),
    "fear": (0.104, 0.072, 0.076),
    "happy": (0.083, 0.068, 0.064),
    "sad": (0.090, 0.069, 0.072),
    "surprise": (0.110, 0.062, 0.067),
}

GROUP_REGIONS = {g: tuple(r for r in REGIONS if REGION_GROUP[r] == g) for g in GROUPS}
EDGE_MARGIN = 10  # samples kept pulse-free at fixation edges


def _normalize_step(d: Mapping[str, float]) -> dict[str, float]:
    total = d["target"] + 3 * d["nontarget"] + d["word"]
    k = 1.0 / total if total > 1.0 else 1.0
    return {key: d[key] * k for key in ("target", "nontarget", "word")}


def observed_emotion_dwell() -> dict[str, dict[int, dict[str, float]]]:
    """Per-target-emotion dwell presets; steps whose shares exceed 1 are rescaled to sum to 1."""
    out = {}
    for emo, (s1, n2, t2, w2, n3, t3, w3) in _EMOTION_DWELL_ROWS.items():
        out[emo] = {
            1: _normalize_step({"target": s1 / 100, "nontarget": s1 / 100, "word": 0.0}),
            2: _normalize_step({"target": t2 / 100, "nontarget": n2 / 100, "word": w2 / 100}),
            3: _normalize_step({"target": t3 / 100, "nontarget": n3 / 100, "word": w3 / 100}),
        }
    return out


@dataclass(frozen=True)
class PulseSpec:
    """Circular-arc microsaccade pulse.

    Motion lasts ``D + 1`` sample intervals at constant speed; with the
    5-sample stencil the detector sees a run of exactly ``D`` samples as long
    as ``speed / 2 < threshold < 5 * speed / 6``.
    """

    speed_deg_s: float = 25.0
    accel_deg_s2: float = 8000.0
    durations_ms: tuple[int, ...] = tuple(range(10, 19))
    monocular_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "durations_ms", tuple(int(d) for d in self.durations_ms))
        if self.speed_deg_s <= 0 or self.accel_deg_s2 <= 0:
            raise ValueError("pulse speed and acceleration must be positive")
        if not self.durations_ms or min(self.durations_ms) < 1:
            raise ValueError("pulse durations must be positive")
        if not 0 <= self.monocular_fraction <= 1:
            raise ValueError("monocular_fraction must be in [0, 1]")

    @property
    def omega(self) -> float:
        return self.accel_deg_s2 / self.speed_deg_s

    @property
    def radius(self) -> float:
        return self.speed_deg_s / self.omega

    def offsets(self, n_intervals: int, theta0: float, dt_s: float) -> np.ndarray:
        """Displacement (deg) at ``k = 0..n_intervals`` samples after motion onset."""
        ang = theta0 + self.omega * dt_s * np.arange(n_intervals + 1)
        r = self.radius
        return np.column_stack([r * (np.sin(ang) - math.sin(theta0)),
                                -r * (np.cos(ang) - math.cos(theta0))])

    def chord(self, duration_ms: float) -> float:
        return 2 * self.radius * abs(math.sin(self.omega * duration_ms / 2000.0))


@dataclass(frozen=True)
class SimProfile:
    """Attention and oculomotor configuration of a simulated participant.

    ``dwell`` maps step -> {target, nontarget (per face), word}; the remainder
    of each step is ``none``.  ``emotion_dwell`` optionally overrides it per
    target emotion.  ``ms_rate_hz`` maps a face region (or ``word``) to the
    binocular microsaccade rate injected during fixations there.
    """

    dwell: Mapping[int, Mapping[str, float]] = field(default_factory=lambda: DEFAULT_DWELL)
    emotion_dwell: Mapping[str, Mapping[int, Mapping[str, float]]] | None = None
    group_weights: Mapping[str, Sequence[float]] = field(default_factory=lambda: DEFAULT_GROUP_WEIGHTS)
    fixation_median_ms: float = 250.0
    fixation_sigma: float = 0.4
    min_fixation_ms: float = 100.0
    salience_concentration: float = 20.0
    ms_rate_hz: Mapping[str, float] = field(
        default_factory=lambda: {**{r: 1.0 for r in REGIONS}, "word": 1.0})
    pulse: PulseSpec = PulseSpec()
    refractory_samples: int = 100
    pupil_baseline: tuple[float, float, float] = (900.0, 940.0, 960.0)
    pupil_sd: float = 10.0
    fixation_cross_ms: float = 200.0
    inter_trial_ms: float = 1000.0
    embedding_dim: int = 128
    n_identities: int = 10
    geometry: ScreenGeometry = ScreenGeometry()

    def __post_init__(self):
        for step, d in self.dwell_for_all().items():
            total = d["target"] + 3 * d["nontarget"] + d["word"]
            if min(d.values()) < 0:
                raise ValueError(f"step {step}: dwell fractions must be >= 0")
            if total > 1.0 + 1e-9:
                raise ValueError(f"infeasible profile: step {step} dwell fractions sum to {total:.4f} > 1")
        if any(v < 0 for v in self.ms_rate_hz.values()):
            raise ValueError("microsaccade rates must be >= 0")
        unknown = set(self.ms_rate_hz) - set(REGIONS) - {"word"}
        if unknown:
            raise ValueError(f"unknown rate keys: {sorted(unknown)}")
        for emo, w in self.group_weights.items():
            if len(w) != 3 or min(w) < 0 or sum(w) <= 0:
                raise ValueError(f"{emo}: group weights must be 3 non-negative values")
        if self.fixation_median_ms <= 0 or self.fixation_sigma < 0:
            raise ValueError("fixation duration distribution must have positive median")
        if self.pupil_sd < 0 or self.salience_concentration <= 0:
            raise ValueError("pupil_sd must be >= 0 and salience_concentration > 0")

    def dwell_for_all(self) -> dict:
        out = {("all", k): v for k, v in self.dwell.items()}
        for emo, steps in (self.emotion_dwell or {}).items():
            for k, v in steps.items():
                out[(emo, k)] = v
        return out

    def step_dwell(self, target_emotion: str, step: int) -> Mapping[str, float]:
        if self.emotion_dwell and target_emotion in self.emotion_dwell:
            return self.emotion_dwell[target_emotion][step]
        return self.dwell[step]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dwell"] = {str(k): dict(v) for k, v in self.dwell.items()}
        if self.emotion_dwell:
            d["emotion_dwell"] = {e: {str(k): dict(v) for k, v in s.items()}
                                  for e, s in self.emotion_dwell.items()}
        d["group_weights"] = {k: list(v) for k, v in self.group_weights.items()}
        d["geometry"] = self.geometry.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimProfile":
        kw = dict(d)
        if kw.pop("preset", None) == "emotion-dwell":
            kw.setdefault("emotion_dwell", observed_emotion_dwell())
        if "dwell" in kw:
            kw["dwell"] = {int(k): dict(v) for k, v in kw["dwell"].items()}
        if kw.get("emotion_dwell"):
            kw["emotion_dwell"] = {e: {int(k): dict(v) for k, v in s.items()}
                                   for e, s in kw["emotion_dwell"].items()}
        if "pulse" in kw:
            kw["pulse"] = PulseSpec(**kw["pulse"])
        if "geometry" in kw:
            kw["geometry"] = ScreenGeometry.from_dict(kw["geometry"])
        if "group_weights" in kw:
            kw["group_weights"] = {k: tuple(v) for k, v in kw["group_weights"].items()}
        if "ms_rate_hz" in kw:
            rates = {**{r: 0.0 for r in REGIONS}, "word": 0.0}
            rates.update(kw["ms_rate_hz"])
            kw["ms_rate_hz"] = rates
        if "pupil_baseline" in kw:
            kw["pupil_baseline"] = tuple(kw["pupil_baseline"])
        return cls(**kw)


def zero_rate_profile(profile: SimProfile = SimProfile()) -> SimProfile:
    return replace(profile, ms_rate_hz={**{r: 0.0 for r in REGIONS}, "word": 0.0})


@dataclass(frozen=True)
class TruthEvent:
    trial_id: int
    step: int
    eye: str
    start_ms: float
    end_ms: float
    duration_ms: float
    amplitude_deg: float
    peak_velocity: float
    region: str


@dataclass(frozen=True)
class TruthFixation:
    trial_id: int
    step: int
    start_ms: float
    end_ms: float
    aoi: str
    region: str
    x: float
    y: float


@dataclass
class SimulatedSession:
    profile: SimProfile
    seed: int
    manifests: list[TrialManifest]
    recording: SessionRecording
    landmarks: dict[str, Landmarks68]
    embeddings: dict[str, np.ndarray]
    truth_events: list[TruthEvent]
    truth_fixations: list[TruthFixation]

    def truth_for(self, eye: str = "binocular") -> list[TruthEvent]:
        """Events a detector for ``eye`` should report (binocular pulses count for both eyes)."""
        if eye == "binocular":
            return [e for e in self.truth_events if e.eye == "binocular"]
        return [e for e in self.truth_events if e.eye in (eye, "binocular")]


# ---------------------------------------------------------------------------
# faces and manifests

def template_landmarks(rng: np.random.Generator | None = None, jitter: float = 0.0,
                       size: float = 200.0) -> np.ndarray:
    """A frontal 68-point face in a ``size`` x ``size`` image (subject's right eye on image left)."""
    s = size / 200.0
    pts = []
    for u in np.linspace(0, 1, 17):  # jaw 0-16: ear to ear through the chin
        a = math.pi * (1.0 - u)
        pts.append((100 + 72 * math.cos(a), 82 + 100 * math.sin(a) * (0.35 + 0.65 * math.sin(a))))
    for x0 in (44, 112):  # brows 17-21, 22-26
        for k in range(5):
            x = x0 + 11 * k
            pts.append((x, 62 - 6 * math.sin(math.pi * k / 4)))
    for k in range(4):  # nose bridge 27-30
        pts.append((100, 80 + 12 * k))
    for k in range(5):  # nostrils 31-35
        pts.append((86 + 7 * k, 124 + 3 * math.sin(math.pi * k / 4)))
    for cx in (70, 130):  # eyes 36-41, 42-47
        for a in np.linspace(0, 2 * math.pi, 7)[:-1]:
            pts.append((cx - 15 * math.cos(a), 86 - 6 * math.sin(a)))
    for a in np.linspace(0, 2 * math.pi, 13)[:-1]:  # outer lip 48-59
        pts.append((100 - 28 * math.cos(a), 152 - 11 * math.sin(a)))
    for a in np.linspace(0, 2 * math.pi, 9)[:-1]:  # inner lip 60-67
        pts.append((100 - 17 * math.cos(a), 152 - 4 * math.sin(a)))
    out = np.array(pts, dtype=float)
    if rng is not None and jitter > 0:
        out = out + rng.uniform(-jitter, jitter, size=(1, 2)) + rng.uniform(-jitter / 3, jitter / 3, out.shape)
    return out * s


def face_id(identity: int, emotion: str) -> str:
    return f"ID{identity:02d}_{emotion}"


def make_face_assets(n_identities: int = 10, seed: int = 0, embedding_dim: int = 128
                     ) -> tuple[dict[str, Landmarks68], dict[str, np.ndarray]]:
    """Landmarks and embeddings for every (identity, emotion) face.

    Embeddings are an identity code plus an emotion code plus noise.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFACE]))
    landmarks, embeddings = {}, {}
    id_codes = rng.normal(size=(n_identities, embedding_dim))
    emo_codes = rng.normal(size=(len(EMOTIONS), embedding_dim))
    for i in range(n_identities):
        base = template_landmarks(rng, jitter=4.0)
        for j, emo in enumerate(EMOTIONS):
            fid = face_id(i, emo)
            pts = base + rng.uniform(-1.0, 1.0, base.shape)
            landmarks[fid] = Landmarks68(fid, np.clip(pts, 1.0, 199.0), (200, 200))
            embeddings[fid] = id_codes[i] + emo_codes[j] + 0.1 * rng.normal(size=embedding_dim)
    return landmarks, embeddings


def make_manifests(n_trials: int = 60, seed: int = 0, geometry: ScreenGeometry = ScreenGeometry(),
                   n_identities: int = 10, warmup: int = 6) -> list[TrialManifest]:
    """Balanced trial list: target emotions cycle, the other three faces show distinct emotions."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A1]))
    slots = corner_slots(geometry)
    per_round = max(1, (n_trials - warmup + 1) // 2)
    out = []
    targets = []
    while len(targets) < n_trials:
        targets.extend(rng.permutation(EMOTIONS).tolist())
    for k in range(n_trials):
        tid = k + 1
        target = targets[k]
        others = rng.choice([e for e in EMOTIONS if e != target], size=3, replace=False).tolist()
        emotions = others + [target]
        order = rng.permutation(4)
        emotions = [emotions[i] for i in order]
        t_idx = emotions.index(target)
        ids = rng.choice(n_identities, size=4, replace=False)
        perm3 = rng.permutation(4)
        faces = tuple(FaceSpec(face_id(int(ids[i]), emotions[i]), emotions[i], f"ID{int(ids[i]):02d}",
                               slots[i], slots[int(perm3[i])]) for i in range(4))
        rnd = 1 if k < warmup + per_round else 2
        out.append(TrialManifest(tid, rnd, target, t_idx, faces))
    return out


# ---------------------------------------------------------------------------
# scanpaths

def _budgets(profile: SimProfile, man: TrialManifest, step: int, rng, step_ms: float,
             concentration: float | None = None, attention: float = 1.0) -> np.ndarray:
    """Per-AOI time budgets (face0..face3, word) in ms; expectation equals the profile."""
    d = profile.step_dwell(man.target_emotion, step)
    fr = np.array([d["target"] if i == man.target_face_index else d["nontarget"] for i in range(4)]
                  + [d["word"]])
    total = min(1.0, attention * fr.sum())
    if total <= 0:
        return np.zeros(5)
    conc = profile.salience_concentration if concentration is None else concentration
    pos = fr > 0
    share = np.zeros(5)
    if math.isinf(conc):
        share[pos] = fr[pos] / total
    else:
        share[pos] = rng.dirichlet(conc * fr[pos] / total)
    return total * step_ms * share


def _split_durations(budget_ms: float, profile: SimProfile, rng, dt: float) -> list[float]:
    n_total = int(round(budget_ms / dt))
    out = []
    left = n_total
    min_n = int(math.ceil(profile.min_fixation_ms / dt))
    mu = math.log(profile.fixation_median_ms / dt)
    while left > 0:
        d = max(min_n, int(round(math.exp(rng.normal(mu, profile.fixation_sigma)))))
        if left - d < min_n:
            d = left
        out.append(d)
        left -= d
    if len(out) > 1 and out[-1] < min_n:
        out[-2] += out.pop()
    if out and out[-1] < min_n and len(out) == 1 and out[0] * dt < 60.0:
        return []  # too short to register as a fixation
    return [d * dt for d in out]


def inside_convex(pts: np.ndarray, poly: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Containment of ``(n, 2)`` points in a convex polygon (either winding).

    A point must lie more than ``margin`` px inside every edge line; a
    negative margin grows the polygon instead.
    """
    pts = np.atleast_2d(pts)
    if len(poly) < 3:
        return np.zeros(len(pts), dtype=bool)
    v = np.asarray(poly, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    cross = e[:, 0] * (pts[:, 1:2] - v[:, 1]) - e[:, 1] * (pts[:, 0:1] - v[:, 0])
    sd = cross / np.hypot(e[:, 0], e[:, 1])
    return (sd > margin).all(axis=1) | (sd < -margin).all(axis=1)


class _PointSampler:
    """Draws fixation points that the assignment rule maps back to the intended face region.

    A point belongs to region ``R`` when ``R`` is the smallest-area sub-region
    hull containing it, which is how fixations inside a face are labelled.
    """

    def __init__(self, aoi_map: AoiMap, rng, scale, batch: int = 64,
                 margins: tuple[float, ...] = (6.0, 3.0, 0.0)):
        self.map = aoi_map
        self.rng = rng
        self.scale = np.asarray(scale)
        self.batch = batch
        self.margins = margins

    def _far(self, pts, prev) -> np.ndarray:
        if prev is None:
            return np.ones(len(pts), dtype=bool)
        return (np.abs((pts - prev) * self.scale)).sum(axis=1) > 1.3

    def face_point(self, i: int, region: str, prev) -> tuple[float, float]:
        """A point in ``region``, kept off hull edges so microsaccade offsets cannot relabel it."""
        face = self.map.faces[i]
        poly = face.regions[region]
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        smaller = [face.regions[r] for r in REGIONS
                   if r != region and face.areas[r] > 0 and face.areas[r] <= face.areas[region]]
        fallback = None
        for margin in self.margins:
            for _ in range(10):
                pts = self.rng.uniform(lo, hi, size=(self.batch, 2))
                ok = inside_convex(pts, poly, margin)
                for other in smaller:
                    ok &= ~inside_convex(pts, other, -margin)
                if not ok.any():
                    continue
                if fallback is None:
                    fallback = pts[np.argmax(ok)]
                far = ok & self._far(pts, prev)
                if far.any():
                    p = pts[np.argmax(far)]
                    return float(p[0]), float(p[1])
            if fallback is not None:
                break
        if fallback is None:
            raise ValueError(f"region {region} of face {i} has no free area to fixate")
        return float(fallback[0]), float(fallback[1])

    def word_point(self, prev) -> tuple[float, float]:
        r = self.map.word
        pts = self.rng.uniform((r.x + 5, r.y + 5), (r.x + r.w - 5, r.y + r.h - 5), size=(self.batch, 2))
        p = pts[np.argmax(self._far(pts, prev))]
        return float(p[0]), float(p[1])


def _choose_region(profile: SimProfile, emotion: str, rng) -> str:
    w = np.asarray(profile.group_weights.get(emotion, (1.0, 1.0, 1.0)), dtype=float)
    g = GROUPS[int(rng.choice(3, p=w / w.sum()))]
    regs = GROUP_REGIONS[g]
    return regs[int(rng.integers(len(regs)))]


def step_scanpath(profile: SimProfile, man: TrialManifest, step: int, aoi_map: AoiMap, rng,
                  step_ms: float | None = None, concentration: float | None = None,
                  attention: float = 1.0) -> tuple[list[tuple[str, str, float, float, float]], float]:
    """Ordered fixations ``(aoi, region, duration_ms, x, y)`` for one step, plus the none time.

    ``attention`` scales the on-screen share of the step (capped at the whole
    step).  The none time is returned separately; callers place it as
    tracking-loss gaps.
    """
    step_ms = NOMINAL_STEP_MS[step] if step_ms is None else step_ms
    dt = profile.geometry.sample_interval_ms
    budgets = _budgets(profile, man, step, rng, step_ms, concentration, attention)
    items = []
    for k, b in enumerate(budgets):
        aoi = f"face{k}" if k < 4 else "word"
        for d in _split_durations(b, profile, rng, dt):
            items.append((aoi, d))
    order = rng.permutation(len(items))
    items = [items[i] for i in order]
    sampler = _PointSampler(aoi_map, rng, deg_per_px(profile.geometry))
    out = []
    prev = None
    for aoi, d in items:
        if aoi == "word":
            region = NONE
            x, y = sampler.word_point(prev)
        else:
            i = int(aoi[4])
            region = _choose_region(profile, man.faces[i].emotion, rng)
            x, y = sampler.face_point(i, region, prev)
        out.append((aoi, region, d, x, y))
        prev = np.array([x, y])
    used = sum(d for _, _, d, _, _ in out)
    return out, max(0.0, step_ms - used)


# ---------------------------------------------------------------------------
# sessions

def _place_pulses(rng, profile: SimProfile, fix_start: int, fix_len: int, n_period: int,
                  last_end: int, n_wanted: int) -> list[tuple[int, int]]:
    """Motion-onset sample and duration for up to ``n_wanted`` pulses inside one fixation."""
    pulse = profile.pulse
    refr = profile.refractory_samples
    guard = refr
    dmax = max(pulse.durations_ms)
    out = []
    for j in range(n_wanted):
        D = int(pulse.durations_ms[int(rng.integers(len(pulse.durations_ms)))])
        lo = max(fix_start + EDGE_MARGIN, guard + 2, last_end + refr + 6)
        reserve = (n_wanted - j - 1) * (dmax + refr + 8)
        hi = min(fix_start + fix_len - EDGE_MARGIN - (D + 2), n_period - guard - D - 8) - reserve
        if hi < lo:
            break
        m = int(rng.integers(lo, hi + 1))
        out.append((m, D))
        last_end = m + D + 1
    return out


def simulate_trial(profile: SimProfile, man: TrialManifest, landmarks, t0: float, rng,
                   debt: dict[str, list]) -> tuple[Trial, list[TruthEvent], list[TruthFixation], float]:
    geom = profile.geometry
    dt = geom.sample_interval_ms
    dt_s = dt / 1000.0
    scale = np.asarray(deg_per_px(geom))
    cx, cy = geom.center_px
    n_cross = int(round(profile.fixation_cross_ms / dt))
    lens = [int(round(NOMINAL_STEP_MS[k] / dt)) for k in (1, 2, 3)]
    n = n_cross + sum(lens)
    xy = np.empty((2, n, 2))
    xy[:, :n_cross] = (cx, cy)
    valid = np.ones((2, n), dtype=bool)
    pupil = np.empty(n)
    pupil[:n_cross] = profile.pupil_baseline[0]
    events, fixes = [], []
    maps = {1: build_aoi_map(man, landmarks, 1, geom)}
    maps[2] = AoiMap(2, maps[1].faces, maps[1].word, maps[1].target_face_index)
    maps[3] = build_aoi_map(man, landmarks, 3, geom)
    offset = n_cross
    periods = []
    for k, n_step in zip((1, 2, 3), lens):
        p0 = t0 + offset * dt
        periods.append(InterestPeriod(k, p0, p0 + n_step * dt))
        path, none_ms = step_scanpath(profile, man, k, maps[k], rng)
        # tracking-loss gaps: the none time, cut in up to two chunks between fixations
        n_gap = int(round(none_ms / dt))
        gaps = {}
        if n_gap > 0:
            cuts = 1 if n_gap < 200 or len(path) < 2 else 2
            sizes = [n_gap] if cuts == 1 else [n_gap // 2, n_gap - n_gap // 2]
            for sz in sizes:
                pos = int(rng.integers(len(path) + 1))
                gaps[pos] = gaps.get(pos, 0) + sz
        base = profile.pupil_baseline[k - 1]
        cur = 0
        last_end = -10 ** 9
        for idx in range(len(path) + 1):
            g = gaps.get(idx, 0)
            if g:
                sl = slice(offset + cur, offset + cur + g)
                xy[:, sl] = np.nan
                valid[:, sl] = False
                pupil[sl] = np.nan
                cur += g
            if idx == len(path):
                break
            aoi, region, d_ms, x, y = path[idx]
            d = int(round(d_ms / dt))
            sl = slice(offset + cur, offset + cur + d)
            xy[:, sl] = (x, y)
            pupil[sl] = base
            fixes.append(TruthFixation(man.trial_id, k, p0 + cur * dt, p0 + (cur + d) * dt,
                                       aoi, region, x, y))
            key = region if aoi != "word" else "word"
            rate = profile.ms_rate_hz.get(key, 0.0)
            if rate > 0:
                # systematic sampling: one uniform phase per region and trial
                acc = debt.setdefault(key, [0.0, float(rng.uniform()), 0])
                acc[0] += rate * d * dt_s
                want = int(math.floor(acc[0] + acc[1])) - acc[2]
                placed = _place_pulses(rng, profile, cur, d, n_step, last_end, max(0, want))
                acc[2] += len(placed)
                theta_prev = None
                for m, D in placed:
                    theta0 = rng.uniform(0, 2 * math.pi) if theta_prev is None else theta_prev + math.pi
                    theta_prev = theta0
                    offs = profile.pulse.offsets(D + 1, theta0, dt_s) / scale
                    eyes = (0, 1)
                    eye_label = "binocular"
                    if profile.pulse.monocular_fraction > 0 and rng.uniform() < profile.pulse.monocular_fraction:
                        e = int(rng.integers(2))
                        eyes = (e,)
                        eye_label = ("left", "right")[e]
                    a = offset + m
                    end_fix = offset + cur + d
                    for e in eyes:
                        xy[e, a:a + D + 2] += offs
                        xy[e, a + D + 2:end_fix] += offs[-1]
                    events.append(TruthEvent(man.trial_id, k, eye_label, p0 + (m + 1) * dt,
                                             p0 + (m + 1 + D) * dt, D * dt, profile.pulse.chord(D * dt),
                                             profile.pulse.speed_deg_s, region if aoi != "word" else "word"))
                    last_end = m + D + 1
            cur += d
        if cur < n_step:  # rounding leftovers are tracking loss too
            sl = slice(offset + cur, offset + n_step)
            xy[:, sl] = np.nan
            valid[:, sl] = False
            pupil[sl] = np.nan
        offset += n_step
    noise = rng.normal(0.0, profile.pupil_sd, size=n) if profile.pupil_sd > 0 else np.zeros(n)
    pupil = np.round(pupil + noise, 1)
    xy = np.round(xy, 3)
    t = t0 + dt * np.arange(n)
    left = np.column_stack([xy[0], pupil])
    right = np.column_stack([xy[1], pupil])
    left[~valid[0]] = np.nan
    right[~valid[1]] = np.nan
    end = t0 + n * dt
    trial = Trial(man.trial_id, tuple(periods), SampleArrays(t, left, right), man, end)
    return trial, events, fixes, end


def simulate_session(profile: SimProfile = SimProfile(), n_trials: int = 60, seed: int = 0, *,
                     participant_id: str = "S01", manifests: Sequence[TrialManifest] | None = None,
                     face_seed: int | None = None, trial_range: tuple[int, int] | None = None
                     ) -> SimulatedSession:
    """Simulate one participant.

    Manifests and face assets come from ``face_seed`` (default ``seed``) so
    several participants can share one stimulus set.  ``trial_range``
    restricts generation to a slice of trial positions (for chunked runs).
    """
    fseed = seed if face_seed is None else face_seed
    if manifests is None:
        manifests = make_manifests(n_trials, fseed, profile.geometry, profile.n_identities)
    manifests = list(manifests)
    landmarks, embeddings = make_face_assets(profile.n_identities, fseed, profile.embedding_dim)
    lo, hi = trial_range if trial_range is not None else (0, len(manifests))
    trials, events, fixes = [], [], []
    t0 = 0.0
    for pos, man in enumerate(manifests):
        if pos >= hi:
            break
        rng = np.random.default_rng(np.random.SeedSequence([seed, man.trial_id]))
        span = profile.fixation_cross_ms + sum(NOMINAL_STEP_MS.values()) + profile.inter_trial_ms
        if pos < lo:
            t0 += span
            continue
        tr, ev, fx, end = simulate_trial(profile, man, landmarks, t0, rng, {})
        trials.append(tr)
        events.extend(ev)
        fixes.extend(fx)
        t0 += span
    rec = SessionRecording(ParticipantMeta(participant_id), profile.geometry, tuple(trials))
    return SimulatedSession(profile, seed, manifests[lo:hi], rec, landmarks, embeddings, events, fixes)


def truth_events_csv(events: Sequence[TruthEvent]) -> str:
    return format_csv("truth_events", ((e.trial_id, e.step, e.eye, e.start_ms, e.end_ms, e.duration_ms,
                                        e.amplitude_deg, e.peak_velocity, e.region) for e in events))


def write_simulation(sim: SimulatedSession, out_dir, tag: str | None = None) -> dict[str, Path]:
    """Write the session, manifest, geometry, face assets, truth events and profile to ``out_dir``.

    ``tag`` (e.g. a participant id) suffixes the session and truth-event file
    names so several participants can share one directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sfx = f"_{tag}" if tag else ""
    paths = {k: out / v for k, v in (
        ("session", f"session{sfx}.txt"), ("manifest", "manifest.json"), ("geometry", "geometry.json"),
        ("landmarks", "landmarks.json"), ("embeddings", "embeddings.csv"),
        ("truth_events", f"truth_events{sfx}.csv"), ("profile", "profile.json"))}
    write_session(sim.recording, paths["session"])
    paths["manifest"].write_text(dump_manifests(sim.manifests) + "\n", encoding="utf-8")
    paths["geometry"].write_text(json.dumps(sim.profile.geometry.to_dict(), indent=1) + "\n",
                                 encoding="utf-8")
    write_landmarks(sim.landmarks, paths["landmarks"])
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        for fid in sorted(sim.embeddings):
            fh.write(fid + "," + ",".join(repr(float(v)) for v in sim.embeddings[fid]) + "\n")
    paths["truth_events"].write_text(truth_events_csv(sim.truth_events), encoding="utf-8")
    prof = sim.profile.to_dict()
    prof["seed"] = sim.seed
    paths["profile"].write_text(json.dumps(prof, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# planted modeling data

def planted_step3_dwell(step1_face_dwell: np.ndarray, intercept: float = 0.04,
                        slope: float = 0.8) -> np.ndarray:
    """Step-3 face dwell as a fixed affine function of step-1 face dwell."""
    return np.clip(intercept + slope * np.asarray(step1_face_dwell), 0.0, 1.0)


def planted_step1_scanpath(man: TrialManifest, aoi_map: AoiMap, rng, profile: SimProfile,
                           max_count: int = 8, duration_range_ms: tuple[float, float] = (60.0, 1000.0),
                           face_budget_ms: float = 7000.0) -> list[ScanFixation]:
    """Step-1 scanpath with independent per-face fixation count and mean duration.

    Counts are uniform on ``0..max_count`` and mean durations log-uniform over
    ``duration_range_ms``, so face dwell (their product) is far from linear in
    either.  Face time above ``face_budget_ms`` is scaled down.
    """
    items = []
    lo, hi = np.log(duration_range_ms)
    for i in range(4):
        c = int(rng.integers(0, max_count + 1))
        m = math.exp(rng.uniform(lo, hi))
        items += [(i, m * math.exp(rng.normal(0.0, 0.05))) for _ in range(c)]
    total = sum(d for _, d in items)
    k = face_budget_ms / total if total > face_budget_ms else 1.0
    items = [(a, float(max(60, round(d * k)))) for a, d in items]
    items += [(4, float(rng.integers(100, 400))) for _ in range(int(rng.integers(0, 3)))]
    items = [items[j] for j in rng.permutation(len(items))]
    sampler = _PointSampler(aoi_map, rng, deg_per_px(profile.geometry))
    scan, t, prev = [], float(rng.integers(0, 400)), None
    for a, d in items:
        if a == 4:
            aoi, (x, y) = "word", sampler.word_point(prev)
        else:
            aoi = f"face{a}"
            x, y = sampler.face_point(a, _choose_region(profile, man.faces[a].emotion, rng), prev)
        scan.append(ScanFixation(aoi, t, d, x, y))
        t += d + float(rng.integers(10, 40))
        prev = np.array([x, y])
    return scan


def planted_task1_datasets(seed: int, n_trials: int = 54, profile: SimProfile | None = None
                           ) -> dict[str, Dataset]:
    """Task-1 datasets whose step-3 dwell is a deterministic function of step-1 temporal features.

    Step-1 scanpaths are generated at the fixation level (no samples).  Each
    face's step-1 dwell is its fixation count times its mean fixation
    duration, and the step-3 target is affine in that dwell.  The spatial
    block carries the dwell directly while the temporal block only carries
    its two factors.
    """
    profile = profile or SimProfile()
    geom = profile.geometry
    manifests = make_manifests(n_trials, seed, geom, profile.n_identities, warmup=0)
    landmarks, _ = make_face_assets(profile.n_identities, seed, 0)
    rows = {v: [] for v in ("spatial", "temporal", "spatiotemporal")}
    Y, ti = [], []
    step_ms = NOMINAL_STEP_MS[1]
    for man in manifests:
        rng = np.random.default_rng(np.random.SeedSequence([seed, man.trial_id, 1]))
        amap = build_aoi_map(man, landmarks, 1, geom)
        scan = planted_step1_scanpath(man, amap, rng, profile)
        for v in rows:
            rows[v].append(task1_features(scan, man, v, step_ms))
        Y.append(planted_step3_dwell(spatial_block(scan, man, step_ms)[:4]))
        ti.append(man.target_face_index)
    keys = [m.trial_id for m in manifests]
    return {v: Dataset(np.array(r), np.array(Y), keys, np.array(ti), layout=f"task1-{v}-v1",
                       target_step=3)
            for v, r in rows.items()}
