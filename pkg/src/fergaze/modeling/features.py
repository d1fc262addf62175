"""Model inputs: Task-1 step-1 gaze features, Task-2 face embeddings, Task-3 per-participant profiles.

Task-1 layout (per trial, faces in manifest order):

* spatial: dwell fraction per face (4), duration-weighted centroid offset from
  the face center in face widths (4 x dx, dy), word and none dwell (2)
* temporal: fixation count per face (4), mean fixation duration in s (4),
  time to first fixation in s (4; step length when never fixated), one-hot of
  the last fixated face (4)
* every variant ends with the emotion block: one-hot emotion per face (4 x 6)
  and the target-emotion one-hot (6)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ..aoi import EMOTIONS, NONE, REGIONS, TrialManifest
from ..events import FeatureRow, FixationEvent
from ..metrics import DwellReport
from ..recording import NOMINAL_STEP_MS, SessionRecording

TASK1_VARIANTS = ("spatial", "temporal", "spatiotemporal")
TASK1_DIMS = {"spatial": 44, "temporal": 46, "spatiotemporal": 60}
TASK3_LAYOUT = "task3-v1"
TASK3_DIM = len(EMOTIONS) * len(REGIONS) * 2
STEP1_MS = NOMINAL_STEP_MS[1]


class ScanFixation(NamedTuple):
    """One fixation of a scanpath, timed relative to its interest-period onset."""

    aoi: str
    onset_ms: float
    duration_ms: float
    x: float
    y: float


def scanpath_from_events(fixations: Iterable[FixationEvent], period_start_ms: float,
                         step: int = 1) -> list[ScanFixation]:
    out = []
    for f in fixations:
        if f.step_index != step:
            continue
        aoi = f.assignment.main_aoi if f.assignment is not None else NONE
        out.append(ScanFixation(aoi, f.start_ms - period_start_ms, f.duration_ms, *f.centroid_px))
    return out


def _onehot(i: int | None, n: int) -> np.ndarray:
    v = np.zeros(n)
    if i is not None:
        v[i] = 1.0
    return v


def emotion_block(manifest: TrialManifest) -> np.ndarray:
    faces = [_onehot(EMOTIONS.index(f.emotion), len(EMOTIONS)) for f in manifest.faces]
    return np.concatenate(faces + [_onehot(EMOTIONS.index(manifest.target_emotion), len(EMOTIONS))])


def spatial_block(scan: Sequence[ScanFixation], manifest: TrialManifest,
                  step_ms: float = STEP1_MS) -> np.ndarray:
    dwell = np.zeros(4)
    off = np.zeros((4, 2))
    word = 0.0
    for f in scan:
        if f.aoi.startswith("face"):
            i = int(f.aoi[4])
            r = manifest.faces[i].rect_step1
            cx, cy = r.center
            dwell[i] += f.duration_ms
            off[i] += f.duration_ms * np.array([(f.x - cx) / r.w, (f.y - cy) / r.h])
        elif f.aoi == "word":
            word += f.duration_ms
    with np.errstate(invalid="ignore", divide="ignore"):
        off = np.where(dwell[:, None] > 0, off / dwell[:, None], 0.0)
    frac = dwell / step_ms
    word /= step_ms
    none = max(0.0, 1.0 - frac.sum() - word)
    return np.concatenate([frac, off.ravel(), [word, none]])


def temporal_block(scan: Sequence[ScanFixation], step_ms: float = STEP1_MS) -> np.ndarray:
    count = np.zeros(4)
    total = np.zeros(4)
    first = np.full(4, step_ms)
    last = None
    for f in sorted(scan, key=lambda s: s.onset_ms):
        if not f.aoi.startswith("face"):
            continue
        i = int(f.aoi[4])
        count[i] += 1
        total[i] += f.duration_ms
        first[i] = min(first[i], f.onset_ms)
        last = i
    mean_dur = np.divide(total, count, out=np.zeros(4), where=count > 0)
    return np.concatenate([count, mean_dur / 1000.0, first / 1000.0, _onehot(last, 4)])


def task1_features(scan: Sequence[ScanFixation], manifest: TrialManifest, variant: str,
                   step_ms: float = STEP1_MS) -> np.ndarray:
    if variant not in TASK1_VARIANTS:
        raise ValueError(f"variant must be one of {TASK1_VARIANTS}, got {variant!r}")
    parts = []
    if variant in ("spatial", "spatiotemporal"):
        parts.append(spatial_block(scan, manifest, step_ms))
    if variant in ("temporal", "spatiotemporal"):
        parts.append(temporal_block(scan, step_ms))
    parts.append(emotion_block(manifest))
    return np.concatenate(parts)


def step3_dwell_vector(scan: Sequence[ScanFixation], step_ms: float = NOMINAL_STEP_MS[3]) -> np.ndarray:
    """Per-face share of the step spent fixating each face (manifest order)."""
    d = np.zeros(4)
    for f in scan:
        if f.aoi.startswith("face"):
            d[int(f.aoi[4])] += f.duration_ms
    return d / step_ms


@dataclass
class Dataset:
    """Model-ready rows; ``target_index`` is the target face per row (Tasks 1 and 2).

    ``target_step`` names the step whose face dwell forms ``Y`` (Tasks 1 and 2).
    """

    X: np.ndarray
    Y: np.ndarray
    keys: list
    target_index: np.ndarray | None = None
    mask: np.ndarray | None = None
    layout: str = ""
    target_step: int | None = None

    def __len__(self):
        return len(self.X)


def task1_dataset(sessions: Sequence[tuple[SessionRecording, Mapping[int, list[FixationEvent]]]],
                  variant: str, target_step: int = 3) -> Dataset:
    """Per-trial rows averaged over participants: step-1 features in, face dwell of ``target_step`` out."""
    if target_step not in (1, 3):
        raise ValueError(f"target_step must be 1 or 3, got {target_step}")
    feats: dict[int, list] = {}
    outs: dict[int, list] = {}
    mans: dict[int, TrialManifest] = {}
    for rec, fixes in sessions:
        for tr in rec.trials:
            if tr.manifest is None:
                raise ValueError(f"trial {tr.trial_id}: no manifest")
            p1, p3 = tr.period(1), tr.period(target_step)
            s1 = scanpath_from_events(fixes.get(tr.trial_id, ()), p1.start_ms, 1)
            s3 = scanpath_from_events(fixes.get(tr.trial_id, ()), p3.start_ms, target_step)
            feats.setdefault(tr.trial_id, []).append(
                task1_features(s1, tr.manifest, variant, p1.duration_ms))
            outs.setdefault(tr.trial_id, []).append(step3_dwell_vector(s3, p3.duration_ms))
            mans[tr.trial_id] = tr.manifest
    keys = sorted(feats)
    return Dataset(np.array([np.mean(feats[k], axis=0) for k in keys]),
                   np.array([np.mean(outs[k], axis=0) for k in keys]), keys,
                   np.array([mans[k].target_face_index for k in keys]), layout=f"task1-{variant}-v1",
                   target_step=target_step)


def task2_inputs(manifest: TrialManifest, embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
    """Concatenated face embeddings (manifest order) followed by the target-emotion one-hot."""
    vecs = []
    for f in manifest.faces:
        if f.face_id not in embeddings:
            raise KeyError(f"{f.face_id}: no embedding")
        vecs.append(np.asarray(embeddings[f.face_id], dtype=float))
    return np.concatenate(vecs + [_onehot(EMOTIONS.index(manifest.target_emotion), len(EMOTIONS))])


def task2_dataset(task1: Dataset, manifests: Mapping[int, TrialManifest],
                  embeddings: Mapping[str, np.ndarray]) -> Dataset:
    """Same rows and targets as a Task-1 dataset, with embedding inputs."""
    X = np.array([task2_inputs(manifests[k], embeddings) for k in task1.keys])
    return Dataset(X, task1.Y, list(task1.keys), task1.target_index, layout="task2-embeddings-v1",
                   target_step=task1.target_step)


def task3_features(rows: Iterable[FeatureRow]) -> tuple[np.ndarray, np.ndarray]:
    """84-dim profile of one participant from step-1 fixations.

    Order: emotion-major, then region, then (binocular microsaccade rate, pupil).
    Cells with no fixations are 0 and flagged False in the returned mask.
    """
    sums = np.zeros((len(EMOTIONS), len(REGIONS), 2))
    counts = np.zeros((len(EMOTIONS), len(REGIONS)))
    for r in rows:
        if r.interest_period_index != 1 or r.emotion_of_fixated_face == NONE or r.roi_label == NONE:
            continue
        e, g = EMOTIONS.index(r.emotion_of_fixated_face), REGIONS.index(r.roi_label)
        sums[e, g] += (r.binocular_ms_rate_hz, r.avg_pupil_au)
        counts[e, g] += 1
    mask = np.repeat(counts[:, :, None] > 0, 2, axis=2)
    vals = np.divide(sums, counts[:, :, None], out=np.zeros_like(sums), where=mask)
    return vals.ravel(), mask.ravel()


def task3_feature_names() -> list[str]:
    return [f"{e}/{r}/{k}" for e in EMOTIONS for r in REGIONS for k in ("binocular_rate", "pupil")]


def task3_dataset(rows_by_participant: Mapping[str, Sequence[FeatureRow]],
                  scores: Mapping[str, float]) -> Dataset:
    keys = sorted(set(rows_by_participant) & set(scores))
    if not keys:
        raise ValueError("no participant has both feature rows and a score")
    fm = [task3_features(rows_by_participant[k]) for k in keys]
    return Dataset(np.array([f for f, _ in fm]), np.array([[scores[k]] for k in keys]), keys,
                   mask=np.array([m for _, m in fm]), layout=TASK3_LAYOUT)


def dwell_targets(report: DwellReport) -> dict[int, np.ndarray]:
    """Per-trial face dwell vectors from a dwell report."""
    return {tid: np.array([td.fractions[f"face{i}"] for i in range(4)])
            for tid, td in report.trials.items()}
