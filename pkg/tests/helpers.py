"""Hand-built fixtures shared by the test modules."""
from __future__ import annotations

import math

import numpy as np

from fergaze.aoi import FaceSpec, TrialManifest, corner_slots
from fergaze.recording import (InterestPeriod, Landmarks68, ParticipantMeta, SampleArrays,
                               ScreenGeometry, SessionRecording, Trial, deg_per_px)
from fergaze.simulator import PulseSpec, template_landmarks

GEOM = ScreenGeometry()
STEP_OFFSETS = (200.0, 10200.0, 12200.0, 15200.0)


def fixture_manifest(trial_id: int = 1, target: int = 0,
                     emotions=("happy", "sad", "fear", "angry"), round_: int = 1,
                     perm3=(1, 2, 3, 0)) -> TrialManifest:
    slots = corner_slots(GEOM)
    faces = tuple(FaceSpec(f"F{trial_id}_{i}", emotions[i], f"ID{i}", slots[i], slots[perm3[i]])
                  for i in range(4))
    return TrialManifest(trial_id, round_, emotions[target], target, faces)


def fixture_landmarks(manifests) -> dict[str, Landmarks68]:
    pts = template_landmarks()
    out = {}
    for m in manifests:
        for f in m.faces:
            out[f.face_id] = Landmarks68(f.face_id, pts.copy(), (200.0, 200.0))
    return out


def trial_from_xy(trial_id: int, t0: float, xy: np.ndarray, pupil=900.0,
                  manifest: TrialManifest | None = None, right_xy: np.ndarray | None = None) -> Trial:
    """A trial whose samples follow ``xy`` (``(n, 2)`` px, NaN rows = tracking loss)."""
    n = len(xy)
    t = t0 + np.arange(n, dtype=float)
    pup = np.broadcast_to(np.asarray(pupil, dtype=float), (n,)).copy()
    left = np.column_stack([xy, pup])
    right = np.column_stack([xy if right_xy is None else right_xy, pup])
    left[~np.isfinite(left[:, 0])] = np.nan
    right[~np.isfinite(right[:, 0])] = np.nan
    periods = tuple(InterestPeriod(k + 1, t0 + STEP_OFFSETS[k], t0 + STEP_OFFSETS[k + 1]) for k in range(3))
    return Trial(trial_id, periods, SampleArrays(t, left, right), manifest, t0 + STEP_OFFSETS[3])


def constant_xy(x: float, y: float, n: int = 15200) -> np.ndarray:
    return np.tile([x, y], (n, 1)).astype(float)


def add_pulse(xy: np.ndarray, onset: int, duration: int, theta0: float = 0.3,
              pulse: PulseSpec = PulseSpec(), geometry: ScreenGeometry = GEOM) -> np.ndarray:
    """Add one arc pulse; the detector should report it at sample ``onset + 1`` lasting ``duration``."""
    out = xy.copy()
    offs = pulse.offsets(duration + 1, theta0, 1.0 / geometry.sampling_rate_hz) / np.asarray(deg_per_px(geometry))
    out[onset:onset + duration + 2] += offs
    out[onset + duration + 2:] += offs[-1]
    return out


def recording(trials, pid: str = "P01", geometry: ScreenGeometry = GEOM) -> SessionRecording:
    return SessionRecording(ParticipantMeta(pid), geometry, tuple(trials))


def session_text(n1: int = 10000, n2: int = 2000, n3: int = 3000, t0: int = 0) -> str:
    """Minimal single-trial session text with constant gaze at screen center."""
    lines = [f"# participant_id: P01", f"MSG {t0} TRIALID 1"]
    t = t0
    for k, n in zip((1, 2, 3), (n1, n2, n3)):
        lines.append(f"MSG {t} STEP {k}")
        for _ in range(n):
            lines.append(f"{t} 512.0 384.0 900.0 512.0 384.0 905.0")
            t += 1
    lines.append(f"MSG {t} END")
    return "\n".join(lines) + "\n"


def seg_distance(p, a, b) -> float:
    """Point-to-segment distance, written independently of the library helper."""
    ax, ay = a
    bx, by = b
    px, py = p
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    u = 0.0 if L2 == 0 else max(0.0, min(1.0, ((px - ax) * vx + (py - ay) * vy) / L2))
    return math.hypot(px - (ax + u * vx), py - (ay + u * vy))


def fd_gradient_error(model, X, Y, weights=None, eps: float = 1e-5, first_layer_sample=None,
                      seed: int = 0) -> float:
    """Largest relative gap between analytic gradients and central finite differences.

    Every parameter is probed unless ``first_layer_sample`` caps how many entries
    of the (possibly very wide) first weight matrix are drawn at random.
    """
    from fergaze.modeling.mlp import loss_and_grad

    _, gW, gb = loss_and_grad(model, X, Y, weights)
    rng = np.random.default_rng(seed)
    worst = 0.0
    params = [(model.weights[i], gW[i], i) for i in range(len(gW))]
    params += [(model.biases[i], gb[i], -1) for i in range(len(gb))]
    for arr, grad, layer in params:
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        idx = np.arange(flat.size)
        if layer == 0 and first_layer_sample and flat.size > first_layer_sample:
            idx = rng.choice(flat.size, first_layer_sample, replace=False)
        for k in idx:
            keep = flat[k]
            flat[k] = keep + eps
            up = loss_and_grad(model, X, Y, weights)[0]
            flat[k] = keep - eps
            down = loss_and_grad(model, X, Y, weights)[0]
            flat[k] = keep
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - gflat[k]) / max(abs(num), abs(gflat[k]), 1e-6))
    return worst
