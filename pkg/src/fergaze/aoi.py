"""Screen AOIs, landmark-derived facial sub-regions and nearest-area assignment."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .recording import Landmarks68, ScreenGeometry

EMOTIONS = ("angry", "disgust", "fear", "happy", "sad", "surprise")
REGIONS = ("mouth", "left-eyebrow", "right-eyebrow", "left-eye", "right-eye", "nose", "jaw")
GROUPS = ("eye", "nose", "mouth")
NONE = "none"

# 68-point annotation convention (0-based, subject's left/right)
REGION_INDICES = {
    "jaw": tuple(range(0, 17)),
    "right-eyebrow": tuple(range(17, 22)),
    "left-eyebrow": tuple(range(22, 27)),
    "nose": tuple(range(27, 36)),
    "right-eye": tuple(range(36, 42)),
    "left-eye": tuple(range(42, 48)),
    "mouth": tuple(range(48, 68)),
}
REGION_GROUP = {
    "left-eye": "eye", "right-eye": "eye",
    "left-eyebrow": "eye", "right-eyebrow": "eye",
    "nose": "nose",
    "mouth": "mouth", "jaw": "mouth",
}
MAIN_AOIS = ("face0", "face1", "face2", "face3", "word")

DEFAULT_FACE_SIZE = 200
DEFAULT_CORNER_INSET = 80
DEFAULT_WORD_SIZE = (300, 60)
TIE_TOLERANCE_PX = 0.5


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    def contains(self, px, py) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h

    def distance(self, px, py) -> float:
        """Euclidean distance to the rectangle boundary, 0 inside."""
        dx = max(self.x - px, 0.0, px - (self.x + self.w))
        dy = max(self.y - py, 0.0, py - (self.y + self.h))
        return math.hypot(dx, dy)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_seq(cls, seq) -> "Rect":
        if len(seq) != 4:
            raise ValueError(f"rectangle needs [x, y, w, h], got {seq!r}")
        x, y, w, h = map(float, seq)
        if w <= 0 or h <= 0:
            raise ValueError(f"rectangle must have positive size, got {seq!r}")
        return cls(x, y, w, h)


def corner_slots(geometry: ScreenGeometry = ScreenGeometry(), face_size: float = DEFAULT_FACE_SIZE,
                 inset: float = DEFAULT_CORNER_INSET) -> tuple[Rect, Rect, Rect, Rect]:
    """Face rectangles inset from the top-left, top-right, bottom-left and bottom-right corners."""
    W, H = geometry.resolution_px
    far_x, far_y = W - inset - face_size, H - inset - face_size
    return (Rect(inset, inset, face_size, face_size), Rect(far_x, inset, face_size, face_size),
            Rect(inset, far_y, face_size, face_size), Rect(far_x, far_y, face_size, face_size))


def word_rect(geometry: ScreenGeometry = ScreenGeometry(), size=DEFAULT_WORD_SIZE) -> Rect:
    cx, cy = geometry.center_px
    return Rect(cx - size[0] / 2, cy - size[1] / 2, size[0], size[1])


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class FaceSpec:
    face_id: str
    emotion: str
    identity: str
    rect_step1: Rect
    rect_step3: Rect


@dataclass(frozen=True)
class TrialManifest:
    trial_id: int
    round: int
    target_emotion: str
    target_face_index: int
    faces: tuple[FaceSpec, FaceSpec, FaceSpec, FaceSpec]

    def __post_init__(self):
        if len(self.faces) != 4:
            raise ValueError(f"trial {self.trial_id}: expected 4 faces, got {len(self.faces)}")
        if self.round not in (1, 2):
            raise ValueError(f"trial {self.trial_id}: round must be 1 or 2")
        if self.target_emotion not in EMOTIONS:
            raise ValueError(f"trial {self.trial_id}: unknown target emotion {self.target_emotion!r}")
        for f in self.faces:
            if f.emotion not in EMOTIONS:
                raise ValueError(f"trial {self.trial_id}: unknown emotion {f.emotion!r} for {f.face_id}")
        carriers = [i for i, f in enumerate(self.faces) if f.emotion == self.target_emotion]
        if carriers != [self.target_face_index]:
            raise ValueError(
                f"trial {self.trial_id}: exactly one face (the target) must show {self.target_emotion}")
        sizes = {(f.rect_step1.w, f.rect_step1.h) for f in self.faces} | \
                {(f.rect_step3.w, f.rect_step3.h) for f in self.faces}
        if len(sizes) != 1:
            raise ValueError(f"trial {self.trial_id}: face rectangles must share one size")
        slots1 = sorted((f.rect_step1.x, f.rect_step1.y) for f in self.faces)
        slots3 = sorted((f.rect_step3.x, f.rect_step3.y) for f in self.faces)
        if slots1 != slots3 or len(set(slots1)) != 4:
            raise ValueError(
                f"trial {self.trial_id}: step-3 positions must permute the 4 step-1 slots")

    @property
    def target_face(self) -> FaceSpec:
        return self.faces[self.target_face_index]

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id, "round": self.round,
            "target_emotion": self.target_emotion, "target_face_index": self.target_face_index,
            "faces": [{"face_id": f.face_id, "emotion": f.emotion, "identity": f.identity,
                       "rect_step1": f.rect_step1.as_list(), "rect_step3": f.rect_step3.as_list()}
                      for f in self.faces],
        }

    @classmethod
    def from_dict(cls, d: Mapping, face_size: float | None = DEFAULT_FACE_SIZE) -> "TrialManifest":
        missing = {"trial_id", "round", "target_emotion", "target_face_index", "faces"} - set(d)
        if missing:
            raise ValueError(f"manifest entry missing fields: {sorted(missing)}")
        faces = []
        for fd in d["faces"]:
            f = FaceSpec(str(fd["face_id"]), fd["emotion"], str(fd.get("identity", "")),
                         Rect.from_seq(fd["rect_step1"]), Rect.from_seq(fd["rect_step3"]))
            if face_size is not None and (f.rect_step1.w, f.rect_step1.h) != (face_size, face_size):
                raise ValueError(
                    f"trial {d['trial_id']}: face {f.face_id} is not {face_size:g}x{face_size:g} px")
            faces.append(f)
        return cls(int(d["trial_id"]), int(d["round"]), d["target_emotion"],
                   int(d["target_face_index"]), tuple(faces))


def load_manifests(source) -> list[TrialManifest]:
    """Read a session manifest: a JSON list of trials or ``{"trials": [...]}``."""
    if isinstance(source, (list, dict)):
        obj = source
    else:
        with open(source, encoding="utf-8") as fh:
            obj = json.load(fh)
    entries = obj["trials"] if isinstance(obj, dict) else obj
    return [TrialManifest.from_dict(e) for e in entries]


def dump_manifests(manifests: Sequence[TrialManifest]) -> str:
    return json.dumps({"trials": [m.to_dict() for m in manifests]}, indent=1)


# ---------------------------------------------------------------------------
# polygons

def convex_hull(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull (Andrew's monotone chain)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def point_in_polygon(px: float, py: float, poly: np.ndarray) -> bool:
    """Even-odd rule; points on an edge count as inside."""
    n = len(poly)
    if n < 3:
        return polygon_distance(px, py, poly) == 0.0
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if _seg_dist(px, py, x1, y1, x2, y2) == 0.0:
            return True
        if (y1 > py) != (y2 > py):
            xin = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xin:
                inside = not inside
    return inside


def _seg_dist(px, py, x1, y1, x2, y2) -> float:
    dx, dy = x2 - x1, y2 - y1
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((px - x1) * dx + (py - y1) * dy) / L2))
    return math.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def polygon_distance(px: float, py: float, poly: np.ndarray) -> float:
    """Minimum distance from a point to the polygon's edges."""
    n = len(poly)
    if n == 1:
        return math.hypot(px - poly[0][0], py - poly[0][1])
    return min(_seg_dist(px, py, *poly[i], *poly[(i + 1) % n]) for i in range(n))


# ---------------------------------------------------------------------------
# maps and assignment

@dataclass(frozen=True, eq=False)
class FaceAoi:
    rect: Rect
    regions: dict[str, np.ndarray]  # label -> hull polygon, screen px
    areas: dict[str, float]


@dataclass(frozen=True, eq=False)
class AoiMap:
    step: int
    faces: tuple[FaceAoi, ...]
    word: Rect
    target_face_index: int | None = None

    def main_rects(self) -> list[Rect]:
        return [f.rect for f in self.faces] + [self.word]


@dataclass(frozen=True)
class AoiAssignment:
    main_aoi: str
    is_target: bool = False
    region: str = NONE
    group: str = NONE
    distance_px: float = 0.0
    tie: bool = False

    @property
    def face_index(self) -> int | None:
        return int(self.main_aoi[4]) if self.main_aoi.startswith("face") else None


def place_landmarks(lm: Landmarks68, rect: Rect) -> np.ndarray:
    """Scale source-image landmarks into a placed face rectangle."""
    sx = rect.w / lm.image_size[0]
    sy = rect.h / lm.image_size[1]
    return np.column_stack([rect.x + lm.points[:, 0] * sx, rect.y + lm.points[:, 1] * sy])


def build_aoi_map(trial: TrialManifest, landmarks: Mapping[str, Landmarks68], step: int,
                  geometry: ScreenGeometry = ScreenGeometry(), word_size=DEFAULT_WORD_SIZE) -> AoiMap:
    """Main AOIs and facial sub-regions for one trial as displayed at ``step``.

    Steps 1 and 2 use the step-1 face placement; step 3 uses the shuffled one.
    Each sub-region is the convex hull of its landmark indices.
    """
    if step not in (1, 2, 3):
        raise ValueError(f"step must be 1, 2 or 3, got {step}")
    faces = []
    for f in trial.faces:
        if f.face_id not in landmarks:
            raise KeyError(f"{f.face_id}: no landmarks")
        rect = f.rect_step3 if step == 3 else f.rect_step1
        pts = place_landmarks(landmarks[f.face_id], rect)
        regions, areas = {}, {}
        for label in REGIONS:
            hull = convex_hull(pts[list(REGION_INDICES[label])])
            regions[label] = hull
            areas[label] = polygon_area(hull) if len(hull) >= 3 else 0.0
        faces.append(FaceAoi(rect, regions, areas))
    return AoiMap(step, tuple(faces), word_rect(geometry, word_size), trial.target_face_index)


def _pick_nearest(dists: Sequence[float], tol: float) -> tuple[int, bool]:
    best = min(range(len(dists)), key=lambda i: (dists[i], i))
    tie = any(i != best and dists[i] - dists[best] <= tol for i in range(len(dists)))
    # lowest index among the near-equal candidates wins
    cands = [i for i in range(len(dists)) if dists[i] - dists[best] <= tol]
    return min(cands), tie


def assign_fixation(point, aoi_map: AoiMap, target_face_index: int | None = None, *,
                    max_distance: float | None = None, tie_tolerance: float = TIE_TOLERANCE_PX
                    ) -> AoiAssignment:
    """Assign a fixation point to its main AOI and facial sub-region.

    Containment wins; otherwise the AOI with the smallest boundary distance is
    chosen, near-equal distances (within ``tie_tolerance``) resolving to the
    lowest index with ``tie`` set.  Inside a face, the smallest containing
    sub-region wins; failing that the nearest sub-region boundary.
    """
    px, py = float(point[0]), float(point[1])
    if target_face_index is None:
        target_face_index = aoi_map.target_face_index
    rects = aoi_map.main_rects()
    inside = [i for i, r in enumerate(rects) if r.contains(px, py)]
    if len(inside) == 1:
        idx, tie, dist = inside[0], False, 0.0
    elif inside:
        idx, tie, dist = inside[0], True, 0.0
    else:
        dists = [r.distance(px, py) for r in rects]
        idx, tie = _pick_nearest(dists, tie_tolerance)
        dist = dists[idx]
        if max_distance is not None and dist > max_distance:
            return AoiAssignment(NONE, distance_px=dist)
    name = MAIN_AOIS[idx]
    if name == "word":
        return AoiAssignment("word", distance_px=dist, tie=tie)
    face = aoi_map.faces[idx]
    containing = [lab for lab in REGIONS if face.areas[lab] > 0
                  and point_in_polygon(px, py, face.regions[lab])]
    if containing:
        region = min(containing, key=lambda lab: (face.areas[lab], REGIONS.index(lab)))
    else:
        rd = [polygon_distance(px, py, face.regions[lab]) for lab in REGIONS]
        ri, rtie = _pick_nearest(rd, tie_tolerance)
        region = REGIONS[ri]
        tie = tie or rtie
    return AoiAssignment(name, idx == target_face_index, region, REGION_GROUP[region], dist, tie)
