import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from fergaze.aoi import (GROUPS, REGION_GROUP, REGION_INDICES, REGIONS, FaceSpec, Rect, TrialManifest,
                         assign_fixation, build_aoi_map, corner_slots, dump_manifests,
                         load_manifests, place_landmarks, word_rect)
from fergaze.recording import Landmarks68

from helpers import GEOM, fixture_landmarks, fixture_manifest, seg_distance

MAN = fixture_manifest(target=2)
LMS = fixture_landmarks([MAN])
MAP1 = build_aoi_map(MAN, LMS, 1)


def test_affine_midpoint():
    pts = np.zeros((68, 2))
    pts[0] = (250, 250)
    lm = Landmarks68("F", pts, (500.0, 500.0))
    out = place_landmarks(lm, Rect(100, 100, 200, 200))
    assert tuple(out[0]) == (200.0, 200.0)
    assert tuple(out[1]) == (100.0, 100.0)


def test_region_index_convention():
    assert REGION_INDICES["mouth"] == tuple(range(48, 68))
    assert REGION_INDICES["jaw"] == tuple(range(17))
    # the seven regions partition the 68 landmarks
    assert sorted(itertools.chain(*REGION_INDICES.values())) == list(range(68))
    assert set(REGION_INDICES) == set(REGIONS)


def test_group_map():
    assert set(REGION_GROUP) == set(REGIONS)
    assert set(REGION_GROUP.values()) == set(GROUPS)
    assert REGION_GROUP["jaw"] == "mouth"
    assert REGION_GROUP["left-eyebrow"] == REGION_GROUP["right-eyebrow"] == "eye"


def test_layout_defaults():
    assert word_rect(GEOM).center == (512.0, 384.0)
    slots = corner_slots(GEOM)
    assert slots[0] == Rect(80, 80, 200, 200)
    assert slots[3] == Rect(744, 488, 200, 200)


def test_point_in_target_mouth():
    mouth = MAP1.faces[2].regions["mouth"]
    a = assign_fixation(mouth.mean(axis=0), MAP1)
    assert (a.main_aoi, a.is_target, a.region, a.group, a.distance_px) == ("face2", True, "mouth", "mouth", 0.0)
    assert not a.tie


def test_equidistant_point_resolves_to_lower_index():
    # 232 px from the face0 and face1 rects, 254 px from the word
    a = assign_fixation((512.0, 100.0), MAP1)
    assert a.main_aoi == "face0" and a.tie
    assert a.distance_px == pytest.approx(232.0)
    b = assign_fixation((512.2, 100.0), MAP1)
    assert b.main_aoi == "face0" and b.tie
    c = assign_fixation((513.0, 100.0), MAP1)
    assert c.main_aoi == "face1" and not c.tie


def _isolated_landmarks():
    """Regions as compact, well separated clusters in a 200x200 image."""
    def ring(cx, cy, rx, ry, n, phase=0.0):
        a = phase + np.linspace(0, 2 * np.pi, n, endpoint=False)
        return np.column_stack([cx + rx * np.cos(a), cy + ry * np.sin(a)])
    pts = np.vstack([
        np.column_stack([np.linspace(30, 170, 17), 190 + 4 * (-1) ** np.arange(17)]),  # jaw
        ring(50, 25, 12, 4, 5), ring(150, 25, 12, 4, 5),  # brows
        ring(100, 100, 8, 12, 9),  # nose
        ring(50, 70, 10, 10, 6, np.pi / 2), ring(150, 70, 10, 10, 6, np.pi / 2),  # eyes
        ring(100, 150, 20, 8, 20),  # mouth
    ])
    return pts


def test_nearest_region_against_bruteforce():
    pts = _isolated_landmarks()
    man = fixture_manifest(target=0)
    lms = {f.face_id: Landmarks68(f.face_id, pts, (200.0, 200.0)) for f in man.faces}
    amap = build_aoi_map(man, lms, 1)
    # the left eye's top vertex sits at (150, 60) in the source image; go 5 px above it
    p = np.array([80 + 150.0, 80 + 55.0])
    screen = pts + 80
    dists = {}
    for label, idx in REGION_INDICES.items():
        cloud = screen[list(idx)]
        hull = cloud[ConvexHull(cloud).vertices]
        dists[label] = min(seg_distance(p, hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull)))
    assert dists["left-eye"] == pytest.approx(5.0, abs=1e-9)
    assert all(d >= 20 for lab, d in dists.items() if lab != "left-eye")
    a = assign_fixation(p, amap)
    assert (a.main_aoi, a.region, a.group) == ("face0", "left-eye", "eye")


def test_missing_landmarks_names_face():
    with pytest.raises(KeyError, match="F1_3"):
        build_aoi_map(MAN, {k: v for k, v in LMS.items() if k != "F1_3"}, 1)


def test_step3_uses_shuffled_rects():
    m3 = build_aoi_map(MAN, LMS, 3)
    assert [f.rect for f in m3.faces] == [f.rect_step3 for f in MAN.faces]
    m2 = build_aoi_map(MAN, LMS, 2)
    for f2, f1 in zip(m2.faces, MAP1.faces):
        assert f2.rect == f1.rect
        assert all(np.array_equal(f2.regions[k], f1.regions[k]) for k in REGIONS)


def test_subregions_inside_face_rect():
    for face in MAP1.faces:
        r = face.rect
        for poly in face.regions.values():
            assert np.all((poly[:, 0] >= r.x) & (poly[:, 0] <= r.x + r.w))
            assert np.all((poly[:, 1] >= r.y) & (poly[:, 1] <= r.y + r.h))


def test_max_distance_cap():
    assert assign_fixation((1020, 760), MAP1).main_aoi == "face3"
    assert assign_fixation((1020, 760), MAP1, max_distance=50).main_aoi == "none"


def test_manifest_validation():
    slots = corner_slots(GEOM)
    good = list(MAN.faces)
    with pytest.raises(ValueError, match="expected 4 faces"):
        TrialManifest(1, 1, "fear", 2, tuple(good[:3]))
    two = good.copy()
    two[0] = FaceSpec("x", "fear", "ID", slots[0], slots[1])
    with pytest.raises(ValueError, match="exactly one face"):
        TrialManifest(1, 1, "fear", 2, tuple(two))
    bad3 = good.copy()
    bad3[0] = FaceSpec(good[0].face_id, good[0].emotion, "ID", slots[0], slots[2])
    with pytest.raises(ValueError, match="permute"):
        TrialManifest(1, 1, "fear", 2, tuple(bad3))
    d = MAN.to_dict()
    d["faces"][0]["rect_step1"] = [80, 80, 150, 150]
    with pytest.raises(ValueError, match="200x200"):
        TrialManifest.from_dict(d)


def test_manifest_json_round_trip():
    assert load_manifests(json.loads(dump_manifests([MAN]))) == [MAN]


# --- properties --------------------------------------------------------------

points = st.tuples(st.floats(0, 1024), st.floats(0, 768))


@given(points)
def test_assignment_deterministic(p):
    assert assign_fixation(p, MAP1) == assign_fixation(p, MAP1)


@given(points)
def test_region_implies_face(p):
    a = assign_fixation(p, MAP1)
    if a.region != "none":
        assert a.main_aoi.startswith("face")
        assert a.group == REGION_GROUP[a.region]
    else:
        assert a.group == "none"


@given(st.integers(0, 3), st.floats(0, 1), st.floats(0, 1))
def test_points_in_face_rect_get_a_group(i, u, v):
    r = MAP1.faces[i].rect
    a = assign_fixation((r.x + u * r.w, r.y + v * r.h), MAP1)
    assert a.main_aoi == f"face{i}" and a.group in GROUPS


@settings(max_examples=60)
@given(points, st.permutations(range(4)))
def test_permuting_faces_relabels_assignments(p, perm):
    faces = tuple(MAN.faces[k] for k in perm)
    man = TrialManifest(1, 1, MAN.target_emotion, perm.index(MAN.target_face_index), faces)
    for step in (1, 3):
        a = assign_fixation(p, build_aoi_map(MAN, LMS, step))
        b = assign_fixation(p, build_aoi_map(man, LMS, step))
        if a.tie:
            continue  # ties resolve by index, which the permutation changes
        if a.main_aoi.startswith("face"):
            assert b.main_aoi == f"face{perm.index(int(a.main_aoi[-1]))}"
        else:
            assert b.main_aoi == a.main_aoi
        assert (a.region, a.group, a.is_target) == (b.region, b.group, b.is_target)
