"""Dwell-time tables, dwell-time change scores and face-region attention shares."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .aoi import EMOTIONS, GROUPS, MAIN_AOIS, NONE
from .events import FixationEvent
from .recording import SessionRecording
from .tables import format_csv

AOI_KEYS = MAIN_AOIS + (NONE,)


@dataclass(frozen=True)
class TrialDwell:
    trial_id: int
    step: int
    duration_ms: float
    target_face_index: int
    target_emotion: str
    face_emotions: tuple[str, ...]
    fractions: dict[str, float]
    group_fractions: tuple[dict[str, float], ...]  # per face, share of step duration

    @property
    def target(self) -> float:
        return self.fractions[f"face{self.target_face_index}"]

    @property
    def nontarget(self) -> float:
        """Mean dwell fraction over the three non-target faces."""
        return float(np.mean([self.fractions[f"face{i}"] for i in range(4)
                              if i != self.target_face_index]))

    @property
    def word(self) -> float:
        return self.fractions["word"]


@dataclass
class DwellReport:
    step: int
    trials: dict[int, TrialDwell] = field(default_factory=dict)

    def mean_fractions(self) -> dict[str, float]:
        """Mean over trials of target, per-face non-target, word and none fractions."""
        tds = list(self.trials.values())
        return {
            "target": float(np.mean([t.target for t in tds])),
            "nontarget": float(np.mean([t.nontarget for t in tds])),
            "word": float(np.mean([t.word for t in tds])),
            "none": float(np.mean([t.fractions[NONE] for t in tds])),
        }


def dwell_table(recording: SessionRecording, step: int,
                fixations: Mapping[int, Sequence[FixationEvent]]) -> DwellReport:
    """Share of each step's duration spent fixating each main AOI.

    Time not covered by an assigned fixation accrues to ``none``.
    """
    report = DwellReport(step)
    for tr in recording.trials:
        man = tr.manifest
        if man is None:
            raise ValueError(f"trial {tr.trial_id}: dwell needs a manifest")
        dur = tr.period(step).duration_ms
        acc = dict.fromkeys(MAIN_AOIS, 0.0)
        groups = [dict.fromkeys(GROUPS, 0.0) for _ in range(4)]
        for fx in fixations.get(tr.trial_id, ()):
            if fx.step_index != step or fx.assignment is None:
                continue
            a = fx.assignment
            if a.main_aoi == NONE:
                continue
            acc[a.main_aoi] += fx.duration_ms
            if a.face_index is not None and a.group != NONE:
                groups[a.face_index][a.group] += fx.duration_ms
        fr = {k: v / dur for k, v in acc.items()}
        fr[NONE] = max(0.0, 1.0 - sum(fr.values()))
        gfr = tuple({g: v / dur for g, v in gd.items()} for gd in groups)
        report.trials[tr.trial_id] = TrialDwell(
            tr.trial_id, step, dur, man.target_face_index, man.target_emotion,
            tuple(f.emotion for f in man.faces), fr, gfr)
    return report


def session_dwell(recording: SessionRecording,
                  fixations: Mapping[int, Sequence[FixationEvent]]) -> dict[int, DwellReport]:
    return {k: dwell_table(recording, k, fixations) for k in (1, 2, 3)}


def dwell_time_change(step1: TrialDwell, step3: TrialDwell) -> float:
    """Target-face dwell change from step 1 to step 3, in percentage points."""
    return 100.0 * (step3.target - step1.target)


def region_distribution(reports: Iterable[DwellReport], split: str = "all"
                        ) -> dict[str, dict[str, float]]:
    """Per-emotion eye/nose/mouth shares of face-region dwell.

    Each face's group dwell is normalized to its own total, then averaged over
    faces showing that emotion.  ``split`` selects target faces, non-target
    faces, or all.
    """
    if split not in ("all", "target", "non-target"):
        raise ValueError(f"unknown split {split!r}")
    acc: dict[str, list[np.ndarray]] = defaultdict(list)
    for rep in reports:
        for td in rep.trials.values():
            for i, gd in enumerate(td.group_fractions):
                is_t = i == td.target_face_index
                if (split == "target" and not is_t) or (split == "non-target" and is_t):
                    continue
                v = np.array([gd[g] for g in GROUPS])
                total = v.sum()
                if total <= 0:
                    continue
                acc[td.face_emotions[i]].append(v / total)
    out = {}
    for emo in EMOTIONS:
        if acc.get(emo):
            m = np.mean(acc[emo], axis=0)
            m = m / m.sum()
            out[emo] = dict(zip(GROUPS, map(float, m)))
    return out


@dataclass(frozen=True)
class PerformanceScore:
    participant_id: str
    trial_dtc: dict[int, float]
    mean_dtc: float
    per_emotion: dict[str, float]

    @property
    def n_trials(self) -> int:
        return len(self.trial_dtc)


def participant_performance(dwell_by_participant: Mapping[str, Mapping[int, DwellReport]]
                            ) -> dict[str, PerformanceScore]:
    """Mean and per-target-emotion dwell-time change for each participant."""
    out = {}
    for pid, reps in dwell_by_participant.items():
        s1, s3 = reps[1], reps[3]
        dtc = {tid: dwell_time_change(s1.trials[tid], s3.trials[tid])
               for tid in s3.trials if tid in s1.trials}
        if not dtc:
            raise ValueError(f"participant {pid}: no scored trials")
        by_emo = defaultdict(list)
        for tid, v in dtc.items():
            by_emo[s3.trials[tid].target_emotion].append(v)
        out[pid] = PerformanceScore(pid, dtc, float(np.mean(list(dtc.values()))),
                                    {e: float(np.mean(v)) for e, v in sorted(by_emo.items())})
    return out


def dwell_summary(dwell_by_participant: Mapping[str, Mapping[int, DwellReport]]) -> list[dict]:
    """Per-target-emotion rows (plus ``avg``) laid out like the dwell-by-step table, in percent."""
    cols = defaultdict(lambda: defaultdict(list))
    for reps in dwell_by_participant.values():
        s1, s2, s3 = reps[1], reps[2], reps[3]
        for tid, t3 in s3.trials.items():
            t1, t2 = s1.trials[tid], s2.trials[tid]
            vals = {
                "step1_target": t1.target, "step2_nontarget": t2.nontarget,
                "step2_target": t2.target, "step2_word": t2.word,
                "step3_nontarget": t3.nontarget, "step3_target": t3.target, "step3_word": t3.word,
                "dtc": dwell_time_change(t1, t3) / 100.0,
            }
            for key in (t3.target_emotion, "avg"):
                for k, v in vals.items():
                    cols[key][k].append(v)
    rows = []
    for key in [e for e in EMOTIONS if e in cols] + ["avg"]:
        if key not in cols:
            continue
        d = {"emotion": key, "n_trials": len(cols[key]["dtc"])}
        d.update({k: 100.0 * float(np.mean(v)) for k, v in cols[key].items()})
        rows.append(d)
    return rows


def dwell_csv(rows: Sequence[dict]) -> str:
    keys = ["emotion", "n_trials", "step1_target", "step2_nontarget", "step2_target", "step2_word",
            "step3_nontarget", "step3_target", "step3_word", "dtc"]
    return format_csv("dwell", ([r[k] for k in keys] for r in rows))


def step_dwell_csv(report: DwellReport) -> str:
    """Per-emotion target / non-target / word shares (percent) for a single step."""
    by = defaultdict(lambda: defaultdict(list))
    for td in report.trials.values():
        for key in (td.target_emotion, "avg"):
            by[key]["nontarget"].append(td.nontarget)
            by[key]["target"].append(td.target)
            by[key]["word"].append(td.word)
    rows = []
    for key in [e for e in EMOTIONS if e in by] + ["avg"]:
        if key in by:
            d = by[key]
            rows.append((key, len(d["target"]), report.step,
                         *(100.0 * float(np.mean(d[k])) for k in ("nontarget", "target", "word"))))
    return format_csv("dwell_step", rows)
