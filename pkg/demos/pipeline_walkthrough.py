"""Simulate one participant and walk the analysis pipeline end to end.

Run from the repository root:  python demos/pipeline_walkthrough.py [out_dir]
"""
import sys
from pathlib import Path

from fergaze.events import build_session_maps, extract_events, fixation_feature_rows
from fergaze.heatmap import collect_fixations, heatmap_svg
from fergaze.metrics import dwell_summary, participant_performance, session_dwell
from fergaze.simulator import SimProfile, simulate_session
from fergaze.stats import run_analysis_battery


def main(out_dir: str = "demo_output") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate_session(SimProfile(), n_trials=60, seed=3)
    rec = sim.recording.without_warmup(6)
    scored = {t.trial_id for t in rec.trials}
    n_true = sum(e.eye == "binocular" and e.trial_id in scored for e in sim.truth_events)
    print(f"simulated {len(rec.trials)} scored trials with {n_true} injected binocular microsaccades")

    maps = build_session_maps(rec, sim.landmarks)
    events = extract_events(rec, maps)
    n_fix = sum(len(v) for v in events.fixations.values())
    n_bino = sum(len(v) for (_, _, eye), v in events.microsaccades.items() if eye == "binocular")
    print(f"detected {n_fix} fixations and {n_bino} binocular microsaccades")

    dwell = session_dwell(rec, events.fixations)
    avg = dwell_summary({"S01": dwell})[-1]
    print("dwell (%): step 1 target {step1_target:.1f}, step 3 target {step3_target:.1f}, "
          "step 3 word {step3_word:.1f}, DTC {dtc:.1f}".format(**avg))
    perf = participant_performance({"S01": dwell})["S01"]
    best = max(perf.per_emotion, key=perf.per_emotion.get)
    print(f"mean DTC {perf.mean_dtc:.1f} points, highest for target emotion '{best}'")

    battery = run_analysis_battery(fixation_feature_rows(rec, maps))
    hits = [f"{c.variable} x {c.category}" for c in battery.anova if c.significant]
    print(f"{len(hits)} of {len(battery.anova)} ANOVA cells significant after Bonferroni:")
    for h in hits:
        print(f"  {h}")

    fixes = [f for fs in events.fixations.values() for f in fs]
    pts, w = collect_fixations(fixes, 3)
    svg = out / "step3_heatmap.svg"
    svg.write_text(heatmap_svg(pts, w, rec.geometry, title="step 3, all trials"), encoding="utf-8")
    print(f"wrote {svg}")


if __name__ == "__main__":
    main(*sys.argv[1:])
