"""Command-line pipeline: parse, events, features, dwell, stats, train, evaluate, simulate, report.

Inputs given with ``--in`` may be session files or directories written by
``simulate``; a directory contributes every ``session*.txt`` inside it and
supplies default manifest, geometry, landmark and embedding files.

Errors are reported on stderr as one JSON line and map to exit codes
0 (ok), 2 (usage), 3 (input or schema) and 4 (numeric failure).
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .aoi import EMOTIONS, TrialManifest, corner_slots, load_manifests, word_rect
from .events import (FixationParams, MicrosaccadeParams, build_session_maps, detect_fixations,
                     events_csv, extract_events, features_csv, fixation_feature_rows, fixations_csv,
                     read_feature_rows)
from .heatmap import collect_fixations, heatmap_svg
from .metrics import dwell_csv, dwell_summary, participant_performance, session_dwell, step_dwell_csv
from .modeling import (TASK1_PRESET, TASK2_PRESET, BaselineTrainer, GbtParams, GbtTrainer, MeanTrainer,
                       MlpConfig, MlpTrainer, loocv, task1_dataset, task2_dataset, task3_dataset,
                       train_gbt, train_mlp)
from .modeling.mlp import target_weights
from .recording import (ScreenGeometry, SessionFormatError, SessionRecording, SessionStructureError,
                        load_face_assets, load_geometry, read_session)
from .simulator import SimProfile, simulate_session, write_simulation
from .stats import run_analysis_battery
from .tables import describe_schemas

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

JSON_FORMATS = {
    "manifest": '{"trials": [{"trial_id", "round", "target_emotion", "target_face_index", '
                '"faces": [{"face_id", "emotion", "identity", "rect_step1": [x,y,w,h], "rect_step3"}] x4}]}',
    "geometry": '{"resolution_px", "physical_size_cm", "viewing_distance_cm", "sampling_rate_hz"}',
    "landmarks": '{"_image_size": [w,h], "<face_id>": [[x,y] x 68]}',
    "embeddings": "CSV rows face_id,v0,v1,...",
    "session": "lines: '# key: value' | 'MSG <t> TRIALID <id>' | 'MSG <t> STEP <k>' | "
               "'MSG <t> END' | '<t> lx ly lpupil rx ry rpupil' ('. . .' for a missing eye)",
    "params": '{"velocity_threshold", "acc_threshold", "min_duration", "max_duration", '
              '"amplitude_range" | "amplitude_preset", "refractory", "period_guard", '
              '"fixation": {"max_dispersion_deg", "min_duration_ms"}}',
    "summary": "fergaze-summary/v1", "model": "fergaze-mlp/v1 | fergaze-gbt/v1",
    "evaluation": "fergaze-eval/v1", "battery": "battery-v1",
}


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


# ---------------------------------------------------------------------------
# inputs

@dataclass
class Inputs:
    recordings: list[SessionRecording]
    manifests: dict[int, TrialManifest]
    geometry: ScreenGeometry
    landmarks: dict = field(default_factory=dict)
    embeddings: dict = field(default_factory=dict)

    def maps(self, rec: SessionRecording):
        if not self.landmarks:
            raise CliError(EXIT_INPUT, "input", "face landmarks are required (--landmarks)")
        return build_session_maps(rec, self.landmarks)


def _sidecar(explicit, base: Path, name: str, required: bool = False):
    if explicit:
        return Path(explicit)
    cand = base / name
    if cand.exists():
        return cand
    if required:
        raise CliError(EXIT_INPUT, "input", f"{name} not found next to {base}; pass it explicitly")
    return None


def load_inputs(args) -> Inputs:
    sessions = []
    base = None
    for raw in args.inputs:
        p = Path(raw)
        if p.is_dir():
            found = sorted(p.glob("session*.txt"))
            if not found:
                raise CliError(EXIT_INPUT, "input", f"{p}: no session*.txt files")
            sessions += found
            base = base or p
        elif p.exists():
            sessions.append(p)
            base = base or p.parent
        else:
            raise CliError(EXIT_INPUT, "input", f"{p}: no such file or directory")
    geo_path = _sidecar(args.geometry, base, "geometry.json")
    geometry = load_geometry(geo_path) if geo_path else ScreenGeometry()
    manifests = load_manifests(_sidecar(args.manifest, base, "manifest.json", required=True))
    lm_path = _sidecar(args.landmarks, base, "landmarks.json")
    emb_path = _sidecar(getattr(args, "embeddings", None), base, "embeddings.csv")
    landmarks, embeddings = ({}, {})
    if lm_path:
        landmarks, embeddings = load_face_assets(lm_path, emb_path)
    recs = []
    for s in sessions:
        rec = read_session(s, geometry, manifests)
        if args.warmup:
            rec = rec.without_warmup(args.warmup)
        recs.append(rec)
    ids = [r.participant.participant_id for r in recs]
    if len(set(ids)) != len(ids):
        raise CliError(EXIT_INPUT, "input", f"duplicate participant ids across sessions: {ids}")
    return Inputs(recs, {m.trial_id: m for m in manifests}, geometry, landmarks, embeddings)


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _params(path) -> tuple[MicrosaccadeParams, FixationParams]:
    if not path:
        return MicrosaccadeParams(), FixationParams()
    d = dict(_load_json(path))
    fx = d.pop("fixation", {})
    try:
        return MicrosaccadeParams.from_dict(d), FixationParams(**fx)
    except TypeError as e:
        raise CliError(EXIT_INPUT, "schema", f"{path}: {e}") from None


def _single(inp: Inputs) -> SessionRecording:
    if len(inp.recordings) != 1:
        raise CliError(EXIT_USAGE, "usage", "this subcommand takes exactly one session")
    return inp.recordings[0]


# ---------------------------------------------------------------------------
# subcommands

def cmd_parse(args) -> int:
    inp = load_inputs(args)
    sessions = []
    for rec in inp.recordings:
        sessions.append({
            "participant_id": rec.participant.participant_id,
            "n_trials": len(rec.trials),
            "n_periods": sum(len(t.periods) for t in rec.trials),
            "n_samples": int(sum(len(t.samples) for t in rec.trials)),
            "trials": [{"trial": t.trial_id, "n_samples": len(t.samples),
                        "period_ms": [p.duration_ms for p in t.periods]} for t in rec.trials],
        })
    _emit(json.dumps({"format": "fergaze-summary/v1", "geometry": inp.geometry.to_dict(),
                      "sessions": sessions}, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_events(args) -> int:
    inp = load_inputs(args)
    rec = _single(inp)
    ms_params, fx_params = _params(args.params)
    maps = inp.maps(rec) if inp.landmarks else None
    ev = extract_events(rec, maps, ms_params, fx_params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fixations.csv").write_text(fixations_csv(ev.fixations), encoding="utf-8")
    (out / "microsaccades.csv").write_text(events_csv(ev), encoding="utf-8")
    return EXIT_OK


def _feature_rows(inp: Inputs, ms_params=MicrosaccadeParams()):
    rows = []
    for rec in inp.recordings:
        rows += fixation_feature_rows(rec, inp.maps(rec), ms_params)
    return rows


def cmd_features(args) -> int:
    inp = load_inputs(args)
    ms_params, _ = _params(args.params)
    _emit(features_csv(_feature_rows(inp, ms_params)), args.out)
    return EXIT_OK


def _dwell_reports(inp: Inputs) -> dict:
    out = {}
    for rec in inp.recordings:
        out[rec.participant.participant_id] = session_dwell(rec, detect_fixations(rec, inp.maps(rec)))
    return out


def cmd_dwell(args) -> int:
    inp = load_inputs(args)
    reps = _dwell_reports(inp)
    if args.step is None:
        _emit(dwell_csv(dwell_summary(reps)), args.out)
        return EXIT_OK
    if len(reps) != 1:
        raise CliError(EXIT_USAGE, "usage", "--step takes exactly one session")
    _emit(step_dwell_csv(next(iter(reps.values()))[args.step]), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    rows = []
    for p in args.features:
        try:
            rows += read_feature_rows(p)
        except KeyError as e:
            raise CliError(EXIT_INPUT, "schema", f"{p}: missing column {e}") from None
    report = run_analysis_battery(rows, args.alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "anova.csv").write_text(report.anova_csv(), encoding="utf-8")
    (out / "chi_square.csv").write_text(report.chi_square_csv(), encoding="utf-8")
    (out / "battery.json").write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def build_dataset(inp: Inputs, task: int, variant: str | None, step: int):
    if task == 3:
        rows, scores = {}, {}
        perf = participant_performance(_dwell_reports(inp))
        for rec in inp.recordings:
            pid = rec.participant.participant_id
            rows[pid] = fixation_feature_rows(rec, inp.maps(rec))
            scores[pid] = perf[pid].mean_dtc
        return task3_dataset(rows, scores)
    pairs = [(rec, detect_fixations(rec, inp.maps(rec))) for rec in inp.recordings]
    if task == 1:
        if variant not in ("spatial", "temporal", "spatiotemporal"):
            raise CliError(EXIT_USAGE, "usage", "task 1 needs --variant spatial|temporal|spatiotemporal")
        if step != 3:
            raise CliError(EXIT_USAGE, "usage", "task 1 predicts step-3 dwell")
        return task1_dataset(pairs, variant)
    if variant not in (None, "embeddings"):
        raise CliError(EXIT_USAGE, "usage", "task 2 uses --variant embeddings")
    if not inp.embeddings:
        raise CliError(EXIT_INPUT, "input", "task 2 needs face embeddings (--embeddings)")
    return task2_dataset(task1_dataset(pairs, "spatial", step), inp.manifests, inp.embeddings)


def _mlp_config(args, task: int) -> MlpConfig:
    cfg = TASK1_PRESET if task == 1 else TASK2_PRESET
    if args.config:
        d = _load_json(args.config)
        known = {f.name for f in fields(MlpConfig)}
        if set(d) - known:
            raise CliError(EXIT_INPUT, "schema", f"unknown MLP config fields: {sorted(set(d) - known)}")
        cfg = replace(cfg, **d)
    return replace(cfg, seed=args.seed)


def _gbt_params(args) -> GbtParams:
    p = GbtParams()
    if args.config:
        d = _load_json(args.config)
        known = {f.name for f in fields(GbtParams)}
        if set(d) - known:
            raise CliError(EXIT_INPUT, "schema", f"unknown boosting fields: {sorted(set(d) - known)}")
        p = replace(p, **d)
    return replace(p, seed=args.seed)


def _check_finite(values, what: str) -> None:
    if not np.all(np.isfinite(np.asarray(values, dtype=float))):
        raise CliError(EXIT_NUMERIC, "numeric", f"{what} is not finite")


def cmd_train(args) -> int:
    inp = load_inputs(args)
    ds = build_dataset(inp, args.task, args.variant, args.step)
    if args.task == 3:
        model = train_gbt(ds.X, ds.Y[:, 0], _gbt_params(args))
        _check_finite(model.train_mse, "training loss")
    else:
        cfg = _mlp_config(args, args.task)
        model = train_mlp(cfg, ds.X, ds.Y, target_weights(ds.target_index, cfg.n_outputs, args.w_target))
        _check_finite(model.loss_trace, "training loss")
    _emit(model.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    inp = load_inputs(args)
    ds = build_dataset(inp, args.task, args.variant, args.step)
    kind = args.model or ("gbt" if args.task == 3 else "mlp")
    if kind == "mlp":
        if args.task == 3:
            raise CliError(EXIT_USAGE, "usage", "task 3 is evaluated with gbt, mean or baseline")
        trainer = MlpTrainer(_mlp_config(args, args.task), args.w_target)
    elif kind == "gbt":
        trainer = GbtTrainer(_gbt_params(args))
    elif kind == "baseline":
        trainer = MeanTrainer() if args.task == 3 else BaselineTrainer(ds.target_step or 3)
    else:
        trainer = MeanTrainer()
    rep = loocv(ds, trainer, seed=args.seed, with_spearman=args.task == 3)
    _check_finite(rep.predictions, "predictions")
    _emit(rep.to_json() + "\n", args.out)
    if args.folds:
        _emit(rep.folds_csv(), args.folds)
    return EXIT_OK


def cmd_simulate(args) -> int:
    profile = SimProfile.from_dict(_load_json(args.profile)) if args.profile else SimProfile()
    out = Path(args.out)
    for k in range(args.participants):
        pid = f"S{k + 1:02d}"
        seed = args.seed if k == 0 else int(np.random.SeedSequence([args.seed, k]).generate_state(1)[0])
        sim = simulate_session(profile, args.trials, seed, participant_id=pid, face_seed=args.seed)
        write_simulation(sim, out, tag=pid)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    inp = load_inputs(args)
    if args.emotion not in EMOTIONS + ("all",):
        raise CliError(EXIT_USAGE, "usage", f"--emotion must be one of {EMOTIONS + ('all',)}")
    pts, w = [], []
    aoi_map = None
    for rec in inp.recordings:
        maps = inp.maps(rec)
        fixes = detect_fixations(rec, maps)
        keep = {t.trial_id for t in rec.trials
                if args.emotion == "all" or t.manifest.target_emotion == args.emotion}
        if args.trial is not None:
            keep &= {args.trial}
            if args.trial in inp.manifests and (args.trial, args.step) in maps:
                aoi_map = maps[args.trial, args.step]
        for tid in sorted(keep):
            p, d = collect_fixations(fixes.get(tid, ()), args.step)
            pts.append(p)
            w.append(d)
    pts = np.concatenate(pts) if pts else np.zeros((0, 2))
    w = np.concatenate(w) if w else np.zeros(0)
    rects = list(corner_slots(inp.geometry))
    if args.step in (2, 3):
        rects.append(word_rect(inp.geometry))
    title = f"step {args.step}, target emotion {args.emotion}, {len(w)} fixations"
    _emit(heatmap_svg(pts, w, inp.geometry, sigma_px=args.sigma, rects=rects, aoi_map=aoi_map,
                      title=title), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_inputs(p, embeddings: bool = False) -> None:
    p.add_argument("--in", dest="inputs", action="append", required=True, metavar="PATH",
                   help="session file or simulation directory (repeatable)")
    p.add_argument("--manifest", help="trial manifest JSON")
    p.add_argument("--geometry", help="screen geometry JSON")
    p.add_argument("--landmarks", help="68-point landmark JSON")
    if embeddings:
        p.add_argument("--embeddings", help="face embedding CSV")
    p.add_argument("--warmup", type=int, default=0, help="leading trials to exclude per session")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fergaze", description="Eye-tracking pipeline for facial-emotion trials.")
    ap.add_argument("--version", action="version", version=f"fergaze {__version__}")
    ap.add_argument("--schema", action="store_true", help="print every file format and exit")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("parse", help="validate a session and summarize it")
    _add_inputs(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("events", help="fixation and microsaccade tables")
    _add_inputs(p)
    p.add_argument("--params", help="detector parameter JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_events)

    p = sub.add_parser("features", help="per-fixation feature table")
    _add_inputs(p)
    p.add_argument("--params", help="detector parameter JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("dwell", help="dwell-time table")
    _add_inputs(p)
    p.add_argument("--step", type=int, choices=(1, 2, 3))
    p.add_argument("--out")
    p.set_defaults(func=cmd_dwell)

    p = sub.add_parser("stats", help="ANOVA and chi-square battery")
    p.add_argument("--features", action="append", required=True, help="feature CSV (repeatable)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)

    for name, func in (("train", cmd_train), ("evaluate", cmd_evaluate)):
        p = sub.add_parser(name, help="fit a model" if name == "train" else "leave-one-out evaluation")
        _add_inputs(p, embeddings=True)
        p.add_argument("--task", type=int, choices=(1, 2, 3), required=True)
        p.add_argument("--variant", choices=("spatial", "temporal", "spatiotemporal", "embeddings"))
        p.add_argument("--step", type=int, choices=(1, 3), default=3, help="dwell step to predict")
        p.add_argument("--config", help="MLP config or boosting parameter JSON")
        p.add_argument("--w-target", type=float, default=2.0, help="target-face loss weight")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out")
        if name == "evaluate":
            p.add_argument("--model", choices=("mlp", "gbt", "baseline", "mean"))
            p.add_argument("--folds", help="per-fold CSV output")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="write a synthetic session with ground truth")
    p.add_argument("--profile", help="simulation profile JSON")
    p.add_argument("--trials", type=int, default=60)
    p.add_argument("--participants", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="figures")
    rsub = p.add_subparsers(dest="report", parser_class=_Parser)
    h = rsub.add_parser("heatmap", help="fixation density SVG")
    _add_inputs(h)
    h.add_argument("--step", type=int, choices=(1, 2, 3), required=True)
    h.add_argument("--emotion", default="all")
    h.add_argument("--trial", type=int, help="restrict to one trial and draw its face regions")
    h.add_argument("--sigma", type=float, default=25.0, help="kernel width in px")
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heatmap)
    return ap


def _schema_text() -> str:
    lines = ["CSV tables (first line '# fergaze:<name>/v<version>', then a header row):",
             describe_schemas(), "", "Other formats:"]
    lines += [f"{k}: {v}" for k, v in JSON_FORMATS.items()]
    return "\n".join(lines) + "\n"


def _report_error(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit": code, "message": " ".join(str(message).split())}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.schema:
            sys.stdout.write(_schema_text())
            return EXIT_OK
        if not getattr(args, "func", None):
            raise CliError(EXIT_USAGE, "usage", "a subcommand is required")
        if getattr(args, "participants", 1) < 1 or getattr(args, "trials", 1) < 1:
            raise CliError(EXIT_USAGE, "usage", "--trials and --participants must be >= 1")
        return args.func(args)
    except CliError as e:
        return _report_error(e.code, e.kind, str(e))
    except (FloatingPointError, OverflowError, ZeroDivisionError, np.linalg.LinAlgError) as e:
        return _report_error(EXIT_NUMERIC, "numeric", f"{type(e).__name__}: {e}")
    except (SessionFormatError, SessionStructureError, json.JSONDecodeError) as e:
        return _report_error(EXIT_INPUT, "schema", str(e))
    except (OSError, KeyError, ValueError, TypeError) as e:
        return _report_error(EXIT_INPUT, "input", f"{type(e).__name__}: {e}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
