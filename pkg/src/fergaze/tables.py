"""Versioned CSV tables shared by the pipeline stages.

Every table starts with a ``# fergaze:<name>/v<version>`` comment line, then
a header row.  Readers skip ``#`` lines (``pandas.read_csv(comment="#")``
works too).
"""
from __future__ import annotations

import csv
import io
from typing import Iterable, Sequence

import numpy as np

SCHEMAS = {
    "events": (1, ["trial", "step", "eye", "start_ms", "end_ms", "duration_ms",
                   "amplitude_deg", "peak_velocity"]),
    "fixations": (1, ["trial", "step", "index", "start_ms", "end_ms", "duration_ms", "x_px",
                      "y_px", "avg_pupil", "main_aoi", "is_target", "region", "group",
                      "distance_px", "tie"]),
    "features": (1, ["Participant ID", "trial", "Interest Period Index", "Fixation index in trial",
                     "Average pupil size", "Average of both eyes microsaccade's rate",
                     "Binocular microsaccade's rate", "Binocular microsaccade average duration",
                     "Fixation duration", "Emotions", "RoI Label", "Target Emotion", "Face Region"]),
    "dwell": (1, ["emotion", "n_trials", "step1_target", "step2_nontarget", "step2_target",
                  "step2_word", "step3_nontarget", "step3_target", "step3_word", "dtc"]),
    "dwell_step": (1, ["emotion", "n_trials", "step", "nontarget", "target", "word"]),
    "anova": (1, ["Variable", "Category", "F-statistic", "df_between", "df_within",
                  "P-value (ANOVA)", "alpha_adjusted", "significant", "note"]),
    "chi_square": (1, ["Variable", "Category", "Chi-Square", "dof", "P-value", "alpha_adjusted",
                       "significant", "note"]),
    "eval_folds": (1, ["fold", "output", "true", "predicted"]),
    "truth_events": (1, ["trial", "step", "eye", "start_ms", "end_ms", "duration_ms",
                         "amplitude_deg", "peak_velocity", "region"]),
}


def schema_line(name: str) -> str:
    version, _ = SCHEMAS[name]
    return f"# fergaze:{name}/v{version}"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def format_csv(name: str, rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(schema_line(name) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCHEMAS[name][1])
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, name: str, rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(name, rows))


def read_csv(path, name: str | None = None) -> list[dict[str, str]]:
    """Read a versioned table into dicts, checking the schema tag when ``name`` is given."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if name is not None and first != schema_line(name):
            raise ValueError(f"{path}: expected {schema_line(name)!r}, found {first!r}")
        if not first.startswith("#"):
            fh.seek(0)
        lines = (ln for ln in fh if not ln.startswith("#"))
        return list(csv.DictReader(lines))


def describe_schemas() -> str:
    out = []
    for name, (version, cols) in SCHEMAS.items():
        out.append(f"{name}/v{version}: " + ",".join(cols))
    return "\n".join(out)
