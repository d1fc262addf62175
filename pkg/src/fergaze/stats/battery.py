"""ANOVA / chi-square battery over per-fixation feature rows."""
from __future__ import annotations

import itertools
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

from ..aoi import NONE
from ..events import CATEGORICAL_FEATURES, FACE_FIELDS, NUMERIC_FEATURES, FeatureRow
from ..tables import format_csv
from .inference import bonferroni_alpha, chi_square_independence, one_way_anova

ANOVA_FACTORS = ("Emotions", "RoI Label", "Face Region", "Participant ID", "Interest Period Index")
CHI_SQUARE_FACTORS = ("Emotions", "RoI Label", "Target Emotion", "Face Region",
                      "Interest Period Index")
INSUFFICIENT = "insufficient levels"
LAYOUT = "battery-v1"


@dataclass
class AnovaCell:
    variable: str
    category: str
    statistic: float | None
    df: tuple | None
    p_value: float | None
    alpha_adjusted: float
    significant: bool
    note: str = ""


@dataclass
class ChiSquareCell:
    variable: str
    category: str
    statistic: float | None
    dof: int | None
    p_value: float | None
    alpha_adjusted: float
    significant: bool
    note: str = ""


@dataclass
class BatteryReport:
    alpha: float
    anova: list[AnovaCell] = field(default_factory=list)
    chi_square: list[ChiSquareCell] = field(default_factory=list)

    def anova_cell(self, variable: str, category: str) -> AnovaCell:
        return next(c for c in self.anova if c.variable == variable and c.category == category)

    def to_json(self) -> str:
        return json.dumps({"layout": LAYOUT, "alpha": self.alpha,
                           "anova": [asdict(c) for c in self.anova],
                           "chi_square": [asdict(c) for c in self.chi_square]}, indent=1)

    def anova_csv(self) -> str:
        return format_csv("anova", (
            (c.variable, c.category, _opt(c.statistic), _opt(c.df and c.df[0]), _opt(c.df and c.df[1]),
             _opt(c.p_value), c.alpha_adjusted, "*" if c.significant else "", c.note)
            for c in self.anova))

    def chi_square_csv(self) -> str:
        return format_csv("chi_square", (
            (c.variable, c.category, _opt(c.statistic), _opt(c.dof), _opt(c.p_value),
             c.alpha_adjusted, "*" if c.significant else "", c.note)
            for c in self.chi_square))


def _opt(v):
    return "" if v is None else v


def _level(row: FeatureRow, attr: str):
    return getattr(row, attr)


def run_analysis_battery(rows: Sequence[FeatureRow], alpha: float = 0.05) -> BatteryReport:
    """Every numeric variable against every factor (ANOVA) and every factor pair (chi-square).

    Rows whose face fields carry the ``none`` sentinel are left out of tests
    involving those fields.  Bonferroni families: the six numeric variables
    within one factor, and all chi-square pairs together.
    """
    report = BatteryReport(alpha)
    a_alpha = bonferroni_alpha(alpha, len(NUMERIC_FEATURES))
    for cat in ANOVA_FACTORS:
        cattr = CATEGORICAL_FEATURES[cat]
        usable = [r for r in rows if not (cattr in FACE_FIELDS and _level(r, cattr) == NONE)]
        for var, vattr in NUMERIC_FEATURES.items():
            groups = defaultdict(list)
            for r in usable:
                groups[_level(r, cattr)].append(float(getattr(r, vattr)))
            testable = [groups[k] for k in sorted(groups, key=str) if len(groups[k]) >= 2]
            if len(testable) < 2:
                report.anova.append(AnovaCell(var, cat, None, None, None, a_alpha, False, INSUFFICIENT))
                continue
            res = one_way_anova(testable)
            report.anova.append(AnovaCell(var, cat, res.statistic, res.df, res.p_value, a_alpha,
                                          res.p_value < a_alpha))
    pairs = list(itertools.combinations(CHI_SQUARE_FACTORS, 2))
    c_alpha = bonferroni_alpha(alpha, len(pairs))
    for a, b in pairs:
        aa, ba = CATEGORICAL_FEATURES[a], CATEGORICAL_FEATURES[b]
        usable = [r for r in rows
                  if not (aa in FACE_FIELDS and _level(r, aa) == NONE)
                  and not (ba in FACE_FIELDS and _level(r, ba) == NONE)]
        la = sorted({_level(r, aa) for r in usable}, key=str)
        lb = sorted({_level(r, ba) for r in usable}, key=str)
        if len(la) < 2 or len(lb) < 2:
            report.chi_square.append(ChiSquareCell(a, b, None, None, None, c_alpha, False, INSUFFICIENT))
            continue
        ia, ib = {v: i for i, v in enumerate(la)}, {v: i for i, v in enumerate(lb)}
        table = [[0] * len(lb) for _ in la]
        for r in usable:
            table[ia[_level(r, aa)]][ib[_level(r, ba)]] += 1
        res = chi_square_independence(table)
        report.chi_square.append(ChiSquareCell(a, b, res.statistic, res.df[0], res.p_value, c_alpha,
                                               res.p_value < c_alpha))
    return report
