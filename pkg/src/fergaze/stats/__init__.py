from .battery import BatteryReport, run_analysis_battery
from .inference import (TestResult, bonferroni_adjust, bonferroni_alpha, chi_square_independence,
                        one_way_anova, rankdata, spearman, welch_t)
from .special import betainc, betaincc, chi2_sf, f_sf, gammainc, gammaincc, t_sf_two_sided

__all__ = [
    "BatteryReport", "run_analysis_battery", "TestResult", "bonferroni_adjust", "bonferroni_alpha",
    "chi_square_independence", "one_way_anova", "rankdata", "spearman", "welch_t", "betainc",
    "betaincc", "chi2_sf", "f_sf", "gammainc", "gammaincc", "t_sf_two_sided",
]
