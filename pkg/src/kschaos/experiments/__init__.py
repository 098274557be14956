"""Named numerical studies, one per analytical statement being checked."""

from .chaos import chaos_study
from .collision import collision_study
from .common import EpsRule, StudyConfig, StudyReport, Verdict, fit_slope, run_replicas
from .consistency import consistency_study
from .gronwall import gronwall_check
from .lemmas import kernel_lemma_suite
from .pde_checks import heat_mode_check, linf_bound_study, linkage_check, pde_report
from .stability import stability_study

__all__ = [
    "EpsRule", "StudyConfig", "StudyReport", "Verdict", "fit_slope", "run_replicas",
    "chaos_study", "collision_study", "consistency_study", "gronwall_check",
    "kernel_lemma_suite", "stability_study", "heat_mode_check", "linf_bound_study",
    "linkage_check", "pde_report",
]
