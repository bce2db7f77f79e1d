"""Reproducible experiments with JSON/CSV reports."""

from .birational import check_inverse, jacobian_vs_indeterminacy, near_critical_points
from .capacity import capacity_decay
from .dynamics import (log_jacobian_factor, sample_ball, skoda_tail, uniform_integrability,
                       volume_contraction)
from .equidistribution import (SectionPotential, equidistribute_current, equidistribute_smooth,
                               random_section_zeros)
from .measures import (EmpiricalMeasure, TestBank, arc_measure, binary_zeros, brolin_measure_oracle,
                       default_bank, dual_lipschitz, green_measure, hopf, iterated_preimages, preimages)
from .registry import REGISTRY, potential_from_config, run_experiment
from .report import VERDICTS, Constant, ExperimentReport, strip_metadata

__all__ = [
    "REGISTRY", "VERDICTS", "Constant", "EmpiricalMeasure", "ExperimentReport", "SectionPotential",
    "TestBank", "arc_measure", "binary_zeros", "brolin_measure_oracle", "capacity_decay",
    "check_inverse", "default_bank", "dual_lipschitz", "equidistribute_current",
    "equidistribute_smooth", "green_measure", "hopf", "iterated_preimages", "jacobian_vs_indeterminacy",
    "log_jacobian_factor", "near_critical_points", "potential_from_config", "preimages",
    "random_section_zeros", "run_experiment", "sample_ball", "skoda_tail", "strip_metadata",
    "uniform_integrability", "volume_contraction",
]
