"""Birth-and-death processes on the nonnegative integers."""

from .analysis import (
    BDStationary,
    bd_stationary,
    e_pi_theta0,
    hitting_from_zero,
    kemeny_bd,
    log_beta,
    necessary_condition,
    normaliser_series,
    taboo_sojourn,
    theta_series,
    theta_terms,
    truncate,
)
from .rules import (
    Const,
    Designed,
    InverseSquare,
    Pow,
    Power,
    Rule,
    Shifted,
    Table,
    f_rule_from_dict,
    rule_from_dict,
)
from .series import DivergenceReason, SeriesResult, Verdict, growing_blocks, sum_series
from .spec import (
    BirthDeathSpec,
    design_from_f,
    mm1,
    mm_infinity,
    power_law,
    sped_up_mm1,
    spec_from_config,
    table,
)

__all__ = [
    "BDStationary", "bd_stationary", "e_pi_theta0", "hitting_from_zero", "kemeny_bd",
    "log_beta", "necessary_condition", "normaliser_series", "taboo_sojourn",
    "theta_series", "theta_terms", "truncate",
    "Const", "Designed", "InverseSquare", "Pow", "Power", "Rule", "Shifted", "Table",
    "rule_from_dict", "f_rule_from_dict", "DivergenceReason", "SeriesResult", "Verdict", "growing_blocks",
    "sum_series", "BirthDeathSpec", "design_from_f", "mm1", "mm_infinity", "power_law",
    "sped_up_mm1", "spec_from_config", "table",
]
