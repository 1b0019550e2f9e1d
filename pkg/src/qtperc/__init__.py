"""Subcriticality certificates and Monte Carlo checks for inhomogeneous bond
percolation on quasi-transitive edge-coloured graphs."""
from .certificate import (
    Certificate,
    CertificateError,
    CertificationReport,
    QPsiBound,
    bisect_q_psi,
    certify_regions,
    find_certifying_sets,
    one_arm_upper_bound,
    susceptibility_upper_bound,
)
from .exact_engine import (
    DEFAULT_ENUMERATION_LIMIT,
    DomainError,
    EnumerationLimitError,
    ParamVector,
    PsiResult,
    connection_probability_within,
    naive_oracle,
    psi_value,
)
from .graph_model import (
    BudgetExceededError,
    GraphSpec,
    GraphSpecError,
    LatticeVertex,
    Region,
    TreeVertex,
    ball_size,
    generate_ball,
    parse_graph_spec,
    region_from_vertices,
    shell,
    vertex_orbits,
)
from .monte_carlo import (
    DecayFit,
    FitError,
    MCEstimate,
    RussoReport,
    estimate_chi_truncated,
    estimate_connection,
    estimate_one_arm,
    estimate_theta_proxy,
    fit_decay_rate,
    replica_seeds,
    russo_consistency,
)
from .surface_scan import SweepConfig, SweepRecord, mc_transition_estimate, sweep_surface

__all__ = [name for name in dir() if not name.startswith("_")]
