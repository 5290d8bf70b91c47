"""Nonanticipative rate distortion for finite-alphabet Markov sources."""

from .joint import (
    DirectedInformation,
    JointLaw,
    MarginalReproduction,
    directed_information,
    expected_distortion,
    joint_law,
    marginals_from_joint,
    reproduction_marginals,
)
from .oracle import OracleResult, binary_entropy, binary_hamming_rdf, blahut_arimoto, oracle_minimize
from .solver import (
    SolverReport,
    evaluate_policy,
    fixed_point_solve,
    parametric_rate,
    rd_curve,
    self_consistency_residual,
    sweep,
    tilt_kernel,
)
