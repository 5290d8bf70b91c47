"""Gauss-Markov realization: innovations encoder, AGN channel, decoder and modified Kalman filter."""

from .design import (
    ChannelSpec,
    FilterState,
    GainSet,
    channel_step,
    decode_step,
    design_for,
    design_gains,
    diagonalize,
    encode,
    filter_gain,
    innovation_step,
    kalman_update,
)
from .riccati import (
    MatchingReport,
    RiccatiSolution,
    StepDesign,
    distortion_for_power,
    finite_horizon_rate,
    gain_schedule,
    matching_check,
    open_loop_covariance,
    riccati_infinite,
    riccati_map,
)
from .simulate import RealizationTrace, SimulationResult, innovation_lag1, simulate, trial_rng
