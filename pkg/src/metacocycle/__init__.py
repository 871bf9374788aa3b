"""Metastable random dynamical systems: transfer-operator cocycles of leaky tent maps.

Modules
-------
driving    ergodic base systems (circle rotation, two-sided shift)
maps       paired tent maps, tent chains and their holes
transfer   Ulam discretization, densities, Lasota-Yorke checks
oseledets  random invariant densities, second Oseledets functions, exponents
markov     Markov chains in random environments and their small-leak limits
cli        configuration-driven experiments
"""
from .driving import DrivingSystem, build_rotation_driving, build_shift_driving, constant_driving
from .maps import PiecewiseLinearMap, chain_tent, hole_measure, holes, paired_tent
from .markov import EnvChain, backward_product, chain_limit, pi_series, solve_v0
from .oseledets import CocycleRun, OperatorCocycle, pullback_density, second_function, spectral_data
from .transfer import Density, ulam_matrix, verify_ly

__version__ = "0.1.0"

__all__ = [
    "DrivingSystem", "build_rotation_driving", "build_shift_driving", "constant_driving",
    "PiecewiseLinearMap", "chain_tent", "hole_measure", "holes", "paired_tent",
    "EnvChain", "backward_product", "chain_limit", "pi_series", "solve_v0",
    "CocycleRun", "OperatorCocycle", "pullback_density", "second_function", "spectral_data",
    "Density", "ulam_matrix", "verify_ly",
]
