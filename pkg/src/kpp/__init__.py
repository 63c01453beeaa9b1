"""Quantum-inspired energy-based modeling toolkit.

Ising/QUBO problem forms, Boltzmann samplers (simulated annealing,
fixed-temperature Metropolis, exact enumeration, and a mock cloud CIM),
Boltzmann-machine training, QUBO-driven batch selection, discrete latent
relaxation, and residual-energy reranking with NCE.
"""

__version__ = "0.1.0"

from .ising import (
    IsingProblem,
    QuboProblem,
    ising_energy,
    ising_to_qubo,
    parse_problem,
    qubo_energy,
    qubo_to_ising,
    serialize_problem,
)
from .samplers import (
    AnnealSchedule,
    ExactConfig,
    FixedTempConfig,
    SampleSet,
    SamplerConfig,
    estimate_moments,
    exact_enumerate,
    metropolis_fixed_temperature,
    postprocess_topk,
    sample,
    simulated_anneal,
)

__all__ = [
    "IsingProblem",
    "QuboProblem",
    "ising_energy",
    "ising_to_qubo",
    "parse_problem",
    "qubo_energy",
    "qubo_to_ising",
    "serialize_problem",
    "AnnealSchedule",
    "ExactConfig",
    "FixedTempConfig",
    "SampleSet",
    "SamplerConfig",
    "estimate_moments",
    "exact_enumerate",
    "metropolis_fixed_temperature",
    "postprocess_topk",
    "sample",
    "simulated_anneal",
    "__version__",
]
