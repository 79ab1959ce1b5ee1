"""State-vector propagation, ground states and dissipative dynamics."""

from fvdsim.engine.evolution import EvolutionResult, NoiseModel, Propagator, Stepper, evolve
from fvdsim.engine.ground import (
    PqgMethod,
    exact_pqg,
    ground_state,
    lowest_states,
    prepare_pqg,
    staggered_diagonal,
    symmetry_broken_ground_state,
)
from fvdsim.engine.krylov import KrylovSpace, expm_multiply, lanczos_lowest
from fvdsim.engine.lindblad import lindblad_evolve, liouvillian_reference
from fvdsim.engine.operators import CompiledOperator, RingHamiltonian, RingOperator, compile_operator

__all__ = [
    "CompiledOperator",
    "EvolutionResult",
    "KrylovSpace",
    "NoiseModel",
    "PqgMethod",
    "Propagator",
    "RingHamiltonian",
    "RingOperator",
    "Stepper",
    "compile_operator",
    "evolve",
    "exact_pqg",
    "expm_multiply",
    "ground_state",
    "lanczos_lowest",
    "lindblad_evolve",
    "liouvillian_reference",
    "lowest_states",
    "prepare_pqg",
    "staggered_diagonal",
    "symmetry_broken_ground_state",
]
