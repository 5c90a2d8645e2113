"""Forces des câbles, actionneurs et schémas d'intégration."""
from .cable import (CableEndpoints, CableForce, ActuatorState, cable_endpoints, cable_force, cable_wrenches,
                    effective_rest_length, clamp_command, actuator_step)
from .element_system import (ElementSystem, ElementSolution, build_element_system, solve_element_system,
                             element_residual)
from .steppers import COUPLINGS, world_inverse_inertia, gravity_vector, implicit_step, semi_implicit_step

__all__ = [
    'CableEndpoints', 'CableForce', 'ActuatorState', 'cable_endpoints', 'cable_force', 'cable_wrenches',
    'effective_rest_length', 'clamp_command', 'actuator_step',
    'ElementSystem', 'ElementSolution', 'build_element_system', 'solve_element_system', 'element_residual',
    'COUPLINGS', 'world_inverse_inertia', 'gravity_vector', 'implicit_step', 'semi_implicit_step',
]
