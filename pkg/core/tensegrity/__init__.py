"""
Moteur physique différentiable pour robots de tenségrité.

Barres rigides, câbles ressort-amortisseur actionnés, contacts au sol et entre barres;
identification des paramètres par rétropropagation à travers le temps et planification
par échantillonnage sur le moteur identifié.
"""
from .errors import (TensegrityError, ConfigurationError, DegenerateCableError, SingularElementError,
                     NonFiniteError, DegenerateImpactError, TrainingDivergenceError, GradientCheckError)
from .model import RobotState, Topology, PhysicalParams, superball_topology, superball_rest_state, load_topology
from .engine import (EngineConfig, IntegratorMode, CheckerMode, ParameterSet, RolloutResult, TensegrityEngine,
                     com_drag)
from .settings import RunConfig, load_config, default_config

__version__ = "1.0.0"

__all__ = [
    'TensegrityError', 'ConfigurationError', 'DegenerateCableError', 'SingularElementError', 'NonFiniteError',
    'DegenerateImpactError', 'TrainingDivergenceError', 'GradientCheckError',
    'RobotState', 'Topology', 'PhysicalParams', 'superball_topology', 'superball_rest_state', 'load_topology',
    'EngineConfig', 'IntegratorMode', 'CheckerMode', 'ParameterSet', 'RolloutResult', 'TensegrityEngine',
    'com_drag', 'RunConfig', 'load_config', 'default_config', '__version__',
]
