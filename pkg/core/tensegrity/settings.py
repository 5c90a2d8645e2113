"""
Chargement de la configuration d'exécution (YAML ou JSON) et graine globale.
"""
import copy
import logging
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch
import yaml

from config.settings import Config
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "TENSEGRID_SEED"


def default_config() -> Dict[str, Any]:
    """Configuration par défaut, reprise des constantes de `Config`."""
    return {
        'engine': {
            'dt': Config.ENGINE_DT,
            'integrator': Config.INTEGRATOR,
            'coupling': Config.COUPLING,
            'unilateral_cables': Config.UNILATERAL_CABLES,
            'gravity': Config.GRAVITY,
            'checker': 'differentiable',
            'checkpoint_every': Config.CHECKPOINT_EVERY,
            'condition_limit': Config.CONDITION_LIMIT,
        },
        'topology': {
            'path': Config.DEFAULT_TOPOLOGY_PATH,
        },
        'actuator': {
            'tau': Config.ACTUATOR_TAU,
            'control_limit': Config.CONTROL_LIMIT,
        },
        'parameters': {
            'nominal': {
                'stiffness': Config.CABLE_STIFFNESS,
                'damping': Config.CABLE_DAMPING,
                'mass': Config.ROD_MASS,
                'ground_stiffness': Config.GROUND_STIFFNESS,
                'ground_damping': Config.GROUND_DAMPING,
                'friction': Config.GROUND_FRICTION,
                'restitution': Config.GROUND_RESTITUTION,
            },
            'hidden': {
                'stiffness': 2.0 * Config.CABLE_STIFFNESS,
                'damping': 0.5 * Config.CABLE_DAMPING,
                'mass': 1.5 * Config.ROD_MASS,
                'ground_stiffness': Config.GROUND_STIFFNESS,
                'ground_damping': Config.GROUND_DAMPING,
                'friction': Config.GROUND_FRICTION,
                'restitution': Config.GROUND_RESTITUTION,
            },
            'init_spread': 4.0,
        },
        'dataset': {
            'scenario': 'non-contact',
            'seconds': Config.TRAJECTORY_SECONDS,
            'sample_hz': 1.0 / Config.SAMPLE_INTERVAL,
            'n_train': Config.N_TRAIN,
            'n_val': Config.N_VAL,
            'n_test': Config.N_TEST,
            'mismatch': False,
        },
        'schedule': {
            'interval': Config.SAMPLE_INTERVAL,
            'lr': Config.LEARNING_RATE,
            'lr_floor': Config.LR_FLOOR,
            'patience': Config.PATIENCE,
            'min_improvement': Config.MIN_IMPROVEMENT,
            'max_epochs': Config.MAX_EPOCHS_PER_PHASE,
            'grad_clip': Config.GRAD_CLIP,
            'phases': 'both',
        },
        'planner': {
            'name': 'mppi',
            'steps': Config.PLAN_STEPS,
            'iterations': Config.PLAN_ITERATIONS,
            'samples': Config.PLAN_SAMPLES,
            'horizon_seconds': Config.PLAN_HORIZON_SECONDS,
            'temperature': Config.MPPI_LAMBDA,
            'sigma': Config.CONTROL_SIGMA,
            'elite_fraction': Config.CEM_ELITE_FRACTION,
            'target_velocity': Config.TARGET_VELOCITY,
            'lateral_weight': Config.LATERAL_WEIGHT,
        },
        'gradcheck': {
            'sweep_points': 100,
            'rollout_steps': 100,
        },
        'system': {
            'debug_mode': False,
            'log_level': Config.LOG_LEVEL,
            'seed': Config.SEED,
            'workers': 1,
            'output_dir': Config.OUTPUT_DIR,
        },
    }


def merge_config(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Fusion récursive : les valeurs de `override` remplacent celles de `base`."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path: Optional[Union[str, Path]] = None, required: bool = False) -> Dict[str, Any]:
    """
    Charge un fichier de configuration et le fusionne avec les valeurs par défaut.

    Args:
        config_path: Chemin du fichier YAML ou JSON (None → fichier par défaut)
        required: Si vrai, un fichier absent est une erreur de configuration

    Returns:
        Dictionnaire de configuration complet
    """
    path = Path(config_path or Config.DEFAULT_CONFIG_PATH)
    try:
        with open(path, 'r') as f:
            document = yaml.safe_load(f) or {}
        logger.info(f"Configuration chargée depuis {path}")
    except FileNotFoundError:
        if required:
            raise ConfigurationError(f"fichier de configuration introuvable: {path}")
        logger.warning("Configuration non trouvée, valeurs par défaut")
        document = {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"configuration illisible ({path}): {e}") from e

    if not isinstance(document, dict):
        raise ConfigurationError(f"la configuration {path} doit être un dictionnaire")
    return merge_config(default_config(), document)


def resolve_seed(config: Dict[str, Any], seed: Optional[int] = None) -> int:
    """Graine effective : variable d'environnement, puis argument, puis configuration."""
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value is not None:
        try:
            return int(env_value)
        except ValueError as e:
            raise ConfigurationError(f"{SEED_ENV_VAR} invalide: {env_value!r}") from e
    if seed is not None:
        return int(seed)
    return int(config.get('system', {}).get('seed', Config.SEED))


def seed_everything(seed: int) -> torch.Generator:
    """Initialise random, numpy et torch; renvoie un générateur torch dédié."""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def make_generator(seed: int, stream: int = 0) -> torch.Generator:
    """Générateur indépendant par composant stochastique (jeu de données, planificateur, init)."""
    return torch.Generator().manual_seed(seed * 1_000_003 + stream)


@dataclass
class RunConfig:
    """Paramètres d'une exécution en ligne de commande."""
    command: str
    config_path: Optional[str] = None
    seed: int = Config.SEED
    workers: int = 1
    output_dir: str = Config.OUTPUT_DIR
    config: Dict[str, Any] = field(default_factory=default_config)

    @classmethod
    def build(cls, command: str, config_path: Optional[str] = None, seed: Optional[int] = None,
              workers: Optional[int] = None, output_dir: Optional[str] = None) -> "RunConfig":
        config = load_config(config_path, required=config_path is not None)
        system = config['system']
        run = cls(
            command=command,
            config_path=config_path,
            seed=resolve_seed(config, seed),
            workers=int(workers if workers is not None else system.get('workers', 1)),
            output_dir=str(output_dir or system.get('output_dir', Config.OUTPUT_DIR)),
            config=config,
        )
        if run.workers < 1:
            raise ConfigurationError(f"nombre de workers invalide: {run.workers}")
        return run

    def apply(self) -> torch.Generator:
        """Applique graine et parallélisme; crée le répertoire de sortie."""
        torch.set_num_threads(self.workers)
        Path(self.output_dir).mkdir(parents=True, exist_ok=True)
        return seed_everything(self.seed)
