"""
Vérité terrain : le moteur lui-même avec des paramètres cachés, simulé à 1 kHz et
échantillonné à basse fréquence.

Scénarios :
    non-contact  barre 0 fixée, robot suspendu à 2 m, commandes aléatoires à 10 Hz
    rolling      robot posé au sol, vitesse initiale horizontale aléatoire, commandes nulles

Le mode `mismatch` ajoute un amortissement visqueux du mouvement et un bruit de 1e-4
sur les états enregistrés, la vérité terrain ne suit alors plus exactement le modèle.
"""
import logging
import math
from typing import List, Optional

import torch

from config.settings import Config
from ..engine import EngineConfig, ParameterSet, TensegrityEngine, com_drag
from ..errors import ConfigurationError, TensegrityError
from ..model.state import RobotState, superball_rest_state
from ..model.topology import Topology
from .dataset import Dataset, SampledTrajectory

logger = logging.getLogger(__name__)

SCENARIOS = ('non-contact', 'rolling')
SUSPENDED_CLEARANCE = 2.0
ROLLING_SPEED = (0.5, 2.0)
MISMATCH_DRAG = 0.5
MISMATCH_NOISE = 1e-4


def scenario_topology(topology: Topology, scenario: str) -> Topology:
    if scenario not in SCENARIOS:
        raise ConfigurationError(f"scénario inconnu: {scenario}")
    return topology.with_pinned([0]) if scenario == 'non-contact' else topology


def scenario_engine_config(config: EngineConfig, scenario: str) -> EngineConfig:
    """Le scénario suspendu se passe de sol."""
    return config.replace(ground=None) if scenario == 'non-contact' else config


def initial_states(topology: Topology, scenario: str, n_traj: int,
                   generator: Optional[torch.Generator] = None,
                   engine: Optional[TensegrityEngine] = None) -> RobotState:
    """
    États initiaux du scénario. Pour `rolling`, la pose de repos est d'abord stabilisée
    par `engine` (si fourni) avant l'ajout de la vitesse horizontale.
    """
    if scenario == 'non-contact':
        return superball_rest_state(topology, clearance=SUSPENDED_CLEARANCE, n_batch=n_traj)
    state = superball_rest_state(topology, clearance=0.0)
    if engine is not None:
        state = engine.settle(state)
    state = state.expand(n_traj)
    heading = 2.0 * math.pi * torch.rand(n_traj, generator=generator, dtype=torch.float64)
    low, high = ROLLING_SPEED
    speed = low + (high - low) * torch.rand(n_traj, generator=generator, dtype=torch.float64)
    velocity = torch.stack((speed * heading.cos(), speed * heading.sin(), torch.zeros_like(speed)), dim=-1)
    return state.replace(lin_vel=velocity.unsqueeze(1).expand_as(state.lin_vel).clone())


def random_commands(n_traj: int, n_windows: int, n_cables: int, limit: float = Config.CONTROL_LIMIT,
                    generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Commandes uniformes dans [-limit, limit], (n_traj, n_windows, C)."""
    u = torch.rand(n_traj, n_windows, n_cables, generator=generator, dtype=torch.float64)
    return (2.0 * u - 1.0) * limit


def generate_ground_truth(topology: Topology, hidden: ParameterSet, scenario: str = 'non-contact',
                          n_traj: int = Config.N_TRAIN, seconds: float = Config.TRAJECTORY_SECONDS,
                          sample_rate: float = 1.0 / Config.SAMPLE_INTERVAL,
                          engine_config: Optional[EngineConfig] = None, mismatch: bool = False,
                          role: str = 'train', control_interval: float = Config.SAMPLE_INTERVAL,
                          generator: Optional[torch.Generator] = None) -> List[SampledTrajectory]:
    """
    Simule n_traj trajectoires (en lot) et les échantillonne à `sample_rate`.

    Chaque trajectoire compte seconds·sample_rate points, aux instants 0, 1/f, 2/f, ...

    Raises:
        ConfigurationError: Scénario inconnu, fréquences incompatibles ou paramètres cachés instables
    """
    config = scenario_engine_config(engine_config or EngineConfig(), scenario)
    topology = scenario_topology(topology, scenario)
    dt = config.dt
    steps_per_sample = round(1.0 / (sample_rate * dt))
    steps_per_control = round(control_interval / dt)
    if steps_per_sample < 1 or abs(steps_per_sample * dt * sample_rate - 1.0) > 1e-9:
        raise ConfigurationError(f"fréquence d'échantillonnage {sample_rate} Hz incompatible avec Δt={dt}")
    n_points = int(round(seconds * sample_rate))
    n_steps = (n_points - 1) * steps_per_sample
    n_windows = max(1, math.ceil(n_steps / steps_per_control))

    force_field = com_drag(MISMATCH_DRAG) if mismatch else None
    engine = TensegrityEngine(topology, hidden, config, force_field=force_field)
    state = initial_states(topology, scenario, n_traj, generator, engine)
    if scenario == 'non-contact':
        commands = random_commands(n_traj, n_windows, topology.n_cables, config.control_limit, generator)
    else:
        commands = torch.zeros(n_traj, n_windows, topology.n_cables, dtype=torch.float64)

    logger.info(f"Vérité terrain '{scenario}' ({role}): {n_traj} trajectoires, {n_points} points, "
                f"{n_steps} pas à {1.0 / dt:g} Hz")
    try:
        with torch.no_grad():
            result = engine.rollout(state, commands, n_steps=n_steps, hold_steps=steps_per_control,
                                    record_every=steps_per_sample, checkpoint=False)
    except TensegrityError as e:
        raise ConfigurationError(f"paramètres cachés instables: {e}") from e

    samples = [state] + result.samples[:n_points - 1]
    times = [round(k * steps_per_sample * dt, 12) for k in range(n_points)]
    window = [min(k * steps_per_sample // steps_per_control, n_windows - 1) for k in range(n_points)]

    trajectories = []
    for b in range(n_traj):
        tensors = [torch.stack([s.tensors()[f][b] for s in samples]) for f in range(5)]
        if mismatch:
            for f in (0, 2, 3):
                noise = torch.randn(tensors[f].shape, generator=generator, dtype=torch.float64)
                tensors[f] = tensors[f] + MISMATCH_NOISE * noise
        states = RobotState(*tensors, time=0.0)
        trajectories.append(SampledTrajectory(times, states, commands[b, window], role, f"{role}_{b:03d}"))
    return trajectories


def generate_dataset(topology: Topology, hidden: ParameterSet, scenario: str = 'non-contact',
                     n_train: int = Config.N_TRAIN, n_val: int = Config.N_VAL, n_test: int = Config.N_TEST,
                     seconds: float = Config.TRAJECTORY_SECONDS,
                     sample_rate: float = 1.0 / Config.SAMPLE_INTERVAL,
                     engine_config: Optional[EngineConfig] = None, mismatch: bool = False,
                     generator: Optional[torch.Generator] = None) -> Dataset:
    """Jeu complet train/val/test et ses métadonnées."""
    dataset = Dataset(meta={
        'scenario': scenario,
        'interval': 1.0 / sample_rate,
        'seconds': seconds,
        'mismatch': mismatch,
        'pinned': [0] if scenario == 'non-contact' else [],
        'hidden': hidden.to_dict(),
    })
    for role, count in (('train', n_train), ('val', n_val), ('test', n_test)):
        if count:
            dataset.split(role).extend(generate_ground_truth(
                topology, hidden, scenario, count, seconds, sample_rate, engine_config, mismatch, role,
                generator=generator))
    return dataset
