"""
Évaluation sur l'ensemble de test : erreur du centre de masse le long des trajectoires.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import torch

from config.settings import Config
from ..engine import EngineConfig, ParameterSet, TensegrityEngine
from ..model.state import RobotState, center_of_mass
from ..model.topology import Topology
from .dataset import SampledTrajectory
from .ground_truth import scenario_engine_config, scenario_topology
from .progressive import window_steps

logger = logging.getLogger(__name__)


@dataclass
class ComErrorReport:
    """Courbe d'erreur du CdM (moyenne ± écart type sur les trajectoires) et erreur relative finale."""
    times: List[float]
    mean: torch.Tensor          # (K,)
    std: torch.Tensor           # (K,)
    errors: torch.Tensor        # (n_traj, K)
    relative: torch.Tensor      # (n_traj,) erreur finale / longueur du chemin réel

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def relative_mean(self) -> float:
        return float(self.relative.mean())


def predict_samples(engine: TensegrityEngine, trajectory: SampledTrajectory) -> List[RobotState]:
    """Rollout complet depuis X_0 avec les commandes enregistrées, états aux instants d'échantillonnage."""
    steps, _ = window_steps(trajectory.interval, engine.config.dt)
    n_windows = len(trajectory) - 1
    with torch.no_grad():
        result = engine.rollout(trajectory.state_at(0), trajectory.controls[:n_windows].unsqueeze(0),
                                n_steps=n_windows * steps, hold_steps=steps, record_every=steps, checkpoint=False)
    return [trajectory.state_at(0)] + result.samples


def evaluate_com_error(params: ParameterSet, topology: Topology, test_set: List[SampledTrajectory],
                       engine_config: Optional[EngineConfig] = None, scenario: str = 'non-contact') -> ComErrorReport:
    """
    Erreur euclidienne du CdM entre prédiction et vérité terrain à chaque instant échantillonné.
    """
    topology = scenario_topology(topology, scenario)
    engine = TensegrityEngine(topology, params, scenario_engine_config(engine_config or EngineConfig(), scenario))
    masses = torch.tensor([r.mass for r in topology.rods], dtype=torch.float64)

    curves, relative = [], []
    for trajectory in test_set:
        predicted = predict_samples(engine, trajectory)
        predicted_com = torch.cat([center_of_mass(s, masses) for s in predicted])
        true_com = center_of_mass(trajectory.states, masses)
        error = torch.linalg.vector_norm(predicted_com - true_com, dim=-1)
        path = torch.linalg.vector_norm(true_com[1:] - true_com[:-1], dim=-1).sum()
        curves.append(error)
        relative.append(error[-1] / path.clamp(min=1e-12))

    errors = torch.stack(curves)
    report = ComErrorReport(test_set[0].times, errors.mean(dim=0), errors.std(dim=0, unbiased=False),
                            errors, torch.stack(relative))
    logger.info(f"Erreur CdM finale: {report.final_mean:.3e} m (relative {report.relative_mean:.3%}) "
                f"sur {len(test_set)} trajectoires")
    return report


def data_budget(n_train: int = Config.N_TRAIN, n_test: int = Config.N_TEST,
                points_per_trajectory: int = int(Config.TRAJECTORY_SECONDS / Config.SAMPLE_INTERVAL),
                plan_steps: int = Config.PLAN_STEPS, iterations: int = Config.PLAN_ITERATIONS,
                samples: int = Config.PLAN_SAMPLES,
                horizon_steps: int = int(round(Config.PLAN_HORIZON_SECONDS / Config.SAMPLE_INTERVAL))
                ) -> Dict[str, float]:
    """
    Points consommés par l'identification et par l'apprentissage direct d'une politique.

    (10 + 10)·50 = 1000 contre 50·5·40·10 = 100 000, soit un rapport de 0.01.
    """
    identification = (n_train + n_test) * points_per_trajectory
    policy = plan_steps * iterations * samples * horizon_steps
    return {'identification': identification, 'policy': policy, 'ratio': identification / policy}
