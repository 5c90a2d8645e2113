"""
Transfert d'un plan vers la vérité terrain (sim2sim).

Le plan calculé sur le moteur identifié est rejoué en boucle ouverte sur le moteur
aux paramètres cachés; la boucle fermée (replanification depuis l'état réel) reste
disponible pour comparaison.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import torch

from ..engine import TensegrityEngine
from ..errors import ConfigurationError
from ..model.state import RobotState, center_of_mass, com_velocity
from .planners import Plan, RecedingHorizonPlanner

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('t', 'com_x', 'com_y', 'com_z', 'v_x', 'v_y', 'v_z')


@dataclass
class TransferResult:
    """Trajectoire du CdM (K+1, 3) et sa vitesse aux instants de commande."""
    times: List[float]
    com: torch.Tensor
    velocity: torch.Tensor
    controls: torch.Tensor

    @property
    def displacement(self) -> torch.Tensor:
        return self.com[-1] - self.com[0]

    @property
    def final_x(self) -> float:
        return float(self.displacement[0])

    @property
    def mean_vx(self) -> float:
        return float(self.velocity[1:, 0].mean()) if len(self.times) > 1 else 0.0


def _steps_per_control(plan: Plan, engine: TensegrityEngine) -> int:
    steps = plan.dt / engine.config.dt
    if round(steps) < 1 or abs(steps - round(steps)) > 1e-6:
        raise ConfigurationError(f"pas de commande {plan.dt} s non multiple de Δt={engine.config.dt}")
    return int(round(steps))


def transfer_evaluate(plan: Plan, engine: TensegrityEngine, initial_state: RobotState,
                      closed_loop: bool = False, planner: Optional[RecedingHorizonPlanner] = None
                      ) -> TransferResult:
    """
    Exécute le plan sur `engine` (vérité terrain) et relève CdM et vitesse.

    Args:
        plan: Commandes issues du moteur identifié
        engine: Moteur de vérité terrain (paramètres cachés, éventuel écart de modèle)
        initial_state: X_0, lot unique
        closed_loop: Replanifie à chaque pas depuis l'état réel avec `planner`
    """
    plan.check_bounds(engine.config.control_limit)
    steps = _steps_per_control(plan, engine)
    masses = engine.physical().mass.detach()
    state = initial_state.detach()

    with torch.no_grad():
        if closed_loop:
            if planner is None:
                raise ConfigurationError("boucle fermée sans planificateur")
            samples, controls, nominal = [state], [], None
            for _ in range(len(plan)):
                control, nominal = planner.control_step(state, nominal)
                controls.append(control)
                state = engine.rollout(state, control.reshape(1, 1, -1), hold_steps=steps,
                                       checkpoint=False).final
                samples.append(state)
            executed = torch.stack(controls)
        else:
            result = engine.rollout(state, plan.controls.unsqueeze(0), hold_steps=steps,
                                    record_every=steps, checkpoint=False)
            samples = [state] + result.samples
            executed = plan.controls

    times = [round(initial_state.time + k * plan.dt, 12) for k in range(len(samples))]
    com = torch.cat([center_of_mass(s, masses) for s in samples])
    velocity = torch.cat([com_velocity(s, masses) for s in samples])
    result = TransferResult(times, com, velocity, executed)
    mode = "boucle fermée" if closed_loop else "boucle ouverte"
    logger.info(f"Transfert ({mode}): déplacement x = {result.final_x:.3f} m, "
                f"v_x moyenne = {result.mean_vx:.3f} m/s sur {plan.duration:g} s")
    return result


def write_trace(result: TransferResult, path: Union[str, Path]) -> Path:
    """Trace CSV t, com_x, com_y, com_z, v_x, v_y, v_z."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for t, p, v in zip(result.times, result.com.tolist(), result.velocity.tolist()):
            writer.writerow(dict(zip(TRACE_COLUMNS, (t, *p, *v))))
    return path
