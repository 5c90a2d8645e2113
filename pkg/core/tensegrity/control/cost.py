"""
Coût de la tâche de roulement : suivre v_x = 1 m/s sans dériver latéralement.
"""
import torch

from config.settings import Config


def rolling_cost(com_velocity: torch.Tensor, target_velocity: float = Config.TARGET_VELOCITY,
                 lateral_weight: float = Config.LATERAL_WEIGHT) -> torch.Tensor:
    """
    Moyenne sur les instants de (v_x − v_cible)² + w·v_y².

    Args:
        com_velocity: Vitesses du CdM (..., K, 3)

    Returns:
        Coût par trajectoire (...)
    """
    vx = com_velocity[..., 0]
    vy = com_velocity[..., 1]
    return ((vx - target_velocity) ** 2 + lateral_weight * vy ** 2).mean(dim=-1)
