"""
Condition de raideur et d'amortissement du modèle de contact par impulsion.

Au pas de contact :
    v' = ṽ + (−K·x − k·ṽ)·Δt/m,   x' = x + v'·Δt
d'où ∂x'/∂x = 1 − Δt²K/m, de bon signe (négatif) si et seulement si K/m > 1/Δt².
L'amortissement qui réalise v' = −e·v vaut k/m = (1 + e)/Δt − K·x̃/(m·v).
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import torch

from ..autodiff import GradientTape, detach
from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

DEFAULT_PENETRATION = -1e-3
DEFAULT_VELOCITY = -1.0


def impulse_step(x: torch.Tensor, v: torch.Tensor, stiffness, damping, mass: float, dt: float,
                 opaque: bool = False):
    """
    Un pas du modèle par impulsion, vitesses détachées.

    `opaque` détache aussi la pénétration (détecteur non différentiable).
    """
    v_tilde = detach(v)
    penetration = detach(x) if opaque else x
    v_next = v_tilde + (-stiffness * penetration - damping * v_tilde) * dt / mass
    return x + v_next * dt, v_next


@dataclass
class Theorem1Report:
    stiffness: float
    mass: float
    dt: float
    restitution: float
    gradient: float                     # ∂x'/∂x par différentiation automatique
    analytic_gradient: float            # 1 − Δt²K/m
    stiffness_ok: bool                  # K/m > 1/Δt²
    required_damping: Optional[float]   # None si v = 0
    damping: Optional[float] = None
    damping_ok: Optional[bool] = None
    rebound_velocity: Optional[float] = None

    @property
    def direction_ok(self) -> bool:
        return self.gradient < 0.0


def required_damping(stiffness: float, mass: float, dt: float, restitution: float = 0.0,
                     penetration: float = DEFAULT_PENETRATION,
                     velocity: float = DEFAULT_VELOCITY) -> Optional[float]:
    """k = m·((1 + e)/Δt − K·x̃/(m·v)); indéfini (None) pour v = 0."""
    if velocity == 0.0:
        return None
    return mass * ((1.0 + restitution) / dt - stiffness * penetration / (mass * velocity))


def theorem1_check(stiffness: float, mass: float, dt: float, restitution: float = 0.0,
                   penetration: float = DEFAULT_PENETRATION, velocity: float = DEFAULT_VELOCITY,
                   damping: Optional[float] = None) -> Theorem1Report:
    """
    Vérifie la condition de raideur et calcule l'amortissement requis.

    Le gradient est obtenu en différentiant un pas de contact; sans `damping`, le pas
    utilise l'amortissement requis (ou 0 s'il est indéfini).
    """
    if mass <= 0 or dt <= 0:
        raise ConfigurationError(f"masse et Δt doivent être positifs (m={mass}, Δt={dt})")
    if not 0.0 <= restitution <= 1.0:
        raise ConfigurationError(f"restitution hors de [0, 1]: {restitution}")

    k_required = required_damping(stiffness, mass, dt, restitution, penetration, velocity)
    k_used = damping if damping is not None else (k_required if k_required is not None else 0.0)

    with GradientTape() as tape:
        x = tape.watch("x", penetration)
        v = torch.tensor(velocity, dtype=torch.float64)
        x_next, v_next = impulse_step(x, v, stiffness, k_used, mass, dt)
        gradient = float(tape.gradient(x_next)["x"])

    stiffness_ok = stiffness / mass > 1.0 / dt ** 2
    report = Theorem1Report(
        stiffness=stiffness, mass=mass, dt=dt, restitution=restitution,
        gradient=gradient,
        analytic_gradient=1.0 - dt ** 2 * stiffness / mass,
        stiffness_ok=stiffness_ok,
        required_damping=k_required,
        damping=damping,
        rebound_velocity=float(v_next),
    )
    if damping is not None and k_required is not None:
        report.damping_ok = math.isclose(damping, k_required, rel_tol=1e-9, abs_tol=1e-12)
    if k_required is None:
        logger.info("Condition d'amortissement indéfinie pour v = 0")
    if not stiffness_ok:
        logger.warning(f"⚠️ K/m = {stiffness / mass:.3e} ≤ 1/Δt² = {1.0 / dt ** 2:.3e}: "
                       f"gradient de contact {gradient:+.3e}, direction incorrecte")
    return report
