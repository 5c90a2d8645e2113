"""
Balle rigide 1D rebondissant élastiquement sur un sol sans frottement (sol en x = 0).

Trois intégrations du pas de contact :
    naive  v' = −v,                       x' = x + v'Δt        (∂x'/∂x = +1, mauvais signe)
    toi    sous-pas au temps d'impact,     x' = −x − vΔt        (∂x'/∂x = −1)
    ani    v' = −v − 2x/Δt + 2x̃/Δt,       x' = x + v'Δt        (valeur naïve, gradient TOI)

x̃ a la valeur de x mais ne propage aucun gradient. Le contact est détecté sur la
position issue du vol libre : x ≤ 0 et v ≤ 0.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List

import torch

from ..autodiff import detach
from ..errors import ConfigurationError, DegenerateImpactError

logger = logging.getLogger(__name__)

METHODS = ('naive', 'toi', 'ani')


@dataclass
class BallState:
    """Hauteur x (m) et vitesse v (m/s), tenseurs float64 scalaires."""
    x: torch.Tensor
    v: torch.Tensor

    def __post_init__(self):
        self.x = torch.as_tensor(self.x, dtype=torch.float64)
        self.v = torch.as_tensor(self.v, dtype=torch.float64)
        if not bool(torch.isfinite(self.x) & torch.isfinite(self.v)):
            raise ConfigurationError(f"état de balle non fini: x={float(self.x)}, v={float(self.v)}")

    @property
    def in_contact(self) -> bool:
        return float(self.x) <= 0.0 and float(self.v) <= 0.0


def _check_dt(dt: float):
    if dt <= 0:
        raise ConfigurationError(f"Δt doit être strictement positif: {dt}")


def free_flight(state: BallState, dt: float, gravity: float = 0.0) -> BallState:
    v = state.v - gravity * dt
    return BallState(state.x + v * dt, v)


def naive_step(state: BallState, dt: float, gravity: float = 0.0) -> BallState:
    _check_dt(dt)
    if not state.in_contact:
        return free_flight(state, dt, gravity)
    v = -state.v
    return BallState(state.x + v * dt, v)


def toi_step(state: BallState, dt: float, gravity: float = 0.0) -> BallState:
    """
    Pas avec temps d'impact TOI = −x/v.

    Raises:
        DegenerateImpactError: Vitesse nulle au pas de contact
    """
    _check_dt(dt)
    if not state.in_contact:
        return free_flight(state, dt, gravity)
    if float(state.v) == 0.0:
        raise DegenerateImpactError(f"temps d'impact indéfini: v = 0 en x = {float(state.x):.3e}")
    toi = -state.x / state.v
    v = -state.v
    return BallState(state.x + state.v * toi + v * (dt - toi), v)


def ani_step(state: BallState, dt: float, gravity: float = 0.0) -> BallState:
    _check_dt(dt)
    if not state.in_contact:
        return free_flight(state, dt, gravity)
    v = -state.v - 2.0 * state.x / dt + 2.0 * detach(state.x) / dt
    return BallState(state.x + v * dt, v)


STEPS: Dict[str, Callable[..., BallState]] = {
    'naive': naive_step,
    'toi': toi_step,
    'ani': ani_step,
}


def simulate(method: str, x0, v0, dt: float = 0.01, n_steps: int = 100, gravity: float = 0.0) -> List[BallState]:
    """Trajectoire complète [s_0, ..., s_n] avec l'intégration `method`."""
    if method not in STEPS:
        raise ConfigurationError(f"intégration inconnue: {method} (choix: {', '.join(METHODS)})")
    step = STEPS[method]
    states = [BallState(x0, v0)]
    for _ in range(n_steps):
        states.append(step(states[-1], dt, gravity))
    return states


def count_contacts(states: List[BallState]) -> int:
    """Pas de contact rencontrés (le dernier état n'est pas avancé)."""
    return sum(s.in_contact for s in states[:-1])
