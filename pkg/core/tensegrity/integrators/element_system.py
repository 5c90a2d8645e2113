"""
Système linéaire 21x21 d'un élément ressort-barre pour l'intégration implicite.

Inconnues (x) :
    f (0:3)    force du câble sur l'extrémité m1
    xm (3:6)   position de m1      vm (6:9)   vitesse de m1
    xR (9:12)  centre de la barre  vR (12:15) vitesse du centre
    w (15:18)  vitesse angulaire   r (18:21)  bras de levier monde (centre → m1)

Équations (lignes par blocs de 3) :
    1. xm − xR − r = 0
    2. vm − vR − [ω_t×] r = 0
    3. f + K xm + k B vm = c1,   B = d̂ d̂ᵀ,  c1 = K (x_t^{m2} + l d̂) + k B v_t^{m2}
    4. vR − (Δt/m) f = v_t + a Δt
    5. xR − Δt vR = x_t
    6. ω − Δt I⁻¹ [r_t×] f = ω_t
    7. r + Δt [r_t×] ω = r_t

d̂ pointe de m2 vers m1; les grandeurs côté m2 sont figées à l'instant t.
"""
import logging
from typing import NamedTuple, Optional, Sequence

import torch

from config.settings import Config
from ..errors import DegenerateCableError, SingularElementError
from ..model.rotation import skew
from .cable import MIN_CABLE_LENGTH

logger = logging.getLogger(__name__)

SIZE = 21
F, XM, VM, XR, VR, W, R = 0, 3, 6, 9, 12, 15, 18


class ElementSystem(NamedTuple):
    A: torch.Tensor    # (..., 21, 21)
    b: torch.Tensor    # (..., 21)


class ElementSolution(NamedTuple):
    force: torch.Tensor
    endpoint_position: torch.Tensor
    endpoint_velocity: torch.Tensor
    position: torch.Tensor
    lin_vel: torch.Tensor
    ang_vel: torch.Tensor
    arm: torch.Tensor

    @classmethod
    def from_vector(cls, x: torch.Tensor) -> "ElementSolution":
        return cls(*(x[..., i:i + 3] for i in range(0, SIZE, 3)))


def _block_row(blocks: dict, like: torch.Tensor) -> torch.Tensor:
    """Ligne de blocs (..., 3, 21) à partir de {colonne de départ: bloc 3x3}."""
    zero = torch.zeros(like.shape[:-1] + (3, 3), dtype=like.dtype)
    return torch.cat([blocks.get(col, zero).expand_as(zero) for col in range(0, SIZE, 3)], dim=-1)


def build_element_system(position: torch.Tensor, lin_vel: torch.Tensor, ang_vel: torch.Tensor,
                         arm: torch.Tensor, mass, inv_inertia: torch.Tensor,
                         other_point: torch.Tensor, other_velocity: torch.Tensor,
                         stiffness, damping, rest_length, dt: float,
                         external_accel: Optional[torch.Tensor] = None,
                         unilateral: bool = Config.UNILATERAL_CABLES,
                         element: Optional[str] = None) -> ElementSystem:
    """
    Assemble A et b pour un lot d'éléments (dimensions de tête quelconques).

    Args:
        position, lin_vel, ang_vel: État de la barre à t (..., 3)
        arm: Bras de levier monde r_t de l'attache m1 (..., 3)
        mass: Masse de la barre (...)
        inv_inertia: Inertie inverse monde (..., 3, 3)
        other_point, other_velocity: Extrémité m2 à t (..., 3)
        stiffness, damping, rest_length: K, k et longueur au repos effective (...)
        external_accel: Accélération externe (gravité) ajoutée à la ligne 4
        unilateral: Câble détendu à t → K = k = 0
        element: Nom rapporté en cas de câble dégénéré
    """
    if dt <= 0:
        raise ValueError("dt doit être strictement positif")
    dtype = position.dtype
    endpoint = position + arm
    delta = endpoint - other_point
    length = torch.linalg.vector_norm(delta, dim=-1)
    if bool((length < MIN_CABLE_LENGTH).any()):
        index = (length < MIN_CABLE_LENGTH).nonzero()[0]
        raise DegenerateCableError(element if element is not None else int(index[-1]), float(length[tuple(index)]))
    direction = delta / length.unsqueeze(-1)

    stiffness = torch.as_tensor(stiffness, dtype=dtype).expand_as(length)
    damping = torch.as_tensor(damping, dtype=dtype).expand_as(length)
    rest_length = torch.as_tensor(rest_length, dtype=dtype).expand_as(length)
    if unilateral:
        taut = (length > rest_length).to(dtype)
        stiffness = stiffness * taut
        damping = damping * taut

    eye = torch.eye(3, dtype=dtype).expand(length.shape + (3, 3))
    projector = direction.unsqueeze(-1) * direction.unsqueeze(-2)
    K = stiffness[..., None, None]
    k = damping[..., None, None]
    m = torch.as_tensor(mass, dtype=dtype).expand_as(length)[..., None, None]
    arm_skew = skew(arm)

    A = torch.cat((
        _block_row({XM: eye, XR: -eye, R: -eye}, position),
        _block_row({VM: eye, VR: -eye, R: -skew(ang_vel)}, position),
        _block_row({F: eye, XM: K * eye, VM: k * projector}, position),
        _block_row({VR: eye, F: -(dt / m) * eye}, position),
        _block_row({XR: eye, VR: -dt * eye}, position),
        _block_row({W: eye, F: -dt * (inv_inertia @ arm_skew)}, position),
        _block_row({R: eye, W: dt * arm_skew}, position),
    ), dim=-2)

    c1 = (stiffness.unsqueeze(-1) * (other_point + rest_length.unsqueeze(-1) * direction)
          + damping.unsqueeze(-1) * (projector @ other_velocity.unsqueeze(-1)).squeeze(-1))
    velocity_rhs = lin_vel if external_accel is None else lin_vel + external_accel * dt
    zeros = torch.zeros_like(position)
    b = torch.cat((zeros, zeros, c1, velocity_rhs, position, ang_vel, arm), dim=-1)
    return ElementSystem(A, b)


def element_residual(system: ElementSystem, x: torch.Tensor) -> torch.Tensor:
    """‖Ax − b‖∞ / ‖b‖∞ par élément."""
    residual = (system.A @ x.unsqueeze(-1)).squeeze(-1) - system.b
    scale = system.b.abs().amax(dim=-1).clamp(min=torch.finfo(x.dtype).tiny)
    return residual.abs().amax(dim=-1) / scale


def solve_element_system(system: ElementSystem, condition_limit: Optional[float] = Config.CONDITION_LIMIT,
                         labels: Optional[Sequence[str]] = None) -> ElementSolution:
    """
    Résout Ax = b (LU avec pivot partiel, rétropropagation par résolution adjointe).

    Args:
        condition_limit: Conditionnement maximal accepté, None pour ne pas le vérifier
        labels: Noms des éléments selon la dernière dimension de lot (messages d'erreur)

    Raises:
        SingularElementError: Matrice singulière ou trop mal conditionnée
    """
    def name(index) -> str:
        element = int(index[-1]) if len(index) else 0
        return labels[element] if labels is not None else str(element)

    if condition_limit is not None:
        with torch.no_grad():
            condition = torch.linalg.cond(system.A)
            bad = ~(condition <= condition_limit)
        if bool(bad.any()):
            index = bad.nonzero()[0]
            raise SingularElementError(name(index), float(condition[tuple(index)]))

    x, info = torch.linalg.solve_ex(system.A, system.b.unsqueeze(-1))
    if bool((info != 0).any()):
        raise SingularElementError(name((info != 0).nonzero()[0]))
    return ElementSolution.from_vector(x.squeeze(-1))
