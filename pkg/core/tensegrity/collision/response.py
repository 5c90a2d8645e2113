"""
Générateur de réponse aux collisions : impulsions normales au niveau vitesse
et frottement de Coulomb projeté sur le cône.

Valeur : la vitesse normale après le pas vaut −e·ṽ_n (e forcé à 0 sous le seuil de
vitesse de repos), obtenue par une résolution couplée de tous les contacts actifs
(système de Delassus, ensemble actif, frottement adhérent ou glissant).

Gradient : chaque impulsion normale porte le terme Δt(K·d − k·ṽ_n) − sa propre valeur,
nul en valeur. Les vitesses relatives ṽ sont détachées : ∂x_{t+1}/∂x_t au contact
vaut 1 − Δt²K/m et ∂J_n/∂K = Δt·d.
"""
import logging
from typing import NamedTuple, Optional, Tuple

import torch

from config.settings import Config
from ..model.params import PhysicalParams
from ..model.rotation import skew
from ..model.state import RobotState
from .checker import GROUND, CONTACT_TOLERANCE
from .interaction_graph import InteractionGraph

logger = logging.getLogger(__name__)

SEPARATION_TOLERANCE = 1e-10


def _coefficients(params):
    """(K_g, k_g, mu, e) depuis ContactParams ou PhysicalParams."""
    if hasattr(params, 'ground_stiffness'):
        return params.ground_stiffness, params.ground_damping, params.friction, params.restitution
    return params.stiffness, params.damping, params.friction, params.restitution


def _as_tensor(value, like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(value, dtype=like.dtype)


def _value(value) -> float:
    return float(value.detach()) if torch.is_tensor(value) else float(value)


def _inverse_inertia_term(inv_inertia: torch.Tensor, arm: torch.Tensor, normal: torch.Tensor) -> torch.Tensor:
    """n · ((I⁻¹ (r × n)) × r)"""
    angular = (inv_inertia @ torch.cross(arm, normal, dim=-1).unsqueeze(-1)).squeeze(-1)
    return (torch.cross(angular, arm, dim=-1) * normal).sum(dim=-1)


def effective_mass(mass_a, inv_inertia_a: torch.Tensor, arm_a: torch.Tensor, normal: torch.Tensor,
                   mass_b=None, inv_inertia_b: Optional[torch.Tensor] = None,
                   arm_b: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Masse effective le long de la normale (corps b absent = sol immobile)."""
    inverse = 1.0 / mass_a + _inverse_inertia_term(inv_inertia_a, arm_a, normal)
    if mass_b is not None:
        inverse = inverse + 1.0 / mass_b + _inverse_inertia_term(inv_inertia_b, arm_b, normal)
    return 1.0 / inverse


def bounce_coefficient(restitution, normal_speed: torch.Tensor,
                       threshold: float = Config.RESTITUTION_THRESHOLD) -> torch.Tensor:
    """e si la vitesse d'approche dépasse le seuil de repos, 0 sinon."""
    e = _as_tensor(restitution, normal_speed).detach()
    return e * (-normal_speed > threshold).to(normal_speed.dtype)


def stiffness_surrogate(params, depth: torch.Tensor, normal_speed: torch.Tensor, dt: float) -> torch.Tensor:
    """Δt(K·d − k·ṽ_n) − valeur : nul en valeur, porte les gradients de raideur et de profondeur."""
    stiffness, damping, _, _ = _coefficients(params)
    surrogate = dt * (stiffness * depth.clamp(min=0.0) - damping * normal_speed.detach())
    return surrogate - surrogate.detach()


def contact_impulse(contact, params, m_eff, dt: float, active: Optional[torch.Tensor] = None,
                    friction_epsilon: float = Config.FRICTION_EPSILON,
                    restitution_threshold: float = Config.RESTITUTION_THRESHOLD) -> torch.Tensor:
    """
    Impulsion d'un contact isolé (normale + frottement) appliquée au corps a.

    J_n = (1 + e)·m_eff·max(0, −ṽ_n) + [Δt(K·d − k·ṽ_n)]_gradient
    J_f = −min(μ J_n, m_eff |v_t|) · v_t / sqrt(|v_t|² + ε²)

    Args:
        contact: Objet portant normal, depth, relative_velocity (Contact ou tenseurs en lot)
        params: ContactParams ou PhysicalParams
        m_eff: Masse effective
        dt: Pas de temps
        active: Masque optionnel; par défaut depth ≥ 0
    """
    _, _, friction, restitution = _coefficients(params)
    normal = contact.normal
    depth = contact.depth
    if active is None:
        active = depth >= -CONTACT_TOLERANCE
    velocity = contact.relative_velocity.detach()
    mask = active.to(depth.dtype)

    normal_speed = (velocity * normal).sum(dim=-1)
    approaching = (normal_speed < 0).to(depth.dtype)
    e = bounce_coefficient(restitution, normal_speed, restitution_threshold)
    target = (1.0 + e) * m_eff * torch.relu(-normal_speed)
    normal_impulse = (target + approaching * stiffness_surrogate(params, depth, normal_speed, dt)) * mask

    tangential = velocity - normal_speed.unsqueeze(-1) * normal
    slip = torch.linalg.vector_norm(tangential, dim=-1)
    friction_magnitude = torch.minimum(friction * normal_impulse, m_eff * slip)
    smooth = torch.sqrt(slip * slip + friction_epsilon ** 2)
    friction_impulse = -(friction_magnitude / smooth).unsqueeze(-1) * tangential

    return normal_impulse.unsqueeze(-1) * normal + friction_impulse


class ContactSolution(NamedTuple):
    """Impulsions dans le repère de contact (n, t1, t2), (B, M, 3), et état de l'ensemble actif."""
    impulse: torch.Tensor
    in_set: torch.Tensor
    sliding: torch.Tensor
    direction: torch.Tensor
    iterations: int


def contact_frame(normal: torch.Tensor) -> torch.Tensor:
    """Repère de contact (..., 3, 3), lignes n, t1, t2."""
    use_y = normal[..., 0].abs() > 0.9
    helper = torch.zeros_like(normal)
    helper[..., 0] = (~use_y).to(normal.dtype)
    helper[..., 1] = use_y.to(normal.dtype)
    t1 = helper - (helper * normal).sum(dim=-1, keepdim=True) * normal
    t1 = t1 / torch.linalg.vector_norm(t1, dim=-1, keepdim=True)
    t2 = torch.cross(normal, t1, dim=-1)
    return torch.stack((normal, t1, t2), dim=-2)


def delassus_matrix(graph: InteractionGraph, inv_mass: torch.Tensor, inv_inertia: torch.Tensor) -> torch.Tensor:
    """
    W (B, M, M, 3, 3) : variation de vitesse relative au contact i par unité d'impulsion au contact j.

    Bloc par corps partagé : σ_i σ_j (m⁻¹ I − [r_i×] I⁻¹ [r_j×]), σ = +1 pour a, −1 pour b.

    Args:
        inv_mass: Masses inverses (N,), nulles pour les barres fixées
        inv_inertia: Inertie inverse monde (B, N, 3, 3), nulle pour les barres fixées
    """
    batch, size = graph.depth.shape
    dtype = graph.depth.dtype
    with_rod = (graph.rod_b != GROUND).to(dtype)
    bodies = torch.cat((graph.rod_a, graph.rod_b.clamp(min=0)))
    signs = torch.cat((torch.ones(size, dtype=dtype), -with_rod))
    arms = torch.cat((graph.arm_a, graph.arm_b), dim=1)

    weight = (signs.unsqueeze(1) * signs.unsqueeze(0)) * (bodies.unsqueeze(1) == bodies.unsqueeze(0)).to(dtype)
    arm_skew = skew(arms)
    inv_i = inv_inertia[:, bodies]
    rotational = arm_skew.unsqueeze(2) @ inv_i.unsqueeze(2) @ arm_skew.unsqueeze(1)
    eye = torch.eye(3, dtype=dtype)
    linear = inv_mass[bodies].reshape(1, -1, 1, 1, 1) * eye
    blocks = weight.reshape(1, 2 * size, 2 * size, 1, 1) * (linear - rotational)
    return blocks.reshape(batch, 2, size, 2, size, 3, 3).sum(dim=(1, 3))


def solve_contacts(A: torch.Tensor, free_velocity: torch.Tensor, active: torch.Tensor, restitution: float,
                   friction: float, restitution_threshold: float = Config.RESTITUTION_THRESHOLD,
                   iterations: int = Config.CONTACT_ITERATIONS,
                   regularization: float = Config.CONTACT_REGULARIZATION) -> ContactSolution:
    """
    Résolution couplée par ensemble actif, en valeur (sans gradient).

    Les contacts de l'ensemble visent u_n' = −e·u_n (0 s'ils y entrent sans approcher) et,
    s'ils adhèrent, u_t' = 0. Un contact dont l'impulsion normale devient négative sort de
    l'ensemble, un contact actif qui pénètre encore y entre, une impulsion tangentielle
    hors du cône μ J_n bascule en glissement dans sa direction.

    Args:
        A: Matrice de Delassus dans les repères de contact (B, 3M, 3M)
        free_velocity: Vitesses relatives sans impulsion, repère de contact (B, M, 3)
        active: Contacts géométriquement actifs (B, M)
    """
    batch, size, _ = free_velocity.shape
    dtype = free_velocity.dtype
    u = free_velocity
    u_n = u[..., 0]
    e = bounce_coefficient(restitution, u_n, restitution_threshold)
    target = torch.zeros_like(u)
    target[..., 0] = torch.where(u_n < 0, -e * u_n, torch.zeros_like(u_n))
    rhs_full = (target - u).reshape(batch, 3 * size)

    eye = torch.eye(3 * size, dtype=dtype).expand(batch, -1, -1)
    diagonal = torch.diagonal(A, dim1=-2, dim2=-1).abs()

    in_set = active & (u_n < 0)
    sliding = torch.zeros_like(in_set)
    direction = torch.zeros(batch, size, 2, dtype=dtype)
    impulse = torch.zeros_like(u)
    iteration = 0
    for iteration in range(1, iterations + 1):
        sticking = in_set & ~sliding
        unknown = torch.stack((in_set, sticking, sticking), dim=-1).reshape(batch, 3 * size)

        # Glissement : J_t = μ J_n d, d direction de l'impulsion adhérente rejetée
        parametrization = eye.clone()
        slide = sliding.to(dtype).unsqueeze(-1) * friction * direction
        rows = torch.arange(size) * 3
        parametrization[:, rows + 1, rows] = slide[..., 0]
        parametrization[:, rows + 2, rows] = slide[..., 1]

        selected = unknown.to(dtype)
        scale = ((diagonal * selected).sum(dim=-1) / selected.sum(dim=-1).clamp(min=1.0)).clamp(min=1e-12)
        scale = scale.reshape(batch, 1, 1)
        system = (A @ parametrization) * selected.unsqueeze(1)
        matrix = torch.where(unknown.unsqueeze(-1), system, eye) + regularization * scale * eye * selected.unsqueeze(-1)
        x = torch.linalg.solve(matrix, (rhs_full * selected).unsqueeze(-1))
        impulse = (parametrization @ x).reshape(batch, size, 3)
        post = u + (A @ impulse.reshape(batch, 3 * size, 1)).reshape(batch, size, 3)

        normal_impulse = impulse[..., 0]
        tangential = impulse[..., 1:]
        tangential_norm = torch.linalg.vector_norm(tangential, dim=-1)
        drop = in_set & (normal_impulse < 0)
        enter = active & ~in_set & (post[..., 0] < -SEPARATION_TOLERANCE)
        exceed = sticking & ~drop & (tangential_norm > friction * normal_impulse * (1.0 + 1e-9) + 1e-15)

        if not bool((drop | enter | exceed).any()):
            break
        direction = torch.where(exceed.unsqueeze(-1), tangential / tangential_norm.clamp(min=1e-300).unsqueeze(-1),
                                direction)
        in_set = (in_set & ~drop) | enter
        sliding = (sliding | exceed) & in_set
    else:
        logger.debug(f"Ensemble actif non stabilisé après {iterations} itérations")

    # Projection finale sur le cône
    normal_impulse = torch.relu(impulse[..., 0]) * in_set.to(dtype)
    tangential = impulse[..., 1:] * in_set.to(dtype).unsqueeze(-1)
    bound = friction * normal_impulse
    norm = torch.linalg.vector_norm(tangential, dim=-1)
    factor = torch.where(norm > bound, bound / norm.clamp(min=1e-300), torch.ones_like(norm))
    impulse = torch.cat((normal_impulse.unsqueeze(-1), tangential * factor.unsqueeze(-1)), dim=-1)
    return ContactSolution(impulse, in_set, sliding, direction, iteration)


def apply_contact_impulses(graph: InteractionGraph, state: RobotState, lin_vel: torch.Tensor,
                           ang_vel: torch.Tensor, params: PhysicalParams, inv_inertia: torch.Tensor,
                           dt: float, friction_epsilon: float = Config.FRICTION_EPSILON,
                           restitution_threshold: float = Config.RESTITUTION_THRESHOLD,
                           pinned: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Applique toutes les impulsions du graphe aux vitesses (B, N, 3).

    Les contacts actifs sont résolus ensemble (solve_contacts) ; les barres fixées ont
    une masse infinie.

    Args:
        inv_inertia: Inertie inverse monde (B, N, 3, 3)
        friction_epsilon: Lissage de la direction de glissement dans le terme de gradient
        restitution_threshold: Vitesse d'approche sous laquelle le contact est plastique
        pinned: Masque (N,) des barres fixées
    """
    if graph.size == 0 or graph.is_empty:
        return lin_vel, ang_vel

    _, _, friction, restitution = _coefficients(params)
    dtype = lin_vel.dtype
    mass = params.mass.to(lin_vel)
    free = torch.ones_like(mass) if pinned is None else (~pinned).to(dtype)
    inv_mass = free / mass
    inv_inertia = inv_inertia * free.reshape(1, -1, 1, 1)

    rod_a = graph.rod_a
    rod_b = graph.rod_b.clamp(min=0)
    mask_b = (graph.rod_b != GROUND).to(dtype).unsqueeze(-1)
    vel_a = lin_vel[:, rod_a] + torch.cross(ang_vel[:, rod_a], graph.arm_a, dim=-1)
    vel_b = lin_vel[:, rod_b] + torch.cross(ang_vel[:, rod_b], graph.arm_b, dim=-1)
    relative = (vel_a - vel_b * mask_b).detach()

    with torch.no_grad():
        frame = contact_frame(graph.normal.detach())
        W = delassus_matrix(graph, inv_mass.detach(), inv_inertia.detach())
        batch, size = graph.depth.shape
        A = torch.einsum('bipk,bijkl,bjql->bipjq', frame, W, frame).reshape(batch, 3 * size, 3 * size)
        free_velocity = torch.einsum('bipk,bik->bip', frame, relative)
        solution = solve_contacts(A, free_velocity, graph.active, _value(restitution), _value(friction),
                                  restitution_threshold)

    in_set = solution.in_set.to(dtype)
    normal_speed = free_velocity[..., 0]
    normal_impulse = solution.impulse[..., 0] + in_set * stiffness_surrogate(params, graph.depth, normal_speed, dt)

    # En glissement, J_t = μ J_n d relie le frottement à μ et à la raideur
    slip = free_velocity[..., 1:]
    slip_norm = torch.linalg.vector_norm(slip, dim=-1, keepdim=True)
    smooth = slip_norm / torch.sqrt(slip_norm * slip_norm + friction_epsilon ** 2)
    sliding_friction = friction * normal_impulse.unsqueeze(-1) * solution.direction * smooth
    sliding = (solution.sliding & solution.in_set).unsqueeze(-1)
    tangential = torch.where(sliding, sliding_friction, solution.impulse[..., 1:])

    local = torch.cat((normal_impulse.unsqueeze(-1), tangential), dim=-1)
    impulse = (frame.transpose(-1, -2) @ local.unsqueeze(-1)).squeeze(-1)

    impulse_b = -impulse * mask_b
    dv = torch.zeros_like(lin_vel)
    dv = dv.index_add(1, rod_a, impulse * inv_mass[rod_a].unsqueeze(-1))
    dv = dv.index_add(1, rod_b, impulse_b * inv_mass[rod_b].unsqueeze(-1))

    def angular(inv, arm, j):
        return (inv @ torch.cross(arm, j, dim=-1).unsqueeze(-1)).squeeze(-1)

    dw = torch.zeros_like(ang_vel)
    dw = dw.index_add(1, rod_a, angular(inv_inertia[:, rod_a], graph.arm_a, impulse))
    dw = dw.index_add(1, rod_b, angular(inv_inertia[:, rod_b], graph.arm_b, impulse_b))
    return lin_vel + dv, ang_vel + dw
