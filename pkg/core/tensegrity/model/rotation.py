"""
Outils de rotation sur quaternions unitaires (convention w, x, y, z).
Toutes les fonctions acceptent des dimensions de lot en tête.
"""
import torch


def quat_rotate(q: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Applique la rotation q au vecteur v (q supposé normalisé)."""
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * torch.cross(u, v, dim=-1)
    return v + w * t + torch.cross(u, t, dim=-1)


def quat_multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Produit de Hamilton a ⊗ b."""
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack((
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ), dim=-1)


def quat_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """Matrice de rotation 3x3 associée à q."""
    w, x, y, z = q.unbind(-1)
    rows = (
        torch.stack((1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)), dim=-1),
        torch.stack((2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)), dim=-1),
        torch.stack((2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)), dim=-1),
    )
    return torch.stack(rows, dim=-2)


def quat_normalize(q: torch.Tensor) -> torch.Tensor:
    return q / torch.linalg.vector_norm(q, dim=-1, keepdim=True)


def integrate_quaternion(q: torch.Tensor, ang_vel: torch.Tensor, dt: float) -> torch.Tensor:
    """
    Intègre l'orientation avec la vitesse angulaire monde puis renormalise.

    Args:
        q: Quaternions (..., 4)
        ang_vel: Vitesses angulaires monde (..., 3)
        dt: Pas de temps (s)
    """
    omega = torch.cat((torch.zeros_like(ang_vel[..., :1]), ang_vel), dim=-1)
    q_next = q + 0.5 * dt * quat_multiply(omega, q)
    return quat_normalize(q_next)


def skew(v: torch.Tensor) -> torch.Tensor:
    """Matrice antisymétrique [v×] telle que [v×] a = v × a."""
    x, y, z = v.unbind(-1)
    zero = torch.zeros_like(x)
    return torch.stack((
        torch.stack((zero, -z, y), dim=-1),
        torch.stack((z, zero, -x), dim=-1),
        torch.stack((-y, x, zero), dim=-1),
    ), dim=-2)


def axis_to_quaternion(axis) -> torch.Tensor:
    """Quaternion qui aligne l'axe z du repère barre sur `axis`."""
    target = torch.as_tensor(axis, dtype=torch.float64)
    target = target / torch.linalg.vector_norm(target)
    z = torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64)
    cos = torch.dot(z, target)
    if cos < -1.0 + 1e-12:
        return torch.tensor([0.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    half = torch.cat((1.0 + cos.reshape(1), torch.cross(z, target, dim=-1)))
    return quat_normalize(half)


def quat_between(source, target) -> torch.Tensor:
    """Plus petite rotation qui amène la direction `source` sur `target`."""
    source = torch.as_tensor(source, dtype=torch.float64)
    target = torch.as_tensor(target, dtype=torch.float64)
    source = source / torch.linalg.vector_norm(source)
    target = target / torch.linalg.vector_norm(target)
    cos = torch.dot(source, target)
    if cos < -1.0 + 1e-12:
        helper = torch.tensor([1.0, 0.0, 0.0] if abs(float(source[0])) < 0.9 else [0.0, 1.0, 0.0],
                              dtype=torch.float64)
        axis = torch.cross(source, helper, dim=-1)
        return torch.cat((torch.zeros(1, dtype=torch.float64), axis / torch.linalg.vector_norm(axis)))
    return quat_normalize(torch.cat((1.0 + cos.reshape(1), torch.cross(source, target, dim=-1))))
