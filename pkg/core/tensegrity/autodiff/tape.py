"""
Différentiation en mode inverse au-dessus de torch.autograd.

Une variable est un tenseur float64; une feuille est un tenseur enregistré sur une
GradientTape sous un nom, nom qui sert d'identifiant dans les rapports de gradient
non fini.
"""
import logging
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import torch
from torch.utils.checkpoint import checkpoint

from ..errors import NonFiniteError

logger = logging.getLogger(__name__)

Grads = Union[Mapping[str, torch.Tensor], Sequence[torch.Tensor], torch.Tensor]


def detach(value: torch.Tensor) -> torch.Tensor:
    """Même valeur, aucune contribution aux gradients en amont."""
    return value.detach()


class GradientTape:
    """
    Enregistrement d'un calcul différentiable.

    Exemple:
        with GradientTape() as tape:
            a = tape.watch("a", 1.0)
            loss = a * a
        grads = tape.gradient(loss)
    """

    def __init__(self):
        self.leaves: Dict[str, torch.Tensor] = {}
        self._grad_mode = None

    def __enter__(self) -> "GradientTape":
        self._grad_mode = torch.enable_grad()
        self._grad_mode.__enter__()
        return self

    def __exit__(self, *exc):
        self._grad_mode.__exit__(*exc)
        return False

    def watch(self, name: str, value) -> torch.Tensor:
        """Enregistre une feuille (copie détachée avec requires_grad)."""
        if name in self.leaves:
            raise KeyError(f"feuille déjà enregistrée: {name}")
        leaf = torch.as_tensor(value, dtype=torch.float64).detach().clone().requires_grad_(True)
        self.leaves[name] = leaf
        return leaf

    def register(self, name: str, leaf: torch.Tensor) -> torch.Tensor:
        """Enregistre un tenseur existant (par exemple un nn.Parameter) sans le copier."""
        if not leaf.requires_grad:
            raise ValueError(f"{name} ne requiert pas de gradient")
        self.leaves[name] = leaf
        return leaf

    def gradient(self, output: torch.Tensor, names: Optional[Iterable[str]] = None,
                 retain_graph: bool = False) -> Dict[str, torch.Tensor]:
        return backward(output, self, names=names, retain_graph=retain_graph)


def backward(output: torch.Tensor, tape: GradientTape, names: Optional[Iterable[str]] = None,
             retain_graph: bool = False) -> Dict[str, torch.Tensor]:
    """
    Gradient d'une sortie scalaire par rapport aux feuilles de la bande.

    Les feuilles que la sortie n'utilise pas reçoivent un gradient nul.

    Raises:
        NonFiniteError: Si un gradient contient NaN/Inf (source = nom de la feuille)
    """
    if output.numel() != 1:
        raise ValueError(f"la sortie doit être scalaire, forme reçue {tuple(output.shape)}")
    selected = list(names) if names is not None else list(tape.leaves)
    leaves = [tape.leaves[name] for name in selected]
    raw = torch.autograd.grad(output.reshape(()), leaves, retain_graph=retain_graph, allow_unused=True)

    grads = {}
    for name, leaf, grad in zip(selected, leaves, raw):
        grad = torch.zeros_like(leaf) if grad is None else grad
        if not torch.isfinite(grad).all():
            raise NonFiniteError(f"gradient de {name}")
        grads[name] = grad
    return grads


def gradient_norm(grads: Grads) -> torch.Tensor:
    tensors = _as_tensors(grads)
    if not tensors:
        return torch.zeros((), dtype=torch.float64)
    return torch.linalg.vector_norm(torch.cat([t.reshape(-1) for t in tensors]))


def clip_gradients(grads: Grads, max_norm: float) -> Grads:
    """
    Mise à l'échelle globale : si ‖g‖₂ > max_norm, chaque composante est multipliée
    par max_norm / ‖g‖₂ (direction conservée).
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm doit être positif: {max_norm}")
    norm = gradient_norm(grads)
    scale = max_norm / norm if norm > max_norm else 1.0

    if isinstance(grads, Mapping):
        return {name: g * scale for name, g in grads.items()}
    if isinstance(grads, torch.Tensor):
        return grads * scale
    return tuple(torch.as_tensor(g, dtype=torch.float64) * scale for g in grads)


def _as_tensors(grads: Grads):
    if isinstance(grads, Mapping):
        return [torch.as_tensor(g, dtype=torch.float64) for g in grads.values()]
    if isinstance(grads, torch.Tensor):
        return [grads]
    return [torch.as_tensor(g, dtype=torch.float64) for g in grads]


def central_difference(fn: Callable[[torch.Tensor], torch.Tensor], x, step: float = 1e-6,
                       relative: bool = False) -> torch.Tensor:
    """
    Gradient d'une fonction scalaire par différences centrées, composante par composante.

    Args:
        fn: Fonction scalaire de x
        x: Point d'évaluation
        step: Pas h (absolu, ou relatif à |x_i| si `relative`)
    """
    x = torch.as_tensor(x, dtype=torch.float64).detach()
    flat = x.reshape(-1)
    grad = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            h = step * max(abs(float(flat[i])), 1.0) if relative else step
            plus, minus = flat.clone(), flat.clone()
            plus[i] += h
            minus[i] -= h
            f_plus = fn(plus.reshape(x.shape))
            f_minus = fn(minus.reshape(x.shape))
            grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(value, reference, floor: float = 1e-12) -> float:
    value = torch.as_tensor(value, dtype=torch.float64)
    reference = torch.as_tensor(reference, dtype=torch.float64)
    scale = max(float(torch.linalg.vector_norm(reference)), floor)
    return float(torch.linalg.vector_norm(value - reference)) / scale


def checkpointed_rollout(step: Callable[[int, Tuple[torch.Tensor, ...]], Tuple[torch.Tensor, ...]],
                         carry: Tuple[torch.Tensor, ...], n_steps: int, every: int = 100,
                         enabled: bool = True,
                         on_segment: Optional[Callable[[int, Tuple[torch.Tensor, ...]], None]] = None
                         ) -> Tuple[torch.Tensor, ...]:
    """
    Enchaîne `n_steps` appels step(i, carry) en ne conservant le graphe qu'aux
    frontières de segments de `every` pas; l'intérieur est recalculé au backward.

    Args:
        step: Fonction d'un pas, (indice, tenseurs) → tenseurs
        carry: Tenseurs d'état initiaux
        n_steps: Nombre total de pas
        every: Longueur d'un segment
        enabled: Désactive le point de reprise (graphe complet ou mode no_grad)
        on_segment: Rappel optionnel après chaque segment (indice du pas suivant, tenseurs)
    """
    use_checkpoint = enabled and every > 0 and torch.is_grad_enabled()
    start = 0
    while start < n_steps:
        stop = min(start + max(every, 1), n_steps) if every > 0 else n_steps

        def segment(*tensors, _start=start, _stop=stop):
            for i in range(_start, _stop):
                tensors = step(i, tensors)
            return tensors

        if use_checkpoint:
            carry = checkpoint(segment, *carry, use_reentrant=False)
        else:
            carry = segment(*carry)
        if on_segment is not None:
            on_segment(stop, carry)
        start = stop
    return tuple(carry)
