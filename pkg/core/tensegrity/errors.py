"""
Hiérarchie d'exceptions du moteur tenségrité.
Chaque exception porte le code de sortie utilisé par la ligne de commande.
"""
from typing import Iterable, Optional


class TensegrityError(Exception):
    """Erreur de base du projet."""

    exit_code = 1


class ConfigurationError(TensegrityError):
    """Configuration, topologie ou jeu de données invalide."""

    exit_code = 2


class DegenerateCableError(TensegrityError):
    """Câble de longueur nulle (extrémités confondues)."""

    exit_code = 2

    def __init__(self, cable_id: int, length: float):
        self.cable_id = cable_id
        self.length = length
        super().__init__(f"câble {cable_id} dégénéré: longueur {length:.3e} m")


class SingularElementError(TensegrityError):
    """Système 21x21 d'un élément ressort-barre non inversible."""

    def __init__(self, element: str, condition: Optional[float] = None):
        self.element = element
        self.condition = condition
        detail = "" if condition is None else f" (conditionnement {condition:.3e})"
        super().__init__(f"système singulier pour l'élément {element}{detail}")


class NonFiniteError(TensegrityError):
    """Valeur NaN/Inf dans une force, un état ou un gradient."""

    def __init__(self, source: str, step: Optional[int] = None):
        self.source = source
        self.step = step
        where = "" if step is None else f" au pas {step}"
        super().__init__(f"valeur non finie dans {source}{where}")


class DegenerateImpactError(TensegrityError):
    """Temps d'impact indéfini (vitesse nulle au pas de contact)."""


class EquilibriumError(TensegrityError):
    """Le robot ne se stabilise pas : pas de repos statique dans le budget de pas."""

    def __init__(self, steps: int, change: float):
        self.steps = steps
        self.change = change
        super().__init__(f"aucun équilibre statique après {steps} pas (‖ΔX‖ = {change:.3e})")


class TrainingDivergenceError(TensegrityError):
    """Perte NaN ou divergente pendant l'identification."""

    exit_code = 3

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (époque={epoch}, lot={batch})")


class GradientCheckError(TensegrityError):
    """Échec d'une ou plusieurs vérifications par différences finies."""

    exit_code = 4

    def __init__(self, failures: Iterable[str]):
        self.failures = list(failures)
        super().__init__("vérifications échouées: " + ", ".join(self.failures))


def with_step(error: TensegrityError, step: int) -> TensegrityError:
    """Copie de l'erreur, même classe, avec l'indice du pas ajouté au message."""
    annotated = error.__class__.__new__(error.__class__)
    annotated.__dict__.update(error.__dict__)
    annotated.step = step
    annotated.args = (f"{error} (pas {step})",)
    return annotated
