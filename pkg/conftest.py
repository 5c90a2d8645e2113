"""
Fixtures partagées des tests du moteur tenségrité.
"""
import sys
from pathlib import Path

import pytest
import torch

# Ajouter le chemin du projet
sys.path.insert(0, str(Path(__file__).parent))

from core.tensegrity.engine import EngineConfig, ParameterSet, TensegrityEngine
from core.tensegrity.model import (CableEndpoint, CableSpec, ContactParams, RobotState, RodSpec, Topology,
                                   superball_topology)

PAIR_GAP = 1.2
PAIR_HEIGHT = 2.0


@pytest.fixture(autouse=True)
def float64_default():
    """Tous les calculs des tests en float64."""
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


@pytest.fixture
def superball():
    return superball_topology()


@pytest.fixture
def rod_pair():
    """Deux barres verticales parallèles reliées haut-haut et bas-bas par des câbles tendus."""
    rods = (RodSpec(1.0, 1.0, 0.05), RodSpec(1.0, 1.0, 0.05))
    low, high = (0.0, 0.0, -0.5), (0.0, 0.0, 0.5)
    cables = (
        CableSpec(CableEndpoint(0, high), CableEndpoint(1, high), 1000.0, 10.0, 1.0, 0.25),
        CableSpec(CableEndpoint(0, low), CableEndpoint(1, low), 1000.0, 10.0, 1.0, 0.25),
    )
    return Topology(rods, cables, ContactParams())


@pytest.fixture
def rod_pair_state():
    """Paire au repos, écartée de 1.2 m (câbles de 1 m au repos), à 2 m du sol."""
    positions = [[0.0, 0.0, PAIR_HEIGHT], [PAIR_GAP, 0.0, PAIR_HEIGHT]]
    orientations = [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]]
    return RobotState.at_rest(positions, orientations, n_cables=2)


@pytest.fixture
def weightless():
    """Réglages sans gravité ni sol."""
    return EngineConfig(gravity=0.0, ground=None, rod_contacts=False)


@pytest.fixture
def pair_engine(rod_pair, weightless):
    return TensegrityEngine(rod_pair, ParameterSet.from_topology(rod_pair), weightless)
