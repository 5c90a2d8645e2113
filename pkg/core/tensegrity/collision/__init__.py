"""Détection de collisions (DCC), graphe d'interaction (DIG) et réponse au contact (CRG)."""
from .checker import (GROUND, Contact, capsule_ground_check, capsule_capsule_check, closest_points_on_segments,
                      ground_terms, segment_terms)
from .interaction_graph import CHECKER_MODES, InteractionGraph, build_interaction_graph, rod_pairs
from .response import (contact_impulse, effective_mass, apply_contact_impulses, contact_frame, delassus_matrix,
                       solve_contacts)
from .oracle_stream import ContactOracle, record_contacts, read_contacts, graph_from_records

__all__ = [
    'GROUND', 'Contact', 'capsule_ground_check', 'capsule_capsule_check', 'closest_points_on_segments',
    'ground_terms', 'segment_terms', 'CHECKER_MODES', 'InteractionGraph', 'build_interaction_graph', 'rod_pairs',
    'contact_impulse', 'effective_mass', 'apply_contact_impulses', 'contact_frame', 'delassus_matrix', 'solve_contacts',
    'ContactOracle', 'record_contacts', 'read_contacts', 'graph_from_records',
]
