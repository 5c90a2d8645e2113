"""Laboratoire de gradients : balle 1D, condition de raideur, collisions multiples, contrôles du moteur."""
from .ball import METHODS, BallState, naive_step, toi_step, ani_step, free_flight, simulate, count_contacts
from .theorem import Theorem1Report, impulse_step, required_damping, theorem1_check
from .studies import (SWEEP_COLUMNS, STUDY_MODES, GradientCheck, MultiCollisionReport, step_gradient, final_height,
                      ball_sweep, check_sweep, write_sweep_csv, multi_collision_gradient_study, contact_step_checks,
                      theorem_checks, contact_impulse_checks, engine_gradient_checks, write_checks_csv, run_gradcheck)

__all__ = [
    'METHODS', 'BallState', 'naive_step', 'toi_step', 'ani_step', 'free_flight', 'simulate', 'count_contacts',
    'Theorem1Report', 'impulse_step', 'required_damping', 'theorem1_check',
    'SWEEP_COLUMNS', 'STUDY_MODES', 'GradientCheck', 'MultiCollisionReport', 'step_gradient', 'final_height',
    'ball_sweep', 'check_sweep', 'write_sweep_csv', 'multi_collision_gradient_study', 'contact_step_checks',
    'theorem_checks', 'contact_impulse_checks', 'engine_gradient_checks', 'write_checks_csv', 'run_gradcheck',
]
