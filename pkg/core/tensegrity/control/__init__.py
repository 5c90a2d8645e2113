"""Planification par échantillonnage (RS, CEM, MPPI) et transfert des plans."""
from .cost import rolling_cost
from .planners import (PLANNERS, PlannerConfig, Plan, RecedingHorizonPlanner, RandomShootingPlanner, CEMPlanner,
                       MPPIPlanner, make_planner, mppi_plan, cem_plan, rs_plan, mppi_weights, cem_refit)
from .transfer import TRACE_COLUMNS, TransferResult, transfer_evaluate, write_trace

__all__ = [
    'rolling_cost',
    'PLANNERS', 'PlannerConfig', 'Plan', 'RecedingHorizonPlanner', 'RandomShootingPlanner', 'CEMPlanner',
    'MPPIPlanner', 'make_planner', 'mppi_plan', 'cem_plan', 'rs_plan', 'mppi_weights', 'cem_refit',
    'TRACE_COLUMNS', 'TransferResult', 'transfer_evaluate', 'write_trace',
]
