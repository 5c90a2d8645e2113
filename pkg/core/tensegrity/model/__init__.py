"""Types du domaine : état du robot, topologie, rotations."""
from .rotation import (quat_normalize, quat_rotate, quat_to_matrix, integrate_quaternion, skew, axis_to_quaternion,
                       quat_between, quat_multiply)
from .state import (RodState, RobotState, pack_state, unpack_state, attachment_world, rod_endpoints,
                    loss_encoding, center_of_mass, com_velocity, superball_rest_state)
from .params import PhysicalParams
from .topology import (RodSpec, CableEndpoint, CableSpec, ContactParams, Topology, superball_topology,
                       superball_geometry, topology_from_dict, topology_to_dict, load_topology)

__all__ = [
    'PhysicalParams', 'RodState', 'RobotState', 'pack_state', 'unpack_state', 'attachment_world', 'rod_endpoints',
    'loss_encoding', 'center_of_mass', 'com_velocity', 'superball_rest_state',
    'RodSpec', 'CableEndpoint', 'CableSpec', 'ContactParams', 'Topology', 'superball_topology',
    'superball_geometry', 'topology_from_dict', 'topology_to_dict', 'load_topology',
    'quat_normalize', 'quat_rotate', 'quat_to_matrix', 'integrate_quaternion', 'skew', 'axis_to_quaternion',
    'quat_between', 'quat_multiply',
]
