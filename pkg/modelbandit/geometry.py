"""
Rigid-body geometry for free-floating grippers

Twists are expressed in the world frame: v is the velocity of the gripper
origin and omega the angular velocity about world axes.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionError, InputError
from .models import GripperPose, GripperTwist, RobotCommand


def skew(x: np.ndarray) -> np.ndarray:
    """skew(x) @ y == cross(x, y)"""
    x = np.asarray(x, dtype=float).reshape(3)
    return np.array([
        [0.0, -x[2], x[1]],
        [x[2], 0.0, -x[0]],
        [-x[1], x[0], 0.0],
    ])


def twist_inner_product(a: GripperTwist, b: GripperTwist, c: float) -> float:
    """<a, b> = v_a . v_b + c * omega_a . omega_b"""
    if c < 0:
        raise InputError(f"rotational scale c must be non-negative, got {c}")
    return float(a.v @ b.v + c * (a.omega @ b.omega))


def command_inner_product(a: RobotCommand, b: RobotCommand, c: float) -> float:
    if a.gripper_count != b.gripper_count:
        raise DimensionError(
            f"commands have different gripper counts: {a.gripper_count} vs {b.gripper_count}"
        )
    return float(sum(twist_inner_product(ta, tb, c) for ta, tb in zip(a.twists, b.twists)))


def command_norm(command: RobotCommand, c: float) -> float:
    return float(np.sqrt(max(command_inner_product(command, command, c), 0.0)))


def command_metric(gripper_count: int, c: float) -> np.ndarray:
    """Diagonal of the metric that turns flattened 6G command vectors into the c-scaled product"""
    if c < 0:
        raise InputError(f"rotational scale c must be non-negative, got {c}")
    return np.tile(np.array([1.0, 1.0, 1.0, c, c, c]), gripper_count)


def rigid_point_jacobian(pose: GripperPose, point: np.ndarray) -> np.ndarray:
    """3x6 Jacobian of a world point rigidly attached to the gripper"""
    lever = np.asarray(point, dtype=float).reshape(3) - pose.translation
    return np.hstack([np.eye(3), -skew(lever)])


def integrate_pose(pose: GripperPose, twist: GripperTwist, dt: float = 1.0) -> GripperPose:
    """Apply a world-frame twist for dt seconds (exponential map on the rotation)"""
    delta = Rotation.from_rotvec(twist.omega * dt).as_matrix()
    rotation = delta @ pose.rotation
    # re-orthonormalise to keep the pose invariant through long runs
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return GripperPose(rotation, pose.translation + twist.v * dt)


def transport_point(pose: GripperPose, twist: GripperTwist, point: np.ndarray, dt: float) -> np.ndarray:
    """Position after dt of a point rigidly attached to the gripper"""
    delta = Rotation.from_rotvec(twist.omega * dt).as_matrix()
    lever = np.asarray(point, dtype=float) - pose.translation
    return pose.translation + twist.v * dt + delta @ lever
