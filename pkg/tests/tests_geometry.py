import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation as ScipyRotation

from src.errors import AntipodalYaw, DegenerateProjection, DegenerateRotation6D, ZeroVector
from src.geometry.core import (
    Pose,
    angle_between,
    circular_mean_yaw,
    is_rotation,
    project_xy_normalize,
    rot6_from_rotation,
    rot6_to_rotation,
    rot_z,
    se3_compose,
    se3_inverse,
    wrap_angle,
)
from src.geometry.records import PoseRecord

seeds = st.integers(min_value=0, max_value=2**32 - 1)
angles = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


def random_pose(seed: int) -> Pose:
    rng = np.random.default_rng(seed)
    return Pose(ScipyRotation.random(random_state=seed).as_matrix(), rng.uniform(-2.0, 2.0, 3))


def assert_pose_close(a: Pose, b: Pose, tol: float = 1e-9) -> None:
    assert np.allclose(a.rotation, b.rotation, atol=tol, rtol=0.0)
    assert np.allclose(a.translation, b.translation, atol=tol, rtol=0.0)


def test_rot6_from_identity() -> None:
    assert rot6_from_rotation(np.eye(3)).tolist() == [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]


def test_rot6_from_quarter_turn() -> None:
    assert np.allclose(rot6_from_rotation(rot_z(math.pi / 2)), [0, 1, 0, -1, 0, 0], atol=1e-15)


@pytest.mark.parametrize(
    "values",
    [[1, 0, 0, 0, 1, 0], [2, 0, 0, 0, 3, 0], [1, 0, 0, 1, 1, 0]],
)
def test_rot6_to_identity(values: list[float]) -> None:
    assert np.allclose(rot6_to_rotation(values), np.eye(3), atol=1e-15)


@pytest.mark.parametrize(
    "values",
    [[0, 0, 0, 0, 1, 0], [1e-9, 0, 0, 0, 1, 0], [1, 0, 0, 2, 0, 0], [1, 0, 0, 0, 0, 0], [np.nan, 0, 0, 0, 1, 0]],
)
def test_rot6_degenerate(values: list[float]) -> None:
    with pytest.raises(DegenerateRotation6D):
        rot6_to_rotation(values)


@settings(max_examples=300)
@given(seeds)
def test_rot6_round_trip(seed: int) -> None:
    rotation = ScipyRotation.random(random_state=seed).as_matrix()
    restored = rot6_to_rotation(rot6_from_rotation(rotation))
    assert np.linalg.norm(restored - rotation) <= 1e-9
    assert is_rotation(restored)


@settings(max_examples=300)
@given(st.lists(st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=6, max_size=6))
def test_gram_schmidt_output_is_rotation(values: list[float]) -> None:
    try:
        rotation = rot6_to_rotation(values)
    except DegenerateRotation6D:
        return
    assert is_rotation(rotation)
    assert np.allclose(rot6_to_rotation(rot6_from_rotation(rotation)), rotation, atol=1e-12, rtol=0.0)


def test_gram_schmidt_near_degenerate_columns() -> None:
    rng = np.random.default_rng(7)
    for _ in range(1000):
        c1 = rng.normal(size=3)
        c2 = c1 * rng.uniform(0.5, 2.0) + rng.normal(scale=1e-6, size=3)
        assert is_rotation(rot6_to_rotation(np.concatenate([c1, c2])))


def test_perturbed_rot6_stays_close() -> None:
    rng = np.random.default_rng(11)
    for seed in range(200):
        rotation = ScipyRotation.random(random_state=seed).as_matrix()
        noisy = rot6_from_rotation(rotation) + rng.normal(scale=1e-3, size=6)
        geodesic = ScipyRotation.from_matrix(rot6_to_rotation(noisy) @ rotation.T).magnitude()
        assert geodesic <= 5e-3


def test_project_xy_normalize() -> None:
    assert project_xy_normalize([1, 0, 0]).tolist() == [1.0, 0.0, 0.0]
    projected = project_xy_normalize([1, 1, 5])
    assert np.allclose(projected, [math.sqrt(0.5), math.sqrt(0.5), 0.0], atol=1e-12)
    assert projected[2] == 0.0
    with pytest.raises(DegenerateProjection):
        project_xy_normalize([0, 0, 1])


def test_circular_mean_examples() -> None:
    assert circular_mean_yaw(0.0, 0.0) == 0.0
    assert circular_mean_yaw(math.radians(170), math.radians(-170)) == pytest.approx(math.pi, abs=1e-12)
    assert circular_mean_yaw(math.radians(30), math.radians(90)) == pytest.approx(math.radians(60), abs=1e-12)


def test_circular_mean_antipodal() -> None:
    with pytest.raises(AntipodalYaw):
        circular_mean_yaw(0.0, math.pi)


@settings(max_examples=300)
@given(angles, angles, angles)
def test_circular_mean_shift_equivariance(theta_l: float, theta_r: float, phi: float) -> None:
    if math.hypot(math.sin(theta_l) + math.sin(theta_r), math.cos(theta_l) + math.cos(theta_r)) < 1e-3:
        return
    shifted = circular_mean_yaw(theta_l + phi, theta_r + phi)
    expected = wrap_angle(circular_mean_yaw(theta_l, theta_r) + phi)
    assert abs(wrap_angle(shifted - expected)) <= 1e-9


def test_se3_examples() -> None:
    moved = se3_compose(Pose(np.eye(3), [1, 0, 0]), Pose(np.eye(3), [0, 2, 0]))
    assert moved.translation.tolist() == [1.0, 2.0, 0.0]

    inverse = se3_inverse(Pose(rot_z(math.pi / 2), [1, 0, 0]))
    assert np.allclose(inverse.rotation, rot_z(-math.pi / 2), atol=1e-15)
    assert np.allclose(inverse.translation, [0, 1, 0], atol=1e-15)


@settings(max_examples=200)
@given(seeds, seeds, seeds)
def test_se3_group_laws(a: int, b: int, c: int) -> None:
    x, y, z = random_pose(a), random_pose(b), random_pose(c)
    assert_pose_close(se3_compose(se3_compose(x, y), z), se3_compose(x, se3_compose(y, z)))
    assert_pose_close(se3_compose(x, Pose.identity()), x)
    assert_pose_close(se3_compose(x, se3_inverse(x)), Pose.identity())


def test_angle_between() -> None:
    assert angle_between([1, 0, 0], [1, 0, 0]) == 0.0
    assert angle_between([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2, abs=1e-15)
    assert angle_between([1, 0, 0], [-1, 1e-9, 0]) == pytest.approx(math.pi, abs=1e-6)
    with pytest.raises(ZeroVector):
        angle_between([0, 0, 0], [1, 0, 0])


def test_pose_is_read_only() -> None:
    pose = Pose(rot_z(0.3), [1, 2, 3])
    with pytest.raises(ValueError):
        pose.translation[0] = 5.0


def test_pose_record_round_trip() -> None:
    pose = random_pose(5)
    assert_pose_close(PoseRecord.from_pose(pose).to_pose(), pose)


def test_pose_record_rejects_non_unit_quaternion() -> None:
    with pytest.raises(ValueError):
        PoseRecord(quaternion=(1.0, 0.1, 0.0, 0.0))


if __name__ == "__main__":
    pytest.main()
