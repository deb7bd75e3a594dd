import numpy as np
import pytest

from jumprl.reference import ReferenceTrajectory, generate_reference
from jumprl.robot import RobotModel
from jumprl.slip import JumpTask, default_slip_params


@pytest.fixture(scope="session")
def go1_model():
    return RobotModel()


@pytest.fixture(scope="session")
def demo_reference(go1_model):
    """The canonical 0.4 m demonstration (solved once per session)."""
    return generate_reference(JumpTask(), default_slip_params(springs=True), go1_model)


def build_synthetic_reference(n_steps=20, dt=0.02, i_air=8, i_land=14):
    """Hand-built reference for unit tests; cheap and fully controlled."""
    m = n_steps + 1
    t = np.arange(m) * dt
    com = np.zeros((m, 3))
    com[:, 0] = 0.5 * t
    com[:, 2] = 0.32 + 0.1 * np.sin(np.pi * t / t[-1])
    vel = np.gradient(com, dt, axis=0)
    q = 0.3 * np.sin(np.linspace(0, 2, m))[:, None] * np.ones((m, 12))
    q[:, 0::3] = 0.0  # abduction references constant, like the planar demo
    contact = np.zeros((m, 4), dtype=bool)
    contact[: i_air + 1] = True
    contact[i_land:] = True
    return ReferenceTrajectory(
        dt=dt,
        com_pos=com,
        com_vel=vel,
        q_ref=q,
        contact_ref=contact,
        i_air=i_air,
        i_land=i_land,
        landing_pose=q[i_land].copy(),
        target_displacement=np.array([0.4, 0.0]),
        jump_duration=i_land * dt,
    )


@pytest.fixture
def synthetic_reference():
    return build_synthetic_reference()
