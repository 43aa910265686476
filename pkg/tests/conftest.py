import numpy as np
import pytest

from stepmap.biped import BipedConfig, standing_posture


@pytest.fixture(scope="session")
def cfg():
    return BipedConfig()


@pytest.fixture(scope="session")
def posture(cfg):
    return standing_posture(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def link_points(cfg, q):
    """Joint and link-CoM positions from plain trigonometry.

    Kept separate from the package kinematics so it can act as an oracle.
    Returns a dict with 'com' (5 x 2 link centres) and 'foot' (2,).
    """
    L = cfg.lengths
    c = cfg.com_offsets
    a = np.cumsum(q)
    up = lambda ang: np.array([np.sin(ang), np.cos(ang)])
    down = lambda ang: np.array([np.sin(ang), -np.cos(ang)])
    ankle = np.zeros(2, dtype=np.result_type(q, float))
    knee = ankle + L[0] * up(a[0])
    hip = knee + L[1] * up(a[1])
    swing_knee = hip + L[3] * down(a[3])
    foot = swing_knee + L[4] * down(a[4])
    com = np.array([
        ankle + c[0] * up(a[0]),
        knee + c[1] * up(a[1]),
        hip + c[2] * up(a[2]),
        hip + c[3] * down(a[3]),
        swing_knee + c[4] * down(a[4]),
    ])
    return {"com": com, "foot": foot, "hip": hip}


def fd_jacobian(f, q, h=1e-6):
    q = np.asarray(q, float)
    cols = [(f(q + h * e) - f(q - h * e)) / (2 * h) for e in np.eye(len(q))]
    return np.stack(cols, axis=-1)
