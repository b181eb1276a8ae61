"""Two-link planar manipulator model: kinematics, Jacobian, and rigid-body dynamics.

The concrete model is a point-mass two-link arm moving in a vertical plane.
All functions are pure and operate on plain numpy arrays, so they are safe to
call from any number of workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InertiaError(ValueError):
    """Raised when the inertia matrix fails to be positive definite."""


@dataclass(frozen=True)
class ManipulatorParams:
    """Physical parameters of the two-link arm (SI units).

    Defaults give a small desk-scale arm; scenario files always carry their
    own explicit values.
    """

    l1: float = 0.2
    l2: float = 0.2
    m1: float = 1.0
    m2: float = 1.0
    g0: float = 9.81

    def __post_init__(self) -> None:
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("link lengths must be strictly positive")
        if self.m1 <= 0 or self.m2 <= 0:
            raise ValueError("point masses must be strictly positive")
        if self.g0 < 0:
            raise ValueError("gravity acceleration must be >= 0")

    @property
    def n_joints(self) -> int:
        return 2


@dataclass(frozen=True)
class JointState:
    """Joint angles q (rad) and joint velocities xi (rad/s)."""

    q: np.ndarray
    xi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.xi))):
            raise ValueError("joint state entries must be finite")


@dataclass(frozen=True)
class DynamicsMatrices:
    """Inertia H, Coriolis C (Christoffel convention) and gravity torque g."""

    H: np.ndarray
    C: np.ndarray
    g: np.ndarray


def inverse_kinematics(params: ManipulatorParams, x: np.ndarray,
                       elbow: str = "up") -> np.ndarray:
    """A joint configuration with f(q) = x, for reachable targets.

    Two solutions exist away from the workspace boundary; ``elbow`` selects
    the sign of q2.
    """
    x = np.asarray(x, dtype=float)
    l1, l2 = params.l1, params.l2
    r2 = float(x @ x)
    c2 = (r2 - l1 ** 2 - l2 ** 2) / (2 * l1 * l2)
    if not -1.0 <= c2 <= 1.0:
        raise ValueError(f"target {x} is outside the reachable annulus")
    q2 = np.arccos(c2) if elbow == "up" else -np.arccos(c2)
    q1 = np.arctan2(x[1], x[0]) - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2))
    return np.array([q1, q2])


def forward_kinematics(params: ManipulatorParams, q: np.ndarray) -> np.ndarray:
    """End-effector position x = f(q) in the base frame (meters)."""
    q = np.asarray(q, dtype=float)
    c1, s1 = np.cos(q[0]), np.sin(q[0])
    c12, s12 = np.cos(q[0] + q[1]), np.sin(q[0] + q[1])
    return np.array([params.l1 * c1 + params.l2 * c12,
                     params.l1 * s1 + params.l2 * s12])


def jacobian(params: ManipulatorParams, q: np.ndarray) -> np.ndarray:
    """Manipulator Jacobian J(q) = df/dq, shape (2, 2)."""
    q = np.asarray(q, dtype=float)
    l1, l2 = params.l1, params.l2
    s1, s12 = np.sin(q[0]), np.sin(q[0] + q[1])
    c1, c12 = np.cos(q[0]), np.cos(q[0] + q[1])
    return np.array([[-l1 * s1 - l2 * s12, -l2 * s12],
                     [l1 * c1 + l2 * c12, l2 * c12]])


def jacobian_fd(params: ManipulatorParams, q: np.ndarray,
                step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of forward_kinematics; oracle for jacobian."""
    q = np.asarray(q, dtype=float)
    J = np.empty((2, q.size))
    for i in range(q.size):
        dq = np.zeros_like(q)
        dq[i] = step
        J[:, i] = (forward_kinematics(params, q + dq)
                   - forward_kinematics(params, q - dq)) / (2 * step)
    return J


def dynamics_matrices(params: ManipulatorParams, state: JointState) -> DynamicsMatrices:
    """Evaluate H(q), C(q, xi), g(q) for the point-mass two-link model.

    C uses the Christoffel convention, so dH/dt - 2C is skew-symmetric
    exactly (up to floating point).
    """
    l1, l2, m1, m2 = params.l1, params.l2, params.m1, params.m2
    q, xi = state.q, state.xi
    c2, s2 = np.cos(q[1]), np.sin(q[1])

    a = m2 * l1 * l2
    H = np.array([
        [(m1 + m2) * l1 ** 2 + m2 * l2 ** 2 + 2 * a * c2,
         m2 * l2 ** 2 + a * c2],
        [m2 * l2 ** 2 + a * c2, m2 * l2 ** 2],
    ])
    k = a * s2
    C = np.array([[-k * xi[1], -k * (xi[0] + xi[1])],
                  [k * xi[0], 0.0]])
    g = gravity_torque(params, q)
    return DynamicsMatrices(H=H, C=C, g=g)


def gravity_torque(params: ManipulatorParams, q: np.ndarray) -> np.ndarray:
    """Gravity torque g(q) from the point-mass potential energy."""
    q = np.asarray(q, dtype=float)
    l1, l2, m1, m2, g0 = params.l1, params.l2, params.m1, params.m2, params.g0
    c1, c12 = np.cos(q[0]), np.cos(q[0] + q[1])
    return np.array([(m1 + m2) * g0 * l1 * c1 + m2 * g0 * l2 * c12,
                     m2 * g0 * l2 * c12])


def inertia_rate(params: ManipulatorParams, state: JointState) -> np.ndarray:
    """Analytic dH/dt = sum_i (dH/dq_i) xi_i.

    H depends on q only through q2, so only the xi2 term survives.
    """
    a = params.m2 * params.l1 * params.l2
    s2 = np.sin(state.q[1])
    dH_dq2 = -a * s2 * np.array([[2.0, 1.0], [1.0, 0.0]])
    return dH_dq2 * state.xi[1]


def forward_dynamics(params: ManipulatorParams, state: JointState,
                     u: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Joint acceleration xi_dot = H^{-1} (u + d - C xi - g).

    Raises InertiaError if H(q) is not positive definite, which indicates a
    misconfigured model rather than a reachable state.
    """
    mats = dynamics_matrices(params, state)
    rhs = np.asarray(u, dtype=float) + np.asarray(d, dtype=float) \
        - mats.C @ state.xi - mats.g
    H = mats.H
    if H.shape == (2, 2):
        # positive-definiteness via leading principal minors
        det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
        if H[0, 0] <= 0.0 or det <= 0.0:
            raise InertiaError("inertia matrix is not positive definite")
        return np.array([(H[1, 1] * rhs[0] - H[0, 1] * rhs[1]) / det,
                         (H[0, 0] * rhs[1] - H[1, 0] * rhs[0]) / det])
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise InertiaError("inertia matrix is not positive definite") from exc
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)
