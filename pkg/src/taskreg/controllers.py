"""Regulation laws: passive Jacobian-transpose regulators, the full-state
internal-model controller, the velocity-free controller, and its saturated
variant.

The information constraint of the velocity-free problem is enforced
structurally: those laws accept a Measurement, which carries only (q, e);
joint velocity exists only on the FullMeasurement subtype used by the
full-state laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ManipulatorParams, gravity_torque, jacobian
from .internal_model import InternalModelSpec


@dataclass(frozen=True)
class Gains:
    """Controller gains: task-space stiffness kp, damping kd, filter gain h."""

    kp: float
    kd: float
    h: float

    def __post_init__(self) -> None:
        if self.kp <= 0 or self.kd <= 0 or self.h <= 0:
            raise ValueError("kp, kd and h must be strictly positive")


@dataclass(frozen=True)
class Measurement:
    """Position-level information set: joint angles and task-space error.

    Deliberately has no velocity field; velocity-free laws are written
    against this type.
    """

    q: np.ndarray
    e: np.ndarray


@dataclass(frozen=True)
class FullMeasurement(Measurement):
    """Measurement extended with the joint velocity, for full-state laws."""

    xi: np.ndarray


@dataclass(frozen=True)
class FullStateCtlState:
    """Internal-model states of the full-state law."""

    eta1: np.ndarray
    eta2: np.ndarray


@dataclass(frozen=True)
class VelocityFreeCtlState:
    """Modified internal-model states plus the velocity-surrogate filter."""

    zeta1: np.ndarray
    zeta2: np.ndarray
    chi: np.ndarray


def passive_reg_joint(params: ManipulatorParams, q: np.ndarray, x: np.ndarray,
                      v: np.ndarray, k: float) -> np.ndarray:
    """u = -k J^T(q) x + v + g(q); passive (lossless) from v to the joint velocity."""
    if k <= 0:
        raise ValueError("k must be > 0")
    J = jacobian(params, q)
    return -k * (J.T @ np.asarray(x, dtype=float)) + np.asarray(v, dtype=float) \
        + gravity_torque(params, q)


def passive_reg_task(params: ManipulatorParams, q: np.ndarray, x: np.ndarray,
                     F: np.ndarray, k: float) -> np.ndarray:
    """u = -k J^T(q) x + J^T(q) F + g(q); passive from F to the task velocity."""
    if k <= 0:
        raise ValueError("k must be > 0")
    J = jacobian(params, q)
    return J.T @ (np.asarray(F, dtype=float) - k * np.asarray(x, dtype=float)) \
        + gravity_torque(params, q)


def full_state_torque(ctl: FullStateCtlState, meas: FullMeasurement,
                      params: ManipulatorParams, im1: InternalModelSpec,
                      im2: InternalModelSpec, gains: Gains) -> np.ndarray:
    """u = -kp J^T e - kd xi + g + B1^T eta1 + J^T B2^T eta2."""
    J = jacobian(params, meas.q)
    return (-gains.kp * (J.T @ meas.e) - gains.kd * meas.xi
            + gravity_torque(params, meas.q)
            + im1.B.T @ ctl.eta1 + J.T @ (im2.B.T @ ctl.eta2))


def full_state_ctl_derivative(ctl: FullStateCtlState, meas: FullMeasurement,
                              params: ManipulatorParams, im1: InternalModelSpec,
                              im2: InternalModelSpec) -> FullStateCtlState:
    """eta1_dot = A1 eta1 - B1 xi, eta2_dot = A2 eta2 - B2 J(q) xi."""
    J = jacobian(params, meas.q)
    return FullStateCtlState(
        eta1=im1.A @ ctl.eta1 - im1.B @ meas.xi,
        eta2=im2.A @ ctl.eta2 - im2.B @ (J @ meas.xi),
    )


def filter_output(ctl: VelocityFreeCtlState, q: np.ndarray, gains: Gains) -> np.ndarray:
    """Velocity surrogate xi_hat = chi + h q."""
    return ctl.chi + gains.h * np.asarray(q, dtype=float)


def velocity_free_im_output(ctl: VelocityFreeCtlState, meas: Measurement,
                            im1: InternalModelSpec, im2: InternalModelSpec,
                            J: np.ndarray) -> np.ndarray:
    """Compensation torque B1^T (A1 z1 - B1 q) + J^T B2^T (A2 z2 - B2 e).

    The modified internal models reuse their state derivative as the output,
    so no extra output state is stored.
    """
    out1 = im1.B.T @ (im1.A @ ctl.zeta1 - im1.B @ meas.q)
    out2 = im2.B.T @ (im2.A @ ctl.zeta2 - im2.B @ meas.e)
    return out1 + J.T @ out2


def full_state_im_output(ctl: FullStateCtlState, im1: InternalModelSpec,
                         im2: InternalModelSpec, J: np.ndarray) -> np.ndarray:
    """Compensation torque B1^T eta1 + J^T B2^T eta2."""
    return im1.B.T @ ctl.eta1 + J.T @ (im2.B.T @ ctl.eta2)


def velocity_free_torque(ctl: VelocityFreeCtlState, meas: Measurement,
                         params: ManipulatorParams, im1: InternalModelSpec,
                         im2: InternalModelSpec, gains: Gains) -> np.ndarray:
    """u = -kp J^T e - kd (chi + h q) + g + internal-model compensation."""
    J = jacobian(params, meas.q)
    return (-gains.kp * (J.T @ meas.e) - gains.kd * filter_output(ctl, meas.q, gains)
            + gravity_torque(params, meas.q)
            + velocity_free_im_output(ctl, meas, im1, im2, J))


def velocity_free_ctl_derivative(ctl: VelocityFreeCtlState, meas: Measurement,
                                 im1: InternalModelSpec, im2: InternalModelSpec,
                                 gains: Gains) -> VelocityFreeCtlState:
    """z1_dot = A1 z1 - B1 q, z2_dot = A2 z2 - B2 e, chi_dot = -h (chi + h q)."""
    return VelocityFreeCtlState(
        zeta1=im1.A @ ctl.zeta1 - im1.B @ meas.q,
        zeta2=im2.A @ ctl.zeta2 - im2.B @ meas.e,
        chi=-gains.h * (ctl.chi + gains.h * meas.q),
    )


def saturated_torque(ctl: VelocityFreeCtlState, meas: Measurement,
                     params: ManipulatorParams, im1: InternalModelSpec,
                     im2: InternalModelSpec, gains: Gains) -> np.ndarray:
    """Velocity-free law with bounded stabilization terms.

    The error feedback is scaled by 1/(1 + e^T e) and the surrogate-velocity
    feedback passes through a componentwise tanh, bounding the stabilization
    torque by kp sigma_max(J)/2 + kd sqrt(n).
    """
    J = jacobian(params, meas.q)
    e = meas.e
    return (-gains.kp * (J.T @ e) / (1.0 + e @ e)
            - gains.kd * np.tanh(filter_output(ctl, meas.q, gains))
            + gravity_torque(params, meas.q)
            + velocity_free_im_output(ctl, meas, im1, im2, J))
