"""Closed-loop simulation and verification toolkit for task-space regulation
of rigid manipulators under sinusoidal disturbances."""

from .config import ConfigError, bundled_scenario_path, load_scenario
from .controllers import (FullMeasurement, FullStateCtlState, Gains,
                          Measurement, VelocityFreeCtlState,
                          full_state_ctl_derivative, full_state_torque,
                          passive_reg_joint, passive_reg_task,
                          saturated_torque, velocity_free_ctl_derivative,
                          velocity_free_torque)
from .dynamics import (DynamicsMatrices, InertiaError, JointState,
                       ManipulatorParams, dynamics_matrices, forward_dynamics,
                       forward_kinematics, gravity_torque, inertia_rate,
                       jacobian, jacobian_fd)
from .exosystem import (DisturbanceSample, ExosystemSpec, SinusoidSpec,
                        disturbance, exo_derivative, exo_from_sinusoids,
                        exo_solution)
from .internal_model import (Assumption2Report, InternalModelSpec,
                             NoSolutionError, RegulatorSolution,
                             build_internal_model, composite_observable,
                             pbh_observable, sigma_via_regression, solve_sigma,
                             validate_assumption2)
from .simulation import (ClosedLoopState, DivergenceError, RunMetrics,
                         Scenario, TrajectoryLog, closed_loop_derivative,
                         metrics, rk4_step, simulate, storage_eval)

__version__ = "0.1.0"
