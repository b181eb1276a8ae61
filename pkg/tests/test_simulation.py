import dataclasses

import numpy as np
import pytest

import taskreg.verify as verify
from taskreg.controllers import FullStateCtlState, Gains, VelocityFreeCtlState
from taskreg.dynamics import (ManipulatorParams, forward_kinematics,
                              inverse_kinematics, jacobian)
from taskreg.exosystem import SinusoidSpec, exo_from_sinusoids
from taskreg.internal_model import build_internal_model
from taskreg.simulation import (ClosedLoopState, DivergenceError, Scenario,
                                TrajectoryLog, closed_loop_derivative,
                                error_coordinates, error_system_output,
                                metrics, regulator_solutions, rk4_step,
                                simulate, steady_state_controller_init,
                                storage_eval)


def small_scenario(controller="velocity-free", **over):
    """Light arm, short horizon; cheap enough for unit tests."""
    exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.1, 0.0, 1, "torque"),
                              SinusoidSpec(2.0, 0.1, 0.0, 1, "force")], 2)
    im1 = build_internal_model([1.0], 2, [1])
    im2 = build_internal_model([2.0], 2, [1])
    base = dict(model=ManipulatorParams(), exo=exo, im1=im1, im2=im2,
                gains=Gains(kp=50.0, kd=10.0, h=100.0), controller=controller,
                x_d=[0.064, 0.290], q0=[0.0, np.pi / 4], xi0=[0.0, 0.0],
                t_end=1.0, dt=1e-3)
    base.update(over)
    return Scenario(**base)


class TestScenarioValidation:
    def test_unreachable_target(self):
        with pytest.raises(ValueError):
            small_scenario(x_d=[0.5, 0.0])

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            small_scenario(dt=-1e-3)
        with pytest.raises(ValueError):
            small_scenario(t_end=1e-3, dt=1e-3)

    def test_unknown_controller(self):
        with pytest.raises(ValueError):
            small_scenario(controller="pid")


class TestRK4:
    def test_scalar_tableau(self):
        y1 = rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)
        assert y1[0] == pytest.approx(0.9048375, abs=1e-12)

    def test_zero_field(self, rng):
        y = rng.normal(size=5)
        assert np.array_equal(rk4_step(lambda t, z: 0.0 * z, y, 0.0, 0.3), y)

    def test_fourth_order_on_exponential(self):
        def integrate(dt):
            y = np.array([1.0])
            for k in range(int(round(1.0 / dt))):
                y = rk4_step(lambda t, z: -z, y, k * dt, dt)
            return abs(y[0] - np.exp(-1.0))

        ratio = integrate(0.02) / integrate(0.01)
        assert 14.0 < ratio < 18.0

    def test_divergence_guard(self):
        with pytest.raises(DivergenceError):
            rk4_step(lambda t, y: 1e12 * np.ones_like(y), np.array([0.0]),
                     0.0, 1.0)
        with pytest.raises(ValueError):
            rk4_step(lambda t, y: y, np.array([1.0]), 0.0, -0.1)


class TestClosedLoopDerivative:
    def test_full_state_equilibrium(self):
        scn = small_scenario("full-state")
        q_star = inverse_kinematics(scn.model, scn.x_d)
        state = ClosedLoopState(w=np.zeros(scn.exo.p), q=q_star,
                                xi=np.zeros(2),
                                ctl=FullStateCtlState(eta1=np.zeros(2),
                                                      eta2=np.zeros(2)))
        der = closed_loop_derivative(scn, state)
        assert np.allclose(der.w, 0.0)
        assert np.allclose(der.q, 0.0)
        assert np.allclose(der.xi, 0.0, atol=1e-12)
        assert np.allclose(der.ctl.eta1, 0.0) and np.allclose(der.ctl.eta2, 0.0)

    def test_initial_acceleration_decomposition(self, bundled):
        # xi0 = 0 and d(0) = 0, so H(q0) qddot(0) = u(0) - g(q0)
        state = ClosedLoopState(
            w=bundled.exo.w0, q=np.array(bundled.q0), xi=np.zeros(2),
            ctl=VelocityFreeCtlState(zeta1=np.zeros(4), zeta2=np.zeros(4),
                                     chi=np.zeros(2)))
        der = closed_loop_derivative(bundled, state)
        from taskreg.dynamics import dynamics_matrices, JointState
        from taskreg.controllers import Measurement, velocity_free_torque
        mats = dynamics_matrices(bundled.model,
                                 JointState(q=bundled.q0, xi=[0, 0]))
        e0 = forward_kinematics(bundled.model, bundled.q0) - bundled.x_d
        u0 = velocity_free_torque(state.ctl, Measurement(q=state.q, e=e0),
                                  bundled.model, bundled.im1, bundled.im2,
                                  bundled.gains)
        assert np.allclose(der.xi, np.linalg.solve(mats.H, u0 - mats.g),
                           atol=1e-10)


class TestSimulate:
    def test_record_count_and_grid(self):
        log, _ = simulate(small_scenario(t_end=0.5))
        assert log.t.size == 501
        assert np.allclose(np.diff(log.t), 1e-3)

    def test_deterministic(self):
        scn = small_scenario(t_end=0.3)
        log1, m1 = simulate(scn)
        log2, m2 = simulate(scn)
        for name in ("t", "w", "q", "xi", "e", "u", "d", "storage", "detJ"):
            assert np.array_equal(getattr(log1, name), getattr(log2, name))
        assert m1 == m2

    def test_divergence_guard_aborts_with_partial_log(self):
        # dt far beyond the filter stability limit blows up immediately
        scn = small_scenario(dt=0.05, t_end=2.0)
        log, m = simulate(scn)
        assert log.status == "diverged"
        assert m.status == "diverged"
        assert 0 < log.t.size < 41
        assert np.all(np.isfinite(log.q))

    def test_singularity_event_logged(self):
        scn = small_scenario("passive-p1", q0=[0.3, 0.0], t_end=0.05)
        log, _ = simulate(scn)
        assert any("singular" in msg for _, msg in log.events)

    def test_equilibrium_stays_put(self):
        # zero disturbance, q0 on the target, matched controller state
        exo0 = exo_from_sinusoids([SinusoidSpec(1.0, 0.0)], 2)
        model = ManipulatorParams(g0=0.0)
        q_star = inverse_kinematics(model, [0.064, 0.290])
        scn = small_scenario(model=model, exo=exo0, q0=q_star, t_end=2.0)
        ctl0 = steady_state_controller_init(scn)
        scn = dataclasses.replace(scn, ctl0=ctl0)
        log, m = simulate(scn)
        assert np.max(np.abs(log.e)) < 1e-9
        assert np.max(np.abs(log.xi)) < 1e-9
        assert m.settling_time == 0.0

    def test_passive_run_conserves_v1(self):
        exo0 = exo_from_sinusoids([SinusoidSpec(1.0, 0.0)], 2)
        scn = small_scenario("passive-p1", exo=exo0, t_end=2.0)
        log, m = simulate(scn)
        defect = np.max(np.abs(log.storage - log.storage[0])) / log.storage[0]
        assert defect < 1e-7
        assert m.dissipation_defect < 1e-7


class TestErrorSystem:
    def test_chain_rule_matches_error_field(self):
        """d/dt of the reconstructed error coordinate equals the lossless
        error field; this exercises Sigma S = A Sigma through the dynamics."""
        scn = small_scenario(t_end=0.5)
        log, _ = simulate(scn)
        sols = regulator_solutions(scn)
        s1, s2 = sols[0].sigma, sols[1].sigma
        im1, im2 = scn.im1, scn.im2
        worst = 0.0
        for k in range(0, log.t.size, 50):
            w, q, xi = log.w[k], log.q[k], log.xi[k]
            z1 = log.ctl[k][:im1.ell]
            z2 = log.ctl[k][im1.ell:im1.ell + im2.ell]
            e = log.e[k]
            J = jacobian(scn.model, q)
            # chain rule on zbar = A zeta - B y - Sigma w using raw derivatives
            dz1 = im1.A @ (im1.A @ z1 - im1.B @ q) - im1.B @ xi - s1 @ (scn.exo.S @ w)
            dz2 = im2.A @ (im2.A @ z2 - im2.B @ e) - im2.B @ (J @ xi) \
                - s2 @ (scn.exo.S @ w)
            zb1 = im1.A @ z1 - im1.B @ q - s1 @ w
            zb2 = im2.A @ z2 - im2.B @ e - s2 @ w
            worst = max(worst,
                        np.max(np.abs(dz1 - (im1.A @ zb1 - im1.B @ xi))),
                        np.max(np.abs(dz2 - (im2.A @ zb2 - im2.B @ (J @ xi)))))
        assert worst < 1e-12

    def test_error_storage_rate_is_lossless(self):
        scn = small_scenario("full-state", t_end=2.0)
        log, _ = simulate(scn)
        defect = verify.error_storage_rate_defect(log, "V2")
        assert defect < 1e-5

    def test_error_output_definition(self):
        scn = small_scenario("full-state", t_end=0.2)
        log, _ = simulate(scn)
        sols = regulator_solutions(scn)
        state = ClosedLoopState(
            w=log.w[-1], q=log.q[-1], xi=log.xi[-1],
            ctl=FullStateCtlState(eta1=log.ctl[-1][:2], eta2=log.ctl[-1][2:]))
        z1, z2 = error_coordinates(scn, state, sols)
        J = jacobian(scn.model, state.q)
        expected = scn.im1.B.T @ z1 + J.T @ (scn.im2.B.T @ z2)
        assert np.allclose(error_system_output(scn, state, sols), expected)


class TestStorageEval:
    def test_vbar_zero_at_origin_configuration(self):
        scn = small_scenario()
        q_star = inverse_kinematics(scn.model, scn.x_d)
        scn = dataclasses.replace(scn, q0=q_star, xi0=np.zeros(2))
        state = ClosedLoopState(
            w=np.zeros(scn.exo.p), q=q_star, xi=np.zeros(2),
            ctl=VelocityFreeCtlState(
                zeta1=np.linalg.solve(scn.im1.A, scn.im1.B @ q_star),
                zeta2=np.zeros(2), chi=-scn.gains.h * q_star))
        assert storage_eval("Vbar", scn, state) == pytest.approx(0.0, abs=1e-20)

    def test_unknown_kind(self):
        scn = small_scenario()
        state = ClosedLoopState(w=np.zeros(scn.exo.p), q=np.zeros(2),
                                xi=np.zeros(2),
                                ctl=VelocityFreeCtlState(zeta1=np.zeros(2),
                                                         zeta2=np.zeros(2),
                                                         chi=np.zeros(2)))
        with pytest.raises(ValueError):
            storage_eval("W", scn, state)

    def test_u_storage_log_terms(self):
        # U uses ln(cosh xihat) and ln(1 + e^T e); check against a direct
        # evaluation at a generic state
        scn = small_scenario("saturated")
        rng = np.random.default_rng(3)
        state = ClosedLoopState(
            w=rng.normal(size=scn.exo.p), q=rng.normal(size=2),
            xi=rng.normal(size=2),
            ctl=VelocityFreeCtlState(zeta1=rng.normal(size=2),
                                     zeta2=rng.normal(size=2),
                                     chi=rng.normal(size=2)))
        sols = regulator_solutions(scn)
        z1, z2 = error_coordinates(scn, state, sols)
        e = forward_kinematics(scn.model, state.q) - scn.x_d
        xihat = state.ctl.chi + scn.gains.h * state.q
        from taskreg.dynamics import dynamics_matrices, JointState
        H = dynamics_matrices(scn.model,
                              JointState(q=state.q, xi=state.xi)).H
        expected = (0.5 * (z1 @ z1 + z2 @ z2)
                    + 0.5 * scn.gains.kd / scn.gains.h
                    * np.sum(np.log(np.cosh(xihat)))
                    + 0.5 * scn.gains.kp * np.log(1 + e @ e)
                    + 0.5 * state.xi @ (H @ state.xi))
        assert storage_eval("U", scn, state, sols) == pytest.approx(expected,
                                                                    rel=1e-12)


class TestMetrics:
    def _log_with_error(self, en, dt=0.1):
        n = len(en)
        z = np.zeros((n, 2))
        e = np.column_stack([en, np.zeros(n)])
        scn = small_scenario(t_end=dt * (n - 1) if n > 1 else 1.0, dt=dt)
        return TrajectoryLog(t=np.arange(n) * dt, w=np.zeros((n, scn.exo.p)),
                             q=z, xi=z, e=e, u=z, d1=z, d2=z, d=z, xihat=z,
                             storage=np.ones(n), detJ=np.ones(n), ctl=z,
                             scenario=scn)

    def test_settling_zero_when_always_below(self):
        m = metrics(self._log_with_error([1e-5] * 30), tol=1e-3)
        assert m.settling_time == 0.0

    def test_settling_last_crossing(self):
        en = [1.0] * 10 + [1e-5] * 20
        m = metrics(self._log_with_error(en), tol=1e-3)
        assert m.settling_time == pytest.approx(1.0)

    def test_unsettled_reports_horizon(self):
        m = metrics(self._log_with_error([1.0] * 30), tol=1e-3)
        assert m.settling_time == pytest.approx(2.9)

    def test_steady_state_error_last_tenth(self):
        en = [1.0] * 90 + [0.25] * 10
        m = metrics(self._log_with_error(en), tol=1e-3)
        assert m.steady_state_error == pytest.approx(0.25)


class TestSteadyOrbit:
    def test_invariant_orbit_suite(self):
        for r in verify.suite_steady_state(None):
            assert r.passed, f"{r.name}: {r.value} vs {r.tolerance}"
