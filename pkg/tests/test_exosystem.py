import numpy as np
import pytest

from taskreg.dynamics import ManipulatorParams, jacobian
from taskreg.exosystem import (BiasBlockWarning, SinusoidSpec, disturbance,
                               exo_derivative, exo_from_sinusoids, exo_solution)
from taskreg.simulation import rk4_step

ROT1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class TestConstruction:
    def test_single_torque_sinusoid(self):
        exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.1)], 2)
        assert np.array_equal(exo.S, ROT1)
        assert np.array_equal(exo.D1, [[1.0, 0.0], [0.0, 0.0]])
        assert np.array_equal(exo.D2, np.zeros((2, 2)))
        assert np.allclose(exo.w0, [0.0, 0.1])
        # D1 w(t) reproduces 0.1 sin(t)
        for t in [0.3, 1.7, 4.0]:
            d1 = exo.D1 @ exo_solution(exo, t)
            assert d1[0] == pytest.approx(0.1 * np.sin(t), abs=1e-12)

    def test_phase_encoding(self):
        exo = exo_from_sinusoids([SinusoidSpec(2.0, 0.3, phase=0.9)], 1)
        for t in [0.0, 0.5, 2.2]:
            d1 = exo.D1 @ exo_solution(exo, t)
            assert d1[0] == pytest.approx(0.3 * np.sin(2.0 * t + 0.9), abs=1e-12)

    def test_paper_set_structure(self, paper_exo):
        assert paper_exo.p == 8
        assert np.max(np.abs(paper_exo.S + paper_exo.S.T)) == 0.0
        eigs = np.sort_complex(np.linalg.eigvals(paper_exo.S))
        expected = np.sort_complex(
            [1j, -1j, 2j, -2j, 3j, -3j, 4j, -4j])
        assert np.allclose(eigs, expected, atol=1e-12)
        assert len(set(np.round(eigs, 9))) == 8
        assert np.all((paper_exo.D1 == 0) | (paper_exo.D1 == 1))
        assert np.all((paper_exo.D2 == 0) | (paper_exo.D2 == 1))

    def test_zero_amplitude_gives_zero_output(self):
        exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.0, phase=1.2)], 2)
        for t in np.linspace(0.0, 10.0, 17):
            assert np.all(exo.D1 @ exo_solution(exo, t) == 0.0)

    def test_shared_block_same_phase(self):
        specs = [SinusoidSpec(2.0, 0.5, 0.1, 1, "torque"),
                 SinusoidSpec(2.0, 0.5, 0.1, 2, "force")]
        exo = exo_from_sinusoids(specs, 2)
        assert exo.p == 2
        for t in [0.4, 1.9]:
            w = exo_solution(exo, t)
            assert (exo.D1 @ w)[0] == pytest.approx(0.5 * np.sin(2 * t + 0.1),
                                                    abs=1e-12)
            assert (exo.D2 @ w)[1] == pytest.approx(0.5 * np.sin(2 * t + 0.1),
                                                    abs=1e-12)

    def test_shared_block_quarter_period(self):
        specs = [SinusoidSpec(2.0, 0.5, 0.0, 1, "torque"),
                 SinusoidSpec(2.0, 0.5, np.pi / 2, 2, "torque")]
        exo = exo_from_sinusoids(specs, 2)
        assert exo.p == 2
        w = exo_solution(exo, 0.7)
        assert (exo.D1 @ w)[1] == pytest.approx(0.5 * np.cos(2 * 0.7), abs=1e-12)

    def test_rejections(self):
        with pytest.raises(ValueError):
            exo_from_sinusoids([], 2)
        with pytest.raises(ValueError):
            SinusoidSpec(-1.0, 0.1)
        with pytest.raises(ValueError):
            exo_from_sinusoids([SinusoidSpec(1.0, 0.1, 0.0, 1, "torque"),
                                SinusoidSpec(1.0, 0.2, 0.0, 1, "torque")], 2)
        with pytest.raises(ValueError):  # unrealizable shared block
            exo_from_sinusoids([SinusoidSpec(1.0, 0.1, 0.0, 1, "torque"),
                                SinusoidSpec(1.0, 0.2, 0.0, 2, "torque")], 2)
        with pytest.raises(ValueError):  # channel out of range
            exo_from_sinusoids([SinusoidSpec(1.0, 0.1, 0.0, 3, "torque")], 2)

    def test_bias_block_warns_and_is_constant(self):
        with pytest.warns(BiasBlockWarning):
            exo = exo_from_sinusoids([SinusoidSpec(0.0, 0.7),
                                      SinusoidSpec(1.0, 0.1, 0.0, 2)], 2)
        assert exo.p == 3
        assert np.linalg.matrix_rank(exo.S) == 2  # singular S
        for t in [0.0, 3.3]:
            assert (exo.D1 @ exo_solution(exo, t))[0] == pytest.approx(0.7)

    def test_bias_with_phase_rejected(self):
        with pytest.raises(ValueError):
            SinusoidSpec(0.0, 0.7, phase=0.3)


class TestEvaluation:
    def test_derivative_examples(self):
        exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.1)], 1)
        assert np.allclose(exo_derivative(exo, [0.0, 1.0]), [1.0, 0.0])
        assert np.all(exo_derivative(exo, [0.0, 0.0]) == 0.0)
        with pytest.raises(ValueError):
            exo_derivative(exo, [1.0, 2.0, 3.0])

    def test_period_of_unit_block(self, paper_exo):
        # integrate one full period of the omega = 1 block
        dt = 1e-3
        w = paper_exo.w0.copy()
        f = lambda t, ww: paper_exo.S @ ww
        n = int(round(2 * np.pi / dt))
        for k in range(n):
            w = rk4_step(f, w, k * dt, dt)
        w_exact = exo_solution(paper_exo, n * dt)
        assert np.allclose(w[:2], w_exact[:2], atol=1e-10)

    def test_solution_identity_and_isometry(self, paper_exo, rng):
        assert np.array_equal(exo_solution(paper_exo, 0.0), paper_exo.w0)
        for t in rng.uniform(0.0, 50.0, 10):
            w = exo_solution(paper_exo, t)
            for off in range(0, 8, 2):
                assert np.linalg.norm(w[off:off + 2]) == pytest.approx(
                    np.linalg.norm(paper_exo.w0[off:off + 2]), abs=1e-12)

    def test_quarter_period_rotation(self):
        exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.1)], 1)
        assert np.allclose(exo_solution(exo, np.pi / 2), [0.1, 0.0], atol=1e-15)

    def test_integrator_matches_closed_form(self, paper_exo):
        dt, n = 1e-3, 20000
        w = paper_exo.w0.copy()
        f = lambda t, ww: paper_exo.S @ ww
        for k in range(n):
            w = rk4_step(f, w, k * dt, dt)
        assert np.max(np.abs(w - exo_solution(paper_exo, 20.0))) < 1e-8


class TestDisturbance:
    def test_pure_torque_side(self, paper_exo, rng):
        import dataclasses
        exo = dataclasses.replace(paper_exo, D2=np.zeros_like(paper_exo.D2))
        J = jacobian(ManipulatorParams(), [0.4, 1.0])
        w = rng.normal(size=8)
        s = disturbance(exo, w, J)
        assert np.array_equal(s.d, exo.D1 @ w)

    def test_identity_jacobian_force_side(self, paper_exo, rng):
        import dataclasses
        exo = dataclasses.replace(paper_exo, D1=np.zeros_like(paper_exo.D1))
        w = rng.normal(size=8)
        s = disturbance(exo, w, np.eye(2))
        assert np.array_equal(s.d, s.d2)

    def test_paper_set_starts_at_zero(self, paper_exo):
        J = jacobian(ManipulatorParams(), [0.0, np.pi / 4])
        s = disturbance(paper_exo, exo_solution(paper_exo, 0.0), J)
        assert np.all(s.d1 == 0.0) and np.all(s.d2 == 0.0) and np.all(s.d == 0.0)

    def test_paper_set_values(self, paper_exo):
        # d1 = 0.1 [sin(t), sin(3t)], d2 = 0.1 [sin(2t), sin(4t)]
        J = jacobian(ManipulatorParams(), [0.3, 0.9])
        for t in [0.37, 2.0]:
            s = disturbance(paper_exo, exo_solution(paper_exo, t), J)
            assert np.allclose(s.d1, [0.1 * np.sin(t), 0.1 * np.sin(3 * t)],
                               atol=1e-12)
            assert np.allclose(s.d2, [0.1 * np.sin(2 * t), 0.1 * np.sin(4 * t)],
                               atol=1e-12)
            assert np.allclose(s.d, s.d1 + J.T @ s.d2, atol=1e-15)

    def test_linearity(self, paper_exo, rng):
        J = jacobian(ManipulatorParams(), [0.2, -0.7])
        for _ in range(20):
            w = rng.normal(size=8)
            a = rng.normal()
            assert np.allclose(disturbance(paper_exo, a * w, J).d,
                               a * disturbance(paper_exo, w, J).d, atol=1e-12)

    def test_dimension_mismatch(self, paper_exo):
        with pytest.raises(ValueError):
            disturbance(paper_exo, np.zeros(5), np.eye(2))
