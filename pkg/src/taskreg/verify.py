"""Named verification suites: numerical checks of every structural property
the toolkit relies on, reported as measured defect vs tolerance.

The suites are self-contained (they build their own scenarios) so the
`verify` command can certify an installation without external data.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import controllers as ctl
from .config import load_scenario, bundled_scenario_path
from .dynamics import (JointState, ManipulatorParams, dynamics_matrices,
                       forward_dynamics, forward_kinematics, gravity_torque,
                       inertia_rate, inverse_kinematics, jacobian, jacobian_fd)
from .exosystem import SinusoidSpec, exo_from_sinusoids, exo_solution
from .internal_model import (build_internal_model, composite_observable,
                             matrix_rank, observability_matrix,
                             pbh_observable, sigma_via_regression, solve_sigma,
                             stack_pair, validate_assumption2)
from .simulation import (FULL_STATE, PASSIVE_P1, PASSIVE_P2, SATURATED,
                         VELOCITY_FREE, _CompiledLoop, Scenario, rk4_step,
                         regulator_solutions, simulate,
                         steady_state_controller_init, storage_eval)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""


class _Context:
    """Caches the bundled scenario and its expensive rollouts across suites."""

    def __init__(self):
        self._scn = None
        self._logs = {}

    @property
    def scenario(self) -> Scenario:
        if self._scn is None:
            self._scn = load_scenario(bundled_scenario_path())
        return self._scn

    def log(self, controller: str, matched_filter: bool = False):
        key = (controller, matched_filter)
        if key not in self._logs:
            scn = replace(self.scenario, controller=controller)
            if matched_filter:
                scn = replace(scn, ctl0=ctl.VelocityFreeCtlState(
                    zeta1=np.zeros(scn.im1.ell), zeta2=np.zeros(scn.im2.ell),
                    chi=-scn.gains.h * np.asarray(scn.q0)))
            self._logs[key] = simulate(scn)[0]
        return self._logs[key]


def _bool_check(suite, name, ok, note=""):
    return CheckResult(suite, name, value=0.0 if ok else 1.0, tolerance=0.5,
                       passed=bool(ok), note=note)


def _tol_check(suite, name, value, tol, note=""):
    return CheckResult(suite, name, value=float(value), tolerance=float(tol),
                       passed=bool(value < tol), note=note)


# ---------------------------------------------------------------------------
# dynamics

def suite_dynamics(ctx) -> list[CheckResult]:
    params = ManipulatorParams()
    rng = np.random.default_rng(2024)
    out = []

    qs = rng.uniform(-np.pi, np.pi, size=(1000, 2))
    min_eig = np.inf
    sym_defect = 0.0
    for q in qs:
        H = dynamics_matrices(params, JointState(q=q, xi=np.zeros(2))).H
        min_eig = min(min_eig, np.linalg.eigvalsh(H).min())
        sym_defect = max(sym_defect, np.max(np.abs(H - H.T)))
    out.append(CheckResult("dynamics", "inertia min eigenvalue (1000 samples)",
                           value=float(min_eig), tolerance=0.0,
                           passed=min_eig > 0.0, note="require > 0"))
    out.append(_tol_check("dynamics", "inertia symmetry defect", sym_defect, 1e-15))

    skew = 0.0
    for _ in range(1000):
        st = JointState(q=rng.uniform(-np.pi, np.pi, 2), xi=rng.normal(0, 2, 2))
        M = inertia_rate(params, st) - 2 * dynamics_matrices(params, st).C
        skew = max(skew, np.max(np.abs(M + M.T)))
    out.append(_tol_check("dynamics", "skew defect of Hdot - 2C (1000 samples)",
                          skew, 1e-9))

    jd = max(np.max(np.abs(jacobian(params, q) - jacobian_fd(params, q)))
             for q in rng.uniform(-np.pi, np.pi, size=(200, 2)))
    out.append(_tol_check("dynamics", "analytic vs FD Jacobian (200 samples)",
                          jd, 1e-6))

    out.append(_tol_check("dynamics", "kinetic-energy rate identity",
                          _energy_rate_defect(params), 1e-6))
    return out


def _energy_rate_defect(params: ManipulatorParams) -> float:
    """Max pointwise defect of d/dt(kinetic) = xi^T (u + d - g) on a rollout."""
    u = np.array([0.3, -0.2])
    d = np.array([0.05, 0.1])

    def f(t, y):
        st = JointState(q=y[:2], xi=y[2:])
        return np.concatenate([y[2:], forward_dynamics(params, st, u, d)])

    dt, n = 1e-4, 5000
    y = np.concatenate([[0.3, 0.9], [0.0, 0.0]])
    kin = np.empty(n + 1)
    pwr = np.empty(n + 1)
    for k in range(n + 1):
        st = JointState(q=y[:2], xi=y[2:])
        H = dynamics_matrices(params, st).H
        kin[k] = 0.5 * st.xi @ (H @ st.xi)
        pwr[k] = st.xi @ (u + d - gravity_torque(params, st.q))
        if k < n:
            y = rk4_step(f, y, k * dt, dt)
    fd = (kin[2:] - kin[:-2]) / (2 * dt)
    scale = max(1.0, np.max(np.abs(pwr)))
    return float(np.max(np.abs(fd - pwr[1:-1])) / scale)


# ---------------------------------------------------------------------------
# exosystem

def _paper_specs() -> list[SinusoidSpec]:
    return [SinusoidSpec(1.0, 0.1, 0.0, 1, "torque"),
            SinusoidSpec(3.0, 0.1, 0.0, 2, "torque"),
            SinusoidSpec(2.0, 0.1, 0.0, 1, "force"),
            SinusoidSpec(4.0, 0.1, 0.0, 2, "force")]


def suite_exosystem(ctx) -> list[CheckResult]:
    exo = exo_from_sinusoids(_paper_specs(), 2)
    out = [_tol_check("exosystem", "S skew-symmetry defect",
                      np.max(np.abs(exo.S + exo.S.T)), 1e-15)]

    dt, n = 1e-3, 20000
    w = exo.w0.copy()
    worst = 0.0
    f = lambda t, ww: exo.S @ ww
    for k in range(n):
        w = rk4_step(f, w, k * dt, dt)
    worst = np.max(np.abs(w - exo_solution(exo, n * dt)))
    out.append(_tol_check("exosystem", "RK4 vs closed form over 20 s", worst, 1e-8))

    rng = np.random.default_rng(7)
    lin = 0.0
    J = jacobian(ManipulatorParams(), np.array([0.4, 1.1]))
    from .exosystem import disturbance
    for _ in range(50):
        wv = rng.normal(size=exo.p)
        a = rng.normal()
        lin = max(lin, np.max(np.abs(disturbance(exo, a * wv, J).d
                                     - a * disturbance(exo, wv, J).d)))
    out.append(_tol_check("exosystem", "output linearity in w", lin, 1e-12))
    return out


# ---------------------------------------------------------------------------
# sylvester / regulator equations

def suite_sylvester(ctx) -> list[CheckResult]:
    scn = ctx.scenario
    out = []
    sol1, sol2 = regulator_solutions(scn)
    sides = (("torque side", scn.im1, scn.exo.D1, sol1),
             ("force side", scn.im2, scn.exo.D2, sol2))
    for name, im, Dm, sol in sides:
        out.append(_tol_check("sylvester", f"Sigma S = A Sigma residual ({name})",
                              np.max(np.abs(sol.sigma @ scn.exo.S
                                            - im.A @ sol.sigma)), 1e-9))
        out.append(_tol_check("sylvester", f"B^T Sigma + D residual ({name})",
                              np.max(np.abs(im.B.T @ sol.sigma + Dm)), 1e-9))

    stacked = np.vstack([sol1.sigma, sol2.sigma])
    sig_reg = sigma_via_regression(scn.im1, scn.im2, scn.exo, scn.model,
                                   np.array(scn.q0))
    out.append(_tol_check("sylvester", "regression Sigma vs stacked Sylvester",
                          np.max(np.abs(sig_reg - stacked)), 1e-6))

    zero_sol = solve_sigma(scn.im1.A, scn.im1.B, scn.exo.S,
                           np.zeros_like(scn.exo.D1))
    out.append(_tol_check("sylvester", "D = 0 gives Sigma = 0",
                          np.max(np.abs(zero_sol.sigma)), 1e-12))
    return out


# ---------------------------------------------------------------------------
# observability

def _random_pair(rng):
    """Random (A, C); unobservable by construction in a third of the draws."""
    ell = int(rng.integers(2, 9))
    r = int(rng.integers(1, 4))
    if rng.random() < 1 / 3 and ell >= 2:
        k = int(rng.integers(1, ell))
        A = np.zeros((ell, ell))
        A[:k, :k] = rng.normal(size=(k, k))
        A[k:, :k] = rng.normal(size=(ell - k, k))
        A[k:, k:] = rng.normal(size=(ell - k, ell - k))
        C = np.hstack([rng.normal(size=(r, k)), np.zeros((r, ell - k))])
        T = rng.normal(size=(ell, ell)) + 0.5 * np.eye(ell)
        Ti = np.linalg.inv(T)
        return Ti @ A @ T, C @ T
    return rng.normal(size=(ell, ell)), rng.normal(size=(r, ell))


def suite_observability(ctx) -> list[CheckResult]:
    rng = np.random.default_rng(11)
    out = []

    disagreements = 0
    for _ in range(500):
        A, C = _random_pair(rng)
        classical = matrix_rank(observability_matrix(A, C)) == A.shape[0]
        if pbh_observable(A, C) != classical:
            disagreements += 1
    out.append(CheckResult("observability",
                           "PBH vs observability-matrix rank (500 pairs)",
                           value=float(disagreements), tolerance=0.0,
                           passed=disagreements == 0, note="require 0"))

    failures = 0
    for _ in range(100):
        A1, C1, A2, C2, T = _lemma_instance(rng)
        if not composite_observable(A1, C1, A2, C2, T):
            failures += 1
    out.append(CheckResult("observability",
                           "disjoint-spectra composites observable (100 draws)",
                           value=float(failures), tolerance=0.0,
                           passed=failures == 0, note="require 0"))

    rep = validate_assumption2(ctx.scenario.im1)
    out.append(_bool_check("observability", "bundled internal model passes "
                           "design conditions", rep.passed))
    return out


def _lemma_instance(rng):
    """Observable pairs with disjoint spectra and an injective mixing T."""
    while True:
        n1 = int(rng.integers(2, 6))
        n2 = int(rng.integers(2, 6))
        q1 = int(rng.integers(1, 4))
        q2 = int(rng.integers(1, q1 + 1))
        A1 = rng.normal(size=(n1, n1))
        A2 = rng.normal(size=(n2, n2))
        e1 = np.linalg.eigvals(A1)
        e2 = np.linalg.eigvals(A2)
        if min(abs(a - b) for a in e1 for b in e2) < 1e-2:
            continue
        C1 = rng.normal(size=(q1, n1))
        C2 = rng.normal(size=(q2, n2))
        T = rng.normal(size=(q1, q2))
        if matrix_rank(T) < q2:
            continue
        if pbh_observable(A1, C1) and pbh_observable(A2, C2):
            return A1, C1, A2, C2, T


# ---------------------------------------------------------------------------
# passivity / losslessness / dissipation

def _passive_scenario(controller: str) -> Scenario:
    scn = load_scenario(bundled_scenario_path())
    zero_exo = exo_from_sinusoids([SinusoidSpec(1.0, 0.0)], 2)
    return replace(scn, controller=controller, exo=zero_exo, t_end=10.0)


def suite_passivity(ctx) -> list[CheckResult]:
    out = []
    for kind, name in ((PASSIVE_P1, "joint-output regulator"),
                       (PASSIVE_P2, "task-output regulator")):
        log, m = simulate(_passive_scenario(kind))
        defect = np.max(np.abs(log.storage - log.storage[0])) / log.storage[0]
        out.append(_tol_check("passivity", f"storage conservation, {name} "
                              "(10 s, zero input)", defect, 1e-6))
    return out


def suite_losslessness(ctx) -> list[CheckResult]:
    # The modified error system is evaluated on a filter-matched start: the
    # zero-filter surrogate peak is too fast for central differences on the
    # logging grid, while the disturbance transient is unchanged.
    out = []
    for kind, matched, storage_kind, name in (
            (FULL_STATE, False, "V2", "full-state error system"),
            (VELOCITY_FREE, True, "V3", "modified error system")):
        log = ctx.log(kind, matched_filter=matched)
        defect = error_storage_rate_defect(log, storage_kind)
        out.append(_tol_check("losslessness", f"FD storage rate vs supply, "
                              f"{name}", defect, 1e-5))
    return out


def error_storage_rate_defect(log, storage_kind: str) -> float:
    """Max pointwise |d/dt storage + xi^T output| along a logged run.

    The error system is lossless: its storage rate equals the inner product
    of the joint velocity with the (sign-reversed) error-system output.
    """
    from .simulation import error_coordinates, error_system_output
    scn = log.scenario
    solutions = regulator_solutions(scn)
    n = log.t.size
    dt = float(log.t[1] - log.t[0])
    loop = _CompiledLoop(scn)
    V = np.empty(n)
    sup = np.empty(n)
    for k in range(n):
        state = _state_at(log, loop, k)
        V[k] = storage_eval(storage_kind, scn, state, solutions)
        sup[k] = -state.xi @ error_system_output(scn, state, solutions)
    fd = (V[2:] - V[:-2]) / (2 * dt)
    return float(np.max(np.abs(fd - sup[1:-1])))


def _state_at(log, loop, k):
    y = np.empty(loop.dim)
    y[loop.sl_w] = log.w[k]
    y[loop.sl_q] = log.q[k]
    y[loop.sl_xi] = log.xi[k]
    y[loop.sl_ctl] = log.ctl[k]
    return loop.unpack(y)


def suite_dissipation(ctx) -> list[CheckResult]:
    out = []
    slack = 1e-9
    for kind, name in ((FULL_STATE, "V (full state)"),
                       (VELOCITY_FREE, "Vbar (velocity free)")):
        log = ctx.log(kind)
        worst = float(np.max(np.diff(log.storage)))
        out.append(CheckResult("dissipation", f"monotone {name}", value=worst,
                               tolerance=slack, passed=worst < slack,
                               note="max per-step increase"))

    log = ctx.log(VELOCITY_FREE)
    defect = vbar_identity_defect(log, t_start=1.0)
    out.append(_tol_check("dissipation", "Vbar dissipation identity on "
                          "[1, t_end]", defect, 1e-4))
    return out


def vbar_identity_defect(log, t_start: float = 1.0) -> float:
    """Relative defect of Vbar(t2) - Vbar(t1) = -kd integral of |xihat|^2.

    Starts after the filter transient: trapezoidal quadrature on the logging
    grid cannot resolve the initial surrogate-velocity peak, which decays on
    the 1/h time scale.
    """
    scn = log.scenario
    k0 = int(np.searchsorted(log.t, t_start))
    dt = float(log.t[1] - log.t[0])
    integrand = np.sum(log.xihat[k0:] ** 2, axis=1)
    change = log.storage[-1] - log.storage[k0]
    supplied = -scn.gains.kd * np.trapezoid(integrand, dx=dt)
    return float(abs(change - supplied) / max(abs(log.storage[k0]), 1e-300))


# ---------------------------------------------------------------------------
# integration order

def _final_state(scn: Scenario, dt: float, t_end: float) -> np.ndarray:
    loop = _CompiledLoop(scn)
    y = loop.initial_state()
    n = int(round(t_end / dt))
    for k in range(n):
        y = rk4_step(loop.rhs, y, k * dt, dt)
    return y


def suite_integration(ctx) -> list[CheckResult]:
    out = []
    one = rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)[0]
    out.append(_tol_check("integration", "scalar RK4 tableau value",
                          abs(one - 0.9048375), 1e-12))

    scn = ctx.scenario
    t_end = 2.0
    ref = _final_state(scn, 1e-4, t_end)
    dts = np.array([4e-3, 2e-3, 1e-3])
    errs = np.array([np.linalg.norm(_final_state(scn, d, t_end) - ref)
                     for d in dts])
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    out.append(CheckResult("integration", "observed RK4 order (2 s horizon)",
                           value=float(slope), tolerance=3.5,
                           passed=slope >= 3.5, note="require >= 3.5"))

    w_exo = exo_from_sinusoids(_paper_specs(), 2)
    y = w_exo.w0.copy()
    f = lambda t, ww: w_exo.S @ ww
    for k in range(20000):
        y = rk4_step(f, y, k * 1e-3, 1e-3)
    out.append(_tol_check("integration", "exosystem vs rotation closed form",
                          np.max(np.abs(y - exo_solution(w_exo, 20.0))), 1e-8))
    return out


# ---------------------------------------------------------------------------
# converged steady state (long horizon)

def converged_scenario(controller: str) -> Scenario:
    """Bundled setup placed directly on its steady orbit.

    Convergence of the internal-model transient under the reference gains
    takes hundreds of seconds, so instead of burning that horizon the run is
    started from the analytic steady state; the identities below then hold
    from t = 0 and the check certifies that the simulated loop stays on the
    invariant orbit.
    """
    scn = load_scenario(bundled_scenario_path())
    q_star = inverse_kinematics(scn.model, scn.x_d)
    scn = replace(scn, controller=controller, q0=q_star, xi0=np.zeros(2))
    return replace(scn, ctl0=steady_state_controller_init(scn))


def suite_steady_state(ctx) -> list[CheckResult]:
    out = []
    for controller, law_name in ((VELOCITY_FREE, "velocity-free"),
                                 (FULL_STATE, "full-state")):
        scn = converged_scenario(controller)
        log, m = simulate(scn)
        tail = log.t >= 0.9 * scn.t_end

        resid = np.max(np.abs(log.u[tail] + log.d[tail]
                              - np.array([gravity_torque(scn.model, q)
                                          for q in log.q[tail]])))
        out.append(_tol_check("steady-state", f"torque identity u + d = g "
                              f"({law_name})", resid, 1e-3))

        loop = _CompiledLoop(scn)
        worst = 0.0
        for k in np.nonzero(tail)[0][::5]:
            state = _state_at(log, loop, k)
            J = jacobian(scn.model, state.q)
            if controller == FULL_STATE:
                comp = ctl.full_state_im_output(state.ctl, scn.im1, scn.im2, J)
            else:
                meas = ctl.Measurement(
                    q=state.q,
                    e=forward_kinematics(scn.model, state.q) - scn.x_d)
                comp = ctl.velocity_free_im_output(state.ctl, meas, scn.im1,
                                                   scn.im2, J)
            worst = max(worst, np.max(np.abs(comp + log.d[k])))
        out.append(_tol_check("steady-state", f"internal-model compensation "
                              f"equals -d ({law_name})", worst, 1e-3))
        out.append(_tol_check("steady-state", f"error stays settled "
                              f"({law_name})", m.steady_state_error, 1e-3))
    return out


SUITES = {
    "dynamics": suite_dynamics,
    "exosystem": suite_exosystem,
    "sylvester": suite_sylvester,
    "observability": suite_observability,
    "passivity": suite_passivity,
    "losslessness": suite_losslessness,
    "dissipation": suite_dissipation,
    "integration": suite_integration,
    "steady-state": suite_steady_state,
}


def run_suites(names) -> list[CheckResult]:
    """Run the named suites (or all) and return their check results."""
    if names == "all" or names == ["all"]:
        selected = list(SUITES)
    else:
        selected = [names] if isinstance(names, str) else list(names)
        unknown = [s for s in selected if s not in SUITES]
        if unknown:
            raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    ctx = _Context()
    results = []
    for name in selected:
        results.extend(SUITES[name](ctx))
    return results
