"""Internal-model synthesis and the regulator-equation algebra.

Covers construction of the skew oscillator pairs (A, B), solution of the
regulator (Sylvester) equations for the steady-state map Sigma, PBH-style
observability tests in real arithmetic, and the regression recovery of Sigma
from the stacked observability data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ManipulatorParams, jacobian
from .exosystem import ExosystemSpec

RANK_REL_TOL = 1e-10
SIGMA_ACCEPT_TOL = 1e-9
SIGMA_SOLVE_TOL = 1e-6


class NoSolutionError(ValueError):
    """The regulator equations admit no solution for the given data."""


@dataclass(frozen=True)
class InternalModelSpec:
    """Oscillator pair (A, B) for one disturbance side.

    A is block-diagonal skew with one 2x2 rotation block per requested
    frequency; B is the matching 0/1 injection map with one column per
    channel.
    """

    A: np.ndarray
    B: np.ndarray
    target_kind: str = "torque"

    @property
    def ell(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class RegulatorSolution:
    """Solution Sigma of Sigma S = A Sigma, B^T Sigma + D = 0 with residuals."""

    sigma: np.ndarray
    residual_sylvester: float
    residual_output: float

    @property
    def accepted(self) -> bool:
        return (self.residual_sylvester < SIGMA_ACCEPT_TOL
                and self.residual_output < SIGMA_ACCEPT_TOL)


@dataclass(frozen=True)
class Assumption2Report:
    """Numerical verdicts for the internal-model design conditions."""

    skew_defect: float
    min_singular_value: float
    observable: bool

    @property
    def passed(self) -> bool:
        return (self.skew_defect < 1e-12 and self.min_singular_value > 1e-12
                and self.observable)


def build_internal_model(frequencies, n_joints: int, channel_map=None,
                         target_kind: str = "torque") -> InternalModelSpec:
    """Construct the block-diagonal oscillator pair for the given frequencies.

    Parameters
    ----------
    frequencies : sequence of float
        Positive frequencies (rad/s), one oscillator block each.
    n_joints : int
        Number of channels; B gets one column per channel.
    channel_map : sequence of int, optional
        1-based channel for each frequency. Defaults to 1..n_joints in order
        when one frequency per channel is given.

    Blocks are grouped by channel, preserving per-channel input order, so a
    one-frequency-per-channel request yields A = diag(rot(w_1), ..., rot(w_n))
    and B = diag([1, 0]^T, ..., [1, 0]^T).
    """
    frequencies = [float(f) for f in frequencies]
    if not frequencies:
        raise ValueError("at least one frequency is required")
    if channel_map is None:
        if len(frequencies) != n_joints:
            raise ValueError("channel_map is required unless exactly one "
                             "frequency per channel is given")
        channel_map = list(range(1, n_joints + 1))
    channel_map = [int(c) for c in channel_map]
    if len(channel_map) != len(frequencies):
        raise ValueError("channel_map and frequencies must have equal length")

    per_channel: dict[int, list[float]] = {c: [] for c in range(1, n_joints + 1)}
    for f, c in zip(frequencies, channel_map):
        if f <= 0:
            raise ValueError("internal-model frequencies must be > 0")
        if not 1 <= c <= n_joints:
            raise ValueError(f"channel {c} out of range 1..{n_joints}")
        if f in per_channel[c]:
            raise ValueError(f"duplicate frequency {f} on channel {c}")
        per_channel[c].append(f)

    ell = 2 * len(frequencies)
    A = np.zeros((ell, ell))
    B = np.zeros((ell, n_joints))
    off = 0
    for c in range(1, n_joints + 1):
        for f in per_channel[c]:
            A[off, off + 1] = f
            A[off + 1, off] = -f
            B[off, c - 1] = 1.0
            off += 2
    return InternalModelSpec(A=A, B=B, target_kind=target_kind)


def validate_assumption2(spec: InternalModelSpec) -> Assumption2Report:
    """Check skew-symmetry and nonsingularity of A and observability of (A, B^T)."""
    skew = float(np.max(np.abs(spec.A + spec.A.T)))
    svals = np.linalg.svd(spec.A, compute_uv=False)
    return Assumption2Report(
        skew_defect=skew,
        min_singular_value=float(svals[-1]) if svals.size else 0.0,
        observable=pbh_observable(spec.A, spec.B.T),
    )


def solve_sigma(A: np.ndarray, B: np.ndarray, S: np.ndarray,
                D: np.ndarray) -> RegulatorSolution:
    """Solve Sigma S = A Sigma and B^T Sigma + D = 0 jointly for Sigma.

    Both equations are stacked as one linear system in vec(Sigma) via
    Kronecker lifting and solved by least squares, which returns the
    minimum-norm solution when the system is underdetermined. Residuals are
    re-evaluated from Sigma itself, independently of the solver.

    Raises
    ------
    NoSolutionError
        If the residual exceeds SIGMA_SOLVE_TOL, i.e. the data admit no
        solution and the internal model cannot match the exosystem.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    S = np.asarray(S, dtype=float)
    D = np.asarray(D, dtype=float)
    ell, p = A.shape[0], S.shape[0]
    if B.shape[0] != ell or D.shape != (B.shape[1], p):
        raise ValueError("inconsistent dimensions for regulator equations")

    # vec is column-major stacking: vec(Sigma S - A Sigma) =
    # (S^T kron I - I kron A) vec(Sigma), vec(B^T Sigma) = (I kron B^T) vec.
    M = np.vstack([
        np.kron(S.T, np.eye(ell)) - np.kron(np.eye(p), A),
        np.kron(np.eye(p), B.T),
    ])
    rhs = np.concatenate([np.zeros(ell * p), -D.flatten(order="F")])
    vec, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    sigma = vec.reshape((ell, p), order="F")

    res_syl = float(np.max(np.abs(sigma @ S - A @ sigma)))
    res_out = float(np.max(np.abs(B.T @ sigma + D)))
    if max(res_syl, res_out) > SIGMA_SOLVE_TOL:
        raise NoSolutionError(
            f"regulator equations are infeasible: residuals "
            f"{res_syl:.3e} / {res_out:.3e} exceed {SIGMA_SOLVE_TOL:.1e}")
    return RegulatorSolution(sigma=sigma, residual_sylvester=res_syl,
                             residual_output=res_out)


def _real_lift_rank(M_real: np.ndarray, M_imag: np.ndarray) -> int:
    """Complex matrix rank computed on the real 2x-dimensional lifting."""
    lifted = np.block([[M_real, -M_imag], [M_imag, M_real]])
    svals = np.linalg.svd(lifted, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    real_rank = int(np.sum(svals > RANK_REL_TOL * svals[0]))
    return real_rank // 2


def pbh_observable(A: np.ndarray, C: np.ndarray) -> bool:
    """PBH observability test: rank [sI - A; C] = dim A at every eigenvalue s.

    Eigenvalues come in complex pairs; each rank evaluation is lifted to a
    real system of twice the size so no complex factorization is needed.
    Rank is judged by singular values with a relative threshold.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    ell = A.shape[0]
    for s in np.linalg.eigvals(A):
        top_r = s.real * np.eye(ell) - A
        top_i = s.imag * np.eye(ell)
        M_real = np.vstack([top_r, C])
        M_imag = np.vstack([top_i, np.zeros_like(C)])
        if _real_lift_rank(M_real, M_imag) < ell:
            return False
    return True


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Classical observability matrix [C; CA; ...; CA^{l-1}]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def matrix_rank(M: np.ndarray) -> int:
    """Singular-value rank with the module-wide relative threshold."""
    svals = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    return int(np.sum(svals > RANK_REL_TOL * svals[0]))


def composite_observable(A1: np.ndarray, C1: np.ndarray, A2: np.ndarray,
                         C2: np.ndarray, T: np.ndarray) -> bool:
    """Observability of (diag(A1, A2), [C1, T C2]).

    Requires T of full column rank and each (Ai, Ci) observable; violations
    raise instead of silently returning. With disjoint spectra of A1 and A2
    the composite pair is guaranteed observable; overlapping spectra may
    legitimately come out unobservable.
    """
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    C1 = np.atleast_2d(np.asarray(C1, dtype=float))
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if matrix_rank(T) < T.shape[1]:
        raise ValueError("T must have full column rank")
    if not pbh_observable(A1, C1):
        raise ValueError("(A1, C1) is not observable")
    if not pbh_observable(A2, C2):
        raise ValueError("(A2, C2) is not observable")

    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = A1
    A[n1:, n1:] = A2
    C = np.hstack([C1, T @ C2])
    return pbh_observable(A, C)


def stack_pair(im1: InternalModelSpec, im2: InternalModelSpec):
    """Block-diagonal (A, B) of the torque-side and force-side models."""
    l1, l2 = im1.ell, im2.ell
    n = im1.B.shape[1]
    A = np.zeros((l1 + l2, l1 + l2))
    A[:l1, :l1] = im1.A
    A[l1:, l1:] = im2.A
    B = np.zeros((l1 + l2, 2 * n))
    B[:l1, :n] = im1.B
    B[l1:, n:] = im2.B
    return A, B


def sigma_via_regression(im1: InternalModelSpec, im2: InternalModelSpec,
                         exo: ExosystemSpec, params: ManipulatorParams,
                         q: np.ndarray) -> np.ndarray:
    """Recover the stacked Sigma from the observability-style regression.

    Builds Phi1 with row blocks Gamma^T B^T A^k and Phi2 with row blocks
    Gamma^T D S^k for k = 0..l-1, where Gamma(q) = [I; J(q)], and returns
    the least-squares Sigma of Phi1 Sigma + Phi2 = 0. When the regulator
    equations hold and the two models have disjoint spectra, this equals the
    stacked solve_sigma result.

    Raises
    ------
    ValueError
        If J(q) is singular (the mixing map of the composite observability
        argument must be injective) or Phi1 is rank deficient.
    """
    A, B = stack_pair(im1, im2)
    ell = A.shape[0]
    J = jacobian(params, q)
    n = J.shape[1]
    if matrix_rank(J) < n:
        raise ValueError(f"Jacobian is singular at q = {np.asarray(q)}; the "
                         "recovery regression requires full-rank J")
    Gamma = np.vstack([np.eye(n), J])
    D = np.vstack([exo.D1, exo.D2])

    base1 = Gamma.T @ B.T
    base2 = Gamma.T @ D
    rows1, rows2 = [base1], [base2]
    for _ in range(ell - 1):
        rows1.append(rows1[-1] @ A)
        rows2.append(rows2[-1] @ exo.S)
    Phi1 = np.vstack(rows1)
    Phi2 = np.vstack(rows2)

    if matrix_rank(Phi1) < ell:
        raise ValueError(
            "Phi1 is rank deficient: the composite pair is unobservable at "
            "this configuration (Jacobian singular or spectra overlap)")
    sigma, *_ = np.linalg.lstsq(Phi1, -Phi2, rcond=None)
    return sigma
