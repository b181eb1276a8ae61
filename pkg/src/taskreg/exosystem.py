"""Harmonic exosystem generating joint-torque and end-effector-force disturbances.

The generator is w_dot = S w with S built from 2x2 rotation blocks, one block
per distinct frequency. Amplitude and phase are encoded in the initial state
w0; the output maps D1 (torque side) and D2 (force side) are 0/1 selectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

TORQUE = "torque"
FORCE = "force"

# w0 block [F sin(phase), F cos(phase)] makes component 1 of the block equal
# F sin(w t + phase) and component 2 equal F cos(w t + phase).
_QUARTER_PERIOD = np.pi / 2


class BiasBlockWarning(UserWarning):
    """Constant-bias blocks make S singular, relaxing the distinct
    imaginary-eigenvalue assumption the stability results rely on."""


@dataclass(frozen=True)
class SinusoidSpec:
    """One sinusoidal disturbance component F sin(w t + phase) on a channel.

    frequency 0 requests a constant bias of value ``amplitude`` (phase must
    be 0 in that case).
    """

    frequency: float
    amplitude: float
    phase: float = 0.0
    channel: int = 1
    kind: str = TORQUE

    def __post_init__(self) -> None:
        if self.frequency < 0:
            raise ValueError("frequency must be >= 0")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if self.kind not in (TORQUE, FORCE):
            raise ValueError(f"kind must be '{TORQUE}' or '{FORCE}'")
        if self.channel < 1:
            raise ValueError("channel is a 1-based index")
        if self.frequency == 0 and self.phase != 0.0:
            raise ValueError("bias terms carry no phase; set phase=0")


@dataclass(frozen=True)
class ExosystemSpec:
    """Matrices (S, D1, D2) and initial state w0 of the disturbance generator.

    block_frequencies records the frequency of each diagonal block of S
    (0 for a 1x1 bias block), in order; it backs the closed-form solution.
    """

    S: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    w0: np.ndarray
    block_frequencies: tuple = field(default=())

    @property
    def p(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class DisturbanceSample:
    """Disturbance decomposition at one sampling configuration."""

    d1: np.ndarray
    d2: np.ndarray
    d: np.ndarray


def exo_from_sinusoids(specs: list[SinusoidSpec], n_joints: int) -> ExosystemSpec:
    """Build the exosystem realizing a finite list of sinusoid components.

    Components sharing a frequency share one oscillator block so that the
    eigenvalues of S stay distinct. Because the D matrices are restricted to
    0/1 selectors, components on a shared block must either match the first
    component's (amplitude, phase) exactly or sit a quarter period ahead of
    it; anything else is rejected.

    Raises
    ------
    ValueError
        Empty spec list, negative frequency, duplicate component on one
        channel, or an unrealizable shared block.
    """
    if not specs:
        raise ValueError("at least one sinusoid spec is required")

    seen: set[tuple[float, int, str]] = set()
    for sp in specs:
        key = (sp.frequency, sp.channel, sp.kind)
        if key in seen:
            raise ValueError(
                f"duplicate frequency {sp.frequency} on channel {sp.channel} "
                f"({sp.kind} side)")
        seen.add(key)
        if sp.channel > n_joints:
            raise ValueError(f"channel {sp.channel} exceeds n_joints={n_joints}")

    # One block per distinct frequency, ordered by first appearance.
    frequencies: list[float] = []
    leader: dict[float, SinusoidSpec] = {}
    for sp in specs:
        if sp.frequency not in leader:
            leader[sp.frequency] = sp
            frequencies.append(sp.frequency)

    sizes = [1 if f == 0.0 else 2 for f in frequencies]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    p = int(offsets[-1])

    S = np.zeros((p, p))
    w0 = np.zeros(p)
    D1 = np.zeros((n_joints, p))
    D2 = np.zeros((n_joints, p))

    for f, off, size in zip(frequencies, offsets, sizes):
        lead = leader[f]
        if size == 1:
            warnings.warn(
                "constant bias block requested: S is singular and its "
                "eigenvalues are no longer distinct on the imaginary axis",
                BiasBlockWarning, stacklevel=2)
            w0[off] = lead.amplitude
        else:
            S[off:off + 2, off:off + 2] = np.array([[0.0, f], [-f, 0.0]])
            w0[off] = lead.amplitude * np.sin(lead.phase)
            w0[off + 1] = lead.amplitude * np.cos(lead.phase)

    for sp in specs:
        off = int(offsets[frequencies.index(sp.frequency)])
        lead = leader[sp.frequency]
        if sp.frequency == 0.0:
            if sp.amplitude != lead.amplitude:
                raise ValueError(
                    "bias components sharing the zero-frequency block must "
                    "have equal amplitude (D entries are 0/1 selectors)")
            col = off
        elif sp.amplitude == lead.amplitude and _same_angle(sp.phase, lead.phase):
            col = off
        elif sp.amplitude == lead.amplitude and _same_angle(
                sp.phase, lead.phase + _QUARTER_PERIOD):
            col = off + 1
        else:
            raise ValueError(
                f"component at frequency {sp.frequency} cannot share the "
                "existing oscillator block: 0/1 selectors require equal "
                "amplitude and a phase equal to the block's or a quarter "
                "period ahead")
        D = D1 if sp.kind == TORQUE else D2
        D[sp.channel - 1, col] = 1.0

    return ExosystemSpec(S=S, D1=D1, D2=D2, w0=w0,
                         block_frequencies=tuple(frequencies))


def _same_angle(a: float, b: float) -> bool:
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi) < 1e-12


def exo_derivative(spec: ExosystemSpec, w: np.ndarray) -> np.ndarray:
    """Right-hand side S w of the linear exosystem."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.p,):
        raise ValueError(f"w has shape {w.shape}, expected ({spec.p},)")
    return spec.S @ w


def exo_solution(spec: ExosystemSpec, t: float) -> np.ndarray:
    """Closed-form w(t): each oscillator block is rotated by angle w*t.

    Serves as the independent oracle for the numerical integrator; block
    norms are preserved exactly.
    """
    w = np.empty(spec.p)
    off = 0
    for f in spec.block_frequencies:
        if f == 0.0:
            w[off] = spec.w0[off]
            off += 1
        else:
            c, s = np.cos(f * t), np.sin(f * t)
            b = spec.w0[off:off + 2]
            w[off] = c * b[0] + s * b[1]
            w[off + 1] = -s * b[0] + c * b[1]
            off += 2
    return w


def disturbance(spec: ExosystemSpec, w: np.ndarray, J: np.ndarray) -> DisturbanceSample:
    """Evaluate d1 = D1 w, d2 = D2 w and d = d1 + J^T d2."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.p,):
        raise ValueError(f"w has shape {w.shape}, expected ({spec.p},)")
    J = np.asarray(J, dtype=float)
    if J.shape[1] != spec.D1.shape[0]:
        raise ValueError("Jacobian column count does not match joint count")
    d1 = spec.D1 @ w
    d2 = spec.D2 @ w
    return DisturbanceSample(d1=d1, d2=d2, d=d1 + J.T @ d2)
