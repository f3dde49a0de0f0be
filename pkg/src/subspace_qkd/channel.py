"""Collective random-unitary channel with photon loss and an optional
intercept-resend eavesdropper."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from subspace_qkd.qmath import (
    LocalBasis,
    TwoQubitState,
    collective_apply_batch,
    measure_pairs_batch,
    unitary_batch,
)


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError("Fixed value must be finite")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class UniformRange:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("UniformRange bounds must be finite")
        if self.lo > self.hi:
            raise ValueError(f"UniformRange needs lo <= hi, got ({self.lo}, {self.hi})")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.sigma)):
            raise ValueError("Gaussian parameters must be finite")
        if self.sigma < 0:
            raise ValueError("Gaussian sigma must be non-negative")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # Not wrapped: theta only enters through cos/sin.
        return rng.normal(self.mean, self.sigma, size)


Distribution = Union[Fixed, UniformRange, Gaussian]


@dataclass(frozen=True)
class RotationSpec:
    theta: Distribution = field(default_factory=lambda: Fixed(0.0))
    phi: Distribution = field(default_factory=lambda: Fixed(0.0))
    delta: Distribution = field(default_factory=lambda: Fixed(0.0))


class EveMode(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND_Z = "intercept_resend_z"


@dataclass(frozen=True)
class ChannelConfig:
    rotation: RotationSpec = field(default_factory=RotationSpec)
    loss_prob: float = 0.0
    real_rotation_only: bool = False
    eve: EveMode = EveMode.NONE
    block_correlated: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError(f"loss_prob must lie in [0, 1], got {self.loss_prob!r}")
        if self.block_correlated < 1:
            raise ValueError("block_correlated must be >= 1")
        object.__setattr__(self, "eve", EveMode(self.eve))


def sample_rotations(
    spec: RotationSpec, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    theta = spec.theta.sample(rng, size)
    phi = spec.phi.sample(rng, size)
    delta = spec.delta.sample(rng, size)
    return theta, phi, delta


def sample_rotation(spec: RotationSpec, rng: np.random.Generator) -> tuple[float, float, float]:
    """One independent (theta, phi, delta) draw."""
    theta, phi, delta = sample_rotations(spec, rng, 1)
    return float(theta[0]), float(phi[0]), float(delta[0])


@dataclass
class TransmitBatch:
    """Channel output for a batch of codes.

    ``theta/phi/delta`` expose the rotation each code received (both of its
    photons got the same one). Rows of ``states`` where ``delivered`` is false
    are meaningless.
    """

    states: np.ndarray
    delivered: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    delta: np.ndarray


@dataclass(frozen=True)
class TransmitResult:
    state: TwoQubitState | None
    params: tuple[float, float, float]

    @property
    def lost(self) -> bool:
        return self.state is None


def channel_rotations(
    cfg: ChannelConfig, rng: np.random.Generator, size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-code rotation parameters honouring ``block_correlated`` and
    ``real_rotation_only``. Blocks restart at the start of each call."""
    block = cfg.block_correlated
    n_draws = -(-size // block)
    theta, phi, delta = sample_rotations(cfg.rotation, rng, n_draws)
    if block > 1:
        theta, phi, delta = (np.repeat(a, block)[:size] for a in (theta, phi, delta))
    if cfg.real_rotation_only:
        phi = np.zeros_like(phi)
        delta = np.zeros_like(delta)
    return theta, phi, delta


def survives_loss(loss_prob: float, rng: np.random.Generator, size: int, photons: int = 2) -> np.ndarray:
    u = rng.random((size, photons))
    return np.all(u >= loss_prob, axis=1)


def intercept_resend_z_batch(states: np.ndarray, u) -> np.ndarray:
    b1, b2 = measure_pairs_batch(states, LocalBasis.Z, u)
    out = np.zeros((len(b1), 4), dtype=np.complex128)
    out[np.arange(len(b1)), 2 * b1 + b2] = 1.0
    return out


def intercept_resend_z(s: TwoQubitState, rng: np.random.Generator) -> TwoQubitState:
    """Measure both photons in Z and resend the observed product state."""
    return TwoQubitState(intercept_resend_z_batch(s.amp[None], rng.random(1))[0])


def transmit_batch(states: np.ndarray, cfg: ChannelConfig, rng: np.random.Generator) -> TransmitBatch:
    """Send ``states`` (shape ``(n, 4)``) through the channel.

    Draw order per call: rotations, loss uniforms, then Eve's uniforms.
    Eve sits after the rotation, next to Bob.
    """
    states = np.asarray(states, dtype=np.complex128)
    n = states.shape[0]
    theta, phi, delta = channel_rotations(cfg, rng, n)
    out = collective_apply_batch(unitary_batch(theta, phi, delta), states)
    delivered = survives_loss(cfg.loss_prob, rng, n)
    if cfg.eve is EveMode.INTERCEPT_RESEND_Z:
        out = intercept_resend_z_batch(out, rng.random(n))
    return TransmitBatch(out, delivered, theta, phi, delta)


def transmit(s: TwoQubitState, cfg: ChannelConfig, rng: np.random.Generator) -> TransmitResult:
    res = transmit_batch(s.amp[None], cfg, rng)
    params = (float(res.theta[0]), float(res.phi[0]), float(res.delta[0]))
    if not res.delivered[0]:
        return TransmitResult(None, params)
    return TransmitResult(TwoQubitState(res.states[0]), params)
