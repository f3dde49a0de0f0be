"""Two-qubit state algebra: preparation, collective unitaries, Bell overlaps and
Born-rule sampling in local Z/X/Y bases.

Amplitudes are indexed by ``2*b1 + b2`` for the basis ket ``|b1 b2>``; qubit 1 is
the first-transmitted photon. Global phases are kept as-is.

Every scalar operation has a batched counterpart (``*_batch``) working on arrays
of shape ``(n, 4)``; the scalar versions are thin wrappers over the batched ones
so the simulator and the per-code API cannot drift apart.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

STATE_TOL = 1e-9
ALGEBRA_TOL = 1e-12

SQRT1_2 = 1.0 / math.sqrt(2.0)


class LocalBasis(enum.IntEnum):
    Z = 0
    X = 1
    Y = 2


class CodeBasis(enum.IntEnum):
    ZBasis = 0
    XBasis = 1


@dataclass(frozen=True)
class CodeLabel:
    """Alice's preparation record for one code.

    ``(ZBasis, 0) -> |01>``, ``(ZBasis, 1) -> |10>``,
    ``(XBasis, 0) -> |psi+>``, ``(XBasis, 1) -> |psi->``.
    """

    basis: CodeBasis
    bit: int

    def __post_init__(self) -> None:
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        object.__setattr__(self, "basis", CodeBasis(self.basis))

    @property
    def index(self) -> int:
        return 2 * int(self.basis) + self.bit


Z0 = CodeLabel(CodeBasis.ZBasis, 0)
Z1 = CodeLabel(CodeBasis.ZBasis, 1)
X0 = CodeLabel(CodeBasis.XBasis, 0)
X1 = CodeLabel(CodeBasis.XBasis, 1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    amp: np.ndarray

    def __post_init__(self) -> None:
        amp = _frozen(self.amp)
        if amp.shape != (4,):
            raise ValueError(f"expected 4 amplitudes, got shape {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("amplitudes must be finite")
        norm = float(np.sum(np.abs(amp) ** 2))
        if abs(norm - 1.0) > STATE_TOL:
            raise ValueError(f"state not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amp", amp)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TwoQubitState):
            return NotImplemented
        return bool(np.array_equal(self.amp, other.amp))

    def __hash__(self) -> int:
        return hash(self.amp.tobytes())

    def fidelity(self, other: TwoQubitState) -> float:
        return float(abs(np.vdot(self.amp, other.amp)) ** 2)

    @classmethod
    def ket(cls, b1: int, b2: int) -> TwoQubitState:
        amp = np.zeros(4, dtype=np.complex128)
        amp[2 * b1 + b2] = 1.0
        return cls(amp)


@dataclass(frozen=True, eq=False)
class Unitary2:
    m: np.ndarray

    def __post_init__(self) -> None:
        m = _frozen(self.m)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - np.eye(2)))
        if err > STATE_TOL:
            raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")
        object.__setattr__(self, "m", m)

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.m))


@dataclass(frozen=True)
class BellDistribution:
    p_psi_plus: float
    p_psi_minus: float
    p_phi_plus: float
    p_phi_minus: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_psi_plus, self.p_psi_minus, self.p_phi_plus, self.p_phi_minus)


@dataclass(frozen=True)
class OutcomePair:
    basis: LocalBasis
    bit1: int
    bit2: int

    @property
    def equal(self) -> bool:
        return self.bit1 == self.bit2


# Code states indexed by CodeLabel.index.
CODE_STATES = np.array(
    [
        [0, 1, 0, 0],
        [0, 0, 1, 0],
        [0, SQRT1_2, SQRT1_2, 0],
        [0, SQRT1_2, -SQRT1_2, 0],
    ],
    dtype=np.complex128,
)
CODE_STATES.setflags(write=False)

# Rows: <psi+|, <psi-|, <phi+|, <phi-| (already conjugated; all real).
BELL_BRA = np.array(
    [
        [0, SQRT1_2, SQRT1_2, 0],
        [0, SQRT1_2, -SQRT1_2, 0],
        [SQRT1_2, 0, 0, SQRT1_2],
        [SQRT1_2, 0, 0, -SQRT1_2],
    ],
    dtype=np.complex128,
)

# Columns are the eigenvectors (outcome 0, outcome 1) of each local basis.
BASIS_VECTORS = np.array(
    [
        [[1, 0], [0, 1]],
        [[SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]],
        [[SQRT1_2, SQRT1_2], [1j * SQRT1_2, -1j * SQRT1_2]],
    ],
    dtype=np.complex128,
)
# (V1 (x) V2)^dagger per basis pair: maps computational amplitudes to outcome amplitudes.
_ANALYZERS = np.array(
    [[np.kron(v1, v2).conj().T for v2 in BASIS_VECTORS] for v1 in BASIS_VECTORS]
)


def _require_finite(**params: float) -> None:
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{name} must be finite, got {value!r}")


def unitary_batch(theta, phi, delta) -> np.ndarray:
    """Stack of channel unitaries, shape ``(n, 2, 2)``."""
    theta, phi, delta = np.broadcast_arrays(
        np.atleast_1d(np.asarray(theta, dtype=float)),
        np.atleast_1d(np.asarray(phi, dtype=float)),
        np.atleast_1d(np.asarray(delta, dtype=float)),
    )
    _require_finite(theta=theta, phi=phi, delta=delta)
    c, s = np.cos(theta), np.sin(theta)
    e_phi = np.exp(1j * phi)
    e_delta = np.exp(1j * delta)
    u = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    u[..., 0, 0] = c
    u[..., 1, 0] = e_phi * s
    u[..., 0, 1] = -e_delta * np.conj(e_phi) * s
    u[..., 1, 1] = e_delta * c
    return u


def single_qubit_unitary(theta: float, phi: float, delta: float) -> Unitary2:
    """Channel rotation with ``U|0> = cos t|0> + e^{i phi} sin t|1>`` and
    ``U|1> = e^{i delta}(-e^{-i phi} sin t|0> + cos t|1>)``."""
    return Unitary2(unitary_batch(theta, phi, delta)[0])


def collective_apply_batch(u: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Apply ``u[n] (x) u[n]`` to ``states[n]``; ``u`` may be one matrix or a stack."""
    states = np.asarray(states, dtype=np.complex128)
    u = np.broadcast_to(u, (states.shape[0], 2, 2))
    psi = states.reshape(-1, 2, 2)
    out = np.einsum("nac,nbd,ncd->nab", u, u, psi)
    return out.reshape(-1, 4)


def collective_apply(u: Unitary2, s: TwoQubitState) -> TwoQubitState:
    return TwoQubitState(collective_apply_batch(u.m[None], s.amp[None])[0])


def bell_probabilities_batch(states: np.ndarray) -> np.ndarray:
    """Bell weights in (psi+, psi-, phi+, phi-) order, shape ``(n, 4)``."""
    return np.abs(np.asarray(states) @ BELL_BRA.T) ** 2


def bell_decompose(s: TwoQubitState) -> BellDistribution:
    p = bell_probabilities_batch(s.amp[None])[0]
    return BellDistribution(*(float(x) for x in p))


def outcome_probabilities_batch(states: np.ndarray, bases, bases2=None) -> np.ndarray:
    """Born probabilities of the outcomes (0,0), (0,1), (1,0), (1,1).

    Qubit 1 is measured in ``bases`` and qubit 2 in ``bases2`` (default: same).
    """
    states = np.asarray(states, dtype=np.complex128)
    n = states.shape[0]
    b1 = np.broadcast_to(np.asarray(bases, dtype=np.intp), (n,))
    b2 = b1 if bases2 is None else np.broadcast_to(np.asarray(bases2, dtype=np.intp), (n,))
    amps = np.einsum("nij,nj->ni", _ANALYZERS[b1, b2], states)
    return np.abs(amps) ** 2


def sample_outcomes(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one outcome index per row from a single uniform."""
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    return np.sum(np.asarray(u)[:, None] >= cdf[:, :-1], axis=1)


def measure_pairs_batch(states: np.ndarray, bases, u, bases2=None) -> tuple[np.ndarray, np.ndarray]:
    """Measure both qubits of every code in its local basis.

    Returns ``(bit1, bit2)`` integer arrays. Deterministic in ``u``.
    """
    probs = outcome_probabilities_batch(states, bases, bases2)
    idx = sample_outcomes(probs, np.atleast_1d(u))
    return idx >> 1, idx & 1


def measure_pair(s: TwoQubitState, basis: LocalBasis, randomness: float) -> OutcomePair:
    if not 0.0 <= randomness < 1.0:
        raise ValueError(f"randomness must lie in [0, 1), got {randomness!r}")
    b1, b2 = measure_pairs_batch(s.amp[None], [int(basis)], [randomness])
    return OutcomePair(LocalBasis(basis), int(b1[0]), int(b2[0]))


def prepare_code(label: CodeLabel) -> TwoQubitState:
    return TwoQubitState(CODE_STATES[label.index])
