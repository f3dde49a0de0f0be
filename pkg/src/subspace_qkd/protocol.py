"""Protocol state machines and error estimators.

Runners process codes in chunks. Chunk ``k`` draws from its own stream,
``SeedSequence(seed, spawn_key=(k,))``, so results are bit-reproducible and
independent of how chunks are scheduled.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from subspace_qkd.channel import ChannelConfig, EveMode, channel_rotations, survives_loss, transmit_batch
from subspace_qkd.config import ExperimentConfig, config_to_dict
from subspace_qkd.distill import KeyRateReport
from subspace_qkd.qmath import (
    BASIS_VECTORS,
    CODE_STATES,
    SQRT1_2,
    CodeBasis,
    CodeLabel,
    LocalBasis,
    OutcomePair,
    TwoQubitState,
    measure_pair,
    measure_pairs_batch,
    unitary_batch,
)

logger = logging.getLogger(__name__)

CHUNK_SIZE = 8192


class InsufficientDataError(RuntimeError):
    """An estimator category has no samples (or a degenerate denominator)."""


# -- Alice and Bob -----------------------------------------------------------

def alice_prepare_batch(n: int, z_bias: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(is_z, bit)`` arrays for ``n`` codes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= z_bias <= 1.0:
        raise ValueError(f"z_bias must lie in [0, 1], got {z_bias!r}")
    is_z = rng.random(n) < z_bias
    bits = rng.integers(0, 2, n)
    return is_z, bits


def alice_prepare(n: int, z_bias: float, rng: np.random.Generator) -> list[CodeLabel]:
    is_z, bits = alice_prepare_batch(n, z_bias, rng)
    return [
        CodeLabel(CodeBasis.ZBasis if z else CodeBasis.XBasis, int(b))
        for z, b in zip(is_z, bits)
    ]


def label_indices(is_z: np.ndarray, bits: np.ndarray) -> np.ndarray:
    return 2 * (~is_z).astype(np.intp) + bits


def bob_bases(rng: np.random.Generator, n: int, weights=(1.0, 1.0, 1.0)) -> np.ndarray:
    p = np.asarray(weights, dtype=float)
    return rng.choice(3, size=n, p=p / p.sum())


def bob_choose_and_measure(s: TwoQubitState, rng: np.random.Generator,
                           weights=(1.0, 1.0, 1.0), basis: LocalBasis | None = None) -> OutcomePair:
    """Pick a basis from ``{Z, X, Y}`` (or use ``basis``) and measure both qubits."""
    if basis is None:
        basis = LocalBasis(int(bob_bases(rng, 1, weights)[0]))
    return measure_pair(s, basis, float(rng.random()))


# -- sifting -----------------------------------------------------------------

@dataclass(frozen=True)
class SiftedRecord:
    index: int
    label: CodeLabel
    meas: OutcomePair
    accepted: bool
    bob_bit: int | None
    wrong: bool | None = None


def wrong_outcome(alice_bit, bob_basis, equal):
    """Parity table for X-basis codes.

    psi- (bit 1) should give differing bits in Z, X and Y; psi+ (bit 0)
    differing in Z but equal in X and Y. Works on scalars or arrays.
    """
    flipped_parity = (np.asarray(alice_bit) == 0) & (np.asarray(bob_basis) != LocalBasis.Z)
    return np.asarray(equal) ^ flipped_parity


def sift(label: CodeLabel, meas: OutcomePair, index: int = 0) -> SiftedRecord:
    if label.basis is CodeBasis.ZBasis:
        ok = meas.basis is LocalBasis.Z and not meas.equal
        return SiftedRecord(index, label, meas, ok, meas.bit1 if ok else None)
    wrong = bool(wrong_outcome(label.bit, meas.basis, meas.equal))
    return SiftedRecord(index, label, meas, True, None, wrong)


# -- estimation --------------------------------------------------------------

def _wald_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n > 0 else float("nan")


def flip_rate_from_eps(eps_x: float, eps_y: float, eps_z: float) -> float:
    """Net flip rate out of the prepared psi state given wrong-outcome rates.

    NaN when ``eps_z == 1``: nothing stayed inside the subspace, so there is
    no flip rate to speak of.
    """
    denom = 2.0 * (1.0 - eps_z)
    if denom == 0.0:
        return float("nan")
    return float((eps_x + eps_y - eps_z) / denom)


def _flip_rate_se(eps: np.ndarray, n: np.ndarray) -> float:
    # Delta method over independent binomial eps_x, eps_y, eps_z.
    ex, ey, ez = eps
    d = 1.0 - ez
    if d == 0.0:
        return float("nan")
    num = ex + ey - ez
    grad = np.array([1.0 / (2 * d), 1.0 / (2 * d), (num - d) / (2 * d * d)])
    var = eps * (1.0 - eps) / n
    return float(math.sqrt(np.sum(grad**2 * var)))


@dataclass
class ErrorCounts:
    """Tallies behind an :class:`ErrorEstimate`.

    ``minus_*``/``plus_*`` are indexed by Bob's basis (Z, X, Y) and count psi-
    and psi+ codes and their wrong outcomes.
    """

    z_n: int = 0
    z_err: int = 0
    minus_n: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    minus_wrong: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    plus_n: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    plus_wrong: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))

    def __iadd__(self, other: ErrorCounts) -> ErrorCounts:
        self.z_n += other.z_n
        self.z_err += other.z_err
        self.minus_n = self.minus_n + other.minus_n
        self.minus_wrong = self.minus_wrong + other.minus_wrong
        self.plus_n = self.plus_n + other.plus_n
        self.plus_wrong = self.plus_wrong + other.plus_wrong
        return self

    def to_dict(self) -> dict:
        return {
            "z_n": int(self.z_n),
            "z_err": int(self.z_err),
            "minus_n": [int(x) for x in self.minus_n],
            "minus_wrong": [int(x) for x in self.minus_wrong],
            "plus_n": [int(x) for x in self.plus_n],
            "plus_wrong": [int(x) for x in self.plus_wrong],
        }


@dataclass
class ErrorEstimate:
    r_b: float
    r_b_se: float
    t_minus: float
    t_plus: float
    t_p: float
    t_p_se: float
    eps_x: float | None = None
    eps_y: float | None = None
    eps_z: float | None = None
    epsp_x: float | None = None
    epsp_y: float | None = None
    epsp_z: float | None = None
    out_of_range: bool = False
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "r_b", "r_b_se", "t_minus", "t_plus", "t_p", "t_p_se",
            "eps_x", "eps_y", "eps_z", "epsp_x", "epsp_y", "epsp_z",
            "out_of_range", "counts",
        )}


def _require(n, what: str) -> None:
    if np.any(np.asarray(n) == 0):
        raise InsufficientDataError(f"no samples for {what}")


def estimate_from_counts(c: ErrorCounts) -> ErrorEstimate:
    """Bit-flip rate from Z codes and phase-flip rate from the parity tallies."""
    _require(c.z_n, "bit-flip test (accepted Z codes)")
    _require(c.minus_n, "psi- codes in every measurement basis")
    _require(c.plus_n, "psi+ codes in every measurement basis")

    r_b = c.z_err / c.z_n
    # reorder Z, X, Y -> x, y, z
    eps_m = (c.minus_wrong / c.minus_n)[[1, 2, 0]]
    eps_p = (c.plus_wrong / c.plus_n)[[1, 2, 0]]
    n_m = c.minus_n[[1, 2, 0]]
    n_p = c.plus_n[[1, 2, 0]]
    t_minus = flip_rate_from_eps(*eps_m)
    t_plus = flip_rate_from_eps(*eps_p)
    t_p = (t_minus + t_plus) / 2.0
    se_m = _flip_rate_se(eps_m, n_m)
    se_p = _flip_rate_se(eps_p, n_p)

    out_of_range = any(math.isfinite(t) and not 0.0 <= t <= 1.0 for t in (t_minus, t_plus))
    if out_of_range:
        logger.info("flip-rate estimate outside [0, 1]: t_minus=%g t_plus=%g", t_minus, t_plus)
    return ErrorEstimate(
        r_b=r_b,
        r_b_se=_wald_se(r_b, c.z_n),
        t_minus=t_minus,
        t_plus=t_plus,
        t_p=t_p,
        t_p_se=0.5 * math.sqrt(se_m**2 + se_p**2),
        eps_x=float(eps_m[0]), eps_y=float(eps_m[1]), eps_z=float(eps_m[2]),
        epsp_x=float(eps_p[0]), epsp_y=float(eps_p[1]), epsp_z=float(eps_p[2]),
        out_of_range=out_of_range,
        counts=c.to_dict(),
    )


def estimate_errors(records: Sequence[SiftedRecord]) -> ErrorEstimate:
    """Tally accepted records and estimate bit- and phase-flip rates."""
    c = ErrorCounts()
    for rec in records:
        if not rec.accepted:
            continue
        if rec.label.basis is CodeBasis.ZBasis:
            c.z_n += 1
            c.z_err += int(rec.bob_bit != rec.label.bit)
        else:
            b = int(rec.meas.basis)
            if rec.label.bit == 1:
                c.minus_n[b] += 1
                c.minus_wrong[b] += int(rec.wrong)
            else:
                c.plus_n[b] += 1
                c.plus_wrong[b] += int(rec.wrong)
    return estimate_from_counts(c)


@dataclass
class DirectCounts:
    """Error tallies for protocols that decode to a bit directly."""

    z_n: int = 0
    z_err: int = 0
    minus_n: int = 0
    minus_err: int = 0
    plus_n: int = 0
    plus_err: int = 0

    def __iadd__(self, other: DirectCounts) -> DirectCounts:
        for k in ("z_n", "z_err", "minus_n", "minus_err", "plus_n", "plus_err"):
            setattr(self, k, getattr(self, k) + getattr(other, k))
        return self


def direct_estimate(c: DirectCounts) -> ErrorEstimate:
    _require(c.z_n, "bit-flip test (Z bits)")
    _require(c.minus_n, "X-basis bit 1")
    _require(c.plus_n, "X-basis bit 0")
    r_b = c.z_err / c.z_n
    t_minus = c.minus_err / c.minus_n
    t_plus = c.plus_err / c.plus_n
    return ErrorEstimate(
        r_b=r_b,
        r_b_se=_wald_se(r_b, c.z_n),
        t_minus=t_minus,
        t_plus=t_plus,
        t_p=(t_minus + t_plus) / 2.0,
        t_p_se=0.5 * math.sqrt(_wald_se(t_minus, c.minus_n) ** 2 + _wald_se(t_plus, c.plus_n) ** 2),
        counts={k: int(getattr(c, k)) for k in
                ("z_n", "z_err", "minus_n", "minus_err", "plus_n", "plus_err")},
    )


# -- Protocol 1 encoder / decoder --------------------------------------------

# |a, ancilla>: |00> -> |01>, |01> -> |00>, |10> -> |10>, |11> -> |11>
_CNOT_PERM = np.array([1, 0, 2, 3])

BB84_STATES = np.array(
    [[1, 0], [0, 1], [SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]], dtype=np.complex128
)


def protocol1_encode_batch(qubits: np.ndarray) -> np.ndarray:
    qubits = np.asarray(qubits, dtype=np.complex128)
    with_ancilla = np.zeros((qubits.shape[0], 4), dtype=np.complex128)
    with_ancilla[:, 0] = qubits[:, 0]
    with_ancilla[:, 2] = qubits[:, 1]
    return with_ancilla[:, _CNOT_PERM]


def protocol1_encode(bb84_state, ancilla=(1.0, 0.0)) -> TwoQubitState:
    """Encode one qubit with a ``|0>`` ancilla through the code CNOT."""
    if not np.allclose(ancilla, [1.0, 0.0]):
        raise ValueError("ancilla must be |0>")
    q = np.asarray(bb84_state, dtype=np.complex128)
    return TwoQubitState(protocol1_encode_batch(q[None])[0])


def protocol1_decode_batch(states: np.ndarray, u) -> tuple[np.ndarray, np.ndarray]:
    """Undo the CNOT and measure the ancilla in Z.

    Returns ``(accept, qubit)``; ``qubit`` rows are normalized where accepted.
    """
    decoded = np.asarray(states, dtype=np.complex128)[:, _CNOT_PERM]
    q = decoded[:, [0, 2]]
    p_keep = np.sum(np.abs(q) ** 2, axis=1)
    accept = np.asarray(u) < p_keep
    norm = np.sqrt(np.where(accept, p_keep, 1.0))
    return accept, q / norm[:, None]


def protocol1_decode_accept(s: TwoQubitState, rng: np.random.Generator):
    """Return ``(True, qubit)`` when the ancilla reads 0, else ``(False, None)``."""
    accept, q = protocol1_decode_batch(s.amp[None], rng.random(1))
    if not accept[0]:
        return False, None
    return True, q[0]


def measure_qubit_batch(qubits: np.ndarray, bases, u) -> np.ndarray:
    """Single-qubit Z/X measurement; returns outcome bits."""
    v0 = BASIS_VECTORS[np.asarray(bases, dtype=np.intp), :, 0]
    p0 = np.abs(np.sum(v0.conj() * qubits, axis=1)) ** 2
    return (np.asarray(u) >= p0).astype(np.int64)


# -- run reports -------------------------------------------------------------

@dataclass
class RunReport:
    """Everything one run produced. ``to_dict`` is the serialization boundary."""

    protocol: str
    seed: int
    config: dict
    counts: dict
    estimate: ErrorEstimate
    qber_sifted: float
    accepted_fraction_z: float
    z_sift_fraction: float
    alice_key: np.ndarray
    bob_key: np.ndarray
    key: KeyRateReport | None = None
    final_key: np.ndarray | None = None
    aborted: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def theta(self) -> float | None:
        theta = self.config["channel"]["rotation"]["theta"]
        return theta.get("fixed")

    def to_dict(self) -> dict:
        def bits(a):
            return None if a is None else "".join(map(str, np.asarray(a, dtype=np.uint8)))

        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "config": self.config,
            "counts": self.counts,
            "estimate": self.estimate.to_dict(),
            "qber_sifted": self.qber_sifted,
            "accepted_fraction_z": self.accepted_fraction_z,
            "z_sift_fraction": self.z_sift_fraction,
            "key_rate": None if self.key is None else self.key.to_dict(),
            "aborted": self.aborted,
            "raw_key_length": int(len(self.alice_key)),
            "raw_key": bits(self.alice_key),
            "final_key_length": None if self.final_key is None else int(len(self.final_key)),
            "final_key": bits(self.final_key),
            "extra": self.extra,
        }


def chunk_streams(seed: int, n: int, block: int = 1) -> Iterator[tuple[int, np.random.Generator]]:
    """Yield ``(chunk_len, rng)`` covering ``n`` codes; chunk length is a
    multiple of ``block`` so correlated rotation blocks never straddle chunks."""
    size = block * -(-CHUNK_SIZE // block)
    for k, start in enumerate(range(0, n, size)):
        ss = np.random.SeedSequence(seed, spawn_key=(k,))
        yield min(size, n - start), np.random.default_rng(ss)


def _rate(num: int, den: int) -> float:
    return num / den if den else float("nan")


class _Totals:
    def __init__(self) -> None:
        self.c = dict.fromkeys(
            ("sent", "delivered", "basis_matched", "accepted", "z_basis_matched", "z_accepted",
             "z_errors"), 0)
        self.alice: list[np.ndarray] = []
        self.bob: list[np.ndarray] = []

    def add(self, **kw: int) -> None:
        for k, v in kw.items():
            self.c[k] += int(v)

    def report(self, cfg: ExperimentConfig, estimate: ErrorEstimate, extra: dict | None = None) -> RunReport:
        c = self.c
        return RunReport(
            protocol=cfg.protocol,
            seed=cfg.seed,
            config=config_to_dict(cfg),
            counts=dict(c),
            estimate=estimate,
            qber_sifted=_rate(c["z_errors"], c["z_accepted"]),
            accepted_fraction_z=_rate(c["z_accepted"], c["z_basis_matched"]),
            z_sift_fraction=_rate(c["z_basis_matched"], c["sent"]),
            alice_key=np.concatenate(self.alice).astype(np.uint8) if self.alice else np.zeros(0, np.uint8),
            bob_key=np.concatenate(self.bob).astype(np.uint8) if self.bob else np.zeros(0, np.uint8),
            extra=extra or {},
        )


# -- runners -----------------------------------------------------------------

def run_protocol2(cfg: ExperimentConfig) -> RunReport:
    """Prepare, transmit, measure, sift and estimate over ``cfg.n_codes`` codes.

    The raw key holds the accepted Z bits not revealed for the bit-flip test.
    """
    totals = _Totals()
    counts = ErrorCounts()
    probs = cfg.bob_basis_probs
    for m, rng in chunk_streams(cfg.seed, cfg.n_codes, cfg.channel.block_correlated):
        is_z, bits = alice_prepare_batch(m, cfg.z_bias, rng)
        tx = transmit_batch(CODE_STATES[label_indices(is_z, bits)], cfg.channel, rng)
        basis = bob_bases(rng, m, probs)
        b1, b2 = measure_pairs_batch(tx.states, basis, rng.random(m))
        reveal_u = rng.random(m)

        ok = tx.delivered
        z_matched = ok & is_z & (basis == LocalBasis.Z)
        z_acc = z_matched & (b1 != b2)
        z_err = z_acc & (b1 != bits)
        x_used = ok & ~is_z
        z_test = z_acc & (reveal_u < cfg.z_test_fraction)
        x_test = x_used & (reveal_u < cfg.x_test_fraction)

        wrong = wrong_outcome(bits, basis, b1 == b2)
        chunk = ErrorCounts(z_n=int(z_test.sum()), z_err=int((z_test & z_err).sum()))
        for bit, n_arr, w_arr in ((1, chunk.minus_n, chunk.minus_wrong),
                                  (0, chunk.plus_n, chunk.plus_wrong)):
            sel = x_test & (bits == bit)
            n_arr[:] = np.bincount(basis[sel], minlength=3)
            w_arr[:] = np.bincount(basis[sel & wrong], minlength=3)
        counts += chunk

        keep = z_acc & ~z_test
        totals.alice.append(bits[keep])
        totals.bob.append(b1[keep])
        totals.add(sent=m, delivered=ok.sum(), basis_matched=z_matched.sum() + x_used.sum(),
                   accepted=z_acc.sum() + x_used.sum(), z_basis_matched=z_matched.sum(),
                   z_accepted=z_acc.sum(), z_errors=z_err.sum())
    return totals.report(cfg, estimate_from_counts(counts))


def run_protocol1(cfg: ExperimentConfig) -> RunReport:
    """Encode BB84 qubits, transmit, decode with ancilla rejection, then BB84 sift.

    Bob picks Z with probability ``cfg.z_bias``, matching Alice.
    """
    totals = _Totals()
    counts = DirectCounts()
    for m, rng in chunk_streams(cfg.seed, cfg.n_codes, cfg.channel.block_correlated):
        is_z, bits = alice_prepare_batch(m, cfg.z_bias, rng)
        encoded = protocol1_encode_batch(BB84_STATES[label_indices(is_z, bits)])
        tx = transmit_batch(encoded, cfg.channel, rng)
        accept, qubit = protocol1_decode_batch(tx.states, rng.random(m))
        bob_z = rng.random(m) < cfg.z_bias
        out = measure_qubit_batch(qubit, np.where(bob_z, LocalBasis.Z, LocalBasis.X), rng.random(m))
        reveal_u = rng.random(m)

        matched = tx.delivered & (bob_z == is_z)
        acc = matched & accept
        err = acc & (out != bits)
        z_acc = acc & is_z
        x_acc = acc & ~is_z
        z_test = z_acc & (reveal_u < cfg.z_test_fraction)
        x_test = x_acc & (reveal_u < cfg.x_test_fraction)
        counts += DirectCounts(
            z_n=z_test.sum(), z_err=(z_test & err).sum(),
            minus_n=(x_test & (bits == 1)).sum(), minus_err=(x_test & (bits == 1) & err).sum(),
            plus_n=(x_test & (bits == 0)).sum(), plus_err=(x_test & (bits == 0) & err).sum(),
        )
        keep = z_acc & ~z_test
        totals.alice.append(bits[keep])
        totals.bob.append(out[keep])
        totals.add(sent=m, delivered=tx.delivered.sum(), basis_matched=matched.sum(),
                   accepted=acc.sum(), z_basis_matched=(matched & is_z).sum(),
                   z_accepted=z_acc.sum(), z_errors=(z_acc & err).sum())
    return totals.report(cfg, direct_estimate(counts))


# |phi+>, |psi->, |+'> = (|0+> - |1->)/sqrt2, |-'> = (|0-> + |1+>)/sqrt2
PROTOCOL3_STATES = np.array(
    [
        [SQRT1_2, 0, 0, SQRT1_2],
        [0, SQRT1_2, -SQRT1_2, 0],
        [0.5, 0.5, -0.5, 0.5],
        [0.5, -0.5, 0.5, 0.5],
    ],
    dtype=np.complex128,
)


def run_protocol3(cfg: ExperimentConfig) -> RunReport:
    """Real-rotation protocol: no rejection step; bit = parity of the two outcomes.

    Bob's "Z" decode measures Z on both qubits, his "X" decode measures Z on
    qubit 1 and X on qubit 2. He picks Z with probability ``cfg.z_bias``.
    """
    if not cfg.channel.real_rotation_only:
        logger.info("protocol3 without real_rotation_only: zero-error claim does not apply")
    totals = _Totals()
    counts = DirectCounts()
    n_errors = 0
    for m, rng in chunk_streams(cfg.seed, cfg.n_codes, cfg.channel.block_correlated):
        is_z, bits = alice_prepare_batch(m, cfg.z_bias, rng)
        tx = transmit_batch(PROTOCOL3_STATES[label_indices(is_z, bits)], cfg.channel, rng)
        bob_z = rng.random(m) < cfg.z_bias
        second = np.where(bob_z, LocalBasis.Z, LocalBasis.X)
        b1, b2 = measure_pairs_batch(tx.states, LocalBasis.Z, rng.random(m), bases2=second)
        reveal_u = rng.random(m)

        out = b1 ^ b2
        matched = tx.delivered & (bob_z == is_z)
        err = matched & (out != bits)
        z_acc = matched & is_z
        x_acc = matched & ~is_z
        z_test = z_acc & (reveal_u < cfg.z_test_fraction)
        x_test = x_acc & (reveal_u < cfg.x_test_fraction)
        counts += DirectCounts(
            z_n=z_test.sum(), z_err=(z_test & err).sum(),
            minus_n=(x_test & (bits == 1)).sum(), minus_err=(x_test & (bits == 1) & err).sum(),
            plus_n=(x_test & (bits == 0)).sum(), plus_err=(x_test & (bits == 0) & err).sum(),
        )
        keep = z_acc & ~z_test
        totals.alice.append(bits[keep])
        totals.bob.append(out[keep])
        totals.add(sent=m, delivered=tx.delivered.sum(), basis_matched=matched.sum(),
                   accepted=matched.sum(), z_basis_matched=(matched & is_z).sum(),
                   z_accepted=z_acc.sum(), z_errors=(z_acc & err).sum())
        n_errors += int(err.sum())
    return totals.report(cfg, direct_estimate(counts), extra={"decode_errors": n_errors})


def run_bb84_baseline(cfg: ExperimentConfig) -> RunReport:
    """Single-photon BB84 over the same rotation model; Z-basis QBER is ``r_b``."""
    totals = _Totals()
    counts = DirectCounts()
    ch: ChannelConfig = cfg.channel
    for m, rng in chunk_streams(cfg.seed, cfg.n_codes, ch.block_correlated):
        is_z, bits = alice_prepare_batch(m, cfg.z_bias, rng)
        qubits = BB84_STATES[label_indices(is_z, bits)]
        theta, phi, delta = channel_rotations(ch, rng, m)
        qubits = np.einsum("nij,nj->ni", unitary_batch(theta, phi, delta), qubits)
        delivered = survives_loss(ch.loss_prob, rng, m, photons=1)
        if ch.eve is EveMode.INTERCEPT_RESEND_Z:
            seen = measure_qubit_batch(qubits, np.zeros(m, dtype=np.intp), rng.random(m))
            qubits = BB84_STATES[seen]
        bob_z = rng.random(m) < cfg.z_bias
        out = measure_qubit_batch(qubits, np.where(bob_z, LocalBasis.Z, LocalBasis.X), rng.random(m))
        reveal_u = rng.random(m)

        matched = delivered & (bob_z == is_z)
        err = matched & (out != bits)
        z_acc = matched & is_z
        x_acc = matched & ~is_z
        z_test = z_acc & (reveal_u < cfg.z_test_fraction)
        x_test = x_acc & (reveal_u < cfg.x_test_fraction)
        counts += DirectCounts(
            z_n=z_test.sum(), z_err=(z_test & err).sum(),
            minus_n=(x_test & (bits == 1)).sum(), minus_err=(x_test & (bits == 1) & err).sum(),
            plus_n=(x_test & (bits == 0)).sum(), plus_err=(x_test & (bits == 0) & err).sum(),
        )
        keep = z_acc & ~z_test
        totals.alice.append(bits[keep])
        totals.bob.append(out[keep])
        totals.add(sent=m, delivered=delivered.sum(), basis_matched=matched.sum(),
                   accepted=matched.sum(), z_basis_matched=(matched & is_z).sum(),
                   z_accepted=z_acc.sum(), z_errors=(z_acc & err).sum())
    return totals.report(cfg, direct_estimate(counts))


RUNNERS: dict[str, Callable[[ExperimentConfig], RunReport]] = {
    "protocol1": run_protocol1,
    "protocol2": run_protocol2,
    "protocol3": run_protocol3,
    "bb84": run_bb84_baseline,
}
