"""Classical post-processing: entropy, asymptotic key rate, block inversion and
Toeplitz privacy amplification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class KeyRateReport:
    r_b: float
    t_p: float
    rate_per_accepted_bit: float
    rate_per_sent_code: float
    no_key: bool

    def to_dict(self) -> dict:
        return {
            "r_b": self.r_b,
            "t_p": self.t_p,
            "rate_per_accepted_bit": self.rate_per_accepted_bit,
            "rate_per_sent_code": self.rate_per_sent_code,
            "no_key": self.no_key,
        }


def key_rate(r_b: float, t_p: float = 0.0, accepted_fraction: float = 1.0,
             z_sift_fraction: float = 1.0) -> KeyRateReport:
    """One-way asymptotic rate ``1 - H(r_b) - H(t_p)``, floored at zero.

    With ``t_p = 0`` this is ``1 + r log2 r + (1 - r) log2(1 - r)``.
    """
    raw = 1.0 - binary_entropy(r_b) - binary_entropy(t_p)
    no_key = raw <= 0.0
    rate = 0.0 if no_key else raw
    return KeyRateReport(
        r_b=r_b,
        t_p=t_p,
        rate_per_accepted_bit=rate,
        rate_per_sent_code=rate * accepted_fraction * z_sift_fraction,
        no_key=no_key,
    )


@dataclass(frozen=True)
class BlockSpec:
    block_size: int

    def __post_init__(self) -> None:
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass
class BlockInversion:
    """Outcome of :func:`block_invert`.

    ``consumed`` marks revealed positions, which must not enter the final key.
    ``block_error`` holds the error rate each block showed on its revealed
    sample, before any flip.
    """

    bob_bits: np.ndarray
    consumed: np.ndarray
    flipped: np.ndarray
    block_error: np.ndarray
    revealed: np.ndarray

    @property
    def residual_error_estimate(self) -> float:
        """Revealed-sample error rate after flipping, pooled over blocks."""
        n = self.revealed.sum()
        if n == 0:
            return float("nan")
        errs = np.where(self.flipped, 1.0 - self.block_error, self.block_error)
        return float(np.sum(errs * self.revealed) / n)


def block_invert(alice_bits, bob_bits, spec: BlockSpec, reveal_fraction: float,
                 rng: np.random.Generator) -> BlockInversion:
    """Flip Bob's bits in every block whose revealed error rate exceeds 1/2.

    A trailing partial block is handled as a block of its own. Each block
    reveals ``max(1, round(reveal_fraction * len))`` positions chosen by ``rng``.
    """
    alice = np.asarray(alice_bits, dtype=np.uint8)
    bob = np.asarray(bob_bits, dtype=np.uint8)
    if alice.shape != bob.shape or alice.ndim != 1:
        raise ValueError("alice_bits and bob_bits must be 1-D and of equal length")
    if not 0.0 < reveal_fraction <= 1.0:
        raise ValueError(f"reveal_fraction must lie in (0, 1], got {reveal_fraction!r}")
    n = len(alice)
    if spec.block_size > n:
        raise ValueError(f"block_size {spec.block_size} exceeds sequence length {n}")

    out = bob.copy()
    consumed = np.zeros(n, dtype=bool)
    starts = range(0, n, spec.block_size)
    flipped = np.zeros(len(starts), dtype=bool)
    block_error = np.zeros(len(starts))
    revealed = np.zeros(len(starts), dtype=np.int64)
    for k, start in enumerate(starts):
        stop = min(start + spec.block_size, n)
        size = stop - start
        n_reveal = max(1, int(round(reveal_fraction * size)))
        pos = start + rng.choice(size, n_reveal, replace=False)
        consumed[pos] = True
        block_error[k] = np.mean(alice[pos] != bob[pos])
        revealed[k] = n_reveal
        if block_error[k] > 0.5:
            out[start:stop] ^= 1
            flipped[k] = True
    return BlockInversion(out, consumed, flipped, block_error, revealed)


def toeplitz_seed(n_in: int, out_len: int, hash_seed: int) -> np.ndarray:
    """The ``out_len + n_in - 1`` bits defining the hash matrix."""
    rng = np.random.default_rng(hash_seed)
    return rng.integers(0, 2, max(out_len + n_in - 1, 0), dtype=np.uint8)


def privacy_amplify(bits, out_len: int, hash_seed: int) -> np.ndarray:
    """Compress ``bits`` to ``out_len`` bits with a seeded binary Toeplitz matrix.

    ``T[i, j] = s[i - j + n - 1]`` so ``T @ x`` is a slice of the full
    convolution ``s * x``; evaluated by FFT and reduced mod 2.
    """
    x = np.asarray(bits, dtype=np.uint8)
    n = len(x)
    if out_len < 0:
        raise ValueError("out_len must be non-negative")
    if out_len > n:
        raise ValueError(f"out_len {out_len} exceeds input length {n}")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    s = toeplitz_seed(n, out_len, hash_seed)
    full = np.rint(fftconvolve(s.astype(float), x.astype(float))).astype(np.int64)
    return (full[n - 1 : n - 1 + out_len] & 1).astype(np.uint8)
