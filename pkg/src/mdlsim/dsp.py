"""Transmitter, link application and supervised MMSE equalization.

Processing is symbol-spaced and block-circular: each stream is cut into
blocks of ``F`` symbols (``F`` = number of channel bins), and bin ``k`` of a
block's FFT sees the matrix ``H[k]``. The equalizer is fitted per bin from
the sample cross- and auto-spectra of the known transmit blocks and the
received blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .channel import ChannelSpectrum, ModeLayout, awgn
from .mdl import (
    DEFAULT_AGGREGATION,
    AggregationRule,
    ClampPolicy,
    MdlValue,
    NoiseDominatedBin,
    SnrValue,
    aggregate_mdl,
    correct_array,
    gram_eigenvalues,
)

__all__ = [
    "EqualizerSolution",
    "EstimationError",
    "FrameSet",
    "InsufficientTrainingError",
    "MdlEstimate",
    "Received",
    "estimate_mdl",
    "estimate_snr",
    "estimation_error",
    "fit_equalizer",
    "generate_frames",
    "qam16_constellation",
    "transmit",
    "wiener_equalizer",
]

#: Bins whose equalizer condition number exceeds this are not inverted.
CONDITION_LIMIT = 1e8
#: Auto-spectrum condition number above which training is deemed insufficient.
TRAINING_CONDITION_LIMIT = 1e10
MIN_FRAME_LENGTH = 2**10

#: Group index of the decorrelation fibre, used to turn metres into symbols.
GROUP_INDEX = 1.468
SPEED_OF_LIGHT = 299_792_458.0


class InsufficientTrainingError(ValueError):
    """Too few training symbols for a well-conditioned per-bin fit."""


class EstimationError(RuntimeError):
    """No usable bin was left to estimate MDL from."""


def qam16_constellation() -> np.ndarray:
    """Gray-mapped 16-QAM with unit mean power, indexed by 4-bit label."""
    gray = np.array([-3.0, -1.0, 3.0, 1.0])  # 2-bit Gray code -> level
    labels = np.arange(16)
    i = gray[labels >> 2]
    q = gray[labels & 3]
    return (i + 1j * q) / math.sqrt(10.0)


@dataclass(frozen=True)
class FrameSet:
    """Known transmit symbols, one row per stream."""

    symbols: np.ndarray
    decorrelation_shifts: tuple
    seed: int
    layout: ModeLayout = field(default_factory=ModeLayout)

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.complex128)
        s.flags.writeable = False
        object.__setattr__(self, "symbols", s)

    @property
    def length(self) -> int:
        return self.symbols.shape[1]


def _shift_for_delay(delay_m: float, symbol_rate: float) -> int:
    return int(round(delay_m * GROUP_INDEX / SPEED_OF_LIGHT * symbol_rate))


def generate_frames(
    layout: ModeLayout,
    length: int,
    seed: int,
    delays_m: Sequence[float] = (0.0, 20.0, 30.0),
    symbol_rate: float = 25e9,
) -> FrameSet:
    """Random Gray 16-QAM frames decorrelated by cyclic shifts.

    One polarization-multiplexed sequence feeds every spatial mode, delayed
    by ``delays_m`` of fibre (one delay per spatial mode). The second
    polarization is the first one shifted by half a frame, as in a
    delay-and-add polarization emulator.
    """
    if length < MIN_FRAME_LENGTH:
        raise ValueError(f"frame length must be >= {MIN_FRAME_LENGTH}, got {length}")
    if len(delays_m) != layout.n_spatial:
        raise ValueError(f"need one delay per spatial mode ({layout.n_spatial}), got {len(delays_m)}")
    rng = np.random.default_rng(seed)
    base = qam16_constellation()[rng.integers(0, 16, size=length)]
    npol = layout.polarizations_per_mode
    shifts = []
    for d in delays_m:
        s_mode = _shift_for_delay(d, symbol_rate)
        for p in range(npol):
            shifts.append((s_mode + p * length // npol) % length)
    if len(set(shifts)) != len(shifts):
        raise ValueError(f"decorrelation shifts collide for length {length}: {shifts}")
    symbols = np.stack([np.roll(base, s) for s in shifts])
    return FrameSet(symbols, tuple(shifts), seed, layout)


@dataclass(frozen=True)
class Received:
    """Received samples plus the block geometry they were produced with."""

    samples: np.ndarray
    n_bins: int
    bin_spacing: float
    snr: SnrValue


def _blocks_fft(x: np.ndarray, n_bins: int) -> np.ndarray:
    """``(N, L)`` samples -> ``(F, N, B)`` per-bin block spectra."""
    n, length = x.shape
    nblk = length // n_bins
    blocks = x[:, : nblk * n_bins].reshape(n, nblk, n_bins)
    return np.fft.fft(blocks, axis=2).transpose(2, 0, 1)


def _blocks_ifft(spec: np.ndarray) -> np.ndarray:
    f, n, nblk = spec.shape
    return np.fft.ifft(spec.transpose(1, 2, 0), axis=2).reshape(n, nblk * f)


def transmit(
    frames: FrameSet,
    channel: ChannelSpectrum,
    snr: Union[SnrValue, float],
    seed: Union[int, np.random.Generator, None] = None,
) -> Received:
    """Apply ``channel`` block-circularly and add receiver noise.

    The noise variance is ``1/snr`` per channel, i.e. SNR is referred to the
    unit-power transmit symbols. For a power-normalized channel this equals
    the average SNR at the receiver.
    """
    snr = snr if isinstance(snr, SnrValue) else SnrValue(snr)
    x = frames.symbols
    if x.shape[0] != channel.n:
        raise ValueError(f"frames carry {x.shape[0]} streams but the channel is {channel.n}x{channel.n}")
    f = channel.n_bins
    if x.shape[1] % f:
        raise ValueError(f"frame length {x.shape[1]} is not a multiple of {f} bins")
    xf = _blocks_fft(x, f)
    y = _blocks_ifft(channel.bins @ xf)
    y = awgn(y, snr, 1.0, seed)
    return Received(y, f, channel.bin_spacing, snr)


@dataclass(frozen=True)
class EqualizerSolution:
    """Per-bin MMSE equalizer matrices ``W[k]``, shape ``(F, N, N)``."""

    bins: np.ndarray
    fitted_snr: Optional[SnrValue]
    training_length: int
    bin_spacing: float = 1.0
    layout: ModeLayout = field(default_factory=ModeLayout)

    def __post_init__(self):
        w = np.array(self.bins, dtype=np.complex128)
        if w.ndim != 3 or w.shape[1] != w.shape[2] or w.shape[1] != self.layout.n:
            raise ValueError(f"equalizer must have shape (F, {self.layout.n}, {self.layout.n}), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("equalizer has non-finite entries")
        w.flags.writeable = False
        object.__setattr__(self, "bins", w)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]


def wiener_equalizer(channel: ChannelSpectrum, snr: Union[SnrValue, float]) -> EqualizerSolution:
    """Analytic MMSE equalizer ``H^H (H H^H + I/snr)^-1`` for unit-power inputs."""
    snr = snr if isinstance(snr, SnrValue) else SnrValue(snr)
    h = channel.bins
    if not np.any(h):
        raise ValueError("channel is identically zero")
    hh = np.conj(np.swapaxes(h, 1, 2))
    reg = h @ hh
    if not snr.is_infinite:
        reg = reg + np.eye(channel.n) / snr.linear
    if np.any(np.linalg.cond(reg) > 1e14):
        raise np.linalg.LinAlgError("regularized channel Gram matrix is not invertible")
    # W = hh @ inv(reg), computed as solve(reg^H, h)^H
    w = np.conj(np.swapaxes(np.linalg.solve(np.conj(np.swapaxes(reg, 1, 2)), h), 1, 2))
    return EqualizerSolution(w, snr, 0, channel.bin_spacing, channel.layout)


def fit_equalizer(
    frames: FrameSet,
    received: Received,
    snr_hint: Union[SnrValue, float, None] = None,
) -> EqualizerSolution:
    """Supervised per-bin Wiener fit ``W = S_xy S_yy^-1``.

    ``snr_hint`` is stored as the solution's fitted SNR; when omitted the
    SNR is estimated from the data with :func:`estimate_snr`.
    """
    x = frames.symbols
    y = np.asarray(received.samples)
    n, length = x.shape
    f = received.n_bins
    if y.shape != x.shape:
        raise ValueError(f"received shape {y.shape} does not match frames {x.shape}")
    if length < 4 * n * f:
        raise InsufficientTrainingError(f"{length} training symbols < 4*N*F = {4 * n * f}")
    xf = _blocks_fft(x, f)
    yf = _blocks_fft(y, f)
    yh = np.conj(np.swapaxes(yf, 1, 2))
    sxy = xf @ yh
    syy = yf @ yh
    if np.any(np.linalg.cond(syy) > TRAINING_CONDITION_LIMIT):
        raise InsufficientTrainingError("received auto-spectrum is ill-conditioned")
    # W = sxy @ inv(syy); syy is Hermitian so solve(syy, sxy^H)^H
    w = np.conj(np.swapaxes(np.linalg.solve(syy, np.conj(np.swapaxes(sxy, 1, 2))), 1, 2))
    if snr_hint is None:
        fitted = estimate_snr(frames, received)
    else:
        fitted = snr_hint if isinstance(snr_hint, SnrValue) else SnrValue(snr_hint)
    return EqualizerSolution(w, fitted, length, received.bin_spacing, frames.layout)


def estimate_snr(frames: FrameSet, received: Received) -> SnrValue:
    """Data-aided SNR: unit symbol power over the least-squares residual power."""
    x = frames.symbols
    f = received.n_bins
    xf = _blocks_fft(x, f)
    yf = _blocks_fft(np.asarray(received.samples), f)
    xh = np.conj(np.swapaxes(xf, 1, 2))
    sxx = xf @ xh
    syx = yf @ xh
    h_ls = np.conj(np.swapaxes(np.linalg.solve(sxx, np.conj(np.swapaxes(syx, 1, 2))), 1, 2))
    resid = yf - h_ls @ xf
    n, nblk = x.shape[0], xf.shape[2]
    # LS fitting absorbs N of the B degrees of freedom per bin
    noise = np.sum(np.abs(resid) ** 2) / (f * f * n * max(nblk - n, 1))
    sig = np.mean(np.abs(x) ** 2)
    if noise <= 0:
        return SnrValue(math.inf)
    return SnrValue(sig / noise)


@dataclass(frozen=True)
class MdlEstimate:
    """MDL read from equalizer taps.

    ``per_bin_profiles`` holds the raw ``lambda^2_MMSE`` per bin (NaN rows for
    singular bins). ``failed_bins`` counts bins left out of the estimate;
    ``noise_dominated`` counts eigenvalues that fell below the ``4/snr``
    floor of the correction.
    """

    uncorrected_db: MdlValue
    corrected_db: Optional[MdlValue]
    per_bin_profiles: np.ndarray
    failed_bins: int
    snr: SnrValue
    noise_dominated: int = 0

    def to_dict(self) -> dict:
        return {
            "uncorrected_db": self.uncorrected_db.db,
            "corrected_db": None if self.corrected_db is None else self.corrected_db.db,
            "failed_bins": self.failed_bins,
            "noise_dominated": self.noise_dominated,
            "snr_db": self.snr.db,
        }


def equalizer_eigenvalues(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``lambda^2`` of ``W^-1`` per bin (descending) and a usable-bin mask."""
    sv = np.linalg.svd(np.asarray(w), compute_uv=False)  # descending
    with np.errstate(divide="ignore"):
        cond = sv[:, 0] / sv[:, -1]
    ok = np.isfinite(cond) & (cond <= CONDITION_LIMIT) & (sv[:, -1] > 0)
    lam2 = np.full(sv.shape, np.nan)
    lam2[ok] = (1.0 / sv[ok, ::-1]) ** 2
    return lam2, ok


def estimate_mdl(
    eq: EqualizerSolution,
    snr: Union[SnrValue, float, None] = None,
    apply_correction: bool = True,
    aggregation: Union[AggregationRule, str] = DEFAULT_AGGREGATION,
    clamp_policy: Union[ClampPolicy, str] = ClampPolicy.CLAMP_TO_FLOOR,
) -> MdlEstimate:
    """MDL from equalizer taps, with and without the SNR correction.

    Each usable bin is inverted, ``H_est = W^-1``, and the eigenvalues of
    ``H_est H_est^H`` are corrected at ``snr`` (default: the equalizer's
    fitted SNR). With ``gram-mean`` the correction acts on the eigenvalues
    of the bin-averaged Gram matrix, otherwise on every bin before
    aggregation. Under ``skip-bin`` a bin holding a noise-dominated
    eigenvalue is dropped (for ``gram-mean``, the eigenvalue itself).
    """
    if snr is None:
        snr = eq.fitted_snr
    if snr is None:
        raise ValueError("no SNR given and the equalizer carries none")
    snr = snr if isinstance(snr, SnrValue) else SnrValue(snr)
    policy = ClampPolicy(clamp_policy)
    rule = AggregationRule(aggregation)
    lam2, ok = equalizer_eigenvalues(eq.bins)
    failed = int(np.count_nonzero(~ok))
    if not np.any(ok):
        raise EstimationError("every equalizer bin is singular")
    if rule is AggregationRule.GRAM_MEAN:
        table = gram_eigenvalues(np.linalg.inv(eq.bins[ok]))[None, :]
    else:
        table = lam2[ok]
    uncorrected = aggregate_mdl(table, rule)
    corrected = None
    n_low = 0
    if apply_correction:
        fixed, below = correct_array(table, snr.linear)
        n_low = int(np.count_nonzero(below))
        if n_low:
            if policy is ClampPolicy.STRICT:
                val = float(table[below][0])
                u = snr.linear * val
                raise NoiseDominatedBin(val, snr.linear, -u * (u - 4.0))
            if policy is ClampPolicy.SKIP_BIN:
                if rule is AggregationRule.GRAM_MEAN:
                    fixed = fixed[~below][None, :]
                else:
                    bad_rows = np.any(below, axis=1)
                    failed += int(np.count_nonzero(bad_rows))
                    fixed = fixed[~bad_rows]
                if fixed.size == 0:
                    raise EstimationError("every bin is noise dominated")
        corrected = aggregate_mdl(fixed, rule)
    return MdlEstimate(uncorrected, corrected, lam2, failed, snr, n_low)


def estimation_error(reference_db, estimated_db) -> float:
    """``reference - estimate``; positive means the MDL is underestimated."""
    return float(reference_db) - float(estimated_db)
