"""Ground-truth multimode channel synthesis and MDL emulation.

The link is a cascade of ``K`` sections. Each section is a frequency-flat
Haar-random unitary preceded by a diagonal modal-delay matrix, so every bin
of the spectrum is ``H(f) = S_K(f) ... S_1(f) L0`` with ``S_k(f) = U_k D_k(f)``
and ``L0`` the input lantern's insertion-loss diagonal. Because the delay and
coupling factors are unitary, all MDL in the bare link comes from lanterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import unitary_group

from .mdl import DEFAULT_AGGREGATION, AggregationRule, MdlValue, SnrValue, bin_eigenvalues, mdl_from_matrices

__all__ = [
    "ChannelSpectrum",
    "EmulatorProfile",
    "InSpan",
    "InfeasibleProfileError",
    "InvalidChannelError",
    "LinkSpec",
    "ModeLayout",
    "TxSide",
    "apply_emulator",
    "awgn",
    "channel_eigenvalues",
    "constant_power_profile",
    "haar_unitary",
    "normalize_power",
    "synthesize_link",
    "true_mdl",
]

#: Lantern insertion-MDL spread (dB, full width) used by default; see
#: tests/test_channel.py::test_inspan_baseline_offset for the calibration target.
DEFAULT_INSERTION_SPREAD_DB = 3.5


class InvalidChannelError(ValueError):
    """Channel matrix is singular, non-finite or of the wrong shape."""


class InfeasibleProfileError(ValueError):
    """Requested attenuation profile would need a negative attenuation."""


@dataclass(frozen=True)
class ModeLayout:
    """Spatial modes times polarizations; the first mode is the fundamental."""

    spatial_modes: tuple = ("LP01", "LP11a", "LP11b")
    polarizations_per_mode: int = 2

    def __post_init__(self):
        modes = tuple(str(m) for m in self.spatial_modes)
        object.__setattr__(self, "spatial_modes", modes)
        if len(set(modes)) != len(modes):
            raise ValueError(f"mode labels must be unique: {modes}")
        if self.polarizations_per_mode < 1:
            raise ValueError("polarizations_per_mode must be >= 1")
        if self.n < 2:
            raise ValueError(f"total dimension must be >= 2, got {self.n}")

    @property
    def n(self) -> int:
        return len(self.spatial_modes) * self.polarizations_per_mode

    @property
    def n_spatial(self) -> int:
        return len(self.spatial_modes)

    def expand(self, per_mode) -> np.ndarray:
        """Replicate one value per spatial mode across its polarizations."""
        per_mode = np.asarray(per_mode, dtype=float)
        if per_mode.shape != (self.n_spatial,):
            raise ValueError(f"expected {self.n_spatial} per-mode values, got shape {per_mode.shape}")
        return np.repeat(per_mode, self.polarizations_per_mode)

    def channel_labels(self) -> list:
        pols = "XYZW"[: self.polarizations_per_mode] if self.polarizations_per_mode <= 4 else None
        out = []
        for m in self.spatial_modes:
            for p in range(self.polarizations_per_mode):
                out.append(f"{m}-{pols[p] if pols else p}")
        return out


@dataclass(frozen=True)
class ChannelSpectrum:
    """Per-bin ``N x N`` transfer matrices, bins in FFT order.

    ``sections`` (input to output) and the lantern diagonals are kept when the
    spectrum came from :func:`synthesize_link` so an in-span emulator can be
    inserted between sections; they are dropped by every other transform.
    """

    bins: np.ndarray
    bin_spacing: float
    layout: ModeLayout = field(default_factory=ModeLayout)
    sections: Optional[tuple] = field(default=None, repr=False, compare=False)
    input_lantern: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    sandwich_lanterns: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        h = np.array(self.bins, dtype=np.complex128)
        if h.ndim == 2:
            h = h[None]
        n = self.layout.n
        if h.ndim != 3 or h.shape[1:] != (n, n) or h.shape[0] < 1:
            raise InvalidChannelError(f"bins must have shape (F, {n}, {n}), got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise InvalidChannelError("channel contains non-finite entries")
        h.flags.writeable = False
        object.__setattr__(self, "bins", h)

    @property
    def n_bins(self) -> int:
        return self.bins.shape[0]

    @property
    def n(self) -> int:
        return self.layout.n

    def frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_bins, d=1.0 / (self.bin_spacing * self.n_bins))

    def __eq__(self, other):
        if not isinstance(other, ChannelSpectrum):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.bin_spacing == other.bin_spacing
            and self.bins.shape == other.bins.shape
            and self.bins.tobytes() == other.bins.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class LinkSpec:
    """Parameters of the statistical multi-section link.

    ``delay_spread`` is the per-section modal delay spread in seconds;
    delays are drawn uniformly in ``[0, delay_spread]`` per channel.
    """

    sections: int = 16
    delay_spread: float = 8e-12
    insertion_spread_db: float = DEFAULT_INSERTION_SPREAD_DB
    seed: int = 0
    layout: ModeLayout = field(default_factory=ModeLayout)
    n_bins: int = 64
    symbol_rate: float = 25e9

    def __post_init__(self):
        if self.sections < 1:
            raise ValueError("a link needs at least one section")
        if self.delay_spread < 0 or self.insertion_spread_db < 0:
            raise ValueError("delay and insertion-MDL spreads must be >= 0")
        if self.n_bins < 1 or self.symbol_rate <= 0:
            raise ValueError("n_bins must be >= 1 and symbol_rate > 0")


@dataclass(frozen=True)
class TxSide:
    """VOAs between the transmitter and the input lantern."""


@dataclass(frozen=True)
class InSpan:
    """Lantern-VOA-lantern sandwich after section ``index`` (0-based)."""

    index: int


Placement = Union[TxSide, InSpan]


@dataclass(frozen=True)
class EmulatorProfile:
    placement: Placement
    attenuation_db: tuple

    def __post_init__(self):
        att = tuple(float(a) for a in self.attenuation_db)
        if not all(math.isfinite(a) for a in att):
            raise ValueError(f"attenuations must be finite, got {att}")
        object.__setattr__(self, "attenuation_db", att)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(n, random_state=rng)


def _lantern(layout: ModeLayout, spread_db: float, rng: np.random.Generator) -> np.ndarray:
    gains_db = rng.uniform(-spread_db / 2.0, spread_db / 2.0, size=layout.n_spatial)
    return layout.expand(10.0 ** (gains_db / 20.0))


def synthesize_link(spec: LinkSpec) -> ChannelSpectrum:
    """Draw a link realisation; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.layout.n
    f = np.fft.fftfreq(spec.n_bins, d=1.0 / spec.symbol_rate)
    sections = []
    for _ in range(spec.sections):
        u = haar_unitary(n, rng)
        tau = rng.uniform(0.0, spec.delay_spread, size=n)
        phase = np.exp(-2j * np.pi * np.outer(f, tau))  # (F, N)
        sections.append(u[None, :, :] * phase[:, None, :])
    l0 = _lantern(spec.layout, spec.insertion_spread_db, rng)
    lt = _lantern(spec.layout, spec.insertion_spread_db, rng)
    lr = _lantern(spec.layout, spec.insertion_spread_db, rng)
    h = _cascade(sections) * l0[None, None, :]
    for s in sections:
        s.flags.writeable = False
    return ChannelSpectrum(
        h,
        spec.symbol_rate / spec.n_bins,
        spec.layout,
        sections=tuple(sections),
        input_lantern=l0,
        sandwich_lanterns=(lt, lr),
    )


def _cascade(sections: Sequence[np.ndarray]) -> np.ndarray:
    out = sections[0]
    for s in sections[1:]:
        out = s @ out
    return out


def constant_power_profile(ratio_db: float, base_db: float = 5.0, layout: ModeLayout | None = None) -> tuple:
    """Per-mode attenuations giving an LP01:LP11 ratio of ``ratio_db``.

    The fundamental mode's VOA is relaxed by half the ratio and the others
    are tightened by the same amount, starting from ``base_db`` on all.
    """
    layout = layout or ModeLayout()
    low = base_db - ratio_db / 2.0
    if low < -1e-12:
        raise InfeasibleProfileError(
            f"ratio {ratio_db} dB needs {low:.3g} dB on LP01; at most {2 * base_db} dB is reachable"
        )
    low = max(low, 0.0)
    return (low,) + (base_db + ratio_db / 2.0,) * (layout.n_spatial - 1)


def apply_emulator(channel: ChannelSpectrum, profile: EmulatorProfile) -> ChannelSpectrum:
    """Insert the VOA bank described by ``profile`` into ``channel``."""
    amp = channel.layout.expand(10.0 ** (-np.asarray(profile.attenuation_db) / 20.0))
    placement = profile.placement
    if isinstance(placement, TxSide):
        return ChannelSpectrum(channel.bins * amp[None, None, :], channel.bin_spacing, channel.layout)
    if not isinstance(placement, InSpan):
        raise TypeError(f"unknown placement {placement!r}")
    if channel.sections is None:
        raise ValueError("in-span emulation needs a channel with section factors (from synthesize_link)")
    k = placement.index
    if not 0 <= k < len(channel.sections):
        raise ValueError(f"in-span index {k} out of range for {len(channel.sections)} sections")
    lt, lr = channel.sandwich_lanterns
    before = _cascade(channel.sections[: k + 1]) * channel.input_lantern[None, None, :]
    middle = lr * amp * lt
    h = middle[None, :, None] * before
    if k + 1 < len(channel.sections):
        h = _cascade(channel.sections[k + 1 :]) @ h
    return ChannelSpectrum(h, channel.bin_spacing, channel.layout)


def normalize_power(channel: ChannelSpectrum) -> ChannelSpectrum:
    """Scale to unit mean power gain per channel, averaged over bins."""
    gain = np.mean(np.sum(np.abs(channel.bins) ** 2, axis=(1, 2))) / channel.n
    if not gain > 0:
        raise InvalidChannelError("channel has zero power")
    return ChannelSpectrum(channel.bins / math.sqrt(gain), channel.bin_spacing, channel.layout)


def channel_eigenvalues(channel: ChannelSpectrum) -> np.ndarray:
    """Eigenvalues of ``H H^H`` per bin, shape ``(F, N)``, descending."""
    return bin_eigenvalues(channel.bins)


def true_mdl(channel: ChannelSpectrum, aggregation: AggregationRule | str = DEFAULT_AGGREGATION) -> MdlValue:
    """Ground-truth MDL of ``channel``."""
    eig = bin_eigenvalues(channel.bins)
    if not np.all(np.isfinite(eig)) or not np.all(eig[:, -1] > 1e-300) or np.any(eig[:, -1] / eig[:, 0] < 1e-24):
        raise InvalidChannelError("channel is singular in at least one bin")
    return mdl_from_matrices(channel.bins, aggregation)


def awgn(
    samples: np.ndarray,
    snr: SnrValue | float,
    signal_power: Union[float, Sequence[float], np.ndarray] = 1.0,
    seed: Union[int, np.random.Generator, None] = None,
) -> np.ndarray:
    """Add circular complex Gaussian noise of variance ``signal_power/snr``.

    ``samples`` has shape ``(N, L)``; ``signal_power`` is a scalar or one
    value per channel.
    """
    snr = snr if isinstance(snr, SnrValue) else SnrValue(snr)
    x = np.asarray(samples, dtype=np.complex128)
    if snr.is_infinite:
        return x.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = np.asarray(signal_power, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    sigma = np.sqrt(p / snr.linear / 2.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + sigma * noise
