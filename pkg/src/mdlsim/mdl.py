"""Scalar and eigenvalue-level MDL mathematics.

Everything here works on linear power quantities. The MMSE distortion map
relates the squared singular values of a channel to those of the channel
implied by an MMSE equalizer fitted at a given SNR::

    lam2_mmse = 1 / (snr**2 * lam2) + 2 / snr + lam2

``correct_eigenvalue`` is the positive-branch inverse of that map.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "AggregationRule",
    "ClampPolicy",
    "EigenvalueProfile",
    "InvalidProfileError",
    "MdlValue",
    "NoiseDominatedBin",
    "SnrValue",
    "aggregate_mdl",
    "bin_eigenvalues",
    "gram_eigenvalues",
    "mdl_from_matrices",
    "correct_array",
    "correct_eigenvalue",
    "correct_profile",
    "mdl_db",
    "mmse_forward",
    "osnr_to_snr",
]

#: OSNR reference bandwidth in Hz.
OSNR_REFERENCE_BANDWIDTH = 12.5e9


class InvalidProfileError(ValueError):
    """Eigenvalue profile is empty or holds non-positive / non-finite values."""


class NoiseDominatedBin(ArithmeticError):
    """The MMSE eigenvalue lies below the ``4/SNR`` floor of the distortion map.

    ``deficit`` is the (positive) amount by which the discriminant is negative.
    """

    def __init__(self, lambda_sq_mmse: float, snr: float, deficit: float):
        self.lambda_sq_mmse = lambda_sq_mmse
        self.snr = snr
        self.deficit = deficit
        super().__init__(
            f"lambda^2_MMSE={lambda_sq_mmse:.6g} is below the 4/SNR floor "
            f"({4.0 / snr:.6g}) at SNR={snr:.6g}; discriminant deficit {deficit:.3g}"
        )


class ClampPolicy(str, enum.Enum):
    """What to do with eigenvalues whose discriminant is negative."""

    STRICT = "strict"
    CLAMP_TO_FLOOR = "clamp-to-floor"
    SKIP_BIN = "skip-bin"


@dataclass(frozen=True)
class SnrValue:
    """Signal-to-noise ratio, stored linear."""

    linear: float

    def __post_init__(self):
        lin = float(self.linear)
        if not (lin > 0.0) or math.isnan(lin):
            raise ValueError(f"SNR must be positive, got {self.linear!r}")
        object.__setattr__(self, "linear", lin)

    @classmethod
    def from_db(cls, db: float) -> "SnrValue":
        if math.isinf(db) and db > 0:
            return cls(math.inf)
        return cls(10.0 ** (db / 10.0))

    @property
    def db(self) -> float:
        return 10.0 * math.log10(self.linear)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.linear)


@dataclass(frozen=True)
class MdlValue:
    """Peak-to-peak mode-dependent loss in dB."""

    db: float

    def __post_init__(self):
        if not self.db >= 0.0:
            raise ValueError(f"MDL must be >= 0 dB, got {self.db!r}")

    def __float__(self) -> float:
        return self.db


@dataclass(frozen=True)
class EigenvalueProfile:
    """Squared singular values of a channel, sorted descending."""

    values: tuple
    bin_index: Optional[int] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size == 0:
            raise InvalidProfileError("empty eigenvalue profile")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
            raise InvalidProfileError(f"eigenvalues must be finite and > 0, got {vals}")
        object.__setattr__(self, "values", tuple(float(v) for v in np.sort(vals)[::-1]))

    @classmethod
    def from_iterable(cls, values: Iterable[float], bin_index: Optional[int] = None):
        return cls(tuple(values), bin_index)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values)

    def __len__(self) -> int:
        return len(self.values)


def _as_snr(snr) -> SnrValue:
    return snr if isinstance(snr, SnrValue) else SnrValue(snr)


def mdl_db(profile) -> MdlValue:
    """Peak-to-peak MDL, ``10*log10(max/min)`` of the eigenvalues.

    Accepts an :class:`EigenvalueProfile` or any sequence of eigenvalues.
    """
    if not isinstance(profile, EigenvalueProfile):
        profile = EigenvalueProfile(tuple(np.asarray(profile, dtype=float).ravel()))
    vals = profile.values
    return MdlValue(max(0.0, 10.0 * math.log10(vals[0] / vals[-1])))


def mmse_forward(lambda_sq: float, snr) -> float:
    """Eigenvalue seen through an MMSE equalizer fitted at ``snr``."""
    snr = _as_snr(snr)
    if not lambda_sq > 0.0 or not math.isfinite(lambda_sq):
        raise ValueError(f"lambda_sq must be positive and finite, got {lambda_sq!r}")
    if snr.is_infinite:
        return float(lambda_sq)
    s = snr.linear
    return 1.0 / (lambda_sq * s * s) + 2.0 / s + lambda_sq


def correct_eigenvalue(lambda_sq_mmse: float, snr) -> float:
    """Recover the channel eigenvalue from an MMSE-derived one.

    Returns the root of the distortion map that is ``>= 1/snr``.

    Raises
    ------
    NoiseDominatedBin
        If ``lambda_sq_mmse < 4/snr`` (negative discriminant).
    """
    snr = _as_snr(snr)
    if not lambda_sq_mmse > 0.0 or not math.isfinite(lambda_sq_mmse):
        raise ValueError(f"lambda_sq_mmse must be positive and finite, got {lambda_sq_mmse!r}")
    if snr.is_infinite:
        return float(lambda_sq_mmse)
    s = snr.linear
    # Work in units of 1/snr: with u = snr*lam2_mmse the map reads
    # u = 1/v + 2 + v, so v = ((u - 2) + sqrt(u*(u - 4))) / 2. The factored
    # discriminant (u-2)^2 - 4 = u*(u-4) avoids cancellation near the floor.
    u = s * lambda_sq_mmse
    disc = u * (u - 4.0)
    if disc < 0.0:
        if u >= 4.0 * (1.0 - 1e-12):
            disc = 0.0
        else:
            raise NoiseDominatedBin(lambda_sq_mmse, s, -disc)
    v = 0.5 * ((u - 2.0) + math.sqrt(disc))
    return v / s


def osnr_to_snr(osnr_db: float, symbol_rate: float) -> SnrValue:
    """Per-symbol SNR from OSNR in the 12.5 GHz reference bandwidth."""
    if not symbol_rate > 0:
        raise ValueError(f"symbol_rate must be positive, got {symbol_rate!r}")
    return SnrValue.from_db(osnr_db + 10.0 * math.log10(OSNR_REFERENCE_BANDWIDTH / symbol_rate))


def correct_profile(
    profile,
    snr,
    policy: ClampPolicy = ClampPolicy.CLAMP_TO_FLOOR,
) -> EigenvalueProfile:
    """Apply :func:`correct_eigenvalue` to every eigenvalue of ``profile``.

    Eigenvalues below the floor are handled per ``policy``: ``strict``
    re-raises, ``clamp-to-floor`` maps them to ``1/snr``, ``skip-bin`` drops
    them. Dropping every value raises :class:`InvalidProfileError`.
    """
    if not isinstance(profile, EigenvalueProfile):
        profile = EigenvalueProfile(tuple(np.asarray(profile, dtype=float).ravel()))
    snr = _as_snr(snr)
    policy = ClampPolicy(policy)
    out = []
    for lam in profile.values:
        try:
            out.append(correct_eigenvalue(lam, snr))
        except NoiseDominatedBin:
            if policy is ClampPolicy.STRICT:
                raise
            if policy is ClampPolicy.CLAMP_TO_FLOOR:
                out.append(1.0 / snr.linear)
    return EigenvalueProfile(tuple(out), profile.bin_index)


def correct_array(lambda_sq_mmse: np.ndarray, snr: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised correction used on whole eigenvalue tables.

    Returns ``(corrected, failed)`` where ``failed`` marks entries below the
    ``4/snr`` floor; those entries are set to the floor value ``1/snr``.
    """
    lam = np.asarray(lambda_sq_mmse, dtype=float)
    if math.isinf(snr):
        return lam.copy(), np.zeros(lam.shape, dtype=bool)
    u = snr * lam
    disc = u * (u - 4.0)
    failed = u < 4.0 * (1.0 - 1e-12)
    disc = np.where(failed, 0.0, np.maximum(disc, 0.0))
    v = 0.5 * ((u - 2.0) + np.sqrt(disc))
    v = np.where(failed, 1.0, v)
    return v / snr, failed


class AggregationRule(str, enum.Enum):
    """How a multi-bin channel collapses to one MDL number.

    ``gram-mean`` averages the input-side Gram matrix ``H^H H`` over bins and
    takes its eigenvalues; ``rank-mean`` averages each eigenvalue rank
    across bins; ``per-bin-mean-mdl`` averages per-bin MDL in dB;
    ``worst-bin`` takes the largest per-bin MDL.
    """

    GRAM_MEAN = "gram-mean"
    RANK_MEAN = "rank-mean"
    PER_BIN_MEAN_MDL = "per-bin-mean-mdl"
    WORST_BIN = "worst-bin"


DEFAULT_AGGREGATION = AggregationRule.GRAM_MEAN


def aggregate_mdl(eigenvalues: np.ndarray, rule: AggregationRule | str = AggregationRule.RANK_MEAN) -> MdlValue:
    """Collapse an ``(F, N)`` table of per-bin eigenvalues to one MDL value.

    Rows are bins and may be unsorted. ``gram-mean`` needs the matrices
    themselves (see :func:`gram_eigenvalues`) and is only accepted here for
    a single-row table, which is what it reduces to.
    """
    eig = np.asarray(eigenvalues, dtype=float)
    if eig.ndim == 1:
        eig = eig[None, :]
    if eig.size == 0 or eig.shape[0] == 0:
        raise InvalidProfileError("no bins to aggregate")
    if not np.all(np.isfinite(eig)) or np.any(eig <= 0):
        raise InvalidProfileError("eigenvalues must be finite and > 0")
    eig = -np.sort(-eig, axis=1)
    rule = AggregationRule(rule)
    if rule is AggregationRule.GRAM_MEAN:
        if eig.shape[0] != 1:
            raise ValueError("gram-mean aggregation needs transfer matrices, not an eigenvalue table")
        rule = AggregationRule.RANK_MEAN
    if rule is AggregationRule.RANK_MEAN:
        return mdl_db(eig.mean(axis=0))
    per_bin = 10.0 * np.log10(eig[:, 0] / eig[:, -1])
    if rule is AggregationRule.PER_BIN_MEAN_MDL:
        return MdlValue(max(0.0, float(per_bin.mean())))
    return MdlValue(max(0.0, float(per_bin.max())))


def bin_eigenvalues(matrices: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``H H^H`` for each ``H`` in an ``(F, N, N)`` stack, descending."""
    return np.linalg.svd(np.asarray(matrices), compute_uv=False) ** 2


def gram_eigenvalues(matrices: np.ndarray) -> np.ndarray:
    """Eigenvalues of the bin-averaged ``H^H H``, descending.

    Same spectrum as ``H H^H`` for a single bin; across bins it averages in
    the input (mode) basis, which is common to all bins.
    """
    h = np.asarray(matrices)
    gram = np.mean(np.conj(np.swapaxes(h, -1, -2)) @ h, axis=0)
    return np.linalg.eigvalsh(gram)[::-1].copy()


def mdl_from_matrices(matrices: np.ndarray, rule: AggregationRule | str = DEFAULT_AGGREGATION) -> MdlValue:
    """MDL of an ``(F, N, N)`` transfer-matrix stack under ``rule``."""
    rule = AggregationRule(rule)
    if rule is AggregationRule.GRAM_MEAN:
        return mdl_db(gram_eigenvalues(matrices))
    return aggregate_mdl(bin_eigenvalues(matrices), rule)
