"""Grid sweeps over attenuation ratio and SNR.

A sweep runs, for each emulator placement, attenuation ratio and
replicate, one reference estimate at a high SNR (no noise loading) and one
noise-loaded estimate per grid SNR. The estimation error of a noise-loaded
run is the reference estimate minus that run's estimate.

Seeds are derived from a hash of the physics part of the configuration
plus the cell's coordinate *values*, so adding or removing grid points
never changes the numbers of the remaining cells.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from statistics import median
from typing import Optional

from . import __version__
from .channel import (
    EmulatorProfile,
    InfeasibleProfileError,
    InSpan,
    LinkSpec,
    ModeLayout,
    TxSide,
    apply_emulator,
    constant_power_profile,
    normalize_power,
    synthesize_link,
    true_mdl,
)
from .dsp import estimate_mdl, estimate_snr, estimation_error, fit_equalizer, generate_frames, transmit
from .mdl import DEFAULT_AGGREGATION, AggregationRule, ClampPolicy, SnrValue

SCHEMA_VERSION = 1
PLACEMENTS = ("tx", "in-span")


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class SweepConfig:
    schema_version: int = SCHEMA_VERSION
    # link
    sections: int = 16
    delay_spread_ps: float = 8.0
    insertion_spread_db: float = 3.5
    n_bins: int = 64
    symbol_rate_gbd: float = 25.0
    spatial_modes: tuple = ("LP01", "LP11a", "LP11b")
    polarizations_per_mode: int = 2
    # emulator
    placements: tuple = PLACEMENTS
    inspan_index: int = 6
    base_attenuation_db: float = 5.0
    # grid
    ratios_db: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
    snrs_db: tuple = (6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
    reference_snr_db: float = 37.0
    seeds: int = 10
    base_seed: int = 0
    training_length: int = 2**14
    aggregation: str = DEFAULT_AGGREGATION.value
    clamp_policy: str = ClampPolicy.CLAMP_TO_FLOOR.value
    correction_snr: str = "loaded"
    output_dir: str = "mdl-out"

    def __post_init__(self):
        for name in ("spatial_modes", "placements", "ratios_db", "snrs_db"):
            val = getattr(self, name)
            if isinstance(val, (str, bytes)):
                val = (val,)
            conv = float if name.endswith("_db") else str
            object.__setattr__(self, name, tuple(conv(v) for v in val))

    def validate(self, reference_only: bool = False) -> "SweepConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}, expected {SCHEMA_VERSION}")
        if not self.ratios_db:
            raise ConfigError("ratios_db must not be empty")
        if not self.snrs_db and not reference_only:
            raise ConfigError("snrs_db must not be empty")
        if any(s >= self.reference_snr_db for s in self.snrs_db):
            raise ConfigError("reference_snr_db must exceed every grid SNR")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if not self.placements or any(p not in PLACEMENTS for p in self.placements):
            raise ConfigError(f"placements must be a non-empty subset of {PLACEMENTS}")
        if "in-span" in self.placements and not 0 <= self.inspan_index < self.sections:
            raise ConfigError(f"inspan_index must be in [0, {self.sections})")
        if self.correction_snr not in ("loaded", "estimated"):
            raise ConfigError("correction_snr must be 'loaded' or 'estimated'")
        if self.training_length % self.n_bins:
            raise ConfigError("training_length must be a multiple of n_bins")
        try:
            AggregationRule(self.aggregation)
            ClampPolicy(self.clamp_policy)
            self.layout()
            self.link_spec(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.training_length < 4 * self.layout().n * self.n_bins:
            raise ConfigError("training_length must be >= 4 * N * n_bins")
        return self

    def layout(self) -> ModeLayout:
        return ModeLayout(self.spatial_modes, self.polarizations_per_mode)

    def link_spec(self, seed: int) -> LinkSpec:
        return LinkSpec(
            sections=self.sections,
            delay_spread=self.delay_spread_ps * 1e-12,
            insertion_spread_db=self.insertion_spread_db,
            seed=seed,
            layout=self.layout(),
            n_bins=self.n_bins,
            symbol_rate=self.symbol_rate_gbd * 1e9,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        flat = {}
        for key, val in data.items():
            if isinstance(val, dict):
                flat.update(val)
            else:
                flat[key] = val
        unknown = set(flat) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**flat)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def config_hash(self) -> str:
        """Hash of the full configuration (provenance)."""
        return _hash_json(self.to_dict())

    def seed_root(self) -> str:
        """Hash of everything that shapes a cell's physics, excluding the grid."""
        d = self.to_dict()
        for k in ("ratios_db", "snrs_db", "seeds", "placements", "output_dir"):
            d.pop(k)
        return _hash_json(d)


def _hash_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def derive_seed(root: str, *parts) -> int:
    """Stable 63-bit seed from a root hash and cell coordinates."""
    text = "|".join([root] + [repr(p) for p in parts])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big") >> 1


@dataclass(frozen=True)
class SweepRow:
    placement: str
    ratio_db: float
    replicate: int
    row_type: str  # "reference" | "loaded"
    snr_db: float
    seed: int
    status: str = "ok"
    attenuation_db: tuple = ()
    true_mdl_db: float = math.nan
    reference_mdl_db: float = math.nan
    uncorrected_mdl_db: float = math.nan
    corrected_mdl_db: float = math.nan
    uncorrected_error_db: float = math.nan
    corrected_error_db: float = math.nan
    correction_snr_db: float = math.nan
    failed_bins: int = 0
    noise_dominated: int = 0


@dataclass(frozen=True)
class CellSummary:
    placement: str
    ratio_db: float
    snr_db: float
    seeds: tuple
    true_mdl_db: float
    uncorrected_error_db: float
    corrected_error_db: float
    uncorrected_mdl_db: float
    corrected_mdl_db: float
    ground_truth_mdl_db: float


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list = field(default_factory=list)
    tool_version: str = __version__
    reference_only: bool = False

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def ok_rows(self, row_type: Optional[str] = None) -> list:
        return [r for r in self.rows if r.status == "ok" and (row_type is None or r.row_type == row_type)]

    def reference_median(self, placement: str, ratio_db: float, attr: str = "reference_mdl_db") -> float:
        vals = [getattr(r, attr) for r in self.ok_rows("reference") if r.placement == placement and r.ratio_db == ratio_db]
        return median(vals) if vals else math.nan

    def summary(self) -> list:
        """Median over replicates for each (placement, ratio, SNR) cell."""
        groups: dict = {}
        for r in self.ok_rows("loaded"):
            groups.setdefault((r.placement, r.ratio_db, r.snr_db), []).append(r)
        out = []
        for (p, ratio, snr), rows in groups.items():
            out.append(
                CellSummary(
                    placement=p,
                    ratio_db=ratio,
                    snr_db=snr,
                    seeds=tuple(r.seed for r in rows),
                    true_mdl_db=median(r.reference_mdl_db for r in rows),
                    uncorrected_error_db=median(r.uncorrected_error_db for r in rows),
                    corrected_error_db=median(r.corrected_error_db for r in rows),
                    uncorrected_mdl_db=median(r.uncorrected_mdl_db for r in rows),
                    corrected_mdl_db=median(r.corrected_mdl_db for r in rows),
                    ground_truth_mdl_db=median(r.true_mdl_db for r in rows),
                )
            )
        order = {p: i for i, p in enumerate(PLACEMENTS)}
        out.sort(key=lambda c: (order[c.placement], c.ratio_db, c.snr_db))
        return out


def _tasks(config: SweepConfig) -> list:
    return [(p, ratio, rep) for p in config.placements for ratio in config.ratios_db for rep in range(config.seeds)]


def _run_cell(args) -> list:
    config, placement, ratio, rep, reference_only = args
    root = config.seed_root()
    layout = config.layout()
    try:
        att = constant_power_profile(ratio, config.base_attenuation_db, layout)
    except InfeasibleProfileError:
        return [SweepRow(placement, ratio, rep, "reference", config.reference_snr_db, 0, status="skipped-infeasible")]

    link_seed = derive_seed(root, config.base_seed, "link", rep)
    frame_seed = derive_seed(root, config.base_seed, "frames", rep)
    pl = TxSide() if placement == "tx" else InSpan(config.inspan_index)
    channel = normalize_power(apply_emulator(synthesize_link(config.link_spec(link_seed)), EmulatorProfile(pl, att)))
    truth = true_mdl(channel, config.aggregation).db
    frames = generate_frames(layout, config.training_length, frame_seed, symbol_rate=config.symbol_rate_gbd * 1e9)

    def one(snr_db: float):
        seed = derive_seed(root, config.base_seed, "noise", placement, ratio, snr_db, rep)
        snr = SnrValue.from_db(snr_db)
        rx = transmit(frames, channel, snr, seed)
        eq = fit_equalizer(frames, rx, snr)
        corr_snr = snr if config.correction_snr == "loaded" else estimate_snr(frames, rx)
        est = estimate_mdl(eq, corr_snr, True, config.aggregation, config.clamp_policy)
        return seed, corr_snr, est

    rows = []
    try:
        seed, corr_snr, ref = one(config.reference_snr_db)
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        return [SweepRow(placement, ratio, rep, "reference", config.reference_snr_db, 0, status=f"failed: {exc}")]
    ref_db = ref.uncorrected_db.db
    common = dict(attenuation_db=att, true_mdl_db=truth, reference_mdl_db=ref_db)
    rows.append(
        SweepRow(
            placement, ratio, rep, "reference", config.reference_snr_db, seed,
            uncorrected_mdl_db=ref_db,
            corrected_mdl_db=ref.corrected_db.db,
            uncorrected_error_db=0.0,
            corrected_error_db=estimation_error(ref_db, ref.corrected_db.db),
            correction_snr_db=corr_snr.db,
            failed_bins=ref.failed_bins,
            noise_dominated=ref.noise_dominated,
            **common,
        )
    )
    if reference_only:
        return rows
    for snr_db in config.snrs_db:
        try:
            seed, corr_snr, est = one(snr_db)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            rows.append(SweepRow(placement, ratio, rep, "loaded", snr_db, 0, status=f"failed: {exc}", **common))
            continue
        rows.append(
            SweepRow(
                placement, ratio, rep, "loaded", snr_db, seed,
                uncorrected_mdl_db=est.uncorrected_db.db,
                corrected_mdl_db=est.corrected_db.db,
                uncorrected_error_db=estimation_error(ref_db, est.uncorrected_db.db),
                corrected_error_db=estimation_error(ref_db, est.corrected_db.db),
                correction_snr_db=corr_snr.db,
                failed_bins=est.failed_bins,
                noise_dominated=est.noise_dominated,
                **common,
            )
        )
    return rows


def run_sweep(config: SweepConfig, jobs: int = 1, reference_only: bool = False) -> SweepResult:
    """Run every cell of ``config``; output is identical for any ``jobs``."""
    config.validate(reference_only)
    args = [(config, p, ratio, rep, reference_only) for p, ratio, rep in _tasks(config)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_cell, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        parts = [_run_cell(a) for a in args]
    rows = [row for part in parts for row in part]
    return SweepResult(config, rows, reference_only=reference_only)


def with_overrides(config: SweepConfig, **changes) -> SweepConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(config, **changes) if changes else config
