"""JSON container for channels, equalizers and MDL estimates.

Layout of a container (UTF-8 JSON, keys sorted, 2-space indent)::

    {
      "format": "mdlsim-container",
      "version": 1,
      "kind": "channel" | "equalizer" | "mdl-estimate",
      "layout": {"spatial_modes": [...], "polarizations_per_mode": 2},
      "bin_spacing_hz": 390625000.0,
      "matrices": {
        "shape": [F, N, N],
        "encoding": "base64 little-endian float64, interleaved re/im, row-major (bin, row, col)",
        "data": "..."
      },
      ...kind-specific fields
    }

``equalizer`` adds ``fitted_snr_db`` (null if unknown) and
``training_length``. ``mdl-estimate`` carries no matrices; it stores the
scalar results and the per-bin eigenvalue table under ``profiles`` with the
same float64 encoding (NaN marks skipped bins). Floats are written with
``repr`` precision, so load/save round-trips byte for byte.
"""

from __future__ import annotations

import base64
import json
import math
from pathlib import Path
from typing import Union

import numpy as np

from .channel import ChannelSpectrum, ModeLayout
from .dsp import EqualizerSolution, MdlEstimate
from .mdl import MdlValue, SnrValue

FORMAT = "mdlsim-container"
VERSION = 1
ENCODING = "base64 little-endian float64, interleaved re/im, row-major (bin, row, col)"
REAL_ENCODING = "base64 little-endian float64, row-major"


class ContainerError(ValueError):
    """Malformed or unsupported container."""


def _encode_complex(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<c16")
    return {"shape": list(a.shape), "encoding": ENCODING, "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_complex(d: dict) -> np.ndarray:
    if d.get("encoding") != ENCODING:
        raise ContainerError(f"unsupported matrix encoding {d.get('encoding')!r}")
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<c16").reshape(d["shape"]).astype(np.complex128)


def _encode_real(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "encoding": REAL_ENCODING, "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_real(d: dict) -> np.ndarray:
    if d.get("encoding") != REAL_ENCODING:
        raise ContainerError(f"unsupported array encoding {d.get('encoding')!r}")
    return np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").reshape(d["shape"]).astype(float)


def _layout_dict(layout: ModeLayout) -> dict:
    return {"spatial_modes": list(layout.spatial_modes), "polarizations_per_mode": layout.polarizations_per_mode}


def _layout(d: dict) -> ModeLayout:
    return ModeLayout(tuple(d["spatial_modes"]), int(d["polarizations_per_mode"]))


def to_document(obj) -> dict:
    if isinstance(obj, ChannelSpectrum):
        doc = {"kind": "channel", "layout": _layout_dict(obj.layout), "bin_spacing_hz": float(obj.bin_spacing)}
        doc["matrices"] = _encode_complex(obj.bins)
    elif isinstance(obj, EqualizerSolution):
        doc = {
            "kind": "equalizer",
            "layout": _layout_dict(obj.layout),
            "bin_spacing_hz": float(obj.bin_spacing),
            "matrices": _encode_complex(obj.bins),
            "fitted_snr_db": None if obj.fitted_snr is None else _finite_or_none(obj.fitted_snr.db),
            "training_length": int(obj.training_length),
        }
    elif isinstance(obj, MdlEstimate):
        doc = {
            "kind": "mdl-estimate",
            "uncorrected_db": obj.uncorrected_db.db,
            "corrected_db": None if obj.corrected_db is None else obj.corrected_db.db,
            "failed_bins": int(obj.failed_bins),
            "noise_dominated": int(obj.noise_dominated),
            "snr_db": _finite_or_none(obj.snr.db),
            "profiles": _encode_real(obj.per_bin_profiles),
        }
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    doc["format"] = FORMAT
    doc["version"] = VERSION
    return doc


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def from_document(doc: dict):
    if doc.get("format") != FORMAT:
        raise ContainerError(f"not an {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ContainerError(f"unsupported container version {doc.get('version')!r}")
    kind = doc.get("kind")
    try:
        if kind == "channel":
            return ChannelSpectrum(_decode_complex(doc["matrices"]), doc["bin_spacing_hz"], _layout(doc["layout"]))
        if kind == "equalizer":
            snr_db = doc.get("fitted_snr_db")
            snr = None if snr_db is None else SnrValue.from_db(snr_db)
            return EqualizerSolution(
                _decode_complex(doc["matrices"]),
                snr,
                doc["training_length"],
                doc["bin_spacing_hz"],
                _layout(doc["layout"]),
            )
        if kind == "mdl-estimate":
            corr = doc.get("corrected_db")
            snr_db = doc.get("snr_db")
            return MdlEstimate(
                MdlValue(doc["uncorrected_db"]),
                None if corr is None else MdlValue(corr),
                _decode_real(doc["profiles"]),
                doc["failed_bins"],
                SnrValue(math.inf) if snr_db is None else SnrValue.from_db(snr_db),
                doc.get("noise_dominated", 0),
            )
    except (KeyError, TypeError) as exc:
        raise ContainerError(f"malformed {kind} container: {exc}") from exc
    raise ContainerError(f"unknown container kind {kind!r}")


def dumps(obj) -> str:
    return json.dumps(to_document(obj), indent=2, sort_keys=True) + "\n"


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContainerError(f"invalid JSON: {exc}") from exc
    return from_document(doc)


def save(obj, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps(obj), encoding="utf-8")
    return path


def load(path: Union[str, Path]):
    return loads(Path(path).read_text(encoding="utf-8"))
