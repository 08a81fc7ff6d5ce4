import base64
import json
import math

import numpy as np
import pytest

from mdlsim import container
from mdlsim.channel import EmulatorProfile, InSpan, LinkSpec, ModeLayout, apply_emulator, constant_power_profile, synthesize_link
from mdlsim.container import ContainerError, dumps, load, loads, save
from mdlsim.dsp import estimate_mdl, fit_equalizer, generate_frames, transmit, wiener_equalizer
from mdlsim.mdl import SnrValue


@pytest.fixture(scope="module")
def channel():
    ch = synthesize_link(LinkSpec(seed=12))
    return apply_emulator(ch, EmulatorProfile(InSpan(6), constant_power_profile(6)))


def test_channel_round_trip_byte_exact(channel, tmp_path):
    path = save(channel, tmp_path / "ch.json")
    back = load(path)
    assert back.bins.tobytes() == channel.bins.tobytes()
    assert back.bin_spacing == channel.bin_spacing
    assert back.layout == channel.layout
    assert dumps(back) == path.read_text()


def test_channel_encoding_is_documented_layout(channel):
    doc = json.loads(dumps(channel))
    raw = base64.b64decode(doc["matrices"]["data"])
    # interleaved little-endian doubles, row-major (bin, row, col)
    vals = np.frombuffer(raw, dtype="<f8")
    assert vals.size == 2 * channel.bins.size
    assert vals[0] == channel.bins[0, 0, 0].real and vals[1] == channel.bins[0, 0, 0].imag
    assert vals[2] == channel.bins[0, 0, 1].real
    assert vals[2 * 6] == channel.bins[0, 1, 0].real
    assert doc["matrices"]["shape"] == [64, 6, 6]
    assert doc["format"] == container.FORMAT and doc["version"] == container.VERSION


def test_equalizer_round_trip(channel):
    fr = generate_frames(ModeLayout(), 2**12, seed=1)
    eq = fit_equalizer(fr, transmit(fr, channel, 100.0, seed=2), 100.0)
    back = loads(dumps(eq))
    assert back.bins.tobytes() == eq.bins.tobytes()
    assert back.fitted_snr.linear == pytest.approx(100.0, rel=1e-15)
    assert back.training_length == 2**12
    assert dumps(back) == dumps(eq)
    unknown = loads(dumps(wiener_equalizer(channel, math.inf)))
    assert unknown.fitted_snr is None or unknown.fitted_snr.is_infinite


def test_estimate_round_trip(channel):
    snr = SnrValue.from_db(15)
    est = estimate_mdl(wiener_equalizer(channel, snr), snr, aggregation="rank-mean")
    back = loads(dumps(est))
    assert back.corrected_db == est.corrected_db and back.uncorrected_db == est.uncorrected_db
    assert back.per_bin_profiles.tobytes() == est.per_bin_profiles.tobytes()
    assert dumps(back) == dumps(est)


def test_offline_reanalysis_matches(channel, tmp_path):
    snr = SnrValue.from_db(12)
    eq = wiener_equalizer(channel, snr)
    direct = estimate_mdl(eq, snr)
    replay = estimate_mdl(load(save(eq, tmp_path / "eq.json")), snr)
    assert replay.corrected_db.db == direct.corrected_db.db


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(format="other"),
        lambda d: d.update(version=99),
        lambda d: d.update(kind="spectrogram"),
        lambda d: d["matrices"].update(encoding="hex"),
        lambda d: d.pop("bin_spacing_hz"),
    ],
)
def test_malformed_documents(channel, mutate):
    doc = json.loads(dumps(channel))
    mutate(doc)
    with pytest.raises(ContainerError):
        loads(json.dumps(doc))


def test_invalid_json_and_type():
    with pytest.raises(ContainerError):
        loads("{not json")
    with pytest.raises(TypeError):
        dumps(object())
