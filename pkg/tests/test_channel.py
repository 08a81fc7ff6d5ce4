import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdlsim.channel import (
    ChannelSpectrum,
    EmulatorProfile,
    InfeasibleProfileError,
    InSpan,
    InvalidChannelError,
    LinkSpec,
    ModeLayout,
    TxSide,
    apply_emulator,
    awgn,
    constant_power_profile,
    haar_unitary,
    normalize_power,
    synthesize_link,
    true_mdl,
)
from mdlsim.mdl import AggregationRule

RULES = list(AggregationRule)


def eye_channel(n_bins=1, layout=None):
    layout = layout or ModeLayout()
    return ChannelSpectrum(np.broadcast_to(np.eye(layout.n), (n_bins, layout.n, layout.n)), 1e9, layout)


def unitary_channel(seed, n_bins=1, layout=None):
    layout = layout or ModeLayout()
    u = haar_unitary(layout.n, np.random.default_rng(seed))
    return ChannelSpectrum(np.broadcast_to(u, (n_bins, layout.n, layout.n)), 1e9, layout)


def test_layout_defaults():
    lay = ModeLayout()
    assert lay.n == 6 and lay.n_spatial == 3
    assert lay.expand([1, 2, 3]).tolist() == [1, 1, 2, 2, 3, 3]
    with pytest.raises(ValueError):
        ModeLayout(("A", "A"))
    with pytest.raises(ValueError):
        ModeLayout(("A",), 1)


def test_haar_unitary_is_unitary():
    u = haar_unitary(6, np.random.default_rng(1))
    assert np.allclose(u @ u.conj().T, np.eye(6), atol=1e-12)


def test_haar_phases_uniform():
    # Haar measure: diagonal entries have uniformly distributed phase
    rng = np.random.default_rng(5)
    ph = np.array([np.angle(haar_unitary(3, rng)[0, 0]) for _ in range(3000)])
    hist, _ = np.histogram(ph, bins=6, range=(-np.pi, np.pi))
    assert hist.min() > 0.8 * 500 and hist.max() < 1.2 * 500


def test_single_lossless_section_has_no_mdl():
    ch = synthesize_link(LinkSpec(sections=1, delay_spread=0.0, insertion_spread_db=0.0, seed=3))
    for rule in RULES:
        assert true_mdl(ch, rule).db == pytest.approx(0.0, abs=1e-9)
    # frequency flat and unitary
    assert np.allclose(ch.bins, ch.bins[0])
    assert np.allclose(ch.bins[0] @ ch.bins[0].conj().T, np.eye(6), atol=1e-12)


def test_synthesis_is_deterministic():
    a = synthesize_link(LinkSpec(seed=42))
    b = synthesize_link(LinkSpec(seed=42))
    assert a.bins.tobytes() == b.bins.tobytes()
    assert a == b
    assert synthesize_link(LinkSpec(seed=43)) != a


def test_delays_make_channel_frequency_selective():
    ch = synthesize_link(LinkSpec(seed=1, insertion_spread_db=0.0))
    assert not np.allclose(ch.bins[0], ch.bins[5])
    assert ch.bin_spacing == pytest.approx(25e9 / 64)


def test_baseline_band_monte_carlo():
    vals = []
    for seed in range(120):
        ch = synthesize_link(LinkSpec(seed=seed))
        vals.append(true_mdl(apply_emulator(ch, EmulatorProfile(TxSide(), constant_power_profile(0)))).db)
    vals = np.array(vals)
    # bounded by the single-lantern spread; the bulk lies in [0, 2] dB
    assert vals.min() >= 0.0 and vals.max() <= 3.5 + 1e-9
    assert np.median(vals) <= 2.0
    assert np.mean(vals <= 2.0) >= 0.55


def test_inspan_baseline_offset():
    tx, ins = [], []
    for seed in range(100):
        ch = synthesize_link(LinkSpec(seed=seed))
        att = constant_power_profile(0)
        a = true_mdl(apply_emulator(ch, EmulatorProfile(TxSide(), att))).db
        b = true_mdl(apply_emulator(ch, EmulatorProfile(InSpan(6), att))).db
        tx.append(a)
        ins.append(b)
    offset = np.median(ins) - np.median(tx)
    assert 1.0 <= offset <= 4.0


# -- emulator ---------------------------------------------------------------


def test_constant_power_profile_examples():
    assert constant_power_profile(0) == (5.0, 5.0, 5.0)
    assert constant_power_profile(4) == (3.0, 7.0, 7.0)
    p = constant_power_profile(10)
    assert p == (0.0, 10.0, 10.0)
    with pytest.raises(InfeasibleProfileError):
        constant_power_profile(12, 5)


def test_zero_attenuation_leaves_channel_unchanged():
    ch = eye_channel()
    out = apply_emulator(ch, EmulatorProfile(TxSide(), (0, 0, 0)))
    assert np.array_equal(out.bins, ch.bins)


def test_diagonal_attenuation_ratio():
    out = apply_emulator(eye_channel(), EmulatorProfile(TxSide(), (0.0, 6.0206, 6.0206)))
    assert true_mdl(out).db == pytest.approx(6.0206, abs=1e-9)


@given(seed=st.integers(0, 2**31), r=st.floats(0.0, 20.0))
@settings(max_examples=30, deadline=None)
def test_tx_emulator_on_unitary(seed, r):
    out = apply_emulator(unitary_channel(seed), EmulatorProfile(TxSide(), (0.0, r, r)))
    for rule in RULES:
        assert true_mdl(out, rule).db == pytest.approx(r, abs=1e-9)


def test_inspan_emulator_on_lossless_link_gives_ratio():
    spec = LinkSpec(seed=9, insertion_spread_db=0.0)
    ch = synthesize_link(spec)
    out = apply_emulator(ch, EmulatorProfile(InSpan(5), constant_power_profile(6)))
    # unitary factors on both sides of a diagonal: every bin shows exactly the ratio
    assert true_mdl(out, "worst-bin").db == pytest.approx(6.0, abs=1e-9)
    assert true_mdl(out, "per-bin-mean-mdl").db == pytest.approx(6.0, abs=1e-9)


def test_inspan_matches_explicit_product():
    ch = synthesize_link(LinkSpec(seed=4, sections=4))
    k = 1
    att = (1.0, 4.0, 4.0)
    out = apply_emulator(ch, EmulatorProfile(InSpan(k), att))
    amp = ch.layout.expand(10 ** (-np.array(att) / 20))
    lt, lr = ch.sandwich_lanterns
    f = 7
    before = ch.sections[1][f] @ ch.sections[0][f] @ np.diag(ch.input_lantern)
    after = ch.sections[3][f] @ ch.sections[2][f]
    assert np.allclose(out.bins[f], after @ np.diag(lr * amp * lt) @ before)


def test_inspan_index_out_of_range():
    ch = synthesize_link(LinkSpec(seed=0, sections=4))
    with pytest.raises(ValueError):
        apply_emulator(ch, EmulatorProfile(InSpan(4), (0, 0, 0)))
    with pytest.raises(ValueError):
        apply_emulator(eye_channel(), EmulatorProfile(InSpan(0), (0, 0, 0)))


def test_emulator_monotone_in_ratio():
    ratios = [0, 2, 4, 6, 8, 10]
    for placement in (TxSide(), InSpan(6)):
        med = []
        for r in ratios:
            vals = [
                true_mdl(apply_emulator(synthesize_link(LinkSpec(seed=s)), EmulatorProfile(placement, constant_power_profile(r)))).db
                for s in range(20)
            ]
            med.append(np.median(vals))
        assert all(b >= a for a, b in zip(med, med[1:])), med


# -- true_mdl ---------------------------------------------------------------


def test_true_mdl_examples():
    lay = ModeLayout(("LP01",), 2)
    ch = ChannelSpectrum(np.diag([1.0, 0.5]), 1.0, lay)
    assert true_mdl(ch).db == pytest.approx(6.0206, abs=1e-4)
    for rule in RULES:
        assert true_mdl(unitary_channel(2, n_bins=3), rule).db == pytest.approx(0.0, abs=1e-9)


def test_frequency_flat_channel_matches_single_bin():
    rng = np.random.default_rng(8)
    h = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    one = ChannelSpectrum(h, 1.0)
    many = ChannelSpectrum(np.broadcast_to(h, (16, 6, 6)), 1.0)
    for rule in RULES:
        assert true_mdl(many, rule).db == pytest.approx(true_mdl(one, rule).db, abs=1e-9)


def test_true_mdl_rejects_singular():
    h = np.eye(6)
    h[5, 5] = 0.0
    with pytest.raises(InvalidChannelError):
        true_mdl(ChannelSpectrum(h, 1.0))
    with pytest.raises(InvalidChannelError):
        ChannelSpectrum(np.full((1, 6, 6), np.nan), 1.0)


@given(seed=st.integers(0, 2**31), c=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
@settings(max_examples=25, deadline=None)
def test_unitary_and_scale_invariance(seed, c):
    ch = synthesize_link(LinkSpec(seed=seed % 1000, sections=3))
    rng = np.random.default_rng(seed)
    u, v = haar_unitary(6, rng), haar_unitary(6, rng)
    base = {r: true_mdl(ch, r).db for r in RULES}
    rotated = ChannelSpectrum(u @ ch.bins @ v, ch.bin_spacing)
    scaled = ChannelSpectrum(c * ch.bins, ch.bin_spacing)
    for r in RULES:
        assert true_mdl(rotated, r).db == pytest.approx(base[r], abs=1e-9)
        assert true_mdl(scaled, r).db == pytest.approx(base[r], abs=1e-9)


def test_normalize_power():
    ch = synthesize_link(LinkSpec(seed=2))
    ch = apply_emulator(ch, EmulatorProfile(InSpan(6), constant_power_profile(8)))
    norm = normalize_power(ch)
    gain = np.mean(np.sum(np.abs(norm.bins) ** 2, axis=(1, 2))) / 6
    assert gain == pytest.approx(1.0, rel=1e-12)
    assert true_mdl(norm).db == pytest.approx(true_mdl(ch).db, abs=1e-9)


def test_channel_is_immutable():
    ch = synthesize_link(LinkSpec(seed=0))
    with pytest.raises(ValueError):
        ch.bins[0, 0, 0] = 1.0


# -- awgn -------------------------------------------------------------------


def test_awgn_infinite_snr_is_identity():
    x = np.ones((2, 100), dtype=complex)
    assert np.array_equal(awgn(x, math.inf, 1.0, 0), x)


def test_awgn_measured_snr():
    rng = np.random.default_rng(0)
    x = np.exp(2j * np.pi * rng.random((2, 200_000)))
    y = awgn(x, 10.0, 1.0, seed=11)
    noise = y - x
    measured = np.mean(np.abs(x) ** 2, axis=1) / np.var(noise, axis=1)
    assert np.all(np.abs(measured - 10.0) < 0.2)
    # circular: real and imaginary parts carry equal power, uncorrelated
    assert np.var(noise.real) == pytest.approx(np.var(noise.imag), rel=0.02)
    assert abs(np.mean(noise.real * noise.imag)) < 0.002


def test_awgn_per_channel_power_and_determinism():
    x = np.zeros((2, 100_000), dtype=complex)
    y1 = awgn(x, 10.0, [1.0, 4.0], seed=3)
    y2 = awgn(x, 10.0, [1.0, 4.0], seed=3)
    assert np.array_equal(y1, y2)
    var = np.var(y1, axis=1)
    assert var == pytest.approx([0.1, 0.4], rel=0.03)
