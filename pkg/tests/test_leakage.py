from dataclasses import replace

import numpy as np
import pytest

from tmrsca.aes_core import HW, SBOX_NP
from tmrsca.leakage import (
    DesignConfig, InstanceConfig, NoiseParams, TraceSet, TransformKind, format_design,
    instance_target_flips, parse_design_text, preset, random_plaintexts, reduce_to_scalar,
    simulate_traces, without_alg_noise, zero_noise,
)

KEY = bytes([0xDE]) + bytes(range(1, 16))


def quiet(kind):
    return without_alg_noise(preset(kind))


def data_part(ts, design):
    return ts.samples - design.nominal_power


def test_presets_carry_table_powers():
    assert preset("single").nominal_power == 9.44
    ide = preset("tmr_ide")
    assert ide.nominal_power == 42.60
    assert len(ide.instances) == 3 and len(set(ide.instances)) == 1
    assert preset("tmr_opt").nominal_power == 29.09
    dif = preset("tmr-dif")
    assert dif.nominal_power == 50.51
    assert [i.instance_power for i in dif.instances] == [15.84, 15.12, 16.73]
    assert [i.transform for i in dif.instances] == [
        TransformKind.BASELINE, TransformKind.CLOCK_GATED, TransformKind.RETIMED]


def test_preset_defaults():
    for kind in ("single", "tmr_ide", "tmr_opt", "tmr_dif"):
        d = preset(kind)
        assert (d.sample_period, d.samples_per_trace, d.window1, d.window2) == (1.0, 8, (0, 2), (2, 4))
    opt = preset("tmr_opt")
    coeffs = [i.leak_coeff for i in opt.instances]
    assert len(set(coeffs)) == 3
    assert all(0.9 * 0.01 <= c <= 1.1 * 0.01 for c in coeffs)
    assert all(i.alg_noise_sigma > 0 for i in opt.instances)
    with pytest.raises(ValueError):
        preset("quad")


def test_instance_target_flips_examples():
    base = InstanceConfig()
    assert instance_target_flips(base, KEY, KEY, HW) == (0, 0)
    gated = InstanceConfig(TransformKind.CLOCK_GATED, split_fraction=0.5)
    ones = bytes(b ^ 0xFF for b in KEY)
    assert instance_target_flips(gated, ones, KEY, HW) == (64, 64)
    retimed = InstanceConfig(TransformKind.RETIMED, time_offset=2)
    rng = np.random.default_rng(5)
    for _ in range(20):
        pt, key = rng.bytes(16), rng.bytes(16)
        w2, late = instance_target_flips(retimed, pt, key, HW)
        sub = SBOX_NP[np.frombuffer(pt, np.uint8) ^ np.frombuffer(key, np.uint8)]
        assert w2 == 0 and late == int(np.unpackbits(sub).sum())


def test_clock_gated_split_conserves_flips(rng):
    gated = InstanceConfig(TransformKind.CLOCK_GATED, split_fraction=0.3)
    for _ in range(50):
        pt = rng.bytes(16)
        w2, late = instance_target_flips(gated, pt, KEY)
        total = sum(bin(a ^ b).count("1") for a, b in zip(pt, KEY))
        assert w2 + late == total and w2 == int(np.floor(0.3 * total + 0.5))


def test_config_validation():
    with pytest.raises(ValueError):
        InstanceConfig(leak_coeff=0)
    with pytest.raises(ValueError):
        InstanceConfig(split_fraction=1.5)
    with pytest.raises(ValueError):
        DesignConfig("x", (InstanceConfig(),), 1.0, window1=(1, 3), window2=(2, 4))
    with pytest.raises(ValueError):
        DesignConfig("x", (InstanceConfig(),) * 4, 1.0)
    with pytest.raises(ValueError):
        DesignConfig("x", (InstanceConfig(TransformKind.RETIMED, time_offset=9),), 1.0)
    with pytest.raises(ValueError):
        NoiseParams(sigma_el_rel=-0.1)


def test_equal_popcount_gives_equal_window2():
    a = bytes([KEY[0] ^ 0x01]) + KEY[1:]
    b = bytes([KEY[0] ^ 0x80]) + KEY[1:]
    ts = simulate_traces(quiet("single"), KEY, [a, b], zero_noise())
    assert np.array_equal(ts.samples[0, 2:4], ts.samples[1, 2:4])


def test_ide_signal_is_three_times_single(rng):
    pts = random_plaintexts(40, rng)
    single = simulate_traces(quiet("single"), KEY, pts, zero_noise())
    ide = simulate_traces(quiet("tmr_ide"), KEY, pts, zero_noise())
    np.testing.assert_allclose(data_part(ide, preset("tmr_ide")),
                               3 * data_part(single, preset("single")), atol=1e-12)


def test_determinism_and_thread_independence(rng):
    pts = random_plaintexts(64, rng)
    noise = NoiseParams(seed=99)
    a = simulate_traces(preset("tmr_opt"), KEY, pts, noise)
    b = simulate_traces(preset("tmr_opt"), KEY, pts, noise)
    c = simulate_traces(preset("tmr_opt"), KEY, pts, noise, n_jobs=4)
    assert a == b == c
    assert a.samples.tobytes() == c.samples.tobytes()
    d = simulate_traces(preset("tmr_opt"), KEY, pts, replace(noise, seed=100))
    assert a != d


def test_noise_of_a_trace_does_not_depend_on_the_batch(rng):
    pts = random_plaintexts(10, rng)
    full = simulate_traces(preset("single"), KEY, pts, NoiseParams(seed=3))
    head = simulate_traces(preset("single"), KEY, pts[:4], NoiseParams(seed=3))
    assert np.array_equal(full.samples[:4], head.samples)


def test_simulate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        simulate_traces(preset("single"), KEY, [], zero_noise())


def test_reduce_to_scalar_examples():
    design = preset("single")
    const = TraceSet(np.zeros((1, 16), np.uint8), np.full((1, 8), 5.0))
    assert reduce_to_scalar(const, design)[0] == 0.0
    ts = TraceSet(np.zeros((1, 16), np.uint8), [[1.0, 3.0, 4.0, 6.0, 0, 0, 0, 0]])
    assert reduce_to_scalar(ts, design)[0] == 3.0
    doubled = TraceSet(ts.plaintexts, ts.samples * 2)
    assert reduce_to_scalar(doubled, design)[0] == 6.0
    short = TraceSet(np.zeros((1, 16), np.uint8), np.zeros((1, 4)))
    with pytest.raises(ValueError):
        reduce_to_scalar(short, replace(design, window2=(4, 6)))


def test_zero_noise_scalar_is_affine_in_register_popcount():
    design = quiet("single")
    key = bytes(16)
    bits = np.zeros((129, 128), np.uint8)
    for c in range(129):
        bits[c, :c] = 1
    pts = np.packbits(bits, axis=1)
    scalars = reduce_to_scalar(simulate_traces(design, key, pts, zero_noise()), design)
    slope, icpt = np.polyfit(np.arange(129), scalars, 1)
    np.testing.assert_allclose(scalars, icpt + slope * np.arange(129), atol=1e-12)
    assert slope == pytest.approx(0.01 / 2)


def test_superposition_of_instances(rng):
    design = quiet("tmr_dif")
    pts = random_plaintexts(30, rng)
    together = data_part(simulate_traces(design, KEY, pts, zero_noise()), design)
    alone = sum(
        data_part(simulate_traces(replace(design, instances=(inst,)), KEY, pts, zero_noise()), design)
        for inst in design.instances
    )
    np.testing.assert_allclose(together, alone, atol=1e-12)


def test_retimed_instance_is_silent_in_window2(rng):
    design = quiet("tmr_dif")
    retimed = replace(design, instances=(design.instances[2],))
    ts = simulate_traces(retimed, KEY, random_plaintexts(30, rng), zero_noise())
    assert np.all(data_part(ts, design)[:, :4] == 0)
    assert np.any(data_part(ts, design)[:, 4] > 0)


def test_samples_are_finite(rng):
    for kind in ("single", "tmr_ide", "tmr_opt", "tmr_dif"):
        ts = simulate_traces(preset(kind), KEY, random_plaintexts(20, rng), NoiseParams(0.5, seed=2))
        assert np.all(np.isfinite(ts.samples))
        assert ts.known_key == KEY and ts.design_label == preset(kind).label


def test_traceset_rejects_non_finite():
    with pytest.raises(ValueError):
        TraceSet(np.zeros((1, 16), np.uint8), [[0.0, np.nan, 0, 0]])
    with pytest.raises(ValueError):
        TraceSet(np.zeros((1, 16), np.uint8), [[0.0, 1.0, 2.0]])


@pytest.mark.parametrize("kind", ["single", "tmr_ide", "tmr_opt", "tmr_dif"])
def test_design_text_round_trip(kind):
    d = preset(kind)
    assert parse_design_text(format_design(d)) == d


def test_design_text_overrides():
    text = """
    # widen the leak of the second instance
    instance.1.leak_coeff = 0.02
    window1 = 0:1
    """
    d = parse_design_text(text, preset("tmr_ide"))
    assert d.instances[1].leak_coeff == 0.02 and d.instances[0].leak_coeff == 0.01
    assert d.window1 == (0, 1)
    two = parse_design_text("instances = 2\ninstance.1.transform = clock_gated\n", preset("single"))
    assert [i.transform for i in two.instances] == [TransformKind.BASELINE, TransformKind.CLOCK_GATED]
    with pytest.raises(ValueError, match="line 1"):
        parse_design_text("bogus = 1", preset("single"))
    with pytest.raises(ValueError):
        parse_design_text("label = x\n")
