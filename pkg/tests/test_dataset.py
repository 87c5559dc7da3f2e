import struct

import numpy as np
import pytest

from ofdmdl import ofdm
from ofdmdl.harness import dataset as dsmod


@pytest.fixture(scope="module")
def scenario():
    return dsmod.Scenario.build("VehA", 16)


def test_even_snr_split(scenario):
    ds = dsmod.generate_dataset(scenario, 90, [10, 20, 30], seed=3)
    values, counts = np.unique(ds.snr_db, return_counts=True)
    np.testing.assert_array_equal(values, [10, 20, 30])
    np.testing.assert_array_equal(counts, [30, 30, 30])


def test_same_seed_byte_identical(tmp_path, scenario):
    a, b = tmp_path / "a.odld", tmp_path / "b.odld"
    dsmod.generate_dataset(scenario, 20, [10, 30], seed=7, path=a)
    dsmod.generate_dataset(scenario, 20, [10, 30], seed=7, path=b)
    assert a.read_bytes() == b.read_bytes()
    dsmod.generate_dataset(scenario, 20, [10, 30], seed=8, path=b)
    assert a.read_bytes() != b.read_bytes()


def test_file_layout(tmp_path, scenario):
    p = tmp_path / "d.odld"
    ds = dsmod.generate_dataset(scenario, 3, [20], seed=1, path=p)
    raw = p.read_bytes()
    magic, version, count, k, n, m, tag = struct.unpack_from("<4sIIIII8s", raw)
    assert (magic, version, count, k, n, m) == (b"ODLD", 1, 3, 72, 28, 16)
    assert tag.rstrip(b"\0") == b"VehA"
    assert len(raw) == 32 + 3 * (16 + 3 * 2 * 72 * 28 * 8)
    # first record: SNR, seed, then the real plane of H in row-major order
    snr, seed = struct.unpack_from("<dQ", raw, 32)
    assert snr == 20.0 and seed == ds.seeds[0]
    h_re = np.frombuffer(raw, "<f8", count=72 * 28, offset=48).reshape(72, 28)
    np.testing.assert_array_equal(h_re, ds.h[0].real)


def test_round_trip(tmp_path, scenario):
    p = tmp_path / "d.odld"
    ds = dsmod.generate_dataset(scenario, 5, [10, 40], seed=2, path=p)
    back = dsmod.Dataset.load(p)
    assert back.scenario_tag == "VehA" and back.mod_order == 16
    for key in ("snr_db", "seeds", "h", "x", "y"):
        np.testing.assert_array_equal(getattr(back, key), getattr(ds, key))


def test_regeneration_oracle(tmp_path, scenario):
    p = tmp_path / "d.odld"
    dsmod.generate_dataset(scenario, 60, [10, 20, 30], seed=11, path=p)
    back = dsmod.Dataset.load(p)
    for i in range(len(back)):
        np.testing.assert_array_equal(back.regenerate_y(i, scenario), back.y[i])


def test_record_matches_independent_frame(scenario):
    ds = dsmod.generate_dataset(scenario, 4, [15], seed=5)
    f = dsmod.simulate_frame(scenario, int(ds.seeds[2]), 15.0)
    np.testing.assert_array_equal(f.h, ds.h[2])
    np.testing.assert_array_equal(f.y, ds.y[2])
    # the stored transmit grid carries the data bits losslessly
    bits = ofdm.qam_demodulate(ds.x[2][scenario.data_mask], 16)
    np.testing.assert_array_equal(bits, f.bits)


def test_pilots_in_transmit_grid(scenario):
    f = dsmod.simulate_frame(scenario, 1, 20.0)
    np.testing.assert_array_equal(scenario.pattern.gather(f.x), scenario.pattern.symbols)


def test_noise_level(scenario):
    ds = dsmod.generate_dataset(scenario, 200, [10], seed=4)
    w = ds.y - ds.h * ds.x
    assert np.mean(np.abs(w) ** 2) == pytest.approx(0.1, rel=0.02)


def test_parallel_matches_serial(monkeypatch, scenario):
    serial = dsmod.generate_dataset(scenario, 12, [10, 20], seed=9, chunk=4)
    monkeypatch.setenv("ODL_THREADS", "2")
    par = dsmod.generate_dataset(scenario, 12, [10, 20], seed=9, chunk=4)
    np.testing.assert_array_equal(serial.y, par.y)


def test_bad_inputs(tmp_path, scenario):
    with pytest.raises(ValueError):
        dsmod.generate_dataset(scenario, 0, [10], seed=1)
    with pytest.raises(ValueError):
        dsmod.generate_dataset(scenario, 3, [], seed=1)
    bad = tmp_path / "bad.odld"
    bad.write_bytes(b"XXXX" + bytes(28))
    with pytest.raises(ValueError):
        dsmod.Dataset.load(bad)
    good = tmp_path / "good.odld"
    dsmod.generate_dataset(scenario, 2, [10], seed=1, path=good)
    good.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError):
        dsmod.Dataset.load(good)
