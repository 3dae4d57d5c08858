import io
import struct

import numpy as np
import pytest

from tmrsca.analysis import MtdOutcome
from tmrsca.cpa import run_cpa, run_cpa_per_sample
from tmrsca.leakage import TraceSet, preset, random_plaintexts, simulate_traces, zero_noise
from tmrsca.traceio import (
    HEADER, TraceFormatError, decode_traceset, encode_traceset, export_csv, read_traceset,
    write_traceset,
)


def random_traceset(rng, with_key=True):
    n, m = int(rng.integers(1, 20)), int(rng.integers(4, 12))
    return TraceSet(
        rng.integers(0, 256, (n, 16), dtype=np.uint8),
        rng.normal(0, 1e3, (n, m)),
        int(rng.integers(1, 5000)) / 1000,
        "lbl-" + str(int(rng.integers(1000))),
        int(rng.integers(0, 2**63)) * 2 + 1,
        rng.bytes(16) if with_key else None,
    )


def minimal():
    return TraceSet(np.zeros((1, 16), np.uint8), [[1.0, 2.0, 3.0, 4.0]])


def test_minimal_file_size():
    buf = io.BytesIO()
    assert write_traceset(minimal(), buf) == 112
    assert len(buf.getvalue()) == 64 + 16 + 32


def test_header_layout():
    ts = TraceSet(np.zeros((2, 16), np.uint8), np.zeros((2, 5)), 1.0, "single", 7, bytes(range(16)))
    data = encode_traceset(ts)
    assert data[:4] == b"SCTR"
    assert struct.unpack_from("<HHIII", data, 4) == (1, 1, 2, 5, 1000)
    assert data[20:52] == b"single" + bytes(26)
    assert struct.unpack_from("<Q", data, 52) == (7,)
    assert data[60:64] == bytes(4)
    assert data[64:80] == bytes(range(16))
    assert len(data) == 64 + 16 + 2 * (16 + 5 * 8)


def test_flag_tracks_key():
    assert encode_traceset(minimal())[6] == 0
    with_key = TraceSet(np.zeros((1, 16), np.uint8), np.zeros((1, 4)), known_key=bytes(16))
    assert encode_traceset(with_key)[6] == 1


def test_round_trips(rng, tmp_path):
    for i in range(20):
        ts = random_traceset(rng, with_key=i % 2 == 0)
        data = encode_traceset(ts)
        back = decode_traceset(data)
        assert back == ts
        assert back.samples.tobytes() == ts.samples.tobytes()
        assert encode_traceset(back) == data
    path = tmp_path / "t.sctr"
    write_traceset(ts, path)
    assert read_traceset(path) == ts


def test_simulated_file_round_trip(tmp_path):
    ts = simulate_traces(preset("single"), bytes(16), random_plaintexts(10, np.random.default_rng(0)), zero_noise())
    write_traceset(ts, tmp_path / "z.sctr")
    assert read_traceset(tmp_path / "z.sctr") == ts


@pytest.mark.parametrize("mutate,message", [
    (lambda d: b"XCTR" + d[4:], "not a trace file"),
    (lambda d: d[:-1], "size mismatch"),
    (lambda d: d + b"\0", "size mismatch"),
    (lambda d: d[:4] + struct.pack("<H", 2) + d[6:], "unsupported version"),
    (lambda d: d[:10], "not a trace file"),
    (lambda d: d[:60] + b"\1" + d[61:], "reserved"),
    (lambda d: d[:6] + b"\x02" + d[7:], "flag"),
])
def test_rejects_corrupt_files(mutate, message):
    data = encode_traceset(minimal())
    with pytest.raises(TraceFormatError, match=message):
        decode_traceset(mutate(data))


def test_label_too_long():
    ts = TraceSet(np.zeros((1, 16), np.uint8), np.zeros((1, 4)), design_label="x" * 33)
    with pytest.raises(ValueError):
        encode_traceset(ts)


def test_pcc_vs_guess_csv(rng):
    pts = random_plaintexts(100, rng)
    res = run_cpa(rng.normal(size=100), pts)
    buf = io.StringIO()
    export_csv("pcc_vs_guess", res, buf, true_byte=0xDE)
    text = buf.getvalue()
    lines = text.split("\n")
    assert text.endswith("\n") and "\r" not in text
    assert len(lines) - 1 == 257
    assert lines[0] == "guess,pcc,is_guessed,is_true"
    rows = [l.split(",") for l in lines[1:-1]]
    assert sum(r[2] == "1" for r in rows) == 1
    assert rows[res.guessed][2] == "1" and rows[0xDE][3] == "1"
    assert float(rows[5][1]) == pytest.approx(res.pcc[5], rel=1e-8)
    assert len(rows[5][1].lstrip("-").replace(".", "").split("e")[0].lstrip("0")) <= 9


def test_pcc_vs_guess_csv_per_sample(rng):
    pts = random_plaintexts(50, rng)
    res = run_cpa_per_sample(rng.normal(size=(50, 4)), pts)
    buf = io.StringIO()
    export_csv("pcc_vs_guess", res, buf)
    rows = buf.getvalue().splitlines()[1:]
    assert len(rows) == 256
    assert float(rows[7].split(",")[1]) == pytest.approx(res.pcc[7, res.best_sample[7]], rel=1e-8)


def test_mtd_table_csv(tmp_path):
    outcomes = [MtdOutcome(i % 3 != 0, 100 + i if i % 3 else None, 2000, i, "single", 1) for i in range(10)]
    path = tmp_path / "mtd.csv"
    export_csv("mtd_table", outcomes, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 11
    assert lines[0] == "key_index,key_byte,disclosed,n_required"
    assert lines[1] == "0,0,0," and lines[2] == "1,1,1,101"


def test_normal_fit_csv():
    buf = io.StringIO()
    export_csv("normal_fit", [(1.0, 0.25), (1 / 3, 2.0)], buf)
    assert buf.getvalue() == "x,density\n1,0.25\n0.333333333,2\n"
    with pytest.raises(ValueError):
        export_csv("histogram", [], buf)


def test_header_struct_is_64_octets():
    assert HEADER.size == 64
