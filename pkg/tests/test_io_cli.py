import csv
import json
import struct

import numpy as np
import pytest

from tfmseg.cli import run
from tfmseg.errors import ParseError
from tfmseg.factor import TensorSeries
from tfmseg.io import (
    load_series,
    read_scenario,
    read_series_binary,
    read_series_csv,
    save_series,
    write_scenario,
    write_series_binary,
    write_series_csv,
)
from tfmseg.simgen import SimScenario


@pytest.fixture
def series():
    rng = np.random.default_rng(0)
    return TensorSeries(rng.standard_normal((5, 3, 2, 4)))


def test_binary_round_trip_is_bit_exact(series, tmp_path):
    f = tmp_path / "x.tfts"
    write_series_binary(series, f)
    back = read_series_binary(f)
    assert back.mask is None
    assert back.data.tobytes() == series.data.tobytes()
    assert f.stat().st_size == 4 + 2 + 2 + 3 * 8 + 8 + 2 + series.data.size * 8


def test_binary_layout(tmp_path):
    x = np.arange(12.0).reshape(2, 2, 3)
    f = tmp_path / "x.tfts"
    write_series_binary(TensorSeries(x), f)
    raw = f.read_bytes()
    assert raw[:4] == b"TFTS"
    assert struct.unpack_from("<HH2QQBB", raw, 4) == (1, 2, 2, 3, 2, 1, 0)
    payload = np.frombuffer(raw, "<f8", offset=4 + 4 + 16 + 10)
    # first observation, mode 1 fastest
    np.testing.assert_array_equal(payload[:6], [0, 3, 1, 4, 2, 5])


def test_binary_mask_round_trip(tmp_path):
    x = np.ones((3, 2, 2))
    mask = np.ones_like(x, dtype=bool)
    mask[2, 1, 0] = False
    x[~mask] = np.nan
    f = tmp_path / "m.tfts"
    write_series_binary(TensorSeries(x, mask), f)
    back = read_series_binary(f)
    assert np.array_equal(back.mask, mask)
    assert back.data.tobytes() == x.tobytes()


def test_binary_rejects_bad_files(series, tmp_path):
    f = tmp_path / "x.tfts"
    write_series_binary(series, f)
    (tmp_path / "short.tfts").write_bytes(f.read_bytes()[:-8])
    with pytest.raises(ParseError):
        read_series_binary(tmp_path / "short.tfts")
    (tmp_path / "magic.tfts").write_bytes(b"XXXX" + f.read_bytes()[4:])
    with pytest.raises(ParseError):
        read_series_binary(tmp_path / "magic.tfts")
    (tmp_path / "hdr.tfts").write_bytes(b"TFTS\x01")
    with pytest.raises(ParseError):
        read_series_binary(tmp_path / "hdr.tfts")


def test_csv_round_trip_is_value_exact(series, tmp_path):
    f = tmp_path / "x.csv"
    write_series_csv(series, f)
    back = read_series_csv(f)
    assert back.mask is None
    assert np.array_equal(back.data, series.data)
    header = f.read_text().splitlines()[0]
    assert header == "t,i_1,i_2,i_3,value"


def test_csv_omitted_cell_is_masked(series, tmp_path):
    f = tmp_path / "x.csv"
    write_series_csv(series, f)
    lines = f.read_text().splitlines()
    dropped = lines.pop(7)
    f.write_text("\n".join(lines) + "\n")
    back = read_series_csv(f)
    t, *idx = (int(v) - 1 for v in dropped.split(",")[:-1])
    assert back.has_missing and not back.mask[(t, *idx)] and back.mask.sum() == back.mask.size - 1
    assert run(["detect", "--input", str(f), "--threshold", "1", "--output", str(tmp_path / "r.json")]) == 5


def test_csv_duplicate_row_names_the_row(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("t,i_1,value\n1,1,0.5\n1,2,0.25\n1,1,0.75\n")
    with pytest.raises(ParseError, match=":4:"):
        read_series_csv(f)


@pytest.mark.parametrize(
    "text",
    ["", "time,i_1,value\n1,1,0\n", "t,i_2,value\n1,1,0\n", "t,i_1,value\n1,x,0\n", "t,i_1,value\n0,1,1\n",
     "t,i_1,value\n1,1\n", "t,i_1,value\n"],
)
def test_csv_malformed(tmp_path, text):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(ParseError):
        read_series_csv(f)


def test_format_dispatch(series, tmp_path):
    save_series(series, tmp_path / "a.csv")
    save_series(series, tmp_path / "a.bin")
    assert np.array_equal(load_series(tmp_path / "a.csv").data, load_series(tmp_path / "a.bin").data)


def test_scenario_file_round_trip(tmp_path):
    sc = SimScenario("S2", 240, (4, 5, 6), rho_f=0.7, spacing="unequal", seed=9, replication=3)
    f = tmp_path / "sc.txt"
    write_scenario(sc, f)
    assert read_scenario(f) == sc
    f.write_text("scenario=S1\nbogus=1\n")
    with pytest.raises(ParseError):
        read_scenario(f)


def test_cli_pipeline(tmp_path, capsys):
    series = tmp_path / "s.tfts"
    assert run(["simulate", "--scenario", "S1", "--T", "400", "--dims", "10,10,10", "--seed", "1",
                "--output", str(series)]) == 0
    truth = tmp_path / "s.tfts.truth.json"
    assert truth.exists()
    report = tmp_path / "r.json"
    assert run(["detect", "--input", str(series), "--ranks", "3,3,3", "--mode-informed", "--truth", str(truth),
                "--output", str(report)]) == 0
    doc = json.loads(report.read_text())
    assert doc["format"] == "tfmseg-report"
    for key in ("mu", "trim", "pi", "zeta", "bandwidth", "ranks", "coefficients_source"):
        assert key in doc["config"]
    assert "timing" in doc
    for entry in doc["mode_identification"]:
        assert len(entry["scaled_xi_norms"]) == 3
    metrics = tmp_path / "m.csv"
    assert run(["evaluate", "--report", str(report), "--truth", str(truth), "--output", str(metrics)]) == 0
    rows = list(csv.DictReader(metrics.open()))
    assert len(rows) == 3 and {"q_diff", "accuracy", "tpr", "fpr"} <= set(rows[0])
    first = metrics.read_text()
    assert run(["evaluate", "--report", str(report), "--truth", str(truth), "--output", str(metrics)]) == 0
    assert metrics.read_text() == first

    ident = tmp_path / "i.json"
    assert run(["identify", "--input", str(series), "--ranks", "3,3,3", "--thetas", "100,200,300",
                "--output", str(ident)]) == 0
    assert [e["modes"] for e in json.loads(ident.read_text())["mode_identification"]] == [[1], [2], [3]]


def test_cli_errors_are_single_line(tmp_path, capsys):
    assert run(["detect", "--input", str(tmp_path / "nope.tfts"), "--output", str(tmp_path / "r.json")]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: invalid-input: ")
    series = tmp_path / "m.tfts"
    assert run(["simulate", "--scenario", "S0", "--T", "40", "--dims", "4,4,4", "--missing",
                "--output", str(series)]) == 0
    capsys.readouterr()
    assert run(["detect", "--input", str(series), "--output", str(tmp_path / "r.json")]) == 5
    assert capsys.readouterr().err.startswith("error: unsupported-missing: ")
    (tmp_path / "dup.csv").write_text("t,i_1,value\n1,1,0\n1,1,0\n")
    assert run(["detect", "--input", str(tmp_path / "dup.csv"), "--output", str(tmp_path / "r.json")]) == 4
    assert run(["simulate", "--scenario", "S1", "--T", "400", "--output", str(series)]) == 2


def test_cli_deterministic_report(tmp_path):
    series = tmp_path / "s.tfts"
    run(["simulate", "--scenario", "S1", "--T", "400", "--dims", "8,8,8", "--seed", "2", "--output", str(series)])
    outs = []
    for n in range(2):
        out = tmp_path / f"r{n}.json"
        assert run(["detect", "--input", str(series), "--no-timing", "--output", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.slow
def test_cli_calibrate_reduced_grid(tmp_path):
    out = tmp_path / "pi.txt"
    assert run(["calibrate", "--what", "pi", "--grid", "reduced", "--reps", "3", "--output", str(out)]) == 0
    assert len([l for l in out.read_text().splitlines() if "=" in l and not l.startswith("#")]) == 5


def test_cli_identify_with_truth(tmp_path):
    series = tmp_path / "s3.tfts"
    assert run(["simulate", "--scenario", "S3", "--T", "400", "--dims", "10,10,20", "--seed", "1",
                "--output", str(series)]) == 0
    out = tmp_path / "i.json"
    assert run(["identify", "--input", str(series), "--ranks", "3,3,3", "--thetas", "200", "--mode-informed",
                "--truth", str(tmp_path / "s3.tfts.truth.json"), "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["mode_identification"][0]["modes"] == [1]
    entries = doc["mode_informed_loadings"]
    assert [(e["mode"], e["provenance"]) for e in entries] == [
        (1, "segment"), (1, "segment"), (2, "mode-informed"), (3, "mode-informed")]
    assert all(0 <= e["distance_to_truth"] < 0.2 for e in entries)
    other = tmp_path / "o.tfts"
    run(["simulate", "--scenario", "S3", "--T", "400", "--dims", "10,10,10", "--output", str(other)])
    assert run(["identify", "--input", str(other), "--ranks", "3,3,3", "--thetas", "200",
                "--truth", str(tmp_path / "s3.tfts.truth.json"), "--output", str(out)]) == 3
