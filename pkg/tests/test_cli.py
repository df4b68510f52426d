import csv

import pytest

from ofdm_ranging.cli import main
from ofdm_ranging.campaign import STATS_COLUMNS, SWEEP_COLUMNS
from ofdm_ranging.calib import SUMMARY_COLUMNS


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_header(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--iterations", "5", "--ranges", "10:10:20", "--rcs", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == STATS_COLUMNS
    assert [r[2] for r in rows[1:]] == ["10.0", "20.0"]


def test_simulate_stdout(capsys):
    assert main(["simulate", "--iterations", "3", "--ranges", "25", "--rcs", "1", "--no-noise"]) == 0
    out = capsys.readouterr()
    assert out.out.startswith(",".join(STATS_COLUMNS))
    assert "p_d" in out.err


def test_sweep_threshold(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["sweep-threshold", "--iterations", "5", "--ranges", "20", "--rcs", "1",
                 "--epsilon", "5:5:15", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert [r[0] for r in rows[1:]] == ["5.0", "10.0", "15.0"]
    assert main(["sweep-threshold", "--iterations", "5", "--ranges", "20"]) == 4


def test_verify(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["verify", "--trials", "10", "--ranges", "10,20", "--bandwidth-mhz", "10", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["range_m", "bandwidth_hz", "rms_error_m", "trials", "failures"]
    assert rows[1][1] == "10000000.0"


def test_estimate_and_calibrate(tmp_path, fixtures_dir):
    out = tmp_path / "e.csv"
    src = str(fixtures_dir / "target_25m.csv")
    assert main(["estimate", "--input", src, "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == SUMMARY_COLUMNS
    assert rows[1][0] == "25.0"
    cal = tmp_path / "c.csv"
    assert main(["calibrate", "--input", src, "--out", str(cal)]) == 0
    rows = read_csv(cal)
    assert rows[0] == ["packet_id", "subcarrier", "metric"]
    assert len(rows) == 1 + 100 * 52


@pytest.mark.parametrize("argv, code", [
    (["bogus"], 2),
    (["simulate", "--iterations", "x"], 2),
    (["estimate", "--input", "/nonexistent/file.csv"], 3),
    (["verify", "--trials", "0"], 5),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_config_error_exit(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epsilon_t = -1\n")
    assert main(["simulate", "--config", str(cfg), "--iterations", "1"]) == 4


def test_data_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("packet_id,subcarrier,re,im\n0,-26,abc,0\n")
    assert main(["estimate", "--input", str(bad)]) == 5
    assert "bad.csv:2" in capsys.readouterr().err


def test_output_file_error(tmp_path):
    assert main(["simulate", "--iterations", "1", "--ranges", "10", "--rcs", "1",
                 "--out", str(tmp_path / "missing" / "x.csv")]) == 3


def test_help_exit_zero(capsys):
    assert main(["--help"]) == 0
    assert "exit status" in capsys.readouterr().out
