import json
import struct

import numpy as np
import pytest

from wildcurrents.errors import ConfigParseError, ConfigValidationError, IoError
from wildcurrents.io import (
    METRIC_COLUMNS,
    RunConfig,
    emit_config,
    emit_outputs,
    main,
    metrics_csv,
    parse_config,
    parse_config_text,
    pgm_bytes,
    snapshot,
    threads_from_env,
)
from wildcurrents.scheme import Subsolution, run

ZERO_RUN = "k_max = 0\ngrid.energy = 512\ngrid.weak = 256\nweak.trials = 1\ngrid.snapshot = 16\n"


def test_minimal_file_takes_defaults(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# only the seed\nseed = 7\n")
    cfg = parse_config(p)
    assert cfg == RunConfig(seed=7)
    assert cfg.k_max == 6 and cfg.N0 == 16 and cfg.grid_snapshot == 64


def test_round_trip():
    cfg = RunConfig(omega_shape="box", omega_half_widths=(1.0, 0.5, 2.0), k_max=3, margin=0.01,
                    output_slices=(0.0, 0.25, -0.5))
    assert parse_config_text(emit_config(cfg)) == cfg


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("k_max = 2\nbogus = 1\n", 2, "bogus"),
        ("k_max = 2\nk_max = 3\n", 2, "k_max"),
        ("k_max\n", 1, None),
        ("margin = \n", 1, "margin"),
        ("k_max = two\n", 1, "k_max"),
    ],
)
def test_parse_errors_carry_context(text, line, key):
    with pytest.raises(ConfigParseError) as info:
        parse_config_text(text)
    assert info.value.line == line and info.value.key == key


def test_validation_collects_every_violation():
    with pytest.raises(ConfigValidationError) as info:
        parse_config_text("k_max = -1\nmargin = 0.5\nomega.shape = torus\n")
    msg = str(info.value)
    assert "k_max" in msg and "margin" in msg and "omega.shape" in msg


def test_missing_file(tmp_path):
    with pytest.raises(ConfigParseError):
        parse_config(tmp_path / "absent.cfg")


def test_threads_env():
    assert threads_from_env({}) == 0
    assert threads_from_env({"WILDCURRENTS_THREADS": "4"}) == 4
    for bad in ("-1", "many"):
        with pytest.raises(ConfigValidationError):
            threads_from_env({"WILDCURRENTS_THREADS": bad})


def test_metrics_csv_layout():
    rows = [{"k": 1, "energy": 0.5, "balls": 3}]
    lines = metrics_csv(rows).splitlines()
    assert lines[0].split(",") == list(METRIC_COLUMNS)
    vals = dict(zip(METRIC_COLUMNS, lines[1].split(",")))
    assert vals["k"] == "1" and vals["energy"] == "0.5" and vals["balls"] == "3" and vals["eta"] == "0"


def test_pgm_encoding():
    img = np.array([[0.0, 0.5], [1.0, 2.0]])
    data = pgm_bytes(img, 0.0, 1.0, "test")
    assert data.startswith(b"P5\n# test: linear scale")
    assert data.endswith(bytes([255, 255, 0, 128]))


def test_snapshot_of_zero_state():
    cfg = RunConfig()
    arr, bounds = snapshot(Subsolution(), cfg.omega, 8, 0.0)
    assert arr.shape == (8, 8, 4) and np.all(arr == 0)
    assert bounds == (-1.0, 1.0, -1.0, 1.0)


@pytest.fixture(scope="module")
def zero_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("zero")
    cfg = parse_config_text(ZERO_RUN + "output.slices = 0.0, 0.5\n")
    report = run(cfg.settings())
    files = emit_outputs(report, report.subsolution, cfg, out)
    return out, files


def test_zero_iteration_outputs(zero_outputs):
    out, files = zero_outputs
    names = sorted(p.name for p in files)
    assert "metrics.csv" in names and "manifest.json" in names and "timings.json" in names
    lines = (out / "metrics.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].startswith("1,0,")
    raw = (out / "snapshot_001.bin").read_bytes()
    assert len(raw) == 16 * 16 * 4 * 8
    assert struct.unpack("<d", raw[:8])[0] == 0.0
    side = json.loads((out / "snapshot_001.json").read_text())
    assert side["time"] == 0.5 and side["byte_order"] == "little" and side["grid_shape"] == [16, 16]
    assert (out / "heatmap_b_000.pgm").read_bytes()[:2] == b"P5"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["iterations"] == 0 and manifest["config"]["k_max"] == 0
    assert set(manifest["files"]) >= {"metrics.csv", "snapshot_000.bin"}


def test_output_dir_collision_raises(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = parse_config_text(ZERO_RUN)
    report = run(cfg.settings())
    with pytest.raises(IoError) as info:
        emit_outputs(report, report.subsolution, cfg, blocker / "sub")
    assert info.value.path == str(blocker / "sub")


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(ZERO_RUN)
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "--seed", "3", "--slices", "0,0.25"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["output.slices"] == [0.0, 0.25]
    assert main(["--config", str(cfg), "--k-max", "-2"]) == 1
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 1
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["--config", str(cfg), "--out", str(blocker / "x")]) == 2
    monkeypatch.setenv("WILDCURRENTS_THREADS", "lots")
    assert main(["--config", str(cfg), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "WILDCURRENTS_THREADS" in err
