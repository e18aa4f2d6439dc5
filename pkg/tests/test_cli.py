import csv
import json
import subprocess
import sys

import pytest

from coherentkey.cli import COLUMNS, main, run_experiment
from coherentkey.config import ConfigError, ExperimentConfig, parse_config, serialize_config

KEYGEN = """\
# dephasing key generation
scenario = keygen
channel.kind = dephasing
channel.p = 0.2
n_list = [2, 4]
seed = 3
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_defaults_filled():
    cfg = parse_config("scenario = rate\nchannel.kind = identity\n")
    assert cfg.n_list == [4]
    assert cfg.delta == 0.1 and cfg.epsilon == 0.1
    assert cfg.trials == 100 and cfg.seed == 0
    assert cfg.input_kind == "max_entangled"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="chanel.kind"):
        parse_config("scenario = rate\nchanel.kind = identity\n")


@pytest.mark.parametrize("text, fragment", [
    ("channel.kind = identity\n", "scenario"),
    ("scenario = rate\nchannel.kind = identity\nn_list = [4, 2]\n", "ascending"),
    ("scenario = rate\nchannel.kind = identity\nchannel.p = lots\n", "channel.p"),
    ("scenario = keydist\nchannel.kind = identity\n", "source"),
    ("scenario = rate\n", "channel"),
])
def test_invalid_configs(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_list_syntaxes_and_none():
    a = parse_config("scenario = typical\nsource.kind = overlap\nn_list = [2, 4]\n")
    b = parse_config("scenario = typical\nsource.kind = overlap\nn_list = 2,4\nbackoff = none\n")
    assert a.n_list == b.n_list == [2, 4]
    assert b.backoff is None


def test_round_trip():
    cfg = parse_config(KEYGEN, {"delta": "0.15", "backoff": "0.05"})
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text


def test_rate_row_for_identity(tmp_path):
    out = tmp_path / "rate.csv"
    assert main(["rate", "--set", "channel.kind=identity", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == list(COLUMNS)
    assert rows[0]["n"] == "1"
    assert float(rows[0]["rate_bits"]) == pytest.approx(1)
    assert rows[0]["wall_time_ms"] == ""


def test_keygen_csv_is_byte_identical(tmp_path):
    cfg = tmp_path / "keygen.conf"
    cfg.write_text(KEYGEN)
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["protocol", "--config", str(cfg), "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows = read_rows(paths[0])
    assert [r["n"] for r in rows] == ["2", "4"]
    assert all(r["error"] == "" for r in rows)


def test_seed_flag_changes_output(tmp_path):
    cfg = tmp_path / "keygen.conf"
    cfg.write_text(KEYGEN.replace("n_list = [2, 4]", "n_list = [6]"))
    main(["protocol", "--config", str(cfg), "--out", str(tmp_path / "a.csv"), "--seed", "1"])
    main(["protocol", "--config", str(cfg), "--out", str(tmp_path / "b.csv"), "--seed", "2"])
    assert read_rows(tmp_path / "a.csv")[0]["seed"] == "1"
    assert read_rows(tmp_path / "b.csv")[0]["seed"] == "2"


def test_capped_row_reports_error_and_continues(tmp_path, capsys):
    out = tmp_path / "ed.csv"
    code = main(["protocol", "--set", "scenario=entdist", "--set", "source.kind=overlap",
                 "--set", "source.b_overlap=0.5", "--set", "source.e_overlap=0.95", "--set", "n_list=4,30",
                 "--out", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0]["error"] == "" and rows[0]["distance_to_target"] != ""
    assert "EnumerationTooLarge" in rows[1]["error"]
    assert "1 warning(s)" in capsys.readouterr().err
    manifest = json.loads((tmp_path / "ed.manifest.json").read_text())
    assert manifest["rows"] == 2 and len(manifest["warnings"]) == 1
    assert manifest["config"]["scenario"] == "entdist"


def test_all_rows_infeasible_exit_code(tmp_path):
    out = tmp_path / "bad.csv"
    code = main(["protocol", "--set", "scenario=entdist", "--set", "source.kind=overlap", "--set", "n_list=30",
                 "--out", str(out)])
    assert code == 2


def test_config_errors_exit_one(tmp_path, capsys):
    assert main(["rate", "--set", "chanel.kind=identity", "--out", str(tmp_path / "x.csv")]) == 1
    assert "chanel.kind" in capsys.readouterr().err
    assert main(["rate", "--set", "scenario=keygen", "--set", "channel.kind=identity"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["rate", "--bogus"])
    assert exc.value.code == 1


def test_dry_run_prints_sizes(tmp_path, capsys):
    out = tmp_path / "never.csv"
    code = main(["protocol", "--set", "scenario=entdist", "--set", "source.kind=overlap",
                 "--set", "source.b_overlap=0.6", "--set", "source.e_overlap=0.6", "--dry-run", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "scenario = entdist" in text
    assert "n=4 M=1 S=16 L=1" in text
    assert not out.exists()


def test_timing_flag_fills_column(tmp_path):
    out = tmp_path / "t.csv"
    main(["typical", "--set", "source.kind=overlap", "--set", "n_list=2,4", "--timing", "--out", str(out)])
    assert all(float(r["wall_time_ms"]) >= 0 for r in read_rows(out))


@pytest.mark.parametrize("scenario, extra", [
    ("typical", {"source_kind": "overlap", "source_probs": [0.7, 0.3], "n_list": [4, 8]}),
    ("code", {"channel_kind": "dephasing", "channel_p": 0.2, "n_list": [4], "trials": 3}),
    ("optimize", {"channel_kind": "amplitude_damping", "channel_p": 0.2, "optimize_budget": 40,
                  "optimize_restarts": 2}),
    ("keydist", {"source_kind": "bell_diagonal", "source_weights": [0.9, 0.05, 0.03, 0.02], "n_list": [2],
                 "trials": 20}),
    ("enttrans", {"channel_kind": "dephasing", "channel_p": 0.2, "n_list": [4], "message_kind": "basis"}),
    ("entgen", {"channel_kind": "identity", "n_list": [4]}),
])
def test_every_scenario_produces_rows(scenario, extra):
    cfg = ExperimentConfig(scenario=scenario, **extra)
    cfg.validate()
    rows, meta = run_experiment(cfg)
    assert len(rows) == (1 if scenario == "optimize" else len(cfg.n_list))
    assert all(r.error == "" for r in rows), [r.error for r in rows]
    if scenario == "entgen":
        assert rows[0].distance_to_target < 1e-8


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "coherentkey", "rate", "--set", "channel.kind=dephasing",
                           "--set", "channel.p=0.2", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert float(read_rows(out)[0]["rate_bits"]) == pytest.approx(0.278071905, abs=1e-8)
