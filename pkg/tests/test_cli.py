import json

import pytest
import yaml

from privdist import cli
from privdist.net import ProtocolError, TransportError

SMALL = ["--rows", "30", "--cols", "6", "--k", "2", "--iters", "3", "--parties", "2"]


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_success_prints_report(self, capsys, monkeypatch):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        code, out, _ = run_cli(capsys, "equivalence", *SMALL)
        assert code == cli.EXIT_OK
        doc = json.loads(out)
        assert doc["experiment"] == "equivalence" and doc["passed"] is True

    def test_k_above_cols_is_config_error(self, capsys):
        code, _, err = run_cli(capsys, "equivalence", "--cols", "4", "--k", "5")
        assert code == cli.EXIT_CONFIG
        assert "config error" in err

    def test_unknown_config_key_is_config_error(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"not_a_key": 1}))
        code, _, _ = run_cli(capsys, "equivalence", "--config", str(path))
        assert code == cli.EXIT_CONFIG

    def test_missing_config_file_is_config_error(self, capsys, tmp_path):
        code, _, _ = run_cli(capsys, "equivalence", "--config", str(tmp_path / "nope.yaml"))
        assert code == cli.EXIT_CONFIG

    def test_malformed_config_is_config_error(self, capsys, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("- just\n- a list\n")
        code, _, _ = run_cli(capsys, "equivalence", "--config", str(path))
        assert code == cli.EXIT_CONFIG

    def test_wrong_value_type_is_config_error(self, capsys, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"k": "five"}))
        code, _, _ = run_cli(capsys, "equivalence", "--config", str(path))
        assert code == cli.EXIT_CONFIG

    def test_non_numeric_csv_is_data_error(self, capsys, tmp_path):
        data = tmp_path / "x.csv"
        data.write_text("1,2,3\n4,abc,6\n")
        code, _, err = run_cli(capsys, "equivalence", "--dataset", str(data), "--k", "2", "--parties", "2")
        assert code == cli.EXIT_DATA
        assert "data error" in err

    def test_negative_nmf_data_is_data_error(self, capsys, tmp_path):
        data = tmp_path / "x.csv"
        data.write_text("1,2,3\n4,-5,6\n7,8,9\n1,1,1\n")
        code, _, _ = run_cli(capsys, "equivalence", "--dataset", str(data), "--k", "2", "--parties", "2")
        assert code == cli.EXIT_DATA

    @pytest.mark.parametrize("exc", [ProtocolError("boom"), TransportError("down")])
    def test_protocol_failures(self, capsys, monkeypatch, exc):
        def fail(cfg):
            raise exc

        monkeypatch.setattr(cli, "run", fail)
        code, _, err = run_cli(capsys, "equivalence", *SMALL)
        assert code == cli.EXIT_PROTOCOL
        assert "protocol error" in err


class TestOutput:
    def test_env_var_directory(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        code, _, _ = run_cli(capsys, "dp-baseline", *SMALL)
        assert code == 0
        assert (tmp_path / "env" / "dp_baseline.json").exists()
        assert (tmp_path / "env" / "dp_baseline.csv").exists()

    def test_explicit_output_beats_env(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
        code, _, _ = run_cli(capsys, "equivalence", *SMALL, "--output", str(tmp_path / "flag"))
        assert code == 0
        assert (tmp_path / "flag" / "equivalence.json").exists()
        assert not (tmp_path / "env").exists()

    def test_written_report_matches_stdout(self, capsys, monkeypatch, tmp_path):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        code, out, _ = run_cli(capsys, "equivalence", *SMALL, "--output", str(tmp_path))
        assert code == 0
        assert json.loads((tmp_path / "equivalence.json").read_text()) == json.loads(out)


class TestConfigFile:
    @pytest.mark.parametrize("suffix", [".json", ".yaml"])
    def test_file_overrides_flags(self, capsys, monkeypatch, tmp_path, suffix):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        values = {"k": 3, "iters": 2, "seed": 7}
        path = tmp_path / f"c{suffix}"
        path.write_text(json.dumps(values) if suffix == ".json" else yaml.safe_dump(values))
        code, out, _ = run_cli(capsys, "equivalence", *SMALL, "--config", str(path))
        assert code == 0
        config = json.loads(out)["config"]
        assert (config["k"], config["iters"], config["seed"], config["cols"]) == (3, 2, 7, 6)

    def test_dashed_keys_accepted(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("f-bits: 20\nsecsum-mode: fixed\n")
        assert cli.load_config_file(path) == {"f_bits": 20, "secsum_mode": "fixed"}


class TestFlags:
    def test_boolean_and_list_flags(self):
        args = cli.build_parser().parse_args(["uplift", "--no-project-simplex", "--party-sizes", "5", "10"])
        cfg = cli.config_from_args("uplift", args)
        assert cfg.project_simplex is False and cfg.party_sizes == [5, 10]

    def test_unset_flags_keep_defaults(self):
        cfg = cli.config_from_args("privacy", cli.build_parser().parse_args(["privacy"]))
        assert cfg.experiment == "privacy" and cfg.k == 5

    def test_bad_choice_exits_via_argparse(self):
        with pytest.raises(SystemExit):
            cli.main(["secsum-bench", "--mode", "bogus"])


class TestBenchCommands:
    def test_secsum_bench(self, capsys, monkeypatch):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        code, out, _ = run_cli(capsys, "secsum-bench", "--d", "10", "20", "--repeats", "1")
        assert code == 0
        rows = json.loads(out)["per_party"]
        assert [r["d"] for r in rows] == [10, 20]

    def test_nss_bench(self, capsys, monkeypatch):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        code, out, _ = run_cli(capsys, "nss-bench", "--d", "4", "--parties", "2", "--f-bits", "20")
        assert code == 0
        assert json.loads(out)["per_party"][0]["backend"] == "shared-circuit"

    def test_nss_bench_bad_f_is_config_error(self, capsys):
        code, _, _ = run_cli(capsys, "nss-bench", "--d", "4", "--f-bits", "50")
        assert code == cli.EXIT_CONFIG
