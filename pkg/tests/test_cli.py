"""CLI surface: subcommands, exit codes, end-to-end smoke path."""

import json

from gatemabsa.cli import main
from gatemabsa.records import load_manifest


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGenSynth:
    def test_writes_dataset(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "gen-synth", "--seed", "3", "--out",
                               str(tmp_path), "--examples", "6", "--tokens", "4",
                               "--separation", "1.0")
        assert code == 0
        manifest = json.loads(out)["manifest"]
        assert len(load_manifest(manifest)) == 6

    def test_bad_tokens_rejected(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "gen-synth", "--seed", "3", "--out",
                               str(tmp_path), "--examples", "2", "--tokens", "1",
                               "--separation", "1.0")
        assert code == 1
        assert "n_tokens" in err


class TestInspect:
    def test_valid_record(self, tmp_path, capsys):
        run_cli(capsys, "gen-synth", "--seed", "4", "--out", str(tmp_path),
                "--examples", "1", "--tokens", "4", "--separation", "0.5")
        record_path = next(tmp_path.glob("*.gmab"))
        code, out, _ = run_cli(capsys, "inspect", "--record", str(record_path))
        assert code == 0
        info = json.loads(out)
        assert info["valid"] and info["n_tokens"] == 4
        assert info["token_feats_shape"] == [4, 768]

    def test_corrupt_record_reports_offset(self, tmp_path, capsys):
        run_cli(capsys, "gen-synth", "--seed", "4", "--out", str(tmp_path),
                "--examples", "1", "--tokens", "4", "--separation", "0.5")
        record_path = next(tmp_path.glob("*.gmab"))
        blob = record_path.read_bytes()
        record_path.write_bytes(blob[: len(blob) // 3])
        code, _, err = run_cli(capsys, "inspect", "--record", str(record_path))
        assert code == 1
        assert "offset" in err

    def test_missing_record(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "inspect", "--record",
                               str(tmp_path / "nope.gmab"))
        assert code == 1
        assert "nope.gmab" in err


class TestUsage:
    def test_unknown_flag(self, capsys):
        code, _, err = run_cli(capsys, "inspect", "--wat", "x")
        assert code == 1
        assert "usage" in err.lower()

    def test_unknown_command(self, capsys):
        code, _, err = run_cli(capsys, "frobnicate")
        assert code == 1


class TestTrainEval:
    def test_missing_config_file(self, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        code, _, err = run_cli(capsys, "train", "--config", str(missing))
        assert code == 1
        assert str(missing) in err

    def test_invalid_config_field(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"learning_rte": 1.0}))
        code, _, err = run_cli(capsys, "train", "--config", str(path))
        assert code == 1
        assert "learning_rte" in err

    def test_round_trip_smoke(self, tmp_path, capsys):
        data_dir = tmp_path / "data"
        code, out, _ = run_cli(capsys, "gen-synth", "--seed", "5", "--out",
                               str(data_dir), "--examples", "9", "--tokens", "4",
                               "--separation", "2.0", "--dev-every", "3")
        assert code == 0
        manifest = json.loads(out)["manifest"]
        checkpoint = tmp_path / "model.gmwt"
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "learning_rate": 1e-3, "epochs": 2, "batch_size": 4, "dropout": 0.0,
            "n_heads": 2, "max_seq_len": 4, "patience": 2, "seed": 5,
            "model_dim": 8, "train_manifest": manifest, "dev_manifest": manifest,
            "checkpoint_out": str(checkpoint),
        }))
        code, out, _ = run_cli(capsys, "train", "--config", str(config_path))
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 3  # 2 epoch logs + summary
        assert checkpoint.exists()

        code, out, _ = run_cli(capsys, "eval", "--checkpoint", str(checkpoint),
                               "--manifest", manifest, "--split", "dev")
        assert code == 0
        metrics = json.loads(out)
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert metrics["loss"] >= 0.0

    def test_eval_missing_checkpoint(self, tmp_path, capsys):
        code, _, err = run_cli(capsys, "eval", "--checkpoint",
                               str(tmp_path / "no.gmwt"), "--manifest",
                               str(tmp_path / "no.json"))
        assert code == 1
