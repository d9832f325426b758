import os

import numpy as np
import numpy.testing as npt

from faceseq import cli
from faceseq import gabor
from faceseq import pipeline as pl

SMOKE_CFG = os.path.join(os.path.dirname(__file__), os.pardir,
                         "configs", "smoke.cfg")


def run(*argv):
    return cli.main(list(argv))


class TestArgumentErrors:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 1
        err = capsys.readouterr().err
        assert "usage:" in err

    def test_bad_method_choice(self, capsys):
        assert run("cv", "--method", "nonsense") == 1
        assert "usage:" in capsys.readouterr().err

    def test_missing_data_dir(self, tmp_path, capsys):
        assert run("train", str(tmp_path / "absent")) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("data.fodls = 4\n")
        assert run("cv", "--config", str(cfg)) == 1
        assert "error" in capsys.readouterr().err

    def test_no_subcommand(self, capsys):
        assert run() == 1
        assert "usage:" in capsys.readouterr().err


class TestSynth:
    def test_layout(self, tmp_path, capsys):
        out = tmp_path / "data"
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(out)) == 0
        assert "24 sequences" in capsys.readouterr().out
        classes = sorted(os.listdir(out))
        assert classes == ["1_surprise", "2_gloomy", "3_fear", "4_happy",
                           "5_angry", "6_disgust"]
        seq_ids = [e for e in sorted(os.listdir(out / "1_surprise"))
                   if not e.endswith(".grid")]
        seq_dir = out / "1_surprise" / seq_ids[0]
        entries = sorted(os.listdir(seq_dir))
        assert "meta.txt" in entries
        assert "frame_000.pgm" in entries
        assert os.path.exists(out / "1_surprise" / (seq_ids[0] + ".grid"))

    def test_seed_changes_data(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(a),
                   "--seed", "1") == 0
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(b),
                   "--seed", "2") == 0
        seq = sorted(e for e in os.listdir(a / "1_surprise")
                     if not e.endswith(".grid"))[0]
        img_a = pl.read_pgm(a / "1_surprise" / seq / "frame_000.pgm")
        img_b = pl.read_pgm(b / "1_surprise" / seq / "frame_000.pgm")
        assert float(np.abs(img_a - img_b).max()) > 0.0


class TestCv:
    def test_smoke_writes_report(self, tmp_path, capsys):
        out = tmp_path / "rep"
        assert run("cv", "--config", SMOKE_CFG, "--method", "proposed",
                   "--out-dir", str(out)) == 0
        stdout = capsys.readouterr().out
        assert "Average Recognition Rate" in stdout
        text = (out / "report.txt").read_text()
        assert "folds=2" in text
        assert "records=24" in text
        assert "method.proposed.pooled.rate=" in text


class TestTrainEval:
    def test_round_trip_matches_in_process(self, tmp_path, capsys):
        data = tmp_path / "data"
        models = tmp_path / "models"
        rep = tmp_path / "rep"
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(data)) == 0
        assert run("train", str(data), "--config", SMOKE_CFG,
                   "--method", "proposed", "--out-dir", str(models)) == 0
        assert os.path.exists(models / "model.meta")
        # eval reads the config stored beside the models
        assert run("eval", str(data), str(models), "--out-dir", str(rep)) == 0
        lines = dict(line.split("=", 1) for line
                     in (rep / "report.txt").read_text().splitlines())
        cli_counts = np.array([float(v) for v in
                               lines["counts"].split(";")]).reshape(6, 6)

        cfg = pl.load_config(SMOKE_CFG)
        records = pl.ingest_dataset(data, cfg)
        folds = pl.assign_folds(records, cfg.folds)
        train = [r for r, k in zip(records, folds) if k != 0]
        test = [r for r, k in zip(records, folds) if k == 0]
        fitted = pl.train_models(train, cfg, "proposed")
        direct = pl.evaluate_models(fitted, test, cfg)
        npt.assert_array_equal(cli_counts, direct.counts)
        assert lines["method"] == "proposed"


class TestGaborDump:
    def test_dump_files(self, tmp_path, capsys):
        data = tmp_path / "data"
        out = tmp_path / "gdump"
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(data)) == 0
        assert run("gabor-dump", str(data), "--config", SMOKE_CFG,
                   "--out-dir", str(out)) == 0
        pgms = sorted(e for e in os.listdir(out) if e.endswith(".pgm"))
        assert len(pgms) == 16
        grid = gabor.read_response_dump(out / "responses.bin")
        cfg = pl.load_config(SMOKE_CFG)
        assert grid.shape == (16, cfg.frames_per_sequence, 48, 36)


class TestRuntimeFailure:
    def test_untrackable_data_is_exit_two(self, tmp_path, capsys):
        data = tmp_path / "data"
        assert run("synth", "--config", SMOKE_CFG, "--out-dir", str(data)) == 0
        # constant frames have no texture anywhere: every grid point is
        # declared lost, a runtime failure rather than a validation error
        flat = np.full((48, 36), 0.5)
        for entry in sorted(os.listdir(data)):
            class_dir = data / entry
            for seq in sorted(os.listdir(class_dir)):
                seq_dir = class_dir / seq
                if not os.path.isdir(seq_dir):
                    continue
                for name in os.listdir(seq_dir):
                    if name.endswith(".pgm"):
                        pl.write_pgm(seq_dir / name, flat)
        assert run("cv", str(data), "--config", SMOKE_CFG,
                   "--method", "proposed") == 2
        assert "failure" in capsys.readouterr().err
