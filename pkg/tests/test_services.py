"""
服务与命令行测试
在微型配置和小合成数据集上跑完整的训练、评估、预测流程
"""

import math
import os

import pandas as pd
import pytest

import app
from config import DataConfig, IOConfig, RunConfig, TrainConfig, save_run_config
from metrics import auc
from services.eval_service import REPORT_FILE, ROC_FILE, SCORES_FILE, EvalService, roc_from_scores
from services.model_factory import ModelFactory
from services.predict_service import PredictService
from services.synth_service import SynthService
from services.train_service import LAST_CHECKPOINT, METRICS_FILE, METRICS_TAG, TrainService
from services.checkpoint_service import save_checkpoint
from tests.helpers import micro_config
from utils.csv_utils import read_comment_line, read_csv
from utils.errors import (
    EXIT_EMPTY_DIRECTORY,
    EXIT_INVALID_ARGUMENT,
    EXIT_MISSING_DATA,
    EXIT_NON_FINITE_LOSS,
    EXIT_UNEXPECTED,
    ConfigError,
    EmptyDirectoryError,
    NonFiniteLossError,
    TruncatedCheckpointError,
    exit_code_for,
)

SPLIT = (0.5, 0.25, 0.25)


def _run_config(root, out, epochs=2):
    return RunConfig(
        model=micro_config(),
        train=TrainConfig(batch_a=4, batch_b=4, epochs=epochs),
        data=DataConfig(root=root, frames_train=2, frames_eval=2, split=SPLIT),
        io=IOConfig(checkpoint_dir=os.path.join(out, "ckpt"), metrics_dir=os.path.join(out, "metrics")),
        seed=0,
    ).validate()


@pytest.fixture
def trained(synthetic_root, tmp_path):
    run = _run_config(synthetic_root, str(tmp_path / "full"))
    result = TrainService(run, progress=False).run()
    assert result["success"], result["error"]
    return run, result


def _read(path):
    with open(path, "rb") as f:
        return f.read()


def test_train_writes_metrics_and_checkpoint(trained):
    run, result = trained
    assert result["epochs_run"] == 2
    assert [row["epoch"] for row in result["history"]] == [1, 2]
    assert all(math.isfinite(row["loss_a"]) and math.isfinite(row["loss_b"]) for row in result["history"])
    assert result["checkpoint"] == os.path.join(run.io.checkpoint_dir, LAST_CHECKPOINT)

    assert os.path.basename(result["metrics_csv"]) == METRICS_FILE
    assert read_comment_line(result["metrics_csv"]).startswith(METRICS_TAG)
    df = read_csv(result["metrics_csv"], comment="#")
    assert list(df.columns) == ["epoch", "loss_a", "loss_b", "val_acc", "mse_b"]
    assert len(df) == 2


def test_resume_matches_uninterrupted_run(trained, synthetic_root, tmp_path):
    _, full = trained
    first = TrainService(_run_config(synthetic_root, str(tmp_path / "part"), epochs=1), progress=False).run()
    assert first["success"], first["error"]

    resumed_run = _run_config(synthetic_root, str(tmp_path / "resumed"))
    resumed = TrainService(resumed_run, progress=False).run(resume=first["checkpoint"], epochs=2)
    assert resumed["success"], resumed["error"]
    assert resumed["epochs_run"] == 1
    assert resumed["history"] == full["history"]
    assert _read(resumed["metrics_csv"]) == _read(full["metrics_csv"])


def test_train_missing_data_fails_cleanly(tmp_path):
    run = _run_config(str(tmp_path / "nowhere"), str(tmp_path / "out"))
    result = TrainService(run, progress=False).run()
    assert not result["success"]
    assert result["exit_code"] == EXIT_MISSING_DATA


def test_evaluate_split_is_reproducible(trained, synthetic_root, tmp_path):
    _, result = trained
    service = EvalService(result["model"], workers=1, progress=False)
    out_a, out_b = str(tmp_path / "eval_a"), str(tmp_path / "eval_b")
    a = service.evaluate_split(synthetic_root, out_a, "test", SPLIT, 0, 2)
    assert a["success"], a["error"]
    for name in (REPORT_FILE, SCORES_FILE, ROC_FILE):
        assert os.path.isfile(os.path.join(out_a, name))

    scores = pd.read_csv(a["scores_path"])
    assert a["report"]["videos"] == len(scores) == 2
    assert a["report"]["combined"]["auc"] == auc(scores["score"], scores["label"])

    b = EvalService(result["model"], workers=2, progress=False).evaluate_split(synthetic_root, out_b, "test", SPLIT, 0, 2)
    assert b["report"] == a["report"]
    assert _read(os.path.join(out_a, REPORT_FILE)) == _read(os.path.join(out_b, REPORT_FILE))


def test_evaluate_unknown_split(trained, synthetic_root, tmp_path):
    _, result = trained
    out = EvalService(result["model"], progress=False).evaluate_split(synthetic_root, str(tmp_path), "dev")
    assert not out["success"]
    assert out["exit_code"] == EXIT_INVALID_ARGUMENT


def test_roc_from_scores(tmp_path):
    scores = tmp_path / "scores.csv"
    scores.write_text("video_id,label,score\nr1,0,0.1\nr2,0,0.4\nf1,1,0.35\nf2,1,0.8\n", encoding="utf-8")
    result = roc_from_scores(str(scores), str(tmp_path / "roc"))
    assert result["success"], result["error"]
    assert result["auc"] == 0.75
    assert os.path.isfile(result["roc"]["svg"])

    single = tmp_path / "single.csv"
    single.write_text("video_id,label,score\nf1,1,0.3\nf2,1,0.8\n", encoding="utf-8")
    out = roc_from_scores(str(single), str(tmp_path / "roc2"))
    assert not out["success"]
    assert out["exit_code"] == EXIT_MISSING_DATA


def test_predict_directory(synthetic_root, tmp_path):
    model = ModelFactory.create_model(micro_config(), seed=2)
    service = PredictService(model)
    result = service.predict_directory(os.path.join(synthetic_root, "fake", "vid_0000"), n_frames=2)
    assert result["success"], result["error"]
    assert result["frames_used"] == 2
    assert result["verdict"] in ("REAL", "FAKE")
    assert result["line"].split("\t")[0] == "vid_0000"

    only_a = service.predict_directory(os.path.join(synthetic_root, "fake", "vid_0000"), n_frames=2, net="a")
    assert only_a["score_b"] is None

    os.makedirs(tmp_path / "empty")
    assert service.predict_directory(str(tmp_path / "empty"))["exit_code"] == EXIT_EMPTY_DIRECTORY
    assert service.predict_directory(str(tmp_path / "missing"))["exit_code"] == EXIT_INVALID_ARGUMENT


def test_synth_service_reports_hash(tmp_path):
    service = SynthService()
    a = service.generate(str(tmp_path / "a"), 2, 2, seed=1, size=16)
    b = service.generate(str(tmp_path / "b"), 2, 2, seed=1, size=16)
    assert a["success"] and b["success"]
    assert a["tree_hash"] == b["tree_hash"]
    assert int(a["summary"]["frames"].sum()) == 8


def test_exit_code_mapping():
    assert exit_code_for(ConfigError("x")) == EXIT_INVALID_ARGUMENT
    assert exit_code_for(EmptyDirectoryError("x")) == EXIT_EMPTY_DIRECTORY
    assert exit_code_for(TruncatedCheckpointError("x")) == EXIT_MISSING_DATA
    assert exit_code_for(FileNotFoundError("x")) == EXIT_MISSING_DATA
    assert exit_code_for(NonFiniteLossError("x")) == EXIT_NON_FINITE_LOSS
    assert exit_code_for(RuntimeError("x")) == EXIT_UNEXPECTED


# ---------------------------------------------------------------------------
# 命令行
# ---------------------------------------------------------------------------

@pytest.fixture
def micro_checkpoint(tmp_path):
    path = str(tmp_path / "micro.ckpt")
    save_checkpoint(ModelFactory.create_model(micro_config()), path)
    return path


def test_cli_synth(tmp_path, capsys):
    out = str(tmp_path / "data")
    assert app.main(["synth", "--videos", "2", "--frames", "2", "--size", "16", "--out", out]) == 0
    assert "tree_hash=" in capsys.readouterr().out
    assert os.path.isdir(os.path.join(out, "real", "vid_0001"))

    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    assert app.main(["synth", "--videos", "2", "--frames", "2", "--out", str(blocker / "data")]) == EXIT_INVALID_ARGUMENT


def test_cli_predict_exit_codes(tmp_path, micro_checkpoint, synthetic_root, capsys):
    video = os.path.join(synthetic_root, "real", "vid_0002")
    assert app.main(["predict", video, "--checkpoint", micro_checkpoint, "--frames-eval", "2"]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.split("\t")[0] == "vid_0002"

    os.makedirs(tmp_path / "empty")
    assert app.main(["predict", str(tmp_path / "empty"), "--checkpoint", micro_checkpoint]) == EXIT_EMPTY_DIRECTORY
    assert app.main(["predict", str(tmp_path / "nowhere"), "--checkpoint", micro_checkpoint]) == EXIT_INVALID_ARGUMENT
    assert app.main(["predict", video, "--checkpoint", str(tmp_path / "none.ckpt")]) == EXIT_MISSING_DATA


def test_cli_roc(tmp_path, capsys):
    scores = tmp_path / "scores.csv"
    scores.write_text("video_id,label,score\nr1,0,0.2\nf1,1,0.9\n", encoding="utf-8")
    out = tmp_path / "roc"
    assert app.main(["roc", "--scores", str(scores), "--out", str(out)]) == 0
    assert "auc=1.000000" in capsys.readouterr().out
    assert os.path.isfile(out / "roc.svg")
    assert app.main(["roc", "--scores", str(tmp_path / "missing.csv"), "--out", str(out)]) == EXIT_MISSING_DATA


def test_cli_bad_config_flag(tmp_path):
    assert app.main(["--config", str(tmp_path / "missing.json"), "roc", "--scores", "x", "--out", "y"]) \
        == EXIT_INVALID_ARGUMENT


def test_cli_train_then_eval(synthetic_root, tmp_path, capsys):
    out = str(tmp_path / "cli")
    config_path = save_run_config(_run_config(synthetic_root, out, epochs=1), str(tmp_path / "run.json"))
    assert app.main(["--config", config_path, "--no-progress", "train"]) == 0
    assert os.path.isfile(os.path.join(out, "ckpt", LAST_CHECKPOINT))

    assert app.main(["--config", config_path, "--no-progress", "eval", "--split", "test"]) == 0
    assert "auc=" in capsys.readouterr().out
    assert os.path.isfile(os.path.join(out, "metrics", REPORT_FILE))


@pytest.fixture
def clean_thread_env(monkeypatch):
    for var in (*app.THREAD_ENV_VARS, "GENCONVIT_THREADS"):
        monkeypatch.delenv(var, raising=False)


def test_cli_thread_count_precedence(tmp_path, clean_thread_env):
    """没有 --threads 时也按配置写出线程数环境变量"""
    scores = tmp_path / "scores.csv"
    scores.write_text("video_id,label,score\nr1,0,0.2\nf1,1,0.9\n", encoding="utf-8")
    roc_args = ["roc", "--scores", str(scores), "--out", str(tmp_path / "roc")]

    assert app.main(roc_args) == 0
    assert all(os.environ[var] == "1" for var in app.THREAD_ENV_VARS)

    config_path = save_run_config(RunConfig(threads=3), str(tmp_path / "run.json"))
    assert app.main(["--config", config_path, *roc_args]) == 0
    assert all(os.environ[var] == "3" for var in app.THREAD_ENV_VARS)

    assert app.main(["--config", config_path, "--threads", "2", *roc_args]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
