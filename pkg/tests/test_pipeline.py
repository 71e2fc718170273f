import json
import logging

import pytest
import torch

from src.config import BaselineSettings, StageOneSettings, StageThreeSettings, StageTwoSettings
from src.exceptions import DimensionError, EmptySplitError, MissingMaskError, PipelineException, StageConfigError
from src.main import main
from src.models import WEIGHT_NAMES, Model, build_model, mask_from_weights
from src.repositories import Checkpoint, CheckpointRepository
from src.schemas.model.config import ModelConfig
from src.schemas.sparsity.groups import ChannelMask
from src.schemas.training.stage import Method, StageConfig, StageTag
from src.services.data import generate_synthetic, save_features
from src.services.pipeline import (
    StagePipeline,
    accuracy,
    evaluate,
    run_baseline,
    run_stage1,
    run_stage2,
    run_stage3,
)
from src.sparsity import channel_sparsity

SGD = StageConfig(method=Method.SGD, eta=0.02, epochs=2, batch_size=8)
RGSM = StageConfig(method=Method.RGSM, lam=0.05, beta=1.0, eta=0.02, epochs=2, batch_size=8)
BLENDED = StageConfig(method=Method.BLENDED_BC, rho=1e-5, eta=0.005, epochs=2, batch_size=8)
MASK = ChannelMask(bits=(1, 0, 1, 1))


@pytest.fixture
def stage1_checkpoint(tiny_model) -> Checkpoint:
    return Checkpoint(
        config=tiny_model.config,
        tensors=dict(tiny_model.params),
        stage=StageTag.ONE,
        mask=MASK,
        stage_config=RGSM,
        pruning_config=RGSM,
    )


def _assert_masked(tensors, mask: ChannelMask):
    for g, bit in enumerate(mask.bits):
        if bit:
            continue
        assert torch.count_nonzero(tensors["conv1.weight"][..., g]) == 0
        assert tensors["conv1.bias"][g] == 0
        assert torch.count_nonzero(tensors["conv2.weight"][:, :, g, :]) == 0


class TestStageOne:
    def test_rgsm_mask_comes_from_reported_weights(self, tiny_config, tiny_dataset):
        checkpoint, report = run_stage1(RGSM, tiny_dataset, tiny_config)
        model = Model(config=tiny_config, params=dict(checkpoint.tensors))
        assert checkpoint.mask == mask_from_weights(model)
        assert report.rows[-1].channel_sparsity == channel_sparsity(checkpoint.mask)
        assert report.channel_bars == list(checkpoint.mask.bits)
        assert report.summary.label == "RGSM Ch-pruning"
        assert (report.summary.beta, report.summary.lam, report.summary.mu) == (1.0, 0.05, 0.0)
        assert all(row.lagrangian is not None and row.r_grad is not None for row in report.rows)

    def test_gl_reports_no_splitting_diagnostics(self, tiny_config, tiny_dataset):
        config = StageConfig(method=Method.GL, mu=0.5, eta=0.02, epochs=1, batch_size=8)
        checkpoint, report = run_stage1(config, tiny_dataset, tiny_config)
        assert checkpoint.mask is not None
        assert report.rows[0].lagrangian is None
        assert report.summary.mu == 0.5

    def test_gsbc_runs(self, tiny_config, tiny_dataset):
        config = StageConfig(method=Method.GSBC, lam=0.05, eta=0.02, epochs=1, batch_size=8)
        checkpoint, report = run_stage1(config, tiny_dataset, tiny_config)
        assert checkpoint.pruning_config == config
        assert len(report.rows) == 1

    def test_sgd_rejected(self, tiny_config, tiny_dataset):
        with pytest.raises(StageConfigError):
            run_stage1(SGD, tiny_dataset, tiny_config)

    def test_dataset_must_fit_model(self, tiny_dataset):
        with pytest.raises(DimensionError):
            run_stage1(RGSM, tiny_dataset, ModelConfig.toy())


class TestStageTwo:
    def test_sparsity_constant_under_frozen_mask(self, stage1_checkpoint, tiny_dataset):
        checkpoint, report = run_stage2(stage1_checkpoint, SGD, tiny_dataset)
        assert [row.channel_sparsity for row in report.rows] == [25.0, 25.0]
        assert checkpoint.mask == MASK
        assert checkpoint.stage == StageTag.TWO
        _assert_masked(checkpoint.tensors, MASK)

    def test_summary_names_the_pruned_model(self, stage1_checkpoint, tiny_dataset):
        _, report = run_stage2(stage1_checkpoint, SGD, tiny_dataset)
        assert report.summary.label == "RGSM Ch-pruning, float retrained"
        assert (report.summary.beta, report.summary.lam) == (1.0, 0.05)
        assert report.channel_bars == [1, 0, 1, 1]

    def test_missing_mask(self, stage1_checkpoint, tiny_dataset):
        unmasked = Checkpoint(config=stage1_checkpoint.config, tensors=stage1_checkpoint.tensors, stage=StageTag.ONE)
        with pytest.raises(MissingMaskError):
            run_stage2(unmasked, SGD, tiny_dataset)

    def test_pruning_method_rejected(self, stage1_checkpoint, tiny_dataset):
        with pytest.raises(StageConfigError):
            run_stage2(stage1_checkpoint, RGSM, tiny_dataset)


class TestStageThree:
    @pytest.fixture
    def stage2_checkpoint(self, stage1_checkpoint, tiny_dataset):
        checkpoint, _ = run_stage2(stage1_checkpoint, SGD, tiny_dataset)
        return checkpoint

    @pytest.mark.parametrize("config", [BLENDED, StageConfig(method=Method.BC, eta=0.005, epochs=2, batch_size=8)])
    def test_weights_are_scale_times_sign_outside_mask(self, stage2_checkpoint, tiny_dataset, config):
        checkpoint, report = run_stage3(stage2_checkpoint, config, tiny_dataset)
        for name in WEIGHT_NAMES:
            tensor = checkpoint.tensors[name]
            assert torch.unique(tensor.abs()[tensor != 0]).numel() == 1
        _assert_masked(checkpoint.tensors, MASK)
        assert checkpoint.mask == MASK
        assert all(row.channel_sparsity == 25.0 for row in report.rows)

    def test_evaluate_matches_final_epoch(self, stage2_checkpoint, tiny_dataset):
        checkpoint, report = run_stage3(stage2_checkpoint, BLENDED, tiny_dataset)
        assert evaluate(checkpoint, tiny_dataset) == report.rows[-1].val_accuracy
        assert report.summary.accuracy == report.rows[-1].val_accuracy

    def test_float_method_rejected(self, stage2_checkpoint, tiny_dataset):
        with pytest.raises(StageConfigError):
            run_stage3(stage2_checkpoint, SGD, tiny_dataset)


class TestEvaluate:
    def test_untrained_model_is_near_chance(self, toy_dataset):
        model = build_model(ModelConfig.toy(seed=0))
        checkpoint = Checkpoint(config=model.config, tensors=model.params, stage=StageTag.BASELINE)
        assert 12.5 <= evaluate(checkpoint, toy_dataset) <= 37.5

    def test_empty_split(self, tiny_model):
        with pytest.raises(EmptySplitError):
            accuracy(tiny_model, torch.zeros((0, 10, 8), dtype=torch.float64), torch.zeros(0, dtype=torch.long))

    def test_baseline_requires_sgd(self, tiny_config, tiny_dataset):
        with pytest.raises(StageConfigError):
            run_baseline(RGSM, tiny_dataset, tiny_config)


def _pipeline(tiny_config, root) -> StagePipeline:
    return StagePipeline(
        tiny_config,
        CheckpointRepository(root),
        baseline_config=SGD,
        stage1_config=RGSM,
        stage2_config=SGD,
        stage3_config=BLENDED,
    )


class TestStagePipeline:
    def test_run_keeps_the_stage_one_mask(self, tiny_config, tiny_dataset, tmp_path):
        pipeline = _pipeline(tiny_config, tmp_path)
        results = pipeline.run(tiny_dataset)
        assert set(results["stages"]) == {"baseline", "I", "II", "III"}

        masks = [pipeline.repository.load(stage).mask for stage in (StageTag.ONE, StageTag.TWO, StageTag.THREE)]
        assert masks[0] == masks[1] == masks[2]
        assert results["mask"] == list(masks[0].bits)
        for stage_dir in ("baseline", "stage1", "stage2", "stage3"):
            assert (tmp_path / stage_dir / "summary.json").is_file()
            assert (tmp_path / stage_dir / "report.csv").is_file()
        assert (tmp_path / "stage1" / "mask.json").is_file()
        assert not (tmp_path / "baseline" / "mask.json").exists()
        assert len(json.loads((tmp_path / "table.json").read_text(encoding="utf-8"))) == 4

    def test_identical_seeds_give_identical_runs(self, tiny_config, tiny_dataset, tmp_path):
        _pipeline(tiny_config, tmp_path / "a").run(tiny_dataset, include_baseline=False)
        _pipeline(tiny_config, tmp_path / "b").run(tiny_dataset, include_baseline=False)
        for stage_dir in ("stage1", "stage2", "stage3"):
            for name in ("summary.json", "checkpoint.ckpt"):
                first = (tmp_path / "a" / stage_dir / name).read_bytes()
                assert first == (tmp_path / "b" / stage_dir / name).read_bytes()

    def test_later_stages_load_from_the_run(self, tiny_config, tiny_dataset, tmp_path, stage1_checkpoint):
        pipeline = _pipeline(tiny_config, tmp_path)
        pipeline.repository.save(stage1_checkpoint)
        checkpoint, _ = pipeline.stage2(tiny_dataset)
        assert checkpoint.mask == MASK
        checkpoint, _ = pipeline.stage3(tiny_dataset)
        assert checkpoint.stage == StageTag.THREE

    def test_failing_stage_is_logged_and_reraised(self, tiny_config, tiny_dataset, tmp_path, caplog):
        pipeline = StagePipeline(tiny_config, CheckpointRepository(tmp_path), stage1_config=RGSM)
        with caplog.at_level(logging.ERROR, logger="src.services.pipeline.runner"):
            with pytest.raises(PipelineException, match="stage II"):
                pipeline.run(tiny_dataset, include_baseline=False)
        assert "failed at stage II" in caplog.text
        assert (tmp_path / "stage1" / "checkpoint.ckpt").is_file()


@pytest.fixture
def run_config(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(
        "DATA__N_PER_CLASS=10\n"
        "BASELINE__EPOCHS=1\n"
        "STAGE1__EPOCHS=1\n"
        "STAGE2__EPOCHS=1\n"
        "STAGE3__EPOCHS=1\n"
        "LOG_LEVEL=WARNING\n"
    )
    return path


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


class TestCommandLine:
    def test_gen_data(self, tmp_path, run_config, capsys):
        out = tmp_path / "data"
        assert main(["gen-data", "--config", str(run_config), "--out", str(out), "--seed", "3"]) == 0
        payload = _stdout_json(capsys)
        assert payload["examples"] == 40
        assert (out / "features.bin").is_file()

    def test_failure_prints_an_error_line(self, tmp_path, run_config, capsys):
        code = main(["stage2", "--config", str(run_config), "--out", str(tmp_path / "run")])
        assert code == 1
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"] == "CheckpointException"

    def test_stage1_rejects_sgd(self, tmp_path, run_config, capsys):
        code = main(["stage1", "--config", str(run_config), "--out", str(tmp_path / "run"), "--method", "sgd"])
        assert code == 1
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "StageConfigError"

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["report", "--config", str(tmp_path / "absent.env")]) == 1
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ConfigurationError"

    def test_pipeline_then_report(self, tmp_path, run_config, capsys):
        data = save_features(generate_synthetic(4, 10, 32, 16, 0.5, seed=1), tmp_path / "features.bin")
        run = tmp_path / "run"
        args = ["--config", str(run_config), "--out", str(run), "--data", str(data)]
        assert main(["pipeline", *args, "--lambda", "0.05", "--rho", "0.0001"]) == 0
        results = _stdout_json(capsys)
        assert set(results["stages"]) == {"baseline", "I", "II", "III"}
        stage3 = CheckpointRepository(run).load(StageTag.THREE)
        assert stage3.stage_config.rho == 0.0001

        assert main(["eval", *args, "--checkpoint", str(run / "stage3" / "checkpoint.ckpt")]) == 0
        assert _stdout_json(capsys)["accuracy"] == results["stages"]["III"]["accuracy"]

        assert main(["report", "--out", str(run)]) == 0
        captured = capsys.readouterr()
        assert json.loads(captured.out)["rows"] == 4
        assert "Ch. Sparsity" in captured.err


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    """Full toy replication with the default stage settings."""
    dataset = generate_synthetic(num_classes=4, n_per_class=500, t=32, f=16, noise_sigma=0.5, seed=0)
    pipeline = StagePipeline(
        ModelConfig.toy(seed=0),
        CheckpointRepository(tmp_path_factory.mktemp("toy")),
        baseline_config=BaselineSettings().to_stage_config(),
        stage1_config=StageOneSettings().to_stage_config(),
        stage2_config=StageTwoSettings().to_stage_config(),
        stage3_config=StageThreeSettings().to_stage_config(),
    )
    return dataset, pipeline.run(dataset)["stages"]


@pytest.mark.slow
class TestToyReplication:
    def test_baseline_accuracy(self, toy_run):
        _, stages = toy_run
        assert stages["baseline"]["accuracy"] >= 90.0

    def test_stage_one_prunes_at_moderate_cost(self, toy_run):
        _, stages = toy_run
        assert stages["I"]["channel_sparsity"] >= 30.0
        assert stages["I"]["accuracy"] >= stages["baseline"]["accuracy"] - 15.0

    def test_stage_two_recovers(self, toy_run):
        _, stages = toy_run
        assert stages["II"]["accuracy"] >= stages["baseline"]["accuracy"] - 2.0
        assert stages["II"]["channel_sparsity"] == stages["I"]["channel_sparsity"]

    def test_stage_three_binarizes_with_small_loss(self, toy_run):
        _, stages = toy_run
        assert stages["III"]["accuracy"] >= stages["II"]["accuracy"] - 3.0
        assert stages["III"]["channel_sparsity"] == stages["I"]["channel_sparsity"]


GL_SWEEP_EPOCHS = 8


def _stage1_sparsity(dataset, **values) -> float:
    config = StageOneSettings(**values).to_stage_config()
    _, report = run_stage1(config, dataset, ModelConfig.toy(seed=0))
    return report.final_sparsity


@pytest.mark.slow
class TestMethodOrdering:
    def test_rgsm_prunes_more_than_gsbc(self, toy_run):
        dataset, stages = toy_run
        assert stages["I"]["channel_sparsity"] > _stage1_sparsity(dataset, method=Method.GSBC)

    @pytest.mark.parametrize("mu", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    def test_group_lasso_barely_prunes(self, toy_run, mu):
        # subgradient steps never land on an exact zero group, so a short run suffices
        dataset, _ = toy_run
        sparsity = _stage1_sparsity(dataset, method=Method.GL, mu=mu, epochs=GL_SWEEP_EPOCHS, lr_drop_epoch=None)
        assert sparsity < 5.0
