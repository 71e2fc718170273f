import pytest

from src.config import StageOneSettings, StageSettings, get_settings
from src.exceptions import ConfigurationError, StageConfigError
from src.schemas.training.stage import Method, StageConfig, lr_schedule


class TestStageConfig:
    @pytest.mark.parametrize(
        "values",
        [
            {"method": Method.GL, "mu": 0.0},
            {"method": Method.GL, "mu": 0.5, "lam": 0.1},
            {"method": Method.RGSM, "lam": 0.05, "beta": 0.0},
            {"method": Method.RGSM, "lam": 0.05, "beta": 1.0, "mu": 0.1},
            {"method": Method.GSBC, "lam": 0.05, "beta": 1.0},
            {"method": Method.GSBC, "lam": 0.0},
            {"method": Method.SGD, "lam": 0.05},
            {"method": Method.BC, "rho": 0.1},
            {"method": Method.BLENDED_BC, "rho": 1.5},
        ],
    )
    def test_method_parameters_validated(self, values):
        with pytest.raises(ValueError):
            StageConfig(epochs=1, **values)

    def test_valid_configurations(self):
        StageConfig(method=Method.GL, mu=0.5, epochs=1)
        StageConfig(method=Method.RGSM, lam=0.05, beta=1.0, epochs=1)
        StageConfig(method=Method.GSBC, lam=0.05, epochs=1)
        StageConfig(method=Method.BLENDED_BC, rho=1e-5, epochs=1)

    def test_learning_rate_drops_tenfold(self):
        config = StageConfig(method=Method.SGD, eta=0.02, epochs=30, lr_drop_epoch=24)
        assert config.learning_rate(23) == 0.02
        assert config.learning_rate(24) == pytest.approx(0.002, rel=1e-15)
        assert lr_schedule(0.1, 100, None) == 0.1


class TestStageSettings:
    def test_method_defaults_fill_unset_values(self):
        config = StageSettings(method=Method.RGSM).to_stage_config()
        assert (config.lam, config.beta, config.mu) == (0.05, 1.0, 0.0)
        config = StageSettings(method=Method.GSBC).to_stage_config()
        assert (config.lam, config.beta) == (0.05, 0.0)
        config = StageSettings(method=Method.GL).to_stage_config()
        assert config.mu == 0.5

    def test_rho_only_reaches_blended_bc(self):
        assert StageSettings(method=Method.BC, rho=0.3).to_stage_config().rho == 0.0
        assert StageSettings(method=Method.BLENDED_BC, rho=0.3).to_stage_config().rho == 0.3

    def test_lr_becomes_eta(self):
        config = StageOneSettings(lr=0.05).to_stage_config()
        assert config.method == Method.RGSM
        assert config.eta == 0.05
        assert (config.epochs, config.lr_drop_epoch) == (30, 24)

    def test_inconsistent_values(self):
        with pytest.raises(StageConfigError):
            StageSettings(method=Method.RGSM, beta=0.0).to_stage_config()


class TestSettings:
    def test_defaults(self, monkeypatch, tmp_path):
        monkeypatch.chdir(tmp_path)
        settings = get_settings()
        assert settings.model.preset == "toy"
        assert settings.data.n_per_class == 500
        assert settings.stage1.method == Method.RGSM
        assert settings.stage3.to_stage_config().rho == 1e-5
        assert settings.stage2.to_stage_config().eta == 0.01

    def test_config_file_and_overrides(self, tmp_path):
        config_file = tmp_path / "run.env"
        config_file.write_text("STAGE1__LAM=0.04\nSTAGE1__EPOCHS=3\nDATA__N_PER_CLASS=50\n")
        settings = get_settings(config_file, stage1={"epochs": 5})
        assert settings.stage1.lam == 0.04
        assert settings.stage1.epochs == 5
        assert settings.data.n_per_class == 50

    def test_method_parsed_from_file(self, tmp_path):
        config_file = tmp_path / "run.env"
        config_file.write_text("STAGE1__METHOD=gsbc\n")
        assert get_settings(config_file).stage1.to_stage_config().method == Method.GSBC

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            get_settings(tmp_path / "absent.env")

    def test_invalid_value(self, tmp_path):
        config_file = tmp_path / "run.env"
        config_file.write_text("STAGE1__EPOCHS=many\n")
        with pytest.raises(ConfigurationError):
            get_settings(config_file)
