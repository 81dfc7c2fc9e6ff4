import pytest

from app.config import (
    EncoderConfig, MultiTaskLossConfig, RunConfig, SynthConfig, dump_run_config,
    load_run_config, parse_run_config,
)
from app.errors import ConfigError


class TestRunConfig:
    """INI run configuration."""

    def test_defaults(self, default_config):
        """Built-in defaults match the desk-scale model."""
        assert default_config.encoder.num_blocks == 2
        assert default_config.encoder.d_model == 64
        assert default_config.encoder.conv_kernel == 15
        assert default_config.loss.lam == 0.3
        assert default_config.loss.alpha == 0.6
        assert default_config.optimizer.lr == 0.001
        assert default_config.training.init == 'uniform_fan_in'

    def test_parse_sections(self, desk_config):
        """Sections given in the INI override the defaults they name."""
        assert desk_config.encoder.d_model == 16
        assert desk_config.encoder.conv_norm == 'layer'
        assert desk_config.decoder.num_heads == 2
        assert desk_config.training.epochs == 2
        assert desk_config.loss == MultiTaskLossConfig()

    def test_lambda_key_and_languages(self):
        """`lambda` maps onto lam and languages is a comma list."""
        cfg = parse_run_config('[loss]\nlambda = 0.5\nalpha = 0\n'
                               '[training]\nlanguages = [L1], [L3]\n')
        assert cfg.loss.lam == 0.5 and cfg.loss.alpha == 0.0
        assert cfg.training.languages == ('[L1]', '[L3]')

    def test_dump_round_trip(self, desk_config):
        """A dumped config parses back to an equal config."""
        cfg = desk_config.replace(training__languages=('[L2]',), loss__alpha=0.25)
        assert parse_run_config(dump_run_config(cfg)) == cfg

    def test_replace_nested(self, default_config):
        """section__key overrides leave other fields alone."""
        cfg = default_config.replace(training__seed=9, data__out_dir='elsewhere')
        assert cfg.training.seed == 9
        assert cfg.training.epochs == default_config.training.epochs
        assert cfg.data.out_dir == 'elsewhere'

    @pytest.mark.parametrize('text', [
        '[encoder]\nd_model = 30\nnum_heads = 4\n',
        '[encoder]\nconv_kernel = 4\n',
        '[loss]\nlambda = 1.5\n',
        '[encoder]\nbogus = 1\n',
        '[nonsense]\nx = 1\n',
        '[decoder]\nd_model = 32\nnum_heads = 4\n',
        'no section header\n',
    ])
    def test_invalid_configs(self, text):
        """Invalid values, unknown keys and malformed files are config errors."""
        with pytest.raises(ConfigError):
            parse_run_config(text)

    def test_missing_file(self, tmp_path):
        """A missing config path is a config error."""
        with pytest.raises(ConfigError, match='not found'):
            load_run_config(tmp_path / 'absent.ini')

    def test_dataclass_validation(self):
        """Dataclasses validate their own invariants."""
        with pytest.raises(ConfigError):
            EncoderConfig(d_model=10, num_heads=4)
        with pytest.raises(ConfigError, match='injective'):
            SynthConfig(graphemes_per_language=4, phones_per_language=6)
        with pytest.raises(ConfigError):
            RunConfig(encoder=EncoderConfig(d_model=32, num_heads=4))
