import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv
from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate

from app.errors import ConfigError

load_dotenv()


class Config:
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    RUN_DIR = os.environ.get('RUN_DIR', './runs')
    DATA_DIR = os.environ.get('DATA_DIR', './data')

    # Run directory served by the HTTP API
    CHECKPOINT = os.environ.get('CHECKPOINT')

    # Decoding
    EVAL_WORKERS = int(os.environ.get('EVAL_WORKERS', 1))
    DEFAULT_BEAM = int(os.environ.get('DEFAULT_BEAM', 4))

    MAX_CONTENT_LENGTH = 16 * 1024 * 1024


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    DEBUG = False


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = 'WARNING'
    EVAL_WORKERS = 1


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


# Experiment configuration -----------------------------------------------------

@dataclass(frozen=True)
class EncoderConfig:
    encoder_type: str = 'conformer'
    num_blocks: int = 2
    d_model: int = 64
    num_heads: int = 4
    ff_hidden: int = 128
    conv_kernel: int = 15
    conv_expansion: int = 2
    conv_norm: str = 'batch'
    positional_encoding: str = 'absolute'
    input_dim: int = 40
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.num_heads:
            raise ConfigError(f'd_model {self.d_model} not divisible by num_heads {self.num_heads}')
        if self.d_model % 2:
            raise ConfigError(f'd_model must be even, got {self.d_model}')
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f'conv_kernel must be odd, got {self.conv_kernel}')


@dataclass(frozen=True)
class DecoderConfig:
    num_layers: int = 1
    d_model: int = 64
    num_heads: int = 4
    ff_hidden: int = 128
    tie_embeddings: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.num_heads:
            raise ConfigError(f'd_model {self.d_model} not divisible by num_heads {self.num_heads}')


@dataclass(frozen=True)
class MultiTaskLossConfig:
    lam: float = 0.3
    alpha: float = 0.6
    label_smoothing: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f'lambda must lie in [0, 1], got {self.lam}')
        if self.alpha < 0.0:
            raise ConfigError(f'alpha must be non-negative, got {self.alpha}')


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    plateau_factor: float = 0.5
    patience: int = 2
    min_lr: float = 1e-5


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 20
    seed: int = 0
    languages: tuple = ()
    init: str = 'uniform_fan_in'
    bucket_factor: int = 4


@dataclass(frozen=True)
class AugmentConfig:
    spec_augment: bool = False
    speed_perturb: bool = False
    num_freq_masks: int = 2
    max_freq_width: int = 8
    num_time_masks: int = 2
    max_time_width: int = 20


@dataclass(frozen=True)
class DataConfig:
    train_manifest: str = 'data/train.tsv'
    valid_manifest: str = 'data/dev.tsv'
    out_dir: str = 'runs/default'


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 4
    max_len: int = 100
    constrain_first: bool = True


@dataclass(frozen=True)
class SynthConfig:
    num_languages: int = 3
    phones_shared: int = 10
    phones_per_language: int = 8
    graphemes_per_language: int = 8
    train_per_language: int = 60
    dev_per_language: int = 20
    min_phones: int = 3
    max_phones: int = 8
    min_word_phones: int = 2
    max_word_phones: int = 4
    frames_per_phone: int = 8
    silence_frames: int = 8
    noise_std: float = 0.05
    language_offset_scale: float = 0.5
    waveform_mode: bool = False
    seed: int = 42

    def __post_init__(self):
        if self.num_languages != 3:
            raise ConfigError('the synthetic corpus has exactly three languages')
        if self.phones_per_language > self.phones_shared:
            raise ConfigError('phones_per_language exceeds the shared phone inventory')
        if self.graphemes_per_language < self.phones_per_language:
            raise ConfigError(
                f'graphemes_per_language ({self.graphemes_per_language}) < phones_per_language '
                f'({self.phones_per_language}): phone-to-grapheme map cannot be injective')
        if not 1 <= self.min_phones <= self.max_phones:
            raise ConfigError('need 1 <= min_phones <= max_phones')
        if not 1 <= self.min_word_phones <= self.max_word_phones:
            raise ConfigError('need 1 <= min_word_phones <= max_word_phones')


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    loss: MultiTaskLossConfig = field(default_factory=MultiTaskLossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    data: DataConfig = field(default_factory=DataConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        if self.decoder.d_model != self.encoder.d_model:
            raise ConfigError(f'decoder d_model {self.decoder.d_model} must match '
                              f'encoder d_model {self.encoder.d_model}')
        if self.decoder.tie_embeddings:
            raise ConfigError('tied decoder embeddings are not supported')

    def replace(self, **sections):
        """Copy with whole sections or ``section__key`` overrides replaced."""
        updates = {}
        for key, value in sections.items():
            if '__' in key:
                section, name = key.split('__', 1)
                current = updates.get(section, getattr(self, section))
                updates[section] = dataclasses.replace(current, **{name: value})
            else:
                updates[key] = value
        return dataclasses.replace(self, **updates)


class CommaList(fields.Field):
    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, (list, tuple)):
            return tuple(value)
        return tuple(item.strip() for item in str(value).split(',') if item.strip())

    def _serialize(self, value, attr, obj, **kwargs):
        return ','.join(value or ())


class _SectionSchema(Schema):
    dataclass = None

    class Meta:
        unknown = RAISE

    @post_load
    def make(self, data, **kwargs):
        try:
            return self.dataclass(**data)
        except ConfigError as exc:
            raise ValidationError(str(exc)) from exc


class EncoderSchema(_SectionSchema):
    dataclass = EncoderConfig
    encoder_type = fields.String(validate=validate.OneOf(['conformer', 'transformer']))
    num_blocks = fields.Integer(validate=validate.Range(min=1))
    d_model = fields.Integer(validate=validate.Range(min=2))
    num_heads = fields.Integer(validate=validate.Range(min=1))
    ff_hidden = fields.Integer(validate=validate.Range(min=1))
    conv_kernel = fields.Integer(validate=validate.Range(min=1))
    conv_expansion = fields.Integer(validate=validate.Equal(2))
    conv_norm = fields.String(validate=validate.OneOf(['batch', 'layer']))
    positional_encoding = fields.String(validate=validate.OneOf(['absolute']))
    input_dim = fields.Integer(validate=validate.Equal(40))
    dropout = fields.Float(validate=validate.Range(min=0.0, max=0.9))


class DecoderSchema(_SectionSchema):
    dataclass = DecoderConfig
    num_layers = fields.Integer(validate=validate.Range(min=1))
    d_model = fields.Integer(validate=validate.Range(min=2))
    num_heads = fields.Integer(validate=validate.Range(min=1))
    ff_hidden = fields.Integer(validate=validate.Range(min=1))
    tie_embeddings = fields.Boolean()
    dropout = fields.Float(validate=validate.Range(min=0.0, max=0.9))


class LossSchema(_SectionSchema):
    dataclass = MultiTaskLossConfig
    lam = fields.Float(data_key='lambda', validate=validate.Range(min=0.0, max=1.0))
    alpha = fields.Float(validate=validate.Range(min=0.0))
    label_smoothing = fields.Float(validate=validate.Range(min=0.0, max=0.5))


class OptimizerSchema(_SectionSchema):
    dataclass = OptimizerConfig
    lr = fields.Float(validate=validate.Range(min=0.0, min_inclusive=False))
    beta1 = fields.Float(validate=validate.Range(min=0.0, max=1.0))
    beta2 = fields.Float(validate=validate.Range(min=0.0, max=1.0))
    eps = fields.Float(validate=validate.Range(min=0.0, min_inclusive=False))
    plateau_factor = fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False))
    patience = fields.Integer(validate=validate.Range(min=0))
    min_lr = fields.Float(validate=validate.Range(min=0.0))


class TrainingSchema(_SectionSchema):
    dataclass = TrainingConfig
    epochs = fields.Integer(validate=validate.Range(min=1))
    batch_size = fields.Integer(validate=validate.Range(min=1))
    seed = fields.Integer(validate=validate.Range(min=0))
    languages = CommaList()
    init = fields.String(validate=validate.OneOf(['uniform_fan_in']))
    bucket_factor = fields.Integer(validate=validate.Range(min=1))


class AugmentSchema(_SectionSchema):
    dataclass = AugmentConfig
    spec_augment = fields.Boolean()
    speed_perturb = fields.Boolean()
    num_freq_masks = fields.Integer(validate=validate.Range(min=0))
    max_freq_width = fields.Integer(validate=validate.Range(min=0, max=40))
    num_time_masks = fields.Integer(validate=validate.Range(min=0))
    max_time_width = fields.Integer(validate=validate.Range(min=0))


class DataSchema(_SectionSchema):
    dataclass = DataConfig
    train_manifest = fields.String()
    valid_manifest = fields.String()
    out_dir = fields.String()


class DecodeSchema(_SectionSchema):
    dataclass = DecodeConfig
    beam = fields.Integer(validate=validate.Range(min=1))
    max_len = fields.Integer(validate=validate.Range(min=3))
    constrain_first = fields.Boolean()


class SynthSchema(_SectionSchema):
    dataclass = SynthConfig
    num_languages = fields.Integer()
    phones_shared = fields.Integer(validate=validate.Range(min=1))
    phones_per_language = fields.Integer(validate=validate.Range(min=1))
    graphemes_per_language = fields.Integer(validate=validate.Range(min=1, max=24))
    train_per_language = fields.Integer(validate=validate.Range(min=0))
    dev_per_language = fields.Integer(validate=validate.Range(min=0))
    min_phones = fields.Integer()
    max_phones = fields.Integer()
    min_word_phones = fields.Integer()
    max_word_phones = fields.Integer()
    frames_per_phone = fields.Integer(validate=validate.Range(min=1))
    silence_frames = fields.Integer(validate=validate.Range(min=1))
    noise_std = fields.Float(validate=validate.Range(min=0.0))
    language_offset_scale = fields.Float(validate=validate.Range(min=0.0))
    waveform_mode = fields.Boolean()
    seed = fields.Integer(validate=validate.Range(min=0))


class RunConfigSchema(Schema):
    class Meta:
        unknown = RAISE

    encoder = fields.Nested(EncoderSchema, load_default=dict)
    decoder = fields.Nested(DecoderSchema, load_default=dict)
    loss = fields.Nested(LossSchema, load_default=dict)
    optimizer = fields.Nested(OptimizerSchema, load_default=dict)
    training = fields.Nested(TrainingSchema, load_default=dict)
    augment = fields.Nested(AugmentSchema, load_default=dict)
    data = fields.Nested(DataSchema, load_default=dict)
    decode = fields.Nested(DecodeSchema, load_default=dict)
    synth = fields.Nested(SynthSchema, load_default=dict)

    @post_load
    def make(self, data, **kwargs):
        sections = {}
        for name, schema in self.fields.items():
            value = data.get(name, {})
            # load_default bypasses the nested post_load
            sections[name] = value if not isinstance(value, dict) else schema.schema.load(value)
        try:
            return RunConfig(**sections)
        except ConfigError as exc:
            raise ValidationError(str(exc)) from exc


def parse_run_config(text):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f'malformed config: {exc}') from exc
    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    try:
        return RunConfigSchema().load(raw)
    except ValidationError as exc:
        raise ConfigError(f'invalid config: {exc.messages}') from exc


def load_run_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f'config file not found: {path}')
    return parse_run_config(path.read_text(encoding='utf-8'))


def dump_run_config(run_config):
    """Render ``run_config`` in the same ``key = value`` format ``parse_run_config`` reads."""
    parser = configparser.ConfigParser(interpolation=None)
    dumped = RunConfigSchema().dump(run_config)
    for section, values in dumped.items():
        parser[section] = {key: _ini_value(value) for key, value in values.items()}
    lines = []
    for section in parser.sections():
        lines.append(f'[{section}]')
        lines.extend(f'{key} = {value}' for key, value in parser[section].items())
        lines.append('')
    return '\n'.join(lines)


def _ini_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return repr(value) if isinstance(value, float) else str(value)
