import numpy as np
import pytest

from app import create_app
from app.config import RunConfig, SynthConfig
from app.data.synth import generate_corpus

DESK_CONFIG = """
[encoder]
num_blocks = 2
d_model = 16
num_heads = 2
ff_hidden = 32
conv_kernel = 5
conv_norm = layer

[decoder]
num_layers = 1
d_model = 16
num_heads = 2
ff_hidden = 32

[training]
epochs = 2
batch_size = 8
seed = 0
"""


@pytest.fixture
def app(tmp_path):
    """Create and configure a new app instance for each test."""
    app = create_app('testing')
    app.config.update(DATA_DIR=str(tmp_path / 'data'), RUN_DIR=str(tmp_path / 'runs'))
    yield app


@pytest.fixture
def client(app):
    """A test client for the app."""
    return app.test_client()


@pytest.fixture
def runner(app):
    """A test runner for the app's Click commands."""
    return app.test_cli_runner()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_synth():
    return SynthConfig(train_per_language=4, dev_per_language=2, min_phones=3, max_phones=4,
                       seed=7)


@pytest.fixture
def corpus_dir(tmp_path, tiny_synth):
    """A small synthetic corpus on disk."""
    generate_corpus(tiny_synth, tmp_path / 'corpus')
    return tmp_path / 'corpus'


@pytest.fixture
def desk_config_path(tmp_path, corpus_dir):
    path = tmp_path / 'desk.ini'
    path.write_text(DESK_CONFIG + f"""
[data]
train_manifest = {corpus_dir / 'train.tsv'}
valid_manifest = {corpus_dir / 'dev.tsv'}
out_dir = {tmp_path / 'run'}
""", encoding='utf-8')
    return path


@pytest.fixture
def desk_config():
    from app.config import parse_run_config
    return parse_run_config(DESK_CONFIG)


@pytest.fixture
def default_config():
    return RunConfig()


@pytest.fixture(scope='session')
def trained_run(tmp_path_factory):
    """One short desk-size training run shared by the slower tests."""
    from app.config import parse_run_config
    from app.training.trainer import Trainer

    root = tmp_path_factory.mktemp('trained')
    synth = SynthConfig(train_per_language=4, dev_per_language=2, min_phones=3, max_phones=4,
                        seed=7)
    generate_corpus(synth, root / 'corpus')
    run_config = parse_run_config(DESK_CONFIG).replace(
        training__epochs=1, data__train_manifest=str(root / 'corpus' / 'train.tsv'),
        data__valid_manifest=str(root / 'corpus' / 'dev.tsv'), data__out_dir=str(root / 'run'))
    result = Trainer(run_config).fit()
    return result, root / 'corpus'
