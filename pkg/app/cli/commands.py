import dataclasses
import functools
from pathlib import Path

import click
from flask import current_app

from app.cli import bp
from app.config import RunConfig, SynthConfig, load_run_config
from app.data.manifest import load_manifest
from app.data.synth import generate_corpus
from app.decoding.metrics import write_hypotheses
from app.errors import AsrError, ConfigError, NumericalError
from app.training.evaluate import evaluate, load_input_features, load_run
from app.training.experiments import DEFAULT_ALPHAS, alpha_sweep, compare, run_gradcheck
from app.training.trainer import Trainer


def handle_errors(f):
    """Report toolkit errors on stderr and exit with their code."""
    @functools.wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except AsrError as exc:
            current_app.logger.debug('Command failed', exc_info=True)
            click.echo(f'error: {exc}', err=True)
            raise click.exceptions.Exit(exc.exit_code)
    return decorated_function


def csv_list(value, cast=str):
    if value is None:
        return None
    try:
        return tuple(cast(item.strip()) for item in value.split(',') if item.strip())
    except ValueError as exc:
        raise ConfigError(f'malformed list {value!r}: {exc}') from exc


def read_config(path, seed=None, langs=None, out=None, manifest=None):
    run_config = load_run_config(path) if path else RunConfig()
    overrides = {}
    if seed is not None:
        overrides['training__seed'] = seed
    if langs:
        overrides['training__languages'] = csv_list(langs)
    if out:
        overrides['data__out_dir'] = out
    if manifest:
        overrides['data__train_manifest'] = manifest
    return run_config.replace(**overrides) if overrides else run_config


def default_beam():
    return current_app.config['DEFAULT_BEAM']


config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                             help='Run configuration (INI).')
seed_option = click.option('--seed', type=int, help='Override the training seed.')
langs_option = click.option('--langs', help='Comma-separated language labels to keep.')
beam_option = click.option('--beam', type=click.IntRange(min=1), default=None,
                           help='Beam width (default: DEFAULT_BEAM).')


@bp.cli.command('gen-corpus')
@config_option
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--seed', type=int, help='Override the corpus seed.')
@handle_errors
def gen_corpus(config_path, out, seed):
    """Generate the synthetic three-language corpus."""
    synth = read_config(config_path).synth if config_path else SynthConfig()
    if seed is not None:
        synth = dataclasses.replace(synth, seed=seed)
    out = out or current_app.config['DATA_DIR']
    corpus = generate_corpus(synth, out)
    click.echo(f'wrote {len(corpus.train)} train and {len(corpus.dev)} dev utterances to {out}')


@bp.cli.command('train')
@config_option
@click.option('--manifest', type=click.Path(dir_okay=False), help='Training manifest.')
@click.option('--out', type=click.Path(file_okay=False), help='Run directory.')
@seed_option
@langs_option
@handle_errors
def train(config_path, manifest, out, seed, langs):
    """Train the dual-decoder model."""
    run_config = read_config(config_path, seed, langs, out, manifest)
    result = Trainer(run_config).fit()
    click.echo(f'best epoch {result.best_epoch + 1}: valid l_total {result.best_valid_loss:.4f}; '
               f'checkpoint {result.checkpoint_path}; skipped {result.skipped} utterances')


@bp.cli.command('eval')
@click.option('--checkpoint', required=True, type=click.Path(), help='Checkpoint or run dir.')
@click.option('--manifest', required=True, type=click.Path(dir_okay=False))
@beam_option
@langs_option
@click.option('--out', type=click.Path(file_okay=False), help='Where to write the report.')
@click.option('--unconstrained', is_flag=True, help='Do not force a language label first.')
@click.option('--workers', type=click.IntRange(min=1), default=None)
@handle_errors
def eval_command(checkpoint, manifest, beam, langs, out, unconstrained, workers):
    """Decode a manifest and write per-language WER/CER."""
    run = load_run(checkpoint)
    rows = load_manifest(manifest).filter_languages(csv_list(langs))
    report, items = evaluate(run, rows, beam=beam or default_beam(),
                             max_len=run.run_config.decode.max_len,
                             constrain_first=not unconstrained,
                             workers=workers or current_app.config['EVAL_WORKERS'])
    csv_text = report.to_csv()
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / 'report.csv').write_text(csv_text, encoding='utf-8')
        write_hypotheses(Path(out) / 'hypotheses.tsv', items)
    click.echo(csv_text, nl=False)
    if unconstrained:
        pooled = report.by_language()['ALL']
        click.echo(f'label-first rate {pooled.label_first_rate:.2f}%, '
                   f'language-ID accuracy {pooled.lid_acc:.2f}%')


@bp.cli.command('decode')
@click.option('--checkpoint', required=True, type=click.Path())
@click.argument('input_path', type=click.Path(exists=True, dir_okay=False))
@beam_option
@click.option('--unconstrained', is_flag=True)
@handle_errors
def decode(checkpoint, input_path, beam, unconstrained):
    """Decode one WAV or feature file; prints utt_id, language, text, log_score."""
    run = load_run(checkpoint)
    hyp = run.decode_features(load_input_features(input_path), beam or default_beam(),
                              run.run_config.decode.max_len, not unconstrained)
    click.echo('\t'.join([Path(input_path).stem, hyp.language or '', hyp.text,
                          f'{hyp.log_score:.6f}']))


@bp.cli.command('alpha-sweep')
@config_option
@click.option('--alphas', help='Comma-separated alpha values (default 0.0..1.0 step 0.1).')
@click.option('--manifest', type=click.Path(dir_okay=False), help='Evaluation manifest.')
@click.option('--out', type=click.Path(file_okay=False))
@beam_option
@seed_option
@langs_option
@handle_errors
def alpha_sweep_command(config_path, alphas, manifest, out, beam, seed, langs):
    """Train and score one model per phoneme-loss weight."""
    run_config = read_config(config_path, seed, langs)
    text = alpha_sweep(run_config, out or run_config.data.out_dir,
                       csv_list(alphas, float) or DEFAULT_ALPHAS, beam or default_beam(), manifest,
                       workers=current_app.config['EVAL_WORKERS'])
    click.echo(text, nl=False)


@bp.cli.command('compare')
@config_option
@click.option('--seeds', default='0,1,2,3,4', show_default=True)
@click.option('--manifest', type=click.Path(dir_okay=False), help='Evaluation manifest.')
@click.option('--out', type=click.Path(file_okay=False))
@beam_option
@langs_option
@handle_errors
def compare_command(config_path, seeds, manifest, out, beam, langs):
    """Conformer/transformer with and without the phoneme task, averaged over seeds."""
    run_config = read_config(config_path, langs=langs)
    text = compare(run_config, out or run_config.data.out_dir, csv_list(seeds, int),
                   beam or default_beam(), manifest, workers=current_app.config['EVAL_WORKERS'])
    click.echo(text, nl=False)


@bp.cli.command('gradcheck')
@config_option
@click.option('--seed', 'seeds', type=int, multiple=True, help='Seed(s) to check.')
@click.option('--max-entries', type=click.IntRange(min=1), default=4, show_default=True)
@handle_errors
def gradcheck(config_path, seeds, max_entries):
    """Finite-difference check of every parameter group."""
    run_config = read_config(config_path)
    failed = False
    for seed in seeds or (run_config.training.seed,):
        report, groups = run_gradcheck(run_config, seed=seed, max_entries=max_entries)
        for group, error in sorted(groups.items()):
            click.echo(f'seed {seed}\t{group}\t{error:.3e}')
        failed = failed or not report.passed
    if failed:
        raise NumericalError('gradient check failed: relative error above 1e-4')
    click.echo('gradient check passed')
