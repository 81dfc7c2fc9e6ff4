from dataclasses import asdict

from flask import current_app, jsonify, request
from marshmallow import Schema, ValidationError, fields, validate, validates_schema

from app.api import bp
from app.decoding.metrics import cer, edit_distance, words
from app.errors import AsrError, DataError
from app.features.frontend import compute_log_mel, read_wav
from app.training.evaluate import load_run


class DecodeRequestSchema(Schema):
    beam = fields.Integer(validate=validate.Range(min=1, max=64))
    unconstrained = fields.Boolean(load_default=False)


class ScoreRequestSchema(Schema):
    refs = fields.List(fields.String(), required=True)
    hyps = fields.List(fields.String(), required=True)

    @validates_schema
    def validate_lengths(self, data, **kwargs):
        if len(data['refs']) != len(data['hyps']):
            raise ValidationError('refs and hyps must have the same length')


def get_run():
    """The model named by CHECKPOINT, loaded once per application."""
    run = current_app.extensions.get('asr_run')
    if run is None:
        path = current_app.config.get('CHECKPOINT')
        if not path:
            return None
        run = current_app.extensions['asr_run'] = load_run(path)
    return run


@bp.errorhandler(AsrError)
def handle_asr_error(exc):
    return jsonify({'error': str(exc)}), exc.http_status


@bp.route('/model', methods=['GET'])
def model_info():
    run = get_run()
    if run is None:
        return jsonify({'error': 'No model loaded'}), 503
    cfg = run.run_config
    return jsonify({
        'grapheme_vocab_size': len(run.grapheme_vocab),
        'phoneme_vocab_size': len(run.phoneme_vocab),
        'language_labels': list(run.grapheme_vocab.language_labels),
        'encoder': asdict(cfg.encoder),
        'decoder': asdict(cfg.decoder),
    }), 200


@bp.route('/decode', methods=['POST'])
def decode():
    run = get_run()
    if run is None:
        return jsonify({'error': 'No model loaded'}), 503

    audio = request.files.get('audio')
    if audio is None:
        return jsonify({'error': 'audio file is required'}), 400
    try:
        options = DecodeRequestSchema().load(request.form.to_dict())
    except ValidationError as err:
        return jsonify({'error': err.messages}), 400

    try:
        features = compute_log_mel(read_wav(audio.stream), audio.filename or 'upload').frames
        beam = options.get('beam', current_app.config['DEFAULT_BEAM'])
        hyp = run.decode_features(features, beam, run.run_config.decode.max_len,
                                  not options['unconstrained'])
    except DataError as exc:
        return jsonify({'error': str(exc)}), 400

    return jsonify({
        'utt_id': audio.filename or 'upload',
        'language': hyp.language,
        'text': hyp.text,
        'log_score': hyp.log_score,
    }), 200


@bp.route('/score', methods=['POST'])
def score():
    try:
        data = ScoreRequestSchema().load(request.get_json(silent=True) or {})
    except ValidationError as err:
        return jsonify({'error': err.messages}), 400

    n_words = sum(len(words(ref)) for ref in data['refs'])
    if not n_words:
        return jsonify({'error': 'reference corpus is empty'}), 400
    counts = [edit_distance(words(r), words(h)) for r, h in zip(data['refs'], data['hyps'])]
    total = sum(counts[1:], counts[0])
    result = {
        'wer': 100.0 * total.distance / n_words,
        'S': total.substitutions,
        'D': total.deletions,
        'I': total.insertions,
        'cer': cer(data['refs'], data['hyps']),
    }
    return jsonify(result), 200
