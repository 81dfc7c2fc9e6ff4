from app.data.batching import PAD_ID, Batch, Example, collate, make_batches, make_example
from app.data.manifest import (FeatureStore, Manifest, ManifestRow, load_manifest,
                               split_train_valid, write_manifest)
from app.data.synth import SynthCorpus, generate_corpus

__all__ = [
    'PAD_ID', 'Batch', 'Example', 'collate', 'make_batches', 'make_example', 'FeatureStore',
    'Manifest', 'ManifestRow', 'load_manifest', 'split_train_valid', 'write_manifest',
    'SynthCorpus', 'generate_corpus',
]
