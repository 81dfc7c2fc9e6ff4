from app.training.evaluate import LoadedRun, decode_manifest, evaluate, load_run
from app.training.experiments import alpha_sweep, compare, run_gradcheck
from app.training.trainer import Trainer, TrainResult

__all__ = [
    'LoadedRun', 'decode_manifest', 'evaluate', 'load_run', 'alpha_sweep', 'compare',
    'run_gradcheck', 'Trainer', 'TrainResult',
]
