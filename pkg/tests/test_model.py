import numpy as np
import pytest

from app.config import MultiTaskLossConfig
from app.model import DualDecoderASR
from app.training.experiments import gradcheck_batch, parameter_group, run_gradcheck


@pytest.fixture
def model_and_batch(desk_config):
    batch, gv, pv = gradcheck_batch(desk_config, num_utterances=3)
    model = DualDecoderASR(desk_config, len(gv), len(pv), seed=0).eval()
    return model, batch


def gradients(model, loss):
    model.zero_grad()
    loss.backward()
    return {name: (np.zeros(p.shape) if p.grad is None else p.grad.copy())
            for name, p in model.named_parameters()}


class TestMultitaskGradients:
    """Gradients of the weighted objective through the whole model."""

    def test_superposition(self, model_and_batch):
        """The total gradient is the weighted sum of the branch gradients."""
        model, batch = model_and_batch
        lam, alpha = 0.3, 0.6
        branch = [gradients(model, model.branch_losses(batch)[i]) for i in range(3)]
        total = gradients(model, model.compute_losses(
            batch, MultiTaskLossConfig(lam=lam, alpha=alpha)).l_total)
        for name, grad in total.items():
            expected = lam * branch[0][name] + (1 - lam) * branch[1][name] + alpha * branch[2][name]
            assert np.allclose(grad, expected, rtol=1e-7, atol=1e-9), name

    def test_alpha_zero_leaves_phoneme_decoder(self, model_and_batch):
        """With alpha 0 every phoneme-decoder gradient is exactly zero."""
        model, batch = model_and_batch
        grads = gradients(model, model.compute_losses(batch, MultiTaskLossConfig(alpha=0.0)).l_total)
        phoneme = {k: v for k, v in grads.items() if k.startswith('dec_phn/')}
        assert phoneme
        assert all(np.all(g == 0.0) for g in phoneme.values())
        assert any(np.any(g != 0.0) for k, g in grads.items() if k.startswith('enc/'))

    def test_lambda_one_leaves_grapheme_decoder(self, model_and_batch):
        """With lambda 1 the grapheme decoder's output projection gets no gradient."""
        model, batch = model_and_batch
        grads = gradients(model, model.compute_losses(batch, MultiTaskLossConfig(lam=1.0)).l_total)
        assert np.all(grads['dec_grp/output/weight'] == 0.0)
        assert np.all(grads['dec_grp/output/bias'] == 0.0)
        assert np.any(grads['ctc/weight'] != 0.0)

    def test_same_seed_same_model(self, desk_config):
        """One seed fixes every initial weight."""
        a = DualDecoderASR(desk_config, 20, 12, seed=3).state_dict()
        b = DualDecoderASR(desk_config, 20, 12, seed=3).state_dict()
        c = DualDecoderASR(desk_config, 20, 12, seed=4).state_dict()
        assert list(a) == list(b)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a['enc/block0/mhsa/w_q/weight'], c['enc/block0/mhsa/w_q/weight'])

    def test_parameter_prefixes(self, desk_config):
        """Checkpoint names start with one of the four component prefixes."""
        names = [n for n, _ in DualDecoderASR(desk_config, 20, 12).named_parameters()]
        assert {n.split('/')[0] for n in names} == {'enc', 'ctc', 'dec_phn', 'dec_grp'}


class TestFullGradcheck:
    """Finite-difference check of the assembled model."""

    def test_parameter_groups(self):
        """Encoder tensors group by block, everything else by component."""
        assert parameter_group('enc/block1/conv/depthwise') == 'enc/block1'
        assert parameter_group('dec_grp/layer0/ffn/w1/weight') == 'dec_grp'

    def test_desk_model_passes(self, desk_config):
        """Every parameter group stays under the relative-error tolerance."""
        report, groups = run_gradcheck(desk_config, seed=0, max_entries=2)
        assert report.passed, report.failures
        assert {'enc/block0', 'enc/block1', 'ctc', 'dec_phn', 'dec_grp'} <= set(groups)
