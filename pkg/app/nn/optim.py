"""Adam with bias correction and a reduce-on-plateau learning-rate schedule."""

import logging
from dataclasses import dataclass, field

import numpy as np

from app.errors import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


def adam_step(params, grads, state):
    """Apply one Adam update in place; parameters with no gradient see a zero gradient."""
    if not state.first_moment:
        state.first_moment = [np.zeros(p.shape) for p in params]
        state.second_moment = [np.zeros(p.shape) for p in params]
    if len(state.first_moment) != len(params):
        raise ShapeError(f'optimizer state holds {len(state.first_moment)} buffers '
                         f'for {len(params)} parameters')
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for param, grad, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if grad is None:
            grad = np.zeros(param.shape)
        if grad.shape != param.shape or m.shape != param.shape:
            raise ShapeError(f'gradient shape {grad.shape} does not match parameter {param.shape}')
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        param.data = param.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState(learning_rate=lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    @property
    def lr(self):
        return self.state.learning_rate

    @lr.setter
    def lr(self, value):
        self.state.learning_rate = value

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, optimizer, factor=0.5, patience=2, min_lr=1e-5):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = float('inf')
        self.bad_epochs = 0

    def step(self, metric):
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
            if new_lr < self.optimizer.lr:
                logger.info('Reducing learning rate %.6g -> %.6g', self.optimizer.lr, new_lr)
            self.optimizer.lr = new_lr
            self.bad_epochs = 0
