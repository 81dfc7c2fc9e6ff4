"""Parameter containers and the basic trainable layers."""

from collections import OrderedDict

import numpy as np

from app.errors import CheckpointError
from app.nn import functional as F
from app.nn.tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data, name=None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def uniform_fan_in(rng, fan_in, shape):
    """U(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialisation."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Tree of named parameters, buffers and sub-modules.

    Names are joined with ``/`` so they map directly onto checkpoint keys such
    as ``enc/block0/mhsa/w_q/weight``.
    """

    def __init__(self):
        object.__setattr__(self, '_params', OrderedDict())
        object.__setattr__(self, '_buffers', OrderedDict())
        object.__setattr__(self, '_modules', OrderedDict())
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name, array):
        self._buffers[name] = np.array(array, dtype=np.float64)

    def buffer(self, name):
        return self._buffers[name]

    def set_buffer(self, name, array):
        self._buffers[name] = np.asarray(array, dtype=np.float64)

    def named_modules(self, prefix=''):
        yield prefix, self
        for name, child in self._modules.items():
            yield from child.named_modules(f'{prefix}/{name}' if prefix else name)

    def named_parameters(self, prefix=''):
        for path, module in self.named_modules(prefix):
            for name, param in module._params.items():
                yield (f'{path}/{name}' if path else name), param

    def named_buffers(self, prefix=''):
        for path, module in self.named_modules(prefix):
            for name in module._buffers:
                yield (f'{path}/{name}' if path else name), module, name

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def train(self, mode=True):
        for _, module in self.named_modules():
            object.__setattr__(module, 'training', mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def state_dict(self, prefix=''):
        state = OrderedDict()
        for name, param in self.named_parameters(prefix):
            state[name] = param.data.copy()
        for name, module, key in self.named_buffers(prefix):
            state[name] = module._buffers[key].copy()
        return state

    def load_state_dict(self, state, prefix=''):
        expected = self.state_dict(prefix)
        missing = sorted(set(expected) - set(state))
        if missing:
            raise CheckpointError(f'checkpoint is missing tensors: {", ".join(missing[:5])}')
        for name, param in self.named_parameters(prefix):
            if state[name].shape != param.shape:
                raise CheckpointError(f'shape mismatch for {name}: checkpoint {state[name].shape}, '
                                      f'model {param.shape}')
            param.data = np.array(state[name], dtype=np.float64)
        for name, module, key in self.named_buffers(prefix):
            module._buffers[key] = np.array(state[name], dtype=np.float64)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules, prefix='layer'):
        super().__init__()
        self._items = list(modules)
        for i, module in enumerate(self._items):
            self._modules[f'{prefix}{i}'] = module

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        super().__init__()
        self.weight = Parameter(uniform_fan_in(rng, in_features, (in_features, out_features)))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-12):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def forward(self, x):
        return F.layer_norm(x, self.gamma, self.beta, self.eps)


class MaskedBatchNorm(Module):
    """Batch norm over ``(B, T, C)`` using statistics of unpadded frames only."""

    def __init__(self, dim, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.register_buffer('running_mean', np.zeros(dim))
        self.register_buffer('running_var', np.ones(dim))

    def forward(self, x, mask):
        if not self.training:
            mean = Tensor(self.buffer('running_mean'))
            var = Tensor(self.buffer('running_var'))
        else:
            weights = Tensor(mask[..., None].astype(np.float64))
            count = float(mask.sum())
            mean = (x * weights).sum(axis=(0, 1)) / count
            var = (((x - mean) * weights) ** 2).sum(axis=(0, 1)) / count
            m = self.momentum
            self.set_buffer('running_mean', (1 - m) * self.buffer('running_mean') + m * mean.data)
            self.set_buffer('running_var', (1 - m) * self.buffer('running_var') + m * var.data)
        return (x - mean) / (var + self.eps).sqrt() * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, num_embeddings, dim, rng):
        super().__init__()
        self.weight = Parameter(uniform_fan_in(rng, dim, (num_embeddings, dim)))

    def forward(self, ids):
        return F.embedding(self.weight, ids)
