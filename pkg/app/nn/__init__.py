from app.nn.module import Embedding, LayerNorm, Linear, MaskedBatchNorm, Module, ModuleList, Parameter
from app.nn.tensor import Tensor, concat, matmul, no_grad, stack

__all__ = [
    'Embedding', 'LayerNorm', 'Linear', 'MaskedBatchNorm', 'Module', 'ModuleList', 'Parameter',
    'Tensor', 'concat', 'matmul', 'no_grad', 'stack',
]
