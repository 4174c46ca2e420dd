from .tensor import (
    NEG_INF,
    Tensor,
    as_tensor,
    concat,
    exp,
    kl_divergence,
    log,
    log_softmax,
    matmul,
    relu,
    softmax,
    sqrt,
    tanh,
)
from .functional import (
    conv_spatial,
    conv_temporal,
    dropout,
    embedding,
    pool_spatial_mean,
    transposed_conv_spatial,
    transposed_conv_temporal,
)
from .optim import Adam, cosine_lr

__all__ = [
    "NEG_INF",
    "Tensor",
    "as_tensor",
    "concat",
    "exp",
    "kl_divergence",
    "log",
    "log_softmax",
    "matmul",
    "relu",
    "softmax",
    "sqrt",
    "tanh",
    "conv_spatial",
    "conv_temporal",
    "dropout",
    "embedding",
    "pool_spatial_mean",
    "transposed_conv_spatial",
    "transposed_conv_temporal",
    "Adam",
    "cosine_lr",
]
