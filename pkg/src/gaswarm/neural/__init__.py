import numpy as np

from . import tensor as T
from .layers import Conv, Dense, InceptionBlock, Merge, ParameterStore
from .nets import (DiscriminatorNet, EncodedBatch, GeneratorNet, NetConfig, NetworkPair, PiEncoder,
                   round_to_one_hot, to_sequences)
from .optim import Adam, CyclicLR, ReduceLROnPlateau
from .tensor import NonFiniteValue, ShapeMismatch, Tensor
from .weights import load_pair, read_arrays, save_pair, write_arrays


def apply_activation(kind: str, x, param: float = 1.0):
    """Plain-array evaluation of relu, softmax_T (last axis) or softplus_beta."""
    t = T.Tensor(np.asarray(x, dtype=float))
    if kind == "relu":
        return T.relu(t).data
    if kind == "softmax_T":
        return T.softmax(t, param, axis=-1).data
    if kind == "softplus_beta":
        return T.softplus(t, param).data
    raise ValueError(f"unknown activation {kind!r}")


__all__ = [
    "Conv", "Dense", "InceptionBlock", "Merge", "ParameterStore", "DiscriminatorNet", "EncodedBatch",
    "GeneratorNet", "NetConfig", "NetworkPair", "PiEncoder", "round_to_one_hot", "to_sequences",
    "Adam", "CyclicLR", "ReduceLROnPlateau", "NonFiniteValue", "ShapeMismatch", "Tensor",
    "load_pair", "read_arrays", "save_pair", "write_arrays", "apply_activation",
]
