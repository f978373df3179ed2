"""Small numpy network engine: conv/dense layers, backprop, Adam."""

from .layers import (conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout,
                     relu_backward, relu_forward, softmax)
from .model import Model, ModelSpec, build_model, cnn2_spec, cnn_spec, dnn_feat_spec
from .train import (Adam, History, TrainConfig, TrainingDiverged, adam_step, grad_check,
                    one_hot, predict, train)

__all__ = [
    "Adam", "History", "Model", "ModelSpec", "TrainConfig", "TrainingDiverged", "adam_step",
    "build_model", "cnn2_spec", "cnn_spec", "conv2d_backward", "conv2d_forward",
    "dense_backward", "dense_forward", "dnn_feat_spec", "dropout", "grad_check", "one_hot",
    "predict", "relu_backward", "relu_forward", "softmax", "train",
]
