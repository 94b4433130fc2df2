"""Small numpy autodiff engine and the layers needed by the TCN-LSTM model."""

from .layers import (
    BatchNormState,
    LstmParams,
    TcnBlockParams,
    batch_norm,
    causal_conv1d,
    dense,
    dropout,
    lstm_forward,
    mse_loss,
    tcn_block_forward,
)
from .optim import AdamState, adam_step
from .tensor import Tensor, concat, pad_left

__all__ = [
    "AdamState",
    "BatchNormState",
    "LstmParams",
    "TcnBlockParams",
    "Tensor",
    "adam_step",
    "batch_norm",
    "causal_conv1d",
    "concat",
    "dense",
    "dropout",
    "lstm_forward",
    "mse_loss",
    "pad_left",
    "tcn_block_forward",
]
