"""Hand-differentiated numpy layers for the sleep-quality models."""
from .activations import ACTIVATIONS, get_activation, hard_sigmoid, hard_tanh, sigmoid
from .checkpoint import load_checkpoint, save_checkpoint
from .kernels import (
    Conv1DLayer,
    DenseLayer,
    OutputHead,
    RecurrentLayer,
    conv1d_wide_backward,
    conv1d_wide_forward,
    cross_entropy,
    cross_entropy_from_logits,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    lstm_step,
    max_pool,
    max_pool_backward,
    mean_pool_time,
    mean_pool_time_backward,
    output_backward,
    output_logit,
    output_predict,
    pooled_length,
    recurrent_backward,
    recurrent_forward,
    rnn_step,
)
