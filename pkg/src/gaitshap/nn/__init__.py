from .gradcheck import finite_diff_gradcheck
from .layers import (
    batch_norm_forward,
    conv1d_forward,
    dense_forward,
    gru_forward,
    max_pool1d,
    softmax,
    softmax_cross_entropy,
)
from .model import (
    ModelParams,
    ModelSpec,
    StackSpec,
    backward_and_gradients,
    init_params,
    model_forward,
    full_cnn_spec,
    full_gru_spec,
    predict_proba,
)
from .training import AdamState, EarlyStopping, TrainConfig, adam_step, train_model
