from .cells import (
    AttnGateParams,
    LstmCellParams,
    attn_lstm_cell_forward,
    bilstm_forward,
    forget_gate_parameter_count,
    lstm_cell_forward,
    lstm_sequence_backward,
    lstm_sequence_forward,
    sigmoid,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .metrics import Metrics, confusion_matrix, metrics_from_confusion
from .model import (
    ARCHITECTURES,
    AttentionPoolParams,
    ModelParams,
    attention_pool,
    compute_gradients,
    count_parameters,
    forward,
    head_forward,
    init_params,
    parse_arch,
)
from .optim import adam_step, clip_by_global_norm, init_adam_state
from .training import BiLSTMClassifier, TrainConfig, evaluate, train
