from .network import (
    GATES,
    LstmLayerParams,
    ModelConfig,
    ModelParams,
    NumericFailure,
    backward,
    forward,
    init_model,
    loss,
    lstm_cell_step,
    predict,
)
from .serialize import BadMagic, IoFailure, ModelFileError, SizeMismatch, VersionMismatch, load_model, save_model
from .training import Adam, EmptyDataset, TrainReport, train
