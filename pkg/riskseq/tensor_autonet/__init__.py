from riskseq.tensor_autonet.checkpoint import load_params, save_params
from riskseq.tensor_autonet.network import (
    ConvNetConfig,
    ForwardCache,
    ModelParams,
    backward,
    flatten,
    forward,
    guided_backprop,
    init_params,
    loss_bce,
    loss_bce_grad_logit,
    predict,
    unflatten,
)
from riskseq.tensor_autonet.optimizers import OptimizerState, init_optimizer, optimizer_step
from riskseq.tensor_autonet.training import (
    EpochRecord,
    LabeledArrays,
    TrainResult,
    TrainSchedule,
    TwoStageResult,
    finetune_stage,
    pretrain_then_finetune,
    train,
    write_history,
)

__all__ = [
    "ConvNetConfig",
    "EpochRecord",
    "ForwardCache",
    "LabeledArrays",
    "ModelParams",
    "OptimizerState",
    "TrainResult",
    "TrainSchedule",
    "TwoStageResult",
    "backward",
    "finetune_stage",
    "flatten",
    "forward",
    "guided_backprop",
    "init_optimizer",
    "init_params",
    "load_params",
    "loss_bce",
    "loss_bce_grad_logit",
    "optimizer_step",
    "predict",
    "pretrain_then_finetune",
    "save_params",
    "train",
    "unflatten",
    "write_history",
]
