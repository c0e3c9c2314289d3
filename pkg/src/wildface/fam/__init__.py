"""Face attention module: weighted face-body fusion, channel attention, gated heads."""
from .gradcheck import (
    CheckInputs,
    GradReport,
    corrupted_gradient_fn,
    grad_check,
    random_inputs,
    randomize_params,
)
from .model import (
    backward,
    bce_logits_loss,
    channel_attention,
    channel_scales,
    classifier_head,
    fam_forward,
    forward_backward,
    hadamard_fuse,
    predict,
)
from .selfcheck import CheckResult, run_selfcheck
from .params import (
    DEFAULT_DIMS,
    FamParams,
    checkpoint_bytes,
    default_reduction,
    init_params,
    load_checkpoint,
    params_from_bytes,
    parse_dims,
    save_checkpoint,
)
from .train import (
    SGD,
    ReduceLROnPlateau,
    SyntheticDataset,
    TrainConfig,
    TrainResult,
    make_separable_dataset,
    toy_train,
)
