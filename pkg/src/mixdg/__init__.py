"""mixdg: margin-softmax training with embedding-space mixup.

A small, fully deterministic library for studying a contrastive-style
classification objective: class prompts become frozen unit-norm text
embeddings, an image-side encoder is trained against them with a
margin metric softmax loss, and an l1 consistency term ties each
sample's class distribution to that of a Beta-mixed partner. A
held-out-domain protocol, synthetic shifted-domain data, a scikit-learn
style estimator, and a command line interface round out the toolkit.
"""

from .data import (
    DataFormatError,
    DomainDataset,
    LabeledSample,
    SynthConfig,
    generate,
    leave_one_domain_out,
    load_dataset,
    save_dataset,
)
from .estimator import MixupMarginClassifier
from .losses import (
    BatchLoss,
    ClassEmbeddings,
    LossConfig,
    LossWithGrad,
    MixDraw,
    MixupLossWithGrad,
    build_mix,
    class_distribution,
    mix_embeddings,
    mixup_loss,
    mms_actual_loss,
    mms_loss,
    total_loss,
    training_objective,
)
from .model import (
    DEFAULT_PROMPT_TEMPLATE,
    EncoderConfig,
    EncoderGrads,
    EncoderParams,
    PromptTemplate,
    encode,
    encode_backward,
    init_encoder,
    make_class_embeddings,
    zero_shot_classify,
)
from .numeric import (
    SEED_INCREMENT,
    BetaParams,
    SeededRng,
    as_vector,
    derive_seed,
    dot,
    finite_diff_grad,
    l2_normalize,
    log_sum_exp,
    sample_beta,
    softmax,
)
from .training import (
    CHECKPOINT_VERSION,
    CURVE_HEADER,
    Checkpoint,
    CheckpointError,
    ComparisonReport,
    EpochRecord,
    ProtocolResult,
    RunRecord,
    TaskResult,
    TrainConfig,
    compare_losses,
    evaluate,
    fit_encoder,
    load_checkpoint,
    render_report,
    run_protocol,
    save_checkpoint,
    train_run,
)

__version__ = "0.1.0"

__all__ = [
    "BatchLoss",
    "BetaParams",
    "CHECKPOINT_VERSION",
    "CURVE_HEADER",
    "Checkpoint",
    "CheckpointError",
    "ClassEmbeddings",
    "ComparisonReport",
    "DataFormatError",
    "DEFAULT_PROMPT_TEMPLATE",
    "DomainDataset",
    "EncoderConfig",
    "EncoderGrads",
    "EncoderParams",
    "EpochRecord",
    "LabeledSample",
    "LossConfig",
    "LossWithGrad",
    "MixDraw",
    "MixupLossWithGrad",
    "MixupMarginClassifier",
    "PromptTemplate",
    "ProtocolResult",
    "RunRecord",
    "SEED_INCREMENT",
    "SeededRng",
    "SynthConfig",
    "TaskResult",
    "TrainConfig",
    "as_vector",
    "build_mix",
    "class_distribution",
    "compare_losses",
    "derive_seed",
    "dot",
    "encode",
    "encode_backward",
    "evaluate",
    "finite_diff_grad",
    "fit_encoder",
    "generate",
    "init_encoder",
    "l2_normalize",
    "leave_one_domain_out",
    "load_checkpoint",
    "load_dataset",
    "log_sum_exp",
    "make_class_embeddings",
    "mix_embeddings",
    "mixup_loss",
    "mms_actual_loss",
    "mms_loss",
    "render_report",
    "run_protocol",
    "sample_beta",
    "save_checkpoint",
    "save_dataset",
    "softmax",
    "total_loss",
    "train_run",
    "training_objective",
    "zero_shot_classify",
]
