from .checkpoint import checkpoint_hash, load_checkpoint, save_checkpoint  # noqa: F401
from .fusion import (  # noqa: F401
    FusionConfig,
    FusionModel,
    PredictionResult,
    collate_raw,
    make_prediction,
    pool_self_attention,
)
from .losses import (  # noqa: F401
    CLAMP_EPS,
    focal_loss,
    generation_loss,
    multitask_loss,
    strategy_loss,
)
from .training import TrainConfig, TrainedModel, train  # noqa: F401
from .vocab import BOS, EOS, PAD, UNK, Vocabulary  # noqa: F401
