"""Plant leaf disease classifier: a 38-class convolutional network
implemented directly on numpy arrays (optional compiled kernels), with
training, evaluation, serialization, a CLI, and an HTTP service."""
from leafcnn._kernels import BACKEND
from leafcnn.data import (
    AugmentConfig,
    Batch,
    ClassInfo,
    DatasetManifest,
    Sample,
    augment,
    batches,
    decode_resize,
    generate_synthetic_dataset,
    load_class_table,
    normalize,
    scan_manifest,
    split,
    validate_image,
)
from leafcnn.errors import (
    DecodeError,
    FormatError,
    ManifestError,
    ShapeError,
    TrainingDiverged,
)
from leafcnn.metrics import (
    ConfusionMatrix,
    MetricsReport,
    compute_metrics,
    confusion,
    export_confusion_csv,
    format_percent,
)
from leafcnn.model import (
    FrozenModel,
    Network,
    backward,
    build_network,
    export_frozen,
    forward,
    load_checkpoint,
    load_frozen,
    parameters,
    predict,
    save_checkpoint,
    summarize,
)
from leafcnn.tensor import SeededRng
from leafcnn.train import (
    AdamState,
    EpochRecord,
    TrainConfig,
    adam_step,
    evaluate_epoch,
    export_history_csv,
    fit,
    run_epoch,
)

__version__ = "0.1.0"
