from .layers import (
    Activation,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    conv2d_backward,
    conv2d_forward,
    cross_entropy,
    dense_backward,
    dense_forward,
    softmax,
)
from .model import (
    MODEL_NAMES,
    Adam,
    LayerSpec,
    ModelSpec,
    Sequential,
    TrainingDiverged,
    adam_step,
    build_model,
    load_weights,
    save_weights,
)
