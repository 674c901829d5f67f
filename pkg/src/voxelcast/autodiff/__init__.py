from .checkpoint import load_checkpoint, save_checkpoint
from .ops import (
    BatchNormState,
    add,
    avgpool2d,
    batchnorm,
    concat,
    conv2d,
    conv3d,
    dense,
    l1_loss,
    l2_feature_loss,
    mean_all,
    mse_loss,
    relu,
    reshape_projection,
    scale,
    sigmoid,
    sum_all,
    tile,
    upsample_nearest,
)
from .optim import ParameterStore, adam_step
from .tensor import DimensionError, Tensor
