"""Multi-pyramid transformer for defocus deblurring, numpy end to end.

The model pairs windowed attention whose keys and values come from a
downscaled feature copy with per-head channel attention, fused by a gated
feed-forward block, inside a seven-block U-shaped pyramid.  Training adds a
wavelet-domain contrastive term on top of the L1 objective.  Everything
(autodiff included) runs on numpy with scipy for stock numerics.
"""

from .tensor import Tape, Tensor, no_grad
from .rng import Rng
from .optim import AdamW, cosine_lr
from .gradcheck import gradcheck
from .windows import ScaleSpec, WindowGrid, window_partition, window_merge
from .blocks import (
    cswa_forward,
    isca_forward,
    fefn_forward,
    sub_block_forward,
    fefn_hidden_dim,
)
from .network import (
    MptConfig,
    ParameterStore,
    build_model,
    param_count,
    mpt_forward,
    flops_report,
    flops_estimate,
    pad_divisor,
)
from .frequency import (
    FrequencyBands,
    haar_dwt,
    haar_idwt,
    f_high,
    f_low,
    cr_basic,
    cr_extended,
    efcr_total,
    gaussian_reblur,
)
from .data import (
    load_image,
    save_image,
    save_tensor,
    load_tensor,
    save_store,
    load_store,
    synth_pair,
    mask_region_blur,
    augment_crop,
    write_dataset,
    list_pairs,
    FormatError,
)
from .metrics import psnr, ssim, attention_distance, attention_distance_report
from .training import TrainConfig, train, evaluate_pairs, load_checkpoint
from .config import preset_config, resolve_config
from .selfcheck import run_selftest

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "no_grad",
    "Rng",
    "AdamW",
    "cosine_lr",
    "gradcheck",
    "ScaleSpec",
    "WindowGrid",
    "window_partition",
    "window_merge",
    "cswa_forward",
    "isca_forward",
    "fefn_forward",
    "sub_block_forward",
    "fefn_hidden_dim",
    "MptConfig",
    "ParameterStore",
    "build_model",
    "param_count",
    "mpt_forward",
    "flops_report",
    "flops_estimate",
    "pad_divisor",
    "FrequencyBands",
    "haar_dwt",
    "haar_idwt",
    "f_high",
    "f_low",
    "cr_basic",
    "cr_extended",
    "efcr_total",
    "gaussian_reblur",
    "load_image",
    "save_image",
    "save_tensor",
    "load_tensor",
    "save_store",
    "load_store",
    "synth_pair",
    "mask_region_blur",
    "augment_crop",
    "write_dataset",
    "list_pairs",
    "FormatError",
    "psnr",
    "ssim",
    "attention_distance",
    "attention_distance_report",
    "TrainConfig",
    "train",
    "evaluate_pairs",
    "load_checkpoint",
    "preset_config",
    "resolve_config",
    "run_selftest",
    "__version__",
]
