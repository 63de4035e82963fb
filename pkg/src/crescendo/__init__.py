"""CPU-only numpy implementation of the CrescendoNet architecture.

Crescendo blocks hold independent convolution branches of linearly growing
depth joined by element-wise averaging; the package provides the layer
kernels, network assembly, drop-path regularization, Adam/Nesterov
optimizers, whole-net and path-wise training, and a small CLI.
"""

import os as _os

# CRESCENDO_THREADS caps BLAS parallelism.  It must be applied before numpy
# loads its BLAS backend, hence before any submodule import.  Setting the
# variable after numpy is already imported elsewhere has no effect.
_threads = _os.environ.get("CRESCENDO_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    CrescendoError,
    FormatError,
    NumericalError,
    StructuralError,
    UsageError,
)
from .rng import stream_rng  # noqa: E402
from .arch import (  # noqa: E402
    BlockSpec,
    BranchSpec,
    Network,
    NetworkSpec,
    ParameterStore,
    Subnet,
    WidthMode,
    assemble_network,
    block_forward,
    build_branch,
    count_parameters,
    count_parameters_by_section,
    depth,
    subnet,
    width_schedule,
)
from .layers import Mode, UnitParams, grad_check, softmax_cross_entropy  # noqa: E402
from .optim import AdamConfig, NesterovConfig, lr_schedule  # noqa: E402
from .regularization import DropPathConfig, l2_penalty, sample_drop_mask  # noqa: E402
from .data import (  # noqa: E402
    Dataset,
    LabeledImage,
    augment,
    grating_dataset,
    load_cifar_binary,
    load_cifar_dir,
    save_cifar_binary,
    standardize,
    synthetic_dataset,
    write_benchmark_files,
)
from .trainer import (  # noqa: E402
    InitConfig,
    TrainConfig,
    estimate_training_memory,
    evaluate_error,
    evaluate_loss,
    init_params,
    train,
    train_path,
    train_pathwise,
    train_whole,
)
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: E402
from .config import parse_config, parse_config_text, to_network_spec  # noqa: E402
