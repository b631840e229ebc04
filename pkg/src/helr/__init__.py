"""Logistic regression with a curvature-scaled accelerated optimizer,
runnable in plaintext or on a simulated leveled-HE slot-vector backend."""

from .data import (
    Dataset,
    SplitSpec,
    ZMatrix,
    build_z,
    make_dataset,
    mnist_datasets,
    normalize,
    read_csv,
    restructure_mnist,
    split_dataset,
    synth_financial,
    write_csv,
)
from .encoding import BlockLayout, plan_layout
from .enctrain import EncTrainResult, train_encrypted
from .hesim import HeParams, NeedsBootstrap, SimCiphertext, SimContext, ciphertext_size_mb
from .optim import (
    LrSchedule,
    NagState,
    TrainConfig,
    TrainResult,
    accuracy,
    auroc,
    f2,
    gradient,
    log_likelihood,
    nag_step,
    predict,
    train,
)
from .quadgrad import QuadScaler, build_bbar, hessian_bound, merge_bbar, quad_gradient
from .sigmoid import G8, G16, PolyApprox, fit_least_squares, g8, g16, max_error, sigmoid

__version__ = "0.1.0"
