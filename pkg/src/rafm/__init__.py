"""Retrieval-augmented rectified flow for unpaired degraded-to-clean slice translation.

Desk-scale stand-ins: an MLP velocity field, a random-projection frozen
encoder, procedural phantoms, and sliced-Wasserstein / threshold-Dice in
place of FID / segmentation scores.
"""

from ._kernels import BACKEND
from .coupling import CouplingBatch, couple_batchwise, couple_paired, couple_random, couple_retrieval
from .data_synth import DatasetConfig, PhantomDataset, generate_dataset, split_subjects
from .encoder import FrozenEncoder, cosine
from .errors import (ConfigError, DataError, DegenerateInputError, DimensionError, DomainError,
                     GenerationError, NumericError, RAFMError, RetrievalError)
from .flow_engine import OdeSolveConfig, euler_integrate, make_flow_sample, rf_loss_batch
from .memory_bank import MemoryBank
from .metrics import MetricReport, mae, psnr, sliced_wasserstein, ssim, struct_dice
from .velocity_net import AdamState, TimeEmbedding, VelocityNet, adam_step, backward, forward

__version__ = "0.1.0"
