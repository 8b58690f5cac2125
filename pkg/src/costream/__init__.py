"""Paired-modality stream trainer.

Two feature streams over synchronized observation sequences, coupled by
an attention connection block and trained jointly with ranking,
embedding-structure and classification losses on a shared head. Ships
its own reverse-mode engine (numpy-backed, with an optional compiled
kernel core), a synthetic data generator with controlled cross-modal
confusability, a balanced sampler, finite-difference gradient checking,
and an ablation harness.
"""

__version__ = "0.1.0"

from costream.config import TrainConfig, load_config
from costream.errors import (ConfigError, ContractError, CostreamError, DimensionError,
                             GradCheckError, IntegrityError, NonFiniteError, ParseError)
from costream.gradcheck import GradCheckReport, grad_check
from costream.kernels import BACKEND
from costream.synthdata import Dataset, Instance, generate, load, save
from costream.tensor import Tensor, backward

__all__ = [
    "__version__", "BACKEND", "Tensor", "backward", "grad_check", "GradCheckReport",
    "TrainConfig", "load_config", "generate", "load", "save", "Dataset", "Instance",
    "CostreamError", "DimensionError", "ContractError", "ConfigError", "ParseError",
    "IntegrityError", "NonFiniteError", "GradCheckError",
]
