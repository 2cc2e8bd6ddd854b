"""Informed random partition models: priors centered on an initial partition,
temporal sequences of partitions, and posterior sampling under a Gaussian hierarchy."""

__version__ = "0.1.0"

from .partition import Partition, PartitionError, enumerate_partitions, is_compatible
from .priors import AlphaModel, CPPPrior, CRPPrior, ICRPPrior, LSPPrior
from .temporal import PartitionSequence, SequenceModel
from .likelihood import Dataset, Hyperparams
from .mcmc import DrawsArchive, McmcConfig, fit

__all__ = [
    "AlphaModel", "CPPPrior", "CRPPrior", "Dataset", "DrawsArchive", "Hyperparams", "ICRPPrior",
    "LSPPrior", "McmcConfig", "Partition", "PartitionError", "PartitionSequence", "SequenceModel",
    "enumerate_partitions", "fit", "is_compatible",
]
