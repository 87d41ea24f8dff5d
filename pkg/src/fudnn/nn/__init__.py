"""Reverse-mode neural-network engine and the decoder architecture."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import default_gradcheck_spec, grad_check, run_network_gradcheck
from .network import VARIANTS, Network, NetworkSpec
from .optim import Adam, adam_step
from .training import evaluate, train_network

__all__ = [
    "VARIANTS",
    "Network",
    "NetworkSpec",
    "Adam",
    "adam_step",
    "train_network",
    "evaluate",
    "grad_check",
    "default_gradcheck_spec",
    "run_network_gradcheck",
    "save_checkpoint",
    "load_checkpoint",
]
