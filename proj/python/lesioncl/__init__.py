"""Python interface to the lesion-patch contrastive learning core."""

from ._core import (
    ArchDescriptor,
    cosine_sim,
    forward_features,
    ntxent_grad,
    ntxent_loss,
    quadratic_weighted_kappa,
    synth_dataset,
)

__all__ = [
    "ArchDescriptor",
    "cosine_sim",
    "forward_features",
    "ntxent_grad",
    "ntxent_loss",
    "quadratic_weighted_kappa",
    "synth_dataset",
]
