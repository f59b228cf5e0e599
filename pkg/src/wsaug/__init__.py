"""Weight-space data augmentation for implicit neural representations."""

from .wscore import (
    ActivationKind,
    NetworkSpec,
    SignalTask,
    WeightSpaceElement,
    deserialize,
    flatten,
    forward_eval,
    init_relu,
    init_siren,
    load,
    save,
    serialize,
    unflatten,
)
from .symmetry import PermutationSequence, apply_permutation

__version__ = "0.1.0"
