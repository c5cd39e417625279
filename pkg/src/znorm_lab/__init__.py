"""Z-score gradient normalization laboratory.

Small numpy-backed stack: tensors, layer-wise backprop, gradient transforms,
optimizers, metrics, and stability experiments.
"""

__version__ = "0.1.0"
