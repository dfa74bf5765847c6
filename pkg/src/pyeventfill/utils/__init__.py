"""Utility functions for pyeventfill."""

from pyeventfill.utils.reproducibility import module_fingerprint, set_seed, tensor_fingerprint

__all__ = [
    "module_fingerprint",
    "set_seed",
    "tensor_fingerprint",
]
