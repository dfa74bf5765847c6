"""Seeding and fingerprints that make runs repeatable and auditable."""

import hashlib
import random
from collections.abc import Iterable

import numpy as np
import torch
from torch import nn


def set_seed(seed: int, deterministic: bool = True) -> None:
    """Seed Python, numpy and torch.

    Args:
        seed: Seed shared by every generator.
        deterministic: Ask torch for deterministic kernels where available.
    """
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    torch.backends.cudnn.deterministic = deterministic
    torch.backends.cudnn.benchmark = not deterministic


def tensor_fingerprint(tensors: Iterable[torch.Tensor]) -> str:
    """SHA-256 over the raw bytes of a sequence of tensors.

    Two fingerprints are equal exactly when every tensor is bitwise equal, in
    the same order, with the same shapes and dtypes.
    """
    digest = hashlib.sha256()
    for tensor in tensors:
        data = tensor.detach().to("cpu").contiguous()
        digest.update(f"{data.dtype}{tuple(data.shape)}".encode())
        digest.update(data.reshape(-1).view(torch.uint8).numpy().tobytes())
    return digest.hexdigest()


def module_fingerprint(module: nn.Module | None) -> str:
    """Fingerprint of a module's parameters and buffers, or ``"absent"``."""
    if module is None:
        return "absent"
    tensors = [p for _, p in sorted(module.named_parameters(), key=lambda item: item[0])]
    tensors += [b for _, b in sorted(module.named_buffers(), key=lambda item: item[0])]
    return tensor_fingerprint(tensors)
