"""Image loading: files through torchvision, canvases drawn with numpy."""

import logging
from pathlib import Path

import numpy as np
import torch
from torchvision.io import ImageReadMode, decode_image, read_file

from pyeventfill.corpus.records import ImageRef, SyntheticCanvas
from pyeventfill.exceptions import IngestionError

logger = logging.getLogger(__name__)

TILE_SIZE = 16


def texture_tile(pattern_seed: int) -> np.ndarray:
    """The 16x16 RGB tile a pattern seed stands for."""
    rng = np.random.default_rng(pattern_seed)
    return rng.integers(0, 256, size=(TILE_SIZE, TILE_SIZE, 3), dtype=np.uint8)


def render_canvas(canvas: SyntheticCanvas) -> torch.Tensor:
    """Draw a synthetic canvas as a ``3 x H x W`` uint8 tensor.

    Each fill repeats its texture tile, anchored at the image origin so that
    grid-aligned boxes show whole tiles.
    """
    pixels = np.empty((canvas.height, canvas.width, 3), dtype=np.uint8)
    pixels[:, :] = np.asarray(canvas.background, dtype=np.uint8)
    for fill in canvas.fills:
        x0, y0, x1, y1 = (int(round(v)) for v in fill.bbox.as_tuple())
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, canvas.width), min(y1, canvas.height)
        if x0 >= x1 or y0 >= y1:
            continue
        reps_y = -(-canvas.height // TILE_SIZE)
        reps_x = -(-canvas.width // TILE_SIZE)
        tiled = np.tile(texture_tile(fill.pattern_seed), (reps_y, reps_x, 1))
        pixels[y0:y1, x0:x1] = tiled[y0:y1, x0:x1]
    return torch.from_numpy(pixels).permute(2, 0, 1).contiguous()


def load_image(ref: ImageRef, root: Path | None = None) -> torch.Tensor:
    """Load an image as a ``3 x H x W`` uint8 tensor.

    Args:
        ref: File or canvas reference.
        root: Directory relative file paths are resolved against.

    Raises:
        IngestionError: If the file is missing or cannot be decoded.
    """
    if ref.canvas is not None:
        return render_canvas(ref.canvas)
    if ref.path is None:
        raise IngestionError("Image reference has neither path nor canvas", ref.image_id)
    path = ref.path if root is None or ref.path.is_absolute() else root / ref.path
    try:
        return decode_image(read_file(str(path)), mode=ImageReadMode.RGB)
    except (OSError, RuntimeError, ValueError) as exc:
        raise IngestionError(f"Cannot decode image ({exc})", path) from exc
