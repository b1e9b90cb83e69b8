"""Image and report I/O with byte-stable output."""

import json

import numpy as np
from PIL import Image, UnidentifiedImageError

FLOAT_DECIMALS = 6


class ImageReadError(Exception):
    code = "unreadable-image"


def read_rgb(path):
    """Load an image file as ``(H, W, 3) uint8``.

    Raises ``FileNotFoundError`` for a missing path and ``ImageReadError``
    when the file exists but cannot be decoded.
    """
    try:
        with Image.open(path) as im:
            im.load()
            return np.asarray(im.convert("RGB")).copy()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageReadError(f"{path}: {exc}") from exc


def write_png(path, img):
    Image.fromarray(np.asarray(img, dtype=np.uint8)).save(path, format="PNG", optimize=False)


def normalize(obj):
    """Plain-JSON copy with floats rounded to a fixed number of decimals."""
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = round(float(obj), FLOAT_DECIMALS)
        return 0.0 if v == 0 else v  # no "-0.0"
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    return obj


def dumps(obj):
    return json.dumps(normalize(obj), sort_keys=True, indent=2) + "\n"
