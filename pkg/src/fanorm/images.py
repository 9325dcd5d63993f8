"""8-bit RGB image reading and writing (PNG and binary PPM).

Pixels map byte -> byte/255 on read and round(clamp(v, 0, 1) * 255) on
write, where round(x) = floor(x + 0.5).  Tensors are (1, 3, h, w)
float32.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .ops import require_tensor4

_PNG_SIG = b"\x89PNG\r\n\x1a\n"
_PNG_COLORTYPE = {0: "grayscale", 2: "truecolor", 3: "palette",
                  4: "grayscale+alpha", 6: "truecolor+alpha"}


class ImageFormatError(ValueError):
    pass


def read_image(path) -> np.ndarray:
    """Read an 8-bit RGB PNG or binary PPM (P6) into a (1, 3, h, w) tensor in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        rgb = _read_png(path)
    elif suffix == ".ppm":
        rgb = _read_ppm(path)
    else:
        raise ImageFormatError(f"unsupported image extension {suffix!r} (need .png or .ppm)")
    t = rgb.astype(np.float32) / 255.0
    return t.transpose(2, 0, 1)[None]  # (h, w, 3) -> (1, 3, h, w)


def write_image(t: np.ndarray, path) -> None:
    """Write a single-image tensor with values in [0, 1] as PNG or PPM."""
    t = np.asarray(t)
    if t.ndim == 3:
        t = t[None]
    t = require_tensor4(t, "image tensor")
    if t.shape[0] != 1 or t.shape[1] != 3:
        raise ImageFormatError(f"write_image needs a single 3-channel image, got {t.shape}")
    v = np.clip(t[0], 0.0, 1.0)
    rgb = np.floor(v * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    elif suffix == ".ppm":
        h, w = rgb.shape[:2]
        with open(path, "wb") as fh:
            fh.write(b"P6\n%d %d\n255\n" % (w, h))
            fh.write(rgb.tobytes())
    else:
        raise ImageFormatError(f"unsupported image extension {suffix!r} (need .png or .ppm)")


def _read_png(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(33)
    if head[:8] != _PNG_SIG:
        raise ImageFormatError(f"{path}: not a PNG file")
    # IHDR is always the first chunk: length(4) type(4) w(4) h(4) depth(1) colortype(1)
    if head[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: missing IHDR chunk")
    depth, colortype = head[24], head[25]
    if depth != 8:
        raise ImageFormatError(f"{path}: unsupported PNG bit depth {depth} (need 8)")
    if colortype != 2:
        kind = _PNG_COLORTYPE.get(colortype, str(colortype))
        raise ImageFormatError(f"{path}: unsupported PNG color type {kind!r} (need truecolor RGB)")
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _read_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def token():
        nonlocal pos
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos:pos + 1] != b"\n":
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PPM header")
        return data[start:pos]

    if token() != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (P6) file")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: unsupported PPM maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte after maxval
    body = data[pos:]
    if len(body) != w * h * 3:
        raise ImageFormatError(
            f"{path}: PPM payload has {len(body)} bytes, expected {w * h * 3}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy()
