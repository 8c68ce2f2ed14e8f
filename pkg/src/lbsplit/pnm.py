"""Binary PGM (P5) and PPM (P6) image I/O, 8 bit, values mapped to [0, 1].

Masks ride along as PGM files where 0 marks a missing pixel.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

__all__ = ["read_pnm", "write_pnm", "read_mask", "write_mask"]


def _parse_header(blob: bytes, path):
    """Magic, three decimal fields (with # comments), one whitespace, data."""
    if len(blob) < 2 or blob[:1] != b"P" or blob[1:2] not in (b"5", b"6"):
        raise InputError("%s: not a binary PGM/PPM file" % path)
    magic = blob[:2].decode("ascii")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(blob):
            raise InputError("%s: truncated header" % path)
        ch = blob[pos : pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(blob) and blob[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise InputError("%s: unexpected byte %r in header" % (path, ch))
    if pos >= len(blob) or not blob[pos : pos + 1].isspace():
        raise InputError("%s: missing whitespace after maxval" % path)
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise InputError("%s: bad dimensions %dx%d" % (path, width, height))
    if maxval != 255:
        raise InputError("%s: only 8-bit images supported, maxval=%d" % (path, maxval))
    return magic, width, height, blob[pos:]


def read_pnm(path) -> np.ndarray:
    """Read a P5/P6 file into floats in [0, 1]; (H, W) or (H, W, 3)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise InputError("cannot read image %s: %s" % (path, exc)) from exc
    magic, width, height, data = _parse_header(blob, path)
    channels = 1 if magic == "P5" else 3
    need = width * height * channels
    if len(data) < need:
        raise InputError(
            "%s: expected %d pixel bytes, found %d" % (path, need, len(data))
        )
    raw = np.frombuffer(data[:need], dtype=np.uint8)
    if channels == 1:
        img = raw.reshape(height, width)
    else:
        img = raw.reshape(height, width, 3)
    return img.astype(np.float64) / 255.0


def write_pnm(path, image: np.ndarray):
    """Write floats in [0, 1] as 8-bit P5 (2-D) or P6 ((H, W, 3))."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        magic = "P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = "P6"
    else:
        raise InputError("write_pnm: image must be (H, W) or (H, W, 3)")
    quantized = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape[:2]
    header = ("%s\n%d %d\n255\n" % (magic, w, h)).encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(quantized.tobytes())
    except OSError as exc:
        raise InputError("cannot write image %s: %s" % (path, exc)) from exc


def read_mask(path) -> np.ndarray:
    """Read a PGM mask; nonzero means observed, 0 means missing."""
    img = read_pnm(path)
    if img.ndim != 2:
        raise InputError("%s: masks must be single channel PGM" % path)
    return img > 0


def write_mask(path, keep: np.ndarray):
    write_pnm(path, np.where(np.asarray(keep, dtype=bool), 1.0, 0.0))
