"""Gray-scale images: storage, differentiable bilinear sampling, PGM I/O.

Images hold gray values normalized to [0, 1]. Sampling clamps to the border
with zero gradient in the clamped direction, which keeps tracking energies
bounded when a pose drifts partially off-frame. Frames live on disk as
binary PGM (P5), maxval 255 or 65535.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Luminance weights for multi-channel ingestion.
_LUMA = np.array([0.299, 0.587, 0.114])


class PgmError(IOError):
    """Malformed or truncated PGM stream; message names the byte offset."""


@dataclass(frozen=True)
class GrayImage:
    """Immutable gray raster, row-major, values in [0, 1]."""

    data: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim == 3:
            arr = arr @ _LUMA
        if arr.ndim != 2:
            raise ValueError(f"expected 2-d image data, got ndim={arr.ndim}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def sample_bilinear_many(img: GrayImage, u: np.ndarray, v: np.ndarray):
    """Bilinear samples and analytic derivatives at continuous coordinates.

    u indexes columns (x), v indexes rows (y). Returns (values, du, dv) with
    the shape of u. Outside [0, w-1] x [0, h-1] the value clamps to the edge
    and the derivative in the clamped direction is zero.
    """
    d = img.data
    h, w = d.shape
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)

    inside_u = (u >= 0.0) & (u <= w - 1.0)
    inside_v = (v >= 0.0) & (v <= h - 1.0)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)

    # Anchor the cell at floor, pulled back one at the far edge so fx, fy
    # stay in [0, 1] and integer coordinates reproduce stored pixels exactly.
    x0 = np.minimum(np.floor(uc), w - 2.0).astype(np.intp) if w > 1 else np.zeros_like(uc, dtype=np.intp)
    y0 = np.minimum(np.floor(vc), h - 2.0).astype(np.intp) if h > 1 else np.zeros_like(vc, dtype=np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = uc - x0
    fy = vc - y0

    i00 = d[y0, x0]
    i10 = d[y0, x1]
    i01 = d[y1, x0]
    i11 = d[y1, x1]

    top = i00 + fx * (i10 - i00)
    bot = i01 + fx * (i11 - i01)
    value = top + fy * (bot - top)
    du = np.where(inside_u, (1.0 - fy) * (i10 - i00) + fy * (i11 - i01), 0.0)
    dv = np.where(inside_v, (1.0 - fx) * (i01 - i00) + fx * (i11 - i10), 0.0)
    return value, du, dv


def sample_bilinear(img: GrayImage, u: float, v: float) -> tuple[float, float, float]:
    """Scalar convenience wrapper around sample_bilinear_many."""
    value, du, dv = sample_bilinear_many(img, np.array(u, dtype=float), np.array(v, dtype=float))
    return float(value), float(du), float(dv)


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # Skips whitespace and '#' comments, returns (token, next position).
    n = len(buf)
    while pos < n:
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise PgmError(f"unexpected end of header at byte offset {pos}")
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    return buf[start:pos], pos


def read_pgm(path) -> GrayImage:
    """Read a binary PGM (P5) file with maxval 255 or 65535."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] != b"P5":
        raise PgmError("not a binary PGM: missing 'P5' magic at byte offset 0")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise PgmError(f"expected integer header field at byte offset {pos - len(tok)}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval not in (255, 65535):
        raise PgmError(f"unsupported maxval {maxval} at byte offset {pos - len(str(maxval))}")
    if width <= 0 or height <= 0:
        raise PgmError(f"non-positive dimensions {width}x{height} in header ending at byte offset {pos}")
    # Exactly one whitespace byte separates the header from the payload.
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise PgmError(f"missing whitespace before payload at byte offset {pos}")
    pos += 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise PgmError(
            f"truncated payload: need {need} bytes from byte offset {pos}, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return GrayImage(raw.astype(float) / float(maxval))


def write_pgm(img: GrayImage, path, maxval: int = 255) -> None:
    """Write a binary PGM (P5). Quantizes to the requested bit depth."""
    if maxval not in (255, 65535):
        raise ValueError(f"unsupported maxval {maxval}")
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    q = np.rint(img.data * maxval).astype(np.uint32)
    q = np.minimum(q, maxval).astype(dtype)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(q.tobytes())
