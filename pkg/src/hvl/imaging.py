"""HDR image buffers, PFM/PPM I/O and error metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage.metrics import structural_similarity

REC709 = np.array([0.2126, 0.7152, 0.0722])
PSNR_CAP_DB = 99.0
GAMMA = 2.2


class ImageError(ValueError):
    pass


@dataclass
class Image:
    """Row-major RGB radiance, ``pixels[row, col]`` with row 0 at the top."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ImageError(f"expected (height, width, 3) pixels, got {px.shape}")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "Image":
        return cls(np.zeros((height, width, 3), dtype=np.float32))

    def check(self) -> None:
        if not np.all(np.isfinite(self.pixels)):
            raise ImageError("image holds non-finite values")
        if np.any(self.pixels < 0.0):
            raise ImageError("image holds negative radiance")


def tonemap(img: Image) -> np.ndarray:
    """Clamp to [0, 1]; the metrics work on this linear range."""
    return np.clip(img.pixels.astype(np.float64), 0.0, 1.0)


def luma(img: Image) -> np.ndarray:
    return tonemap(img) @ REC709


def write_image(img: Image, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    img.check()
    if fmt == "pfm":
        header = f"PF\n{img.width} {img.height}\n-1.0\n".encode("ascii")
        body = np.ascontiguousarray(img.pixels[::-1]).astype("<f4").tobytes()
        path.write_bytes(header + body)
    elif fmt == "ppm":
        v = np.clip(img.pixels, 0.0, 1.0) ** (1.0 / GAMMA)
        b = np.round(v * 255.0).astype(np.uint8)
        header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + b.tobytes())
    else:
        raise ImageError(f"unsupported image format {fmt!r}")


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Whitespace-separated header tokens (PNM style, with # comments)."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError("truncated header")
        out.append(data[start:pos])
    return out, pos + 1  # one whitespace byte ends the header


def read_image(path) -> Image:
    path = Path(path)
    data = path.read_bytes()
    magic = data[:2]
    if magic in (b"PF", b"Pf"):
        try:
            (_, w, h, scale), pos = _tokens(data, 4)
            width, height, scale = int(w), int(h), float(scale)
        except (ValueError, ImageError) as exc:
            raise ImageError(f"{path}: malformed PFM header") from exc
        channels = 3 if magic == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        if len(data) - pos < 4 * count:
            raise ImageError(f"{path}: PFM data truncated")
        px = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.float32)
        px = px.reshape(height, width, channels)[::-1]
        if channels == 1:
            px = np.repeat(px, 3, axis=2)
        return Image(np.ascontiguousarray(px))
    if magic == b"P6":
        try:
            (_, w, h, maxval), pos = _tokens(data, 4)
            width, height, maxval = int(w), int(h), int(maxval)
        except (ValueError, ImageError) as exc:
            raise ImageError(f"{path}: malformed PPM header") from exc
        if maxval != 255:
            raise ImageError(f"{path}: only 8-bit PPM is supported")
        if len(data) - pos < width * height * 3:
            raise ImageError(f"{path}: PPM data truncated")
        b = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos)
        v = (b.astype(np.float32) / 255.0) ** GAMMA
        return Image(v.reshape(height, width, 3))
    raise ImageError(f"{path}: unrecognized image format")


def _check_dims(a: Image, b: Image) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ImageError(
            f"image size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def rmse(a: Image, b: Image) -> float:
    _check_dims(a, b)
    d = luma(a) - luma(b)
    return float(math.sqrt(np.mean(d * d)))


def psnr(a: Image, b: Image) -> float:
    e = rmse(a, b)
    if e == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 20.0 * math.log10(1.0 / e))


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5) over the valid region."""
    _check_dims(a, b)
    return float(
        structural_similarity(
            luma(a), luma(b), gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0, K1=0.01, K2=0.03,
        )
    )


def metrics(img: Image, reference: Image) -> dict[str, float]:
    return {"rmse": rmse(img, reference), "psnr": psnr(img, reference), "ssim": ssim(img, reference)}
