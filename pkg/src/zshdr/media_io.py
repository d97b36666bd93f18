"""Frame-sequence and HDR image I/O in bit-exact, documented formats.

Videos are numbered frame directories (``frame_000000.png`` style). SDR
frames are 8-bit RGB PNG; HDR frames are PFM (lossless float32 interchange)
or Radiance RGBE (compact, viewer-compatible). Writers emit byte-stable
output: no timestamps, fixed header text, deterministic pixel order.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .exposure import HdrFrame, SdrFrame

logger = logging.getLogger(__name__)

_EXTENSIONS = {"png8": "png", "pfm": "pfm", "hdr": "hdr"}


class MediaFormatError(ValueError):
    """A file violates its declared format."""


@dataclass
class FrameSequenceSpec:
    directory: Path
    pattern: str = "frame_%06d"
    fmt: str = "png8"
    fps: float = 30.0

    def __post_init__(self):
        self.directory = Path(self.directory)
        if self.fmt not in _EXTENSIONS:
            raise ValueError(f"format must be one of {sorted(_EXTENSIONS)}, got {self.fmt!r}")
        if self.fps <= 0.0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if not re.fullmatch(r"[^%]*%0?\d*d[^%]*", self.pattern):
            raise ValueError(f"pattern must contain exactly one %d placeholder: {self.pattern!r}")

    def path_for(self, index: int) -> Path:
        return self.directory / f"{self.pattern % index}.{_EXTENSIONS[self.fmt]}"

    def discover_indices(self) -> list[int]:
        """Contiguous frame indices starting at the first present index.

        A gap in the numbering is an error naming the missing index.
        """
        if not self.directory.is_dir():
            raise FileNotFoundError(f"sequence directory does not exist: {self.directory}")
        placeholder = re.search(r"%0?\d*d", self.pattern).group(0)
        prefix, suffix = self.pattern.split(placeholder, 1)
        rx = re.compile(
            re.escape(prefix) + r"(\d+)" + re.escape(suffix)
            + re.escape(f".{_EXTENSIONS[self.fmt]}") + r"\Z"
        )
        indices = sorted(
            int(m.group(1)) for name in os.listdir(self.directory)
            if (m := rx.fullmatch(name)) is not None
        )
        if not indices:
            raise FileNotFoundError(
                f"no frames matching {self.pattern!r}.{_EXTENSIONS[self.fmt]} in {self.directory}"
            )
        for pos, idx in enumerate(indices):
            expected = indices[0] + pos
            if idx != expected:
                raise MediaFormatError(
                    f"frame index gap: missing index {expected} in {self.directory}"
                )
        return indices


# ---------------------------------------------------------------------------
# 8-bit PNG
# ---------------------------------------------------------------------------

def read_png8(path) -> SdrFrame:
    """Decode an 8-bit RGB PNG to [0,1] as v/255 exactly; no color management."""
    with open(path, "rb") as fh:
        head = fh.read(26)
    if len(head) < 26 or head[:8] != b"\x89PNG\r\n\x1a\n":
        raise MediaFormatError(f"not a PNG file: {path}")
    bit_depth, color_type = head[24], head[25]
    if bit_depth != 8:
        raise MediaFormatError(f"{path}: {bit_depth}-bit PNG is unsupported, need 8-bit")
    if color_type != 2:
        raise MediaFormatError(
            f"{path}: PNG color type {color_type} is unsupported, need truecolor RGB"
        )
    with Image.open(path) as img:
        data = np.asarray(img, dtype=np.uint8)
    return SdrFrame(data.astype(np.float64) / 255.0)


def write_png8(frame: SdrFrame, path) -> None:
    pixels = frame.pixels
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        raise ValueError("SDR pixels out of [0,1]")
    data = np.round(pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


def read_sdr_sequence(spec: FrameSequenceSpec) -> tuple[list[SdrFrame], float]:
    if spec.fmt != "png8":
        raise ValueError(f"SDR sequences are 8-bit PNG, got format {spec.fmt!r}")
    frames = [read_png8(spec.path_for(i)) for i in spec.discover_indices()]
    return frames, spec.fps


def write_sdr_sequence(frames: list[SdrFrame], spec: FrameSequenceSpec, start: int = 0) -> None:
    spec.directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_png8(frame, spec.path_for(start + i))


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(frame: HdrFrame, path) -> None:
    """Color PFM: 'PF', dimensions, scale -1.0 (little-endian), rows stored
    bottom-to-top as float32 RGB."""
    pixels = frame.validate().pixels
    h, w = pixels.shape[:2]
    data = np.ascontiguousarray(pixels[::-1].astype("<f4"))
    with open(path, "wb") as fh:
        fh.write(b"PF\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(data.tobytes())


def _read_header_line(raw: bytes, offset: int, path) -> tuple[str, int]:
    end = raw.find(b"\n", offset)
    if end < 0:
        raise MediaFormatError(f"{path}: header line starting at byte {offset} is unterminated")
    return raw[offset:end].decode("ascii", errors="replace"), end + 1


def read_pfm(path, stats: dict | None = None) -> HdrFrame:
    with open(path, "rb") as fh:
        raw = fh.read()
    ident, offset = _read_header_line(raw, 0, path)
    if ident.strip() != "PF":
        raise MediaFormatError(f"{path}: bad PFM identifier {ident!r} at byte 0 (color 'PF' required)")
    dims, offset_after_dims = _read_header_line(raw, offset, path)
    parts = dims.split()
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise MediaFormatError(f"{path}: bad PFM dimensions line {dims!r} at byte {offset}")
    w, h = int(parts[0]), int(parts[1])
    scale_line, data_offset = _read_header_line(raw, offset_after_dims, path)
    try:
        scale = float(scale_line)
    except ValueError:
        raise MediaFormatError(
            f"{path}: bad PFM scale line {scale_line!r} at byte {offset_after_dims}"
        ) from None
    if scale == 0.0 or w < 1 or h < 1:
        raise MediaFormatError(f"{path}: invalid PFM scale/dimensions")

    count = w * h * 3
    expected = data_offset + count * 4
    if len(raw) < expected:
        raise MediaFormatError(
            f"{path}: truncated PFM, expected {expected} bytes, file has {len(raw)}"
        )
    if len(raw) > expected:
        raise MediaFormatError(
            f"{path}: {len(raw) - expected} trailing bytes after pixel data at byte {expected}"
        )
    dtype = "<f4" if scale < 0.0 else ">f4"
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=data_offset)
    pixels = data.astype(np.float64).reshape(h, w, 3)[::-1].copy()
    return _clamp_negative(pixels, path, stats)


def _clamp_negative(pixels: np.ndarray, path, stats: dict | None) -> HdrFrame:
    negative = int(np.count_nonzero(pixels < 0.0))
    if negative:
        logger.warning("%s: clamped %d negative radiance values to 0", path, negative)
        if stats is not None:
            stats["negative_clamped"] = stats.get("negative_clamped", 0) + negative
        pixels = np.maximum(pixels, 0.0)
    if not np.all(np.isfinite(pixels)):
        raise MediaFormatError(f"{path}: non-finite radiance values")
    return HdrFrame(pixels)


# ---------------------------------------------------------------------------
# Radiance RGBE
# ---------------------------------------------------------------------------

def _rgbe_encode(pixels: np.ndarray) -> np.ndarray:
    """(H, W, 3) float -> (H, W, 4) uint8 shared-exponent encoding."""
    maxc = pixels.max(axis=2)
    mant, exp = np.frexp(maxc)
    nonzero = maxc >= 1e-38
    scale = np.where(nonzero, np.ldexp(256.0, -exp), 0.0)
    rgbe = np.zeros(pixels.shape[:2] + (4,), dtype=np.uint8)
    rgbe[..., :3] = np.clip(np.floor(pixels * scale[..., None]), 0, 255).astype(np.uint8)
    rgbe[..., 3] = np.where(nonzero, exp + 128, 0).astype(np.uint8)
    return rgbe


def _rgbe_decode(rgbe: np.ndarray) -> np.ndarray:
    exp = rgbe[..., 3].astype(np.int32)
    factor = np.where(exp == 0, 0.0, np.ldexp(1.0, exp - 136))
    return rgbe[..., :3].astype(np.float64) * factor[..., None]


def write_hdr_frame(frame: HdrFrame, path, fmt: str = "pfm") -> None:
    """Write one linear HDR frame; fmt is 'pfm' or 'hdr' (Radiance RGBE,
    flat scanlines)."""
    if fmt == "pfm":
        write_pfm(frame, path)
        return
    if fmt != "hdr":
        raise ValueError(f"unknown HDR format {fmt!r}")
    pixels = frame.validate().pixels
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"#?RADIANCE\n")
        fh.write(b"FORMAT=32-bit_rle_rgbe\n")
        fh.write(b"\n")
        fh.write(f"-Y {h} +X {w}\n".encode("ascii"))
        fh.write(_rgbe_encode(pixels).tobytes())


def _read_rgbe_rle_scanline(raw: bytes, offset: int, width: int, path) -> tuple[np.ndarray, int]:
    if raw[offset:offset + 2] != b"\x02\x02":
        raise MediaFormatError(f"{path}: expected RLE scanline marker at byte {offset}")
    declared = (raw[offset + 2] << 8) | raw[offset + 3]
    if declared != width:
        raise MediaFormatError(
            f"{path}: RLE scanline at byte {offset} declares width {declared}, expected {width}"
        )
    offset += 4
    scan = np.zeros((width, 4), dtype=np.uint8)
    for comp in range(4):
        pos = 0
        while pos < width:
            if offset >= len(raw):
                raise MediaFormatError(f"{path}: truncated RLE stream at byte {offset}")
            code = raw[offset]
            offset += 1
            if code > 128:  # run
                count = code - 128
                if offset >= len(raw) or pos + count > width:
                    raise MediaFormatError(f"{path}: bad RLE run at byte {offset - 1}")
                scan[pos:pos + count, comp] = raw[offset]
                offset += 1
            else:  # literal
                count = code
                if count == 0 or pos + count > width or offset + count > len(raw):
                    raise MediaFormatError(f"{path}: bad RLE literal at byte {offset - 1}")
                scan[pos:pos + count, comp] = np.frombuffer(raw, np.uint8, count, offset)
                offset += count
            pos += count
    return scan, offset


def read_rgbe(path, stats: dict | None = None) -> HdrFrame:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"#?"):
        raise MediaFormatError(f"{path}: missing Radiance '#?' magic at byte 0")
    offset = 0
    line, offset = _read_header_line(raw, offset, path)
    fmt_seen = False
    while True:
        line, new_offset = _read_header_line(raw, offset, path)
        if line == "":
            offset = new_offset
            break
        if line.startswith("FORMAT="):
            if line != "FORMAT=32-bit_rle_rgbe":
                raise MediaFormatError(f"{path}: unsupported format {line!r} at byte {offset}")
            fmt_seen = True
        offset = new_offset
    if not fmt_seen:
        raise MediaFormatError(f"{path}: header is missing FORMAT=32-bit_rle_rgbe")
    res_line, data_offset = _read_header_line(raw, offset, path)
    m = re.fullmatch(r"-Y (\d+) \+X (\d+)", res_line)
    if m is None:
        if re.fullmatch(r"[-+][XY] \d+ [-+][XY] \d+", res_line):
            raise MediaFormatError(
                f"{path}: unsupported resolution orientation {res_line!r} "
                f"(only '-Y h +X w' is supported)"
            )
        raise MediaFormatError(f"{path}: bad resolution line {res_line!r} at byte {offset}")
    h, w = int(m.group(1)), int(m.group(2))

    rle = raw[data_offset:data_offset + 2] == b"\x02\x02" and 8 <= w < 32768
    if rle:
        rows = []
        offset = data_offset
        for _ in range(h):
            scan, offset = _read_rgbe_rle_scanline(raw, offset, w, path)
            rows.append(scan)
        if offset != len(raw):
            raise MediaFormatError(f"{path}: {len(raw) - offset} trailing bytes at byte {offset}")
        rgbe = np.stack(rows)
    else:
        expected = data_offset + h * w * 4
        if len(raw) < expected:
            raise MediaFormatError(f"{path}: truncated pixel data, expected {expected} bytes")
        if len(raw) > expected:
            raise MediaFormatError(
                f"{path}: {len(raw) - expected} trailing bytes after pixel data at byte {expected}"
            )
        rgbe = np.frombuffer(raw, np.uint8, h * w * 4, data_offset).reshape(h, w, 4)
    return _clamp_negative(_rgbe_decode(rgbe), path, stats)


def read_hdr_frame(path, stats: dict | None = None) -> HdrFrame:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path, stats)
    if suffix == ".hdr":
        return read_rgbe(path, stats)
    raise ValueError(f"cannot infer HDR format from extension {suffix!r}")


def read_hdr_sequence(spec: FrameSequenceSpec, stats: dict | None = None) -> list[HdrFrame]:
    if spec.fmt not in ("pfm", "hdr"):
        raise ValueError(f"HDR sequences are pfm or hdr, got {spec.fmt!r}")
    return [read_hdr_frame(spec.path_for(i), stats) for i in spec.discover_indices()]


def write_hdr_sequence(frames: list[HdrFrame], spec: FrameSequenceSpec, start: int = 0) -> None:
    spec.directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_hdr_frame(frame, spec.path_for(start + i), spec.fmt)


# ---------------------------------------------------------------------------
# Exposure sidecar
# ---------------------------------------------------------------------------

def write_exposure_sidecar(values: list[float], path) -> None:
    """One '<index> <exposure>' line per frame, full float precision."""
    with open(path, "w") as fh:
        for i, f in enumerate(values):
            fh.write(f"{i} {f!r}\n")


def read_exposure_sidecar(path) -> list[float]:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            parts = line.split()
            if len(parts) != 2 or int(parts[0]) != lineno:
                raise MediaFormatError(f"{path}:{lineno + 1}: bad sidecar line {line!r}")
            value = float(parts[1])
            if not math.isfinite(value):
                raise MediaFormatError(f"{path}:{lineno + 1}: non-finite exposure")
            values.append(value)
    if not values:
        raise MediaFormatError(f"{path}: empty sidecar")
    return values
