"""File formats: binary cube files, network checkpoints, pattern sidecars,
binary graymap import/export, and CSV evaluation reports.

Cube file layout (magic "MSC1"): height, width, bands and a dtype code as
32-bit unsigned little-endian, then the payload as band-major (band, row,
col) little-endian float32. Dtype code 1 is float32; no other codes are
assigned. Checkpoint layout (magic "MSCK"): a length-prefixed JSON network
config, per-array shape headers, the parameter payload as little-endian
float32 in the canonical array order, an optional Adam state block (step
count, hyperparameters, first and second moments), then the training seed
and epoch counter. Both formats round-trip bit-exactly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cube import MsfaPattern, SpectralCube
from .net3d import NetworkConfig, NetworkParams, params_from_arrays
from .train import AdamState, CrossvalReport

__all__ = [
    "FormatError",
    "CheckpointData",
    "write_cube",
    "read_cube",
    "write_checkpoint",
    "read_checkpoint",
    "format_pattern",
    "parse_pattern",
    "write_pattern",
    "read_pattern",
    "read_pgm",
    "write_pgm",
    "import_band_images",
    "format_report",
    "write_report",
    "load_config",
]

CUBE_MAGIC = b"MSC1"
CHECKPOINT_MAGIC = b"MSCK"
DTYPE_FLOAT32 = 1


class FormatError(ValueError):
    """A file does not conform to one of the toolkit's formats."""


class _Reader:
    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.what}: truncated (needed {n} bytes at offset {self.pos})")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise FormatError(f"{self.what}: {len(self.blob) - self.pos} trailing bytes")


# ---------------------------------------------------------------------------
# Cube files


def write_cube(path, cube: SpectralCube) -> None:
    """Write a cube as float32; float64 cubes are rounded to float32."""
    payload = np.ascontiguousarray(cube.data, dtype="<f4").tobytes()
    header = CUBE_MAGIC + struct.pack(
        "<IIII", cube.height, cube.width, cube.bands, DTYPE_FLOAT32
    )
    Path(path).write_bytes(header + payload)


def read_cube(path) -> SpectralCube:
    reader = _Reader(Path(path).read_bytes(), f"cube file {path}")
    if reader.take(4) != CUBE_MAGIC:
        raise FormatError(f"cube file {path}: bad magic")
    height, width, bands, dtype_code = reader.unpack("<IIII")
    if dtype_code != DTYPE_FLOAT32:
        raise FormatError(f"cube file {path}: unknown dtype code {dtype_code}")
    if min(height, width, bands) < 1:
        raise FormatError(f"cube file {path}: empty dims {bands}x{height}x{width}")
    data = np.frombuffer(reader.take(4 * bands * height * width), dtype="<f4")
    reader.done()
    data = data.astype(np.float32, copy=False).reshape(bands, height, width)
    if not np.isfinite(data).all():
        raise FormatError(f"cube file {path}: non-finite samples")
    return SpectralCube(data)


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass(frozen=True)
class CheckpointData:
    config: NetworkConfig
    params: NetworkParams
    state: AdamState | None
    seed: int
    epoch: int


def _pack_arrays(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in arrays)


def write_checkpoint(
    path,
    config: NetworkConfig,
    params: NetworkParams,
    state: AdamState | None = None,
    seed: int = 0,
    epoch: int = 0,
) -> None:
    arrays = params.arrays()
    config_json = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(config_json)), config_json]
    parts.append(struct.pack("<I", len(arrays)))
    for a in arrays:
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
    parts.append(_pack_arrays(arrays))
    if state is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(
            struct.pack("<Qdddd", state.t, state.alpha, state.beta1, state.beta2, state.eps)
        )
        parts.append(_pack_arrays(state.m))
        parts.append(_pack_arrays(state.v))
    parts.append(struct.pack("<QI", seed, epoch))
    Path(path).write_bytes(b"".join(parts))


def _read_arrays(reader: _Reader, shapes) -> list[np.ndarray]:
    out = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4")
        out.append(data.astype(np.float32, copy=False).reshape(shape))
    return out


def read_checkpoint(path) -> CheckpointData:
    reader = _Reader(Path(path).read_bytes(), f"checkpoint {path}")
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"checkpoint {path}: bad magic")
    (config_len,) = reader.unpack("<I")
    try:
        config = NetworkConfig.from_dict(json.loads(reader.take(config_len)))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint {path}: bad config block: {exc}") from exc
    (n_arrays,) = reader.unpack("<I")
    shapes = []
    for _ in range(n_arrays):
        (ndim,) = reader.unpack("<I")
        shapes.append(tuple(reader.unpack(f"<{ndim}I")))
    try:
        params = params_from_arrays(config, _read_arrays(reader, shapes))
    except ValueError as exc:
        raise FormatError(f"checkpoint {path}: {exc}") from exc
    (has_state,) = reader.unpack("<B")
    state = None
    if has_state:
        t, alpha, beta1, beta2, eps = reader.unpack("<Qdddd")
        m = tuple(_read_arrays(reader, shapes))
        v = tuple(_read_arrays(reader, shapes))
        state = AdamState(int(t), m, v, alpha, beta1, beta2, eps)
    seed, epoch = reader.unpack("<QI")
    reader.done()
    return CheckpointData(config, params, state, int(seed), int(epoch))


# ---------------------------------------------------------------------------
# Pattern sidecars: first line "P B", then P lines of P band indices.


def format_pattern(pattern: MsfaPattern) -> str:
    lines = [f"{pattern.period} {pattern.band_count}"]
    for row in pattern.cells:
        lines.append(" ".join(str(int(c)) for c in row))
    return "\n".join(lines) + "\n"


def parse_pattern(text: str) -> MsfaPattern:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise FormatError("pattern: empty file")
    head = lines[0].split()
    if len(head) != 2:
        raise FormatError(f"pattern: first line must be 'P B', got {lines[0]!r}")
    try:
        period, band_count = int(head[0]), int(head[1])
    except ValueError as exc:
        raise FormatError(f"pattern: first line must be 'P B', got {lines[0]!r}") from exc
    if len(lines) != 1 + period:
        raise FormatError(f"pattern: expected {period} grid rows, got {len(lines) - 1}")
    try:
        cells = np.array([[int(tok) for tok in line.split()] for line in lines[1:]])
    except ValueError as exc:
        raise FormatError(f"pattern: non-integer cell: {exc}") from exc
    if cells.shape != (period, period):
        raise FormatError(f"pattern: grid is {cells.shape}, expected {(period, period)}")
    try:
        return MsfaPattern(cells, band_count)
    except ValueError as exc:
        raise FormatError(f"pattern: {exc}") from exc


def write_pattern(path, pattern: MsfaPattern) -> None:
    Path(path).write_text(format_pattern(pattern), encoding="utf-8")


def read_pattern(path) -> MsfaPattern:
    return parse_pattern(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Binary graymaps ("P5"). 16-bit samples are big-endian per the convention.


def _pgm_tokens(blob: bytes):
    pos = 0
    while True:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        break
    start = pos
    while pos < len(blob) and not blob[pos : pos + 1].isspace():
        pos += 1
    return blob[start:pos], pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary graymap; returns (integer samples (H, W), maxval)."""
    blob = Path(path).read_bytes()
    magic, pos = _pgm_tokens(blob)
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary graymap (magic {magic!r})")
    header = []
    for _ in range(3):
        token, end = _pgm_tokens(blob[pos:])
        if not token:
            raise FormatError(f"{path}: truncated graymap header")
        try:
            header.append(int(token))
        except ValueError as exc:
            raise FormatError(f"{path}: bad graymap header token {token!r}") from exc
        pos += end
    width, height, maxval = header
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: maxval {maxval} out of range")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = height * width * dtype.itemsize
    payload = blob[pos : pos + expected]
    if len(payload) != expected:
        raise FormatError(f"{path}: expected {expected} sample bytes, got {len(payload)}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return samples, maxval


def write_pgm(path, plane: np.ndarray) -> None:
    """Write a [0,1] plane as an 8-bit binary graymap."""
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ValueError(f"plane must be 2-dimensional, got shape {plane.shape}")
    quantized = np.rint(np.clip(plane, 0.0, 1.0) * 255.0).astype("u1")
    header = f"P5\n{plane.shape[1]} {plane.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + quantized.tobytes())


def import_band_images(directory, band_order) -> SpectralCube:
    """Stack per-band graymaps into a cube, normalized to [0,1] by maxval."""
    directory = Path(directory)
    planes = []
    first_name = None
    first_shape = None
    for name in band_order:
        file_path = directory / name
        if not file_path.exists():
            raise FileNotFoundError(f"band image not found: {file_path}")
        samples, maxval = read_pgm(file_path)
        if first_shape is None:
            first_name, first_shape = name, samples.shape
        elif samples.shape != first_shape:
            raise FormatError(
                f"band image {name} is {samples.shape[1]}x{samples.shape[0]} but "
                f"{first_name} is {first_shape[1]}x{first_shape[0]}"
            )
        planes.append(samples.astype(np.float64) / maxval)
    if not planes:
        raise ValueError("band_order lists no files")
    return SpectralCube(np.stack(planes).astype(np.float32))


# ---------------------------------------------------------------------------
# CSV reports (UTF-8, '.' decimal separator, 4 decimals, trailing average row)


def _fmt_db(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def format_report(report: CrossvalReport) -> str:
    lines = ["image,bilinear_db,refined_db"]
    for row in report.rows:
        lines.append(f"{row.image_id},{_fmt_db(row.bilinear_db)},{_fmt_db(row.refined_db)}")
    lines.append(
        f"average,{_fmt_db(report.average_bilinear_db)},{_fmt_db(report.average_refined_db)}"
    )
    return "\n".join(lines) + "\n"


def write_report(path, report: CrossvalReport) -> None:
    Path(path).write_text(format_report(report), encoding="utf-8")


def load_config(path) -> NetworkConfig:
    """Read a network config from a JSON file."""
    try:
        mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path}: invalid JSON: {exc}") from exc
    if not isinstance(mapping, dict):
        raise FormatError(f"config {path}: expected a JSON object")
    try:
        return NetworkConfig.from_dict(mapping)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"config {path}: {exc}") from exc
