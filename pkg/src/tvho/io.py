"""Volume container, PGM frame import, flat config files and run metadata.

Volume file layout (all little-endian)::

    0   8 bytes   magic b"TVHOVOL1"
    8   uint32    m
    12  uint32    n
    16  uint32    N
    20  uint8     dtype code (0 = float64, 1 = uint8)
    21  payload   m*n*N elements, mode-1 (column-major) order
"""

from __future__ import annotations

import json
import os
import platform
import struct
import sys
from pathlib import Path

import numpy as np

from .solver import SolverConfig

__all__ = [
    "VolumeError",
    "BadMagic",
    "TruncatedPayload",
    "SizeOverflow",
    "read_volume",
    "write_volume",
    "quantize_u8",
    "read_pgm",
    "import_frames",
    "parse_config",
    "read_config",
    "write_config",
    "write_metadata",
    "read_metadata",
]

MAGIC = b"TVHOVOL1"
HEADER = struct.Struct("<8sIIIB")
HEADER_SIZE = HEADER.size  # 21
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("u1")}
_CODES = {"float64": 0, "uint8": 1}


class VolumeError(ValueError):
    """Malformed volume file; ``offset`` is the byte position of the fault."""

    def __init__(self, msg, offset):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


class BadMagic(VolumeError):
    pass


class TruncatedPayload(VolumeError):
    pass


class SizeOverflow(VolumeError):
    pass


def quantize_u8(F) -> np.ndarray:
    """Round half away from zero, then clamp to ``[0, 255]``."""
    F = np.asarray(F, dtype=float)
    r = np.sign(F) * np.floor(np.abs(F) + 0.5)
    return np.clip(r, 0, 255).astype(np.uint8)


def write_volume(path, F, dtype: str = "float64") -> None:
    F = np.asarray(F)
    if F.ndim == 2:
        F = F[:, :, None]
    if F.ndim != 3:
        raise ValueError(f"expected an (m, n, N) volume, got shape {F.shape}")
    if dtype not in _CODES:
        raise ValueError(f"dtype must be 'float64' or 'uint8', got {dtype!r}")
    m, n, N = F.shape
    for d in (m, n, N):
        if d >= 2 ** 32:
            raise SizeOverflow(f"dimension {d} does not fit in 32 bits", 8)
    code = _CODES[dtype]
    data = quantize_u8(F) if code == 1 else np.asarray(F, dtype=float)
    payload = data.astype(_DTYPES[code]).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, m, n, N, code))
        fh.write(payload)


def read_volume(path, *, return_dtype: bool = False):
    """Read a volume file as float64 (``uint8`` payloads are widened)."""
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        if raw[:len(MAGIC)] != MAGIC[:len(raw)]:
            raise BadMagic(f"not a volume file: magic {raw[:8]!r}", 0)
        raise TruncatedPayload(f"header needs {HEADER_SIZE} bytes, file has {len(raw)}", len(raw))
    magic, m, n, N, code = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"not a volume file: magic {magic!r}", 0)
    if code not in _DTYPES:
        raise VolumeError(f"unknown dtype code {code}", 20)
    item = _DTYPES[code].itemsize
    count = m * n * N
    expected = count * item
    if expected > sys.maxsize - HEADER_SIZE:
        raise SizeOverflow(f"payload of {m}x{n}x{N} elements overflows", 8)
    actual = len(raw) - HEADER_SIZE
    if actual < expected:
        raise TruncatedPayload(f"expected {expected} payload bytes, found {actual}",
                               HEADER_SIZE + actual)
    if actual > expected:
        raise VolumeError(f"expected {expected} payload bytes, found {actual} (trailing data)",
                          HEADER_SIZE + expected)
    data = np.frombuffer(raw, dtype=_DTYPES[code], count=count, offset=HEADER_SIZE)
    F = data.reshape((m, n, N), order="F").astype(float)
    if return_dtype:
        return F, ("float64", "uint8")[code]
    return F


def _pgm_tokens(raw: bytes, count: int):
    """Yield ``count`` whitespace-separated header tokens, skipping comments."""
    pos = 0
    tokens = []
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("unexpected end of PGM header")
        tokens.append(raw[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte ends the header


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM as an ``(rows, cols)`` uint8 array."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise ValueError(f"{path}: not a binary P5 PGM")
    (_, w, h, mx), pos = _pgm_tokens(raw, 4)
    w, h, mx = int(w), int(h), int(mx)
    if mx != 255:
        raise ValueError(f"{path}: maxval {mx} is not supported (only 255)")
    body = raw[pos:pos + w * h]
    if len(body) < w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, frame) -> None:
    frame = quantize_u8(frame)
    h, w = frame.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(frame.tobytes())


def import_frames(directory) -> np.ndarray:
    """Stack the ``*.pgm`` files of ``directory`` (sorted by name) as frames."""
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        raise ValueError(f"no .pgm files in {directory}")
    frames = []
    for p in files:
        fr = read_pgm(p)
        if frames and fr.shape != frames[0].shape:
            raise ValueError(f"frame size mismatch: {files[0].name} is {frames[0].shape}, "
                             f"{p.name} is {fr.shape}")
        frames.append(fr)
    return np.stack(frames, axis=2).astype(float)


# --------------------------------------------------------------------------
# config files

_INT_KEYS = {"max_iter", "kernel_length", "kernel_accuracy", "wavelet_levels"}
_STR_KEYS = {"tv", "bc_x", "bc_y", "bc_t", "wavelet"}


def parse_config(text: str) -> SolverConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Unset keys keep defaults."""
    allowed = set(SolverConfig.keys())
    kw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in kw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            if key in _INT_KEYS:
                kw[key] = int(val)
            elif key in _STR_KEYS:
                kw[key] = val
            else:
                kw[key] = float(val)
        except ValueError:
            raise ValueError(f"line {lineno}: bad value {val!r} for {key}") from None
    return SolverConfig(**kw)


def read_config(path) -> SolverConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SolverConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {format(v, '.17g') if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def write_config(path, cfg: SolverConfig) -> None:
    Path(path).write_text(format_config(cfg))


# --------------------------------------------------------------------------
# metadata sidecars


def _versions():
    import scipy

    from . import __version__
    return {"tvho": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def metadata_path(output) -> Path:
    return Path(str(output) + ".json")


def write_metadata(output, command: str, argv, **info) -> Path:
    """Write ``<output>.json`` describing how ``output`` was produced."""
    meta = {"command": command, "argv": list(argv), "versions": _versions()}
    meta.update(info)
    path = metadata_path(output)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def read_metadata(path) -> dict:
    return json.loads(Path(path).read_text())


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, os.PathLike):
        return os.fspath(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
