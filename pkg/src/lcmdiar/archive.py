"""Single-file binary model archive (LCMD) holding every trained stage.

Layout, all little-endian: magic ``b"LCMD"``, u32 version, u32 array count,
then per array: u16 name length, UTF-8 name, u8 rank, rank x u32 dims and
the float64 payload in C order. Arrays are written sorted by name so the
same models always produce the same bytes.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .diarizer import Models
from .errors import FormatError, ParameterError, TruncationError
from .gmm import DiagonalGmm
from .scoring import PldaModel, Preprocessor
from .tvspace import TotalVariability

MAGIC = b"LCMD"
VERSION = 1

STAGES = {
    "ubm": ("ubm.weights", "ubm.means", "ubm.vars"),
    "tv": ("tv.T", "tv.sigma"),
    "prep": ("prep.mean", "prep.whiten"),
    "plda": ("plda.mu", "plda.phi", "plda.sigma_eps"),
}


def write_archive(arrays: dict, path) -> None:
    """Write named arrays atomically (temp file in the target dir, then rename)."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        key = name.encode("utf-8")
        if not key or len(key) > 0xFFFF:
            raise ParameterError(f"bad array name {name!r}")
        if a.ndim > 255:
            raise ParameterError(f"array {name!r} has too many dimensions")
        chunks.append(struct.pack("<H", len(key)) + key)
        chunks.append(struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
        chunks.append(a.tobytes(order="C"))
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_archive(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise TruncationError(f"{path}: archive truncated at byte {pos}")
        out = raw[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise FormatError(f"{path}: not an LCMD archive")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported archive version {version}")
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode("utf-8", errors="replace")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64))
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims)
        if name in arrays:
            raise FormatError(f"{path}: duplicate array {name!r}")
        arrays[name] = data.astype(np.float64)
    if pos != len(raw):
        raise TruncationError(f"{path}: {len(raw) - pos} trailing bytes after last array")
    return arrays


def update_archive(path, arrays: dict) -> None:
    """Add or replace arrays in an archive, creating it if needed."""
    path = Path(path)
    merged = read_archive(path) if path.exists() else {}
    merged.update(arrays)
    write_archive(merged, path)


def require(arrays: dict, stage: str, needed_by: str | None = None) -> None:
    missing = [k for k in STAGES[stage] if k not in arrays]
    if missing:
        who = f" (needed by {needed_by})" if needed_by else ""
        raise FormatError(
            f"archive lacks {', '.join(missing)}{who}; run train-{'plda' if stage == 'prep' else stage} first"
        )


def ubm_arrays(g: DiagonalGmm) -> dict:
    return {"ubm.weights": g.weights, "ubm.means": g.means, "ubm.vars": g.variances}


def tv_arrays(tv: TotalVariability) -> dict:
    return {"tv.T": tv.T, "tv.sigma": tv.sigma}


def plda_arrays(plda: PldaModel, prep: Preprocessor) -> dict:
    return {"plda.mu": plda.mu, "plda.phi": plda.phi, "plda.sigma_eps": plda.sigma_eps,
            "prep.mean": prep.mean, "prep.whiten": prep.whiten}


def models_to_arrays(models: Models) -> dict:
    out = {**ubm_arrays(models.ubm), **tv_arrays(models.tv)}
    if models.plda is not None and models.prep is not None:
        out.update(plda_arrays(models.plda, models.prep))
    return out


def load_ubm(arrays: dict, needed_by: str | None = None) -> DiagonalGmm:
    require(arrays, "ubm", needed_by)
    return DiagonalGmm(arrays["ubm.weights"], arrays["ubm.means"], arrays["ubm.vars"])


def load_models(arrays: dict, need_plda: bool = True, needed_by: str | None = None) -> Models:
    ubm = load_ubm(arrays, needed_by)
    require(arrays, "tv", needed_by)
    tv = TotalVariability(arrays["tv.T"], arrays["tv.sigma"])
    plda = prep = None
    if need_plda or all(k in arrays for k in STAGES["plda"] + STAGES["prep"]):
        require(arrays, "plda", needed_by)
        require(arrays, "prep", needed_by)
        plda = PldaModel(arrays["plda.mu"], arrays["plda.phi"], arrays["plda.sigma_eps"])
        prep = Preprocessor(arrays["prep.mean"], arrays["prep.whiten"])
    return Models(ubm, tv, plda, prep)
