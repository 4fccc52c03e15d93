"""Float map files, camera pose lists and image loading."""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import InvalidInputError
from .geometry import CalibratedView, Intrinsics, Pose

POSE_HEADER = "fassmvs-poses v1"


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Store a ``(H, W)`` or ``(H, W, 3)`` map as little-endian 32-bit PFM; non-finite values become 0."""
    arr = np.asarray(data)
    if arr.ndim == 2:
        tag = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = "PF"
    else:
        raise InvalidInputError(f"PFM holds 1 or 3 channels, got shape {arr.shape}")
    arr = np.where(np.isfinite(arr), arr, 0.0).astype("<f4")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{tag}\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1]).tobytes())


def _header_tokens(fh, n: int) -> list[bytes]:
    tokens: list[bytes] = []
    while len(tokens) < n:
        line = fh.readline()
        if not line:
            raise InvalidInputError("truncated PFM header")
        tokens += line.split()
    return tokens


def read_pfm(path: str | Path) -> np.ndarray:
    """Load a PFM file as float32, rows top-to-bottom."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        tokens = _header_tokens(fh, 4)
        if len(tokens) != 4 or tokens[0] not in (b"Pf", b"PF"):
            raise InvalidInputError(f"{path} is not a PFM file")
        try:
            w, h, scale = int(tokens[1]), int(tokens[2]), float(tokens[3])
        except ValueError as exc:
            raise InvalidInputError(f"malformed PFM header in {path}") from exc
        if w < 1 or h < 1 or scale == 0:
            raise InvalidInputError(f"malformed PFM header in {path}")
        channels = 3 if tokens[0] == b"PF" else 1
        dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
        raw = fh.read()
    expected = w * h * channels * 4
    if len(raw) < expected:
        raise InvalidInputError(f"{path}: expected {expected} bytes of pixel data, found {len(raw)}")
    arr = np.frombuffer(raw[:expected], dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape)[::-1].copy()


@dataclass(frozen=True, eq=False)
class PoseEntry:
    """One view of a pose file; ``image`` is resolved against the pose file's folder."""

    image: Path
    K: np.ndarray
    pose: Pose


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_pose_file(path: str | Path, entries: Sequence[PoseEntry], comment: str | None = None) -> None:
    """Rotation is stored row-major as camera-to-world (the transpose of ``Pose.rotation``)."""
    path = Path(path)
    lines = [POSE_HEADER]
    if comment:
        lines += [f"# {line}" for line in comment.splitlines()]
    lines.append("# image  K(3x3 row-major)  R_cam_to_world(3x3 row-major)  center(3)")
    for e in entries:
        img = Path(e.image)
        try:
            img = img.relative_to(path.parent)
        except ValueError:
            pass
        fields = [shlex.quote(str(img)), _fmt(np.asarray(e.K).ravel()), _fmt(e.pose.rotation.T.ravel()), _fmt(e.pose.center)]
        lines.append(" ".join(fields))
    path.write_text("\n".join(lines) + "\n")


def read_pose_file(path: str | Path) -> list[PoseEntry]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read pose file {path}: {exc.strerror}") from exc
    entries = []
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not seen_header:
            if stripped != POSE_HEADER:
                raise InvalidInputError(f"{path}: first line must be '{POSE_HEADER}'")
            seen_header = True
            continue
        try:
            tokens = shlex.split(stripped, comments=True)
            values = np.array([float(t) for t in tokens[1:]])
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
        if len(tokens) != 22:
            raise InvalidInputError(f"{path}:{lineno}: expected image path and 21 numbers, got {len(tokens) - 1}")
        K = values[:9].reshape(3, 3)
        try:
            pose = Pose(values[9:18].reshape(3, 3).T, values[18:])
        except InvalidInputError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
        entries.append(PoseEntry(path.parent / tokens[0], K, pose))
    if not seen_header:
        raise InvalidInputError(f"{path}: empty pose file")
    if not entries:
        raise InvalidInputError(f"{path}: no views listed")
    return entries


def load_image(path: str | Path) -> np.ndarray:
    """8-bit grey image; colour inputs are reduced with the ITU-R 601 luma weights."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc


def save_image(path: str | Path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path)


def load_views(entries: Sequence[PoseEntry]) -> list[CalibratedView]:
    views = []
    for e in entries:
        img = load_image(e.image)
        K = Intrinsics.from_matrix(e.K, img.shape[1], img.shape[0])
        views.append(CalibratedView(img, K, e.pose))
    return views
