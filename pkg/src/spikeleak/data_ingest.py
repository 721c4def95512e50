"""Parsers for IDX (MNIST), CIFAR-100 binary, and the native SPKT / EVST containers."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import tensor_core as tc
from ._binio import Reader
from .errors import FormatError, ValidationError
from .spike_codec import EventStream, SpikeTensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 3074

SPKT_MAGIC = b"SPKT"
SPKT_VERSION = 1
EVST_MAGIC = b"EVST"
_EVENT_RECORD = struct.Struct("<QHHB")


@dataclass
class LabeledDataset:
    inputs: torch.Tensor  # [N,C,H,W] images or [N,T,C,H,W] spike frames
    labels: torch.Tensor  # int64 [N]
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValidationError(
                f"{len(self.inputs)} inputs but {len(self.labels)} labels"
            )
        if len(self.labels) and (
            int(self.labels.min()) < 0 or int(self.labels.max()) >= self.num_classes
        ):
            raise ValidationError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledDataset":
        idx = torch.as_tensor(idx, dtype=torch.long)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.num_classes, self.split)


def _maybe_gunzip(buf: bytes) -> bytes:
    return gzip.decompress(buf) if buf[:2] == b"\x1f\x8b" else buf


def _parse_idx_header(buf: bytes, magic: int, what: str):
    if len(buf) < 8:
        raise FormatError(f"{what} shorter than IDX header", offset=len(buf))
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise FormatError(f"{what}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    ndim = got & 0xFF
    if len(buf) < 4 + 4 * ndim:
        raise FormatError(f"{what}: truncated dimension header", offset=len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4 : 4 + 4 * ndim])
    return dims, 4 + 4 * ndim


def parse_idx(images: bytes, labels: bytes, pad: int = 2, split: str = "train") -> LabeledDataset:
    """Decode an IDX image/label pair (optionally gzipped).

    Pixels are scaled from u8 to [0, 1] and zero-padded by ``pad`` pixels on
    every side (28x28 MNIST becomes 32x32).
    """
    images = _maybe_gunzip(images)
    labels = _maybe_gunzip(labels)
    idims, ioff = _parse_idx_header(images, IDX_IMAGES_MAGIC, "image file")
    ldims, loff = _parse_idx_header(labels, IDX_LABELS_MAGIC, "label file")
    n, h, w = idims
    need = ioff + n * h * w
    if len(images) < need:
        raise FormatError(
            f"image payload truncated: expected {need} bytes, got {len(images)}", offset=len(images)
        )
    if len(images) > need:
        raise FormatError(f"{len(images) - need} trailing bytes in image file", offset=need)
    if ldims[0] != n:
        raise FormatError(f"label count {ldims[0]} does not match image count {n}", offset=4)
    if len(labels) != loff + n:
        raise FormatError(
            f"label payload: expected {loff + n} bytes, got {len(labels)}",
            offset=min(len(labels), loff + n),
        )
    pix = np.frombuffer(images, dtype=np.uint8, offset=ioff).reshape(n, 1, h, w)
    x = torch.from_numpy(pix.astype(np.float64) / 255.0)
    if pad:
        x = torch.nn.functional.pad(x, (pad, pad, pad, pad))
    y = torch.from_numpy(np.frombuffer(labels, dtype=np.uint8, offset=loff).astype(np.int64))
    if n and int(y.max()) > 9:
        raise FormatError(f"label {int(y.max())} outside MNIST range 0..9", offset=loff)
    return LabeledDataset(x, y, 10, split)


def load_idx(images_path, labels_path, pad: int = 2, split: str = "train") -> LabeledDataset:
    return parse_idx(Path(images_path).read_bytes(), Path(labels_path).read_bytes(), pad, split)


def encode_idx(images_u8: np.ndarray, labels_u8: np.ndarray) -> tuple[bytes, bytes]:
    """Inverse of :func:`parse_idx` (without padding) for ``[N,H,W]`` u8 arrays."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    n, h, w = images_u8.shape
    img = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w) + images_u8.tobytes()
    lab = struct.pack(">II", IDX_LABELS_MAGIC, len(labels_u8)) + labels_u8.tobytes()
    return img, lab


def parse_cifar_bin(buf: bytes, label: str = "fine", split: str = "train") -> LabeledDataset:
    """CIFAR-100 binary records: coarse label, fine label, 3072 channel-major pixels."""
    if len(buf) % CIFAR_RECORD:
        raise FormatError(
            f"CIFAR-100 file length {len(buf)} is not a multiple of {CIFAR_RECORD}",
            offset=len(buf) - len(buf) % CIFAR_RECORD,
        )
    n = len(buf) // CIFAR_RECORD
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(n, CIFAR_RECORD)
    col = 1 if label == "fine" else 0
    limit = 100 if label == "fine" else 20
    y = rec[:, col].astype(np.int64)
    bad = np.nonzero(y >= limit)[0]
    if len(bad):
        raise ValidationError(
            f"{label} label {y[bad[0]]} out of range at byte offset {bad[0] * CIFAR_RECORD + col}"
        )
    x = rec[:, 2:].reshape(n, 3, 32, 32).astype(np.float64) / 255.0
    return LabeledDataset(torch.from_numpy(x), torch.from_numpy(y), limit, split)


def encode_spike_tensor(st) -> bytes:
    data = st.data if isinstance(st, SpikeTensor) else st
    arr = np.ascontiguousarray(data.detach().cpu().numpy(), dtype="<f4")
    header = SPKT_MAGIC + struct.pack(f"<II{arr.ndim}I", SPKT_VERSION, arr.ndim, *arr.shape)
    return header + arr.tobytes()


def decode_spike_tensor(buf: bytes, modality: str = "event_frames") -> SpikeTensor:
    r = Reader(buf, "SPKT file")
    r.magic(SPKT_MAGIC)
    version = r.u32()
    if version != SPKT_VERSION:
        raise FormatError(f"unsupported SPKT version {version}", offset=4)
    ndim = r.u32()
    if ndim != 5:
        raise FormatError(f"SPKT must hold a rank-5 tensor, header says {ndim}", offset=8)
    dims = r.unpack(f"<{ndim}I")
    count = 1
    for d in dims:
        count *= d
        if count > 1 << 34:
            raise FormatError("SPKT dimensions overflow", offset=12)
    expected = 4 * count
    remaining = len(buf) - r.pos
    if remaining != expected:
        raise FormatError(
            f"SPKT payload size mismatch: expected {expected} bytes, got {remaining}", offset=r.pos
        )
    arr = np.frombuffer(r.take(expected), dtype="<f4").reshape(dims).astype(np.float64)
    t = torch.from_numpy(arr)
    if modality == "binary_spikes" and not bool(((t == 0) | (t == 1)).all()):
        modality = "event_frames"
    return SpikeTensor(t, modality)


def write_spike_tensor(path, st) -> None:
    Path(path).write_bytes(encode_spike_tensor(st))


def read_spike_tensor(path, modality: str = "event_frames") -> SpikeTensor:
    return decode_spike_tensor(Path(path).read_bytes(), modality)


def encode_event_stream(ev: EventStream) -> bytes:
    if len(ev) == 0:
        raise ValidationError("refusing to write an empty event stream")
    H, W = ev.sensor_size
    rec = np.empty(
        len(ev), dtype=np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
    )
    rec["t"], rec["x"], rec["y"], rec["p"] = ev.t, ev.x, ev.y, ev.p
    return EVST_MAGIC + struct.pack("<IIQ", H, W, len(ev)) + rec.tobytes()


def decode_event_stream(buf: bytes) -> EventStream:
    r = Reader(buf, "EVST file")
    r.magic(EVST_MAGIC)
    H, W, n = r.unpack("<IIQ")
    expected = n * _EVENT_RECORD.size
    remaining = len(buf) - r.pos
    if remaining != expected:
        raise FormatError(
            f"EVST payload size mismatch: expected {expected} bytes for {n} events, got {remaining}",
            offset=r.pos,
        )
    rec = np.frombuffer(
        r.take(expected), dtype=np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
    )
    try:
        return EventStream(rec["t"], rec["x"], rec["y"], rec["p"], (H, W))
    except ValidationError as exc:
        raise FormatError(f"invalid EVST content: {exc}", offset=20) from exc


def write_event_stream(path, ev: EventStream) -> None:
    Path(path).write_bytes(encode_event_stream(ev))


def read_event_stream(path) -> EventStream:
    return decode_event_stream(Path(path).read_bytes())


def write_pnm(path, img) -> None:
    """Dump a ``[C,H,W]`` or ``[H,W]`` image in [0,1] as binary PGM (C=1) or PPM (C=3)."""
    a = img.detach().cpu().numpy() if isinstance(img, torch.Tensor) else np.asarray(img)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    u8 = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    if u8.ndim == 2:
        header = b"P5\n%d %d\n255\n" % (u8.shape[1], u8.shape[0])
        body = u8.tobytes()
    elif u8.ndim == 3 and u8.shape[0] == 3:
        header = b"P6\n%d %d\n255\n" % (u8.shape[2], u8.shape[1])
        body = np.transpose(u8, (1, 2, 0)).tobytes()
    else:
        raise ValidationError(f"cannot write image of shape {a.shape} as PGM/PPM")
    Path(path).write_bytes(header + body)


def synthetic_gesture_dataset(
    per_class: int, seed: int = 0, num_classes: int = 11, size: int = 32, T: int = 20, split="train"
) -> LabeledDataset:
    """Balanced set of binned synthetic gesture streams, shape ``[N,T,2,H,W]``."""
    from .spike_codec import events_to_frames, synth_gesture_stream

    xs, ys = [], []
    for i in range(per_class):
        for c in range(num_classes):
            ev = synth_gesture_stream(c, seed * 100_003 + i, sensor=(size, size))
            xs.append(events_to_frames(ev, T).data[:, 0])
            ys.append(c)
    x = torch.stack(xs) if xs else torch.zeros((0, T, 2, size, size), dtype=tc.DTYPE)
    return LabeledDataset(x, torch.tensor(ys, dtype=torch.long), num_classes, split)
