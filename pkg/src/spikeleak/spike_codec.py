"""Static images and event streams to ``[T,B,C,H,W]`` spike tensors, plus dummy initializers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import tensor_core as tc
from .errors import UsageError, ValidationError

MODALITIES = ("replicated_image", "event_frames", "binary_spikes")


@dataclass
class SpikeTensor:
    """A rank-5 ``[T,B,C,H,W]`` tensor tagged with how it was produced.

    ``leaf`` is the tensor an optimizer should update: for replicated images
    it is the single ``[B,C,H,W]`` image that every timestep views, otherwise
    it is ``data`` itself.
    """

    data: torch.Tensor
    modality: str
    leaf: torch.Tensor | None = None

    def __post_init__(self):
        if self.data.dim() != 5:
            raise ValidationError(f"spike tensor must be rank 5, got {tuple(self.data.shape)}")
        if self.modality not in MODALITIES:
            raise ValidationError(f"unknown modality {self.modality!r}")
        if self.leaf is None:
            self.leaf = self.data

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return tuple(self.data.shape)

    def is_binary(self) -> bool:
        d = self.data.detach()
        return bool(((d == 0) | (d == 1)).all())


def replicate_image(img: torch.Tensor, T: int) -> SpikeTensor:
    """Frame replication: every one of the ``T`` slices is a view of ``img``."""
    if T < 1:
        raise UsageError("T must be >= 1")
    if img.dim() != 4:
        raise ValidationError(f"image batch must be [B,C,H,W], got {tuple(img.shape)}")
    d = img.detach()
    if (d < 0).any() or (d > 1).any():
        raise ValidationError("pixel values must lie in [0, 1]")
    data = img.unsqueeze(0).expand(T, *img.shape)
    return SpikeTensor(data, "replicated_image", leaf=img)


@dataclass
class EventStream:
    """DVS-style events: timestamps (us), column ``x``, row ``y``, polarity ``p``."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    sensor_size: tuple  # (H, W)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.uint64)
        self.x = np.asarray(self.x, dtype=np.uint16)
        self.y = np.asarray(self.y, dtype=np.uint16)
        self.p = np.asarray(self.p, dtype=np.uint8)
        self.sensor_size = tuple(int(s) for s in self.sensor_size)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValidationError("event field arrays differ in length")
        H, W = self.sensor_size
        if n:
            if np.any(np.diff(self.t.astype(np.int64)) < 0):
                raise ValidationError("event timestamps must be non-decreasing")
            if self.x.max() >= W or self.y.max() >= H:
                raise ValidationError(f"event coordinates outside sensor {self.sensor_size}")
            if self.p.max() > 1:
                raise ValidationError("polarity must be 0 or 1")

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.sensor_size == other.sensor_size
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )


def events_to_frames(ev: EventStream, T: int) -> SpikeTensor:
    """Bin events into ``T`` equal slices of ``[0, t_last]`` and clip counts to {0, 1}.

    Returns a ``[T,1,2,H,W]`` binary tensor with polarity as the channel axis.
    """
    if len(ev) == 0:
        raise ValidationError("cannot bin an empty event stream")
    if T < 1:
        raise UsageError("T must be >= 1")
    H, W = ev.sensor_size
    span = int(ev.t[-1]) + 1
    bins = np.minimum((ev.t.astype(np.float64) * T / span).astype(np.int64), T - 1)
    frames = np.zeros((T, 2, H, W), dtype=np.float64)
    frames[bins, ev.p.astype(np.int64), ev.y.astype(np.int64), ev.x.astype(np.int64)] = 1.0
    data = torch.from_numpy(frames).unsqueeze(1)
    return SpikeTensor(data, "binary_spikes")


# trajectories for the synthetic gesture classes, as functions of phase s in [0, 1]
def _trajectory(class_id: int, s: np.ndarray, cx: float, cy: float, amp: float, phase: float):
    two_pi = 2 * math.pi
    if class_id == 0:  # two hands clapping: handled by caller, left hand path here
        return cx - amp * (0.5 + 0.5 * np.cos(two_pi * 2 * s)), np.full_like(s, cy)
    if class_id == 1:  # sweep right to left
        return cx + amp * (1 - 2 * s), np.full_like(s, cy - amp / 3)
    if class_id == 2:  # sweep left to right
        return cx - amp * (1 - 2 * s), np.full_like(s, cy + amp / 3)
    if class_id == 3:  # upward
        return np.full_like(s, cx), cy + amp * (1 - 2 * s)
    if class_id == 4:  # downward
        return np.full_like(s, cx), cy - amp * (1 - 2 * s)
    if class_id == 5:  # clockwise circle
        a = phase + two_pi * s
        return cx + amp * np.cos(a), cy + amp * np.sin(a)
    if class_id == 6:  # counter-clockwise circle
        a = phase - two_pi * s
        return cx + amp * np.cos(a), cy + amp * np.sin(a)
    if class_id == 7:  # diagonal, top-left to bottom-right
        return cx + amp * (2 * s - 1), cy + amp * (2 * s - 1)
    if class_id == 8:  # diagonal, top-right to bottom-left
        return cx - amp * (2 * s - 1), cy + amp * (2 * s - 1)
    if class_id == 9:  # fast small vertical oscillation
        return np.full_like(s, cx), cy + 0.4 * amp * np.sin(two_pi * 3 * s + phase)
    if class_id == 10:  # figure-eight
        a = phase + two_pi * s
        return cx + amp * np.sin(a), cy + 0.6 * amp * np.sin(2 * a)
    raise UsageError(f"class_id must be in 0..10, got {class_id}")


def synth_gesture_stream(
    class_id: int,
    seed: int,
    sensor=(32, 32),
    duration_us: int = 1_000_000,
    n_steps: int = 200,
    noise_rate: float = 0.002,
) -> EventStream:
    """Deterministic synthetic DVS gesture: a moving disk emitting edge events.

    A disk of brightness 1 follows a class-specific trajectory; pixels whose
    brightness rises between consecutive sensor samples emit ON (p=1) events,
    falling pixels emit OFF (p=0) events. Position, size, speed and a sparse
    background noise process vary with ``seed``.
    """
    if not 0 <= class_id <= 10:
        raise UsageError(f"class_id must be in 0..10, got {class_id}")
    H, W = sensor
    rng = np.random.default_rng([int(class_id), int(seed), 0x6E57])
    cx = W / 2 + rng.uniform(-0.08, 0.08) * W
    cy = H / 2 + rng.uniform(-0.08, 0.08) * H
    amp = rng.uniform(0.25, 0.32) * min(H, W)
    radius = rng.uniform(0.08, 0.12) * min(H, W)
    phase = rng.uniform(0, 2 * math.pi)
    s = np.linspace(0.0, 1.0, n_steps)
    px, py = _trajectory(class_id, s, cx, cy, amp, phase)
    blobs = [(px, py)]
    if class_id == 0:
        blobs.append((2 * cx - px, py))
    yy, xx = np.mgrid[0:H, 0:W]

    def frame(k):
        img = np.zeros((H, W))
        for bx, by in blobs:
            img = np.maximum(img, ((xx - bx[k]) ** 2 + (yy - by[k]) ** 2 <= radius**2).astype(float))
        return img

    ts, xs, ys, ps = [], [], [], []
    dt = duration_us / n_steps
    prev = frame(0)
    for k in range(1, n_steps):
        cur = frame(k)
        diff = cur - prev
        prev = cur
        t0 = (k - 1) * dt
        for pol, mask in ((1, diff > 0), (0, diff < 0)):
            r, c = np.nonzero(mask)
            ts.append(t0 + rng.uniform(0, dt, size=len(r)))
            xs.append(c)
            ys.append(r)
            ps.append(np.full(len(r), pol))
    n_noise = rng.poisson(noise_rate * H * W * n_steps)
    ts.append(rng.uniform(0, duration_us, size=n_noise))
    xs.append(rng.integers(0, W, size=n_noise))
    ys.append(rng.integers(0, H, size=n_noise))
    ps.append(rng.integers(0, 2, size=n_noise))
    t = np.concatenate(ts).astype(np.uint64)
    order = np.argsort(t, kind="stable")
    return EventStream(
        t[order],
        np.concatenate(xs)[order],
        np.concatenate(ys)[order],
        np.concatenate(ps)[order],
        (H, W),
    )


def init_dummy_image(shape, T: int | None = None, seed: int = 0):
    """Near-gray dummy image from U(0.45, 0.55) with ``requires_grad`` set.

    ``shape`` is ``[B,C,H,W]``. With ``T`` given the result is a replicated
    SpikeTensor whose ``leaf`` is the single optimized image; otherwise the
    image tensor itself.
    """
    gen = torch.Generator().manual_seed(int(seed))
    img = (0.45 + 0.1 * torch.rand(tuple(shape), generator=gen, dtype=tc.DTYPE)).requires_grad_()
    if T is None:
        return img
    return SpikeTensor(img.unsqueeze(0).expand(T, *img.shape), "replicated_image", leaf=img)


def init_dummy_spikes(shape, sigma: float = 0.1, seed: int = 0) -> SpikeTensor:
    """Folded-normal ``|N(0, sigma)|`` dummy spikes over all ``T*B*C*H*W`` cells."""
    if sigma <= 0:
        raise UsageError("sigma must be positive")
    if len(shape) != 5:
        raise UsageError("dummy spike shape must be [T,B,C,H,W]")
    gen = torch.Generator().manual_seed(int(seed))
    data = (torch.randn(tuple(shape), generator=gen, dtype=tc.DTYPE) * sigma).abs()
    return SpikeTensor(data.requires_grad_(), "event_frames")
