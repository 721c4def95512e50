"""LeNet-style victim networks (ANN and multi-step IF spiking) and judge networks."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from . import tensor_core as tc
from ._binio import Reader, pack_tensor_f64
from .errors import DimensionError, FormatError, UsageError

CHECKPOINT_MAGIC = b"SLMD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NeuronParams:
    v_threshold: float = 1.0
    reset_mode: str = "hard_zero"
    alpha: float = 2.0
    # forward with the arctan primitive instead of the hard step (gradient checks only)
    smooth: bool = False

    def __post_init__(self):
        if self.v_threshold <= 0:
            raise UsageError("v_threshold must be positive")
        if self.alpha <= 0:
            raise UsageError("alpha must be positive")
        if self.reset_mode not in ("hard_zero", "soft_subtract"):
            raise UsageError(f"unknown reset_mode {self.reset_mode!r}")


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class Pool:
    """2x2 average pooling; carries no parameters and no activation."""


@dataclass(frozen=True)
class Linear:
    out_features: int


_LAYER_TYPES = {"conv": Conv, "pool": Pool, "linear": Linear}


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description shared by victim and attacker.

    ``input_shape`` is ``(C, H, W)``. An activation follows every conv/linear
    layer except the final linear, which must emit ``num_classes`` logits.
    """

    kind: str
    input_shape: tuple
    layers: tuple
    num_classes: int
    activation: str = "sigmoid"
    timesteps: int = 1

    def __post_init__(self):
        if self.kind not in ("ann", "snn"):
            raise UsageError(f"unknown model kind {self.kind!r}")
        if self.kind == "snn":
            if self.timesteps < 1:
                raise UsageError("snn models need timesteps >= 1")
            if self.activation != "if_neuron":
                raise UsageError("snn models use activation 'if_neuron'")
        elif self.activation not in ("sigmoid", "relu"):
            raise UsageError(f"ann activation must be sigmoid or relu, got {self.activation!r}")
        if self.num_classes < 1:
            raise UsageError("num_classes must be positive")
        if not self.layers or not isinstance(self.layers[-1], Linear):
            raise UsageError("final layer must be Linear")
        if self.layers[-1].out_features != self.num_classes:
            raise UsageError("final layer width must equal num_classes")
        self.parameter_shapes()  # validates geometry

    def parameter_shapes(self) -> list[tuple[str, tuple]]:
        c, h, w = self.input_shape
        flat = None
        shapes = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if flat is not None:
                    raise UsageError("conv layer after linear layer")
                if layer.kernel > h + 2 * layer.padding or layer.kernel > w + 2 * layer.padding:
                    raise UsageError(f"layer {i}: kernel larger than padded input")
                shapes.append((f"{i}.weight", (layer.out_channels, c, layer.kernel, layer.kernel)))
                shapes.append((f"{i}.bias", (layer.out_channels,)))
                c = layer.out_channels
                h = tc.conv_output_size(h, layer.kernel, layer.stride, layer.padding)
                w = tc.conv_output_size(w, layer.kernel, layer.stride, layer.padding)
            elif isinstance(layer, Pool):
                if flat is not None or h < 2 or w < 2:
                    raise UsageError(f"layer {i}: cannot pool")
                h, w = h // 2, w // 2
            elif isinstance(layer, Linear):
                d = flat if flat is not None else c * h * w
                shapes.append((f"{i}.weight", (layer.out_features, d)))
                shapes.append((f"{i}.bias", (layer.out_features,)))
                flat = layer.out_features
            else:
                raise UsageError(f"unknown layer {layer!r}")
        return shapes

    @property
    def input_size(self) -> int:
        return math.prod(self.input_shape)

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            name = next(k for k, v in _LAYER_TYPES.items() if isinstance(layer, v))
            layers.append({"type": name, **asdict(layer)})
        return {
            "kind": self.kind,
            "input_shape": list(self.input_shape),
            "layers": layers,
            "num_classes": self.num_classes,
            "activation": self.activation,
            "timesteps": self.timesteps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        layers = []
        for entry in d["layers"]:
            entry = dict(entry)
            layers.append(_LAYER_TYPES[entry.pop("type")](**entry))
        return cls(
            kind=d["kind"],
            input_shape=tuple(d["input_shape"]),
            layers=tuple(layers),
            num_classes=d["num_classes"],
            activation=d["activation"],
            timesteps=d.get("timesteps", 1),
        )

    def digest(self) -> bytes:
        """32-byte SHA-256 of the canonical JSON form; used as the spec hash on the wire."""
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


def lenet_spec(kind="ann", in_channels=1, size=32, num_classes=10, timesteps=20) -> ModelSpec:
    """The DLG-style LeNet: three 5x5 convs with 12 channels, then one linear layer."""
    layers = (
        Conv(12, 5, stride=2, padding=2),
        Conv(12, 5, stride=2, padding=2),
        Conv(12, 5, stride=1, padding=2),
        Linear(num_classes),
    )
    return ModelSpec(
        kind=kind,
        input_shape=(in_channels, size, size),
        layers=layers,
        num_classes=num_classes,
        activation="sigmoid" if kind == "ann" else "if_neuron",
        timesteps=timesteps if kind == "snn" else 1,
    )


def lenet5_judge_spec(in_channels=1, size=32, num_classes=10) -> ModelSpec:
    """Classic LeNet-5 (ReLU, average pooling) used as the image judge."""
    layers = (
        Conv(6, 5),
        Pool(),
        Conv(16, 5),
        Pool(),
        Linear(120),
        Linear(84),
        Linear(num_classes),
    )
    return ModelSpec("ann", (in_channels, size, size), layers, num_classes, activation="relu")


def gesture_judge_spec(size=32, num_classes=11, timesteps=20) -> ModelSpec:
    """Reduced spiking convnet for two-polarity event frames."""
    layers = (
        Conv(8, 5, stride=2, padding=2),
        Conv(16, 5, stride=2, padding=2),
        Linear(num_classes),
    )
    return ModelSpec("snn", (2, size, size), layers, num_classes, "if_neuron", timesteps)


@dataclass
class ParameterSet:
    spec: ModelSpec
    names: list[str]
    tensors: list[torch.Tensor]
    meta: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def requires_grad_(self, flag: bool = True) -> "ParameterSet":
        for t in self.tensors:
            t.requires_grad_(flag)
        return self

    def clone(self) -> "ParameterSet":
        return ParameterSet(
            self.spec, list(self.names), [t.detach().clone() for t in self.tensors], dict(self.meta)
        )


def build_model(spec: ModelSpec, seed: int) -> ParameterSet:
    """Initialize every weight and bias from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    gen = torch.Generator().manual_seed(int(seed))
    names, tensors = [], []
    shapes = spec.parameter_shapes()
    for (wname, wshape), (bname, bshape) in zip(shapes[::2], shapes[1::2]):
        fan_in = math.prod(wshape[1:])
        bound = 1.0 / math.sqrt(fan_in)
        for name, shape in ((wname, wshape), (bname, bshape)):
            t = (torch.rand(shape, generator=gen, dtype=tc.DTYPE) * 2.0 - 1.0) * bound
            names.append(name)
            tensors.append(t)
    return ParameterSet(spec, names, tensors)


build_lenet = build_model


def _param_layers(params: ParameterSet):
    """Yield (layer, weight, bias) with None for parameter-free layers."""
    it = iter(params.tensors)
    for layer in params.spec.layers:
        if isinstance(layer, Pool):
            yield layer, None, None
        else:
            yield layer, next(it), next(it)


def _affine(layer, w, b, h):
    if isinstance(layer, Conv):
        return tc.conv2d(h, w, b, stride=layer.stride, padding=layer.padding)
    if h.dim() > 2:
        h = tc.flatten(h)
    return tc.linear(h, w, b)


def _unwrap(x):
    """Accept either a raw tensor or a SpikeTensor wrapper."""
    return x if isinstance(x, torch.Tensor) else x.data


def forward_ann(params: ParameterSet, x: torch.Tensor) -> torch.Tensor:
    spec = params.spec
    if x.dim() != 4 or tuple(x.shape[1:]) != tuple(spec.input_shape):
        raise DimensionError(
            f"expected input [B,{','.join(map(str, spec.input_shape))}], got {tuple(x.shape)}"
        )
    act = tc.sigmoid if spec.activation == "sigmoid" else tc.relu
    h = x
    n = len(spec.layers)
    for i, (layer, w, b) in enumerate(_param_layers(params)):
        if isinstance(layer, Pool):
            h = tc.avg_pool2x2(h)
            continue
        h = _affine(layer, w, b, h)
        if i < n - 1:
            h = act(h)
    return h


def if_neuron_multistep(current: torch.Tensor, neuron: NeuronParams) -> torch.Tensor:
    """Run Integrate-and-Fire dynamics over the leading time axis of ``current``.

    Membrane starts at zero; each step charges ``V += I``, emits
    ``spike(V - v_threshold)`` and resets (to zero, or by subtracting the
    threshold).
    """
    v = torch.zeros_like(current[0])
    spikes = []
    for t in range(current.shape[0]):
        v = v + current[t]
        s = tc.spike_heaviside_atan(v - neuron.v_threshold, neuron.alpha, smooth=neuron.smooth)
        if neuron.reset_mode == "hard_zero":
            v = v * (1.0 - s)
        else:
            v = v - s * neuron.v_threshold
        spikes.append(s)
    return torch.stack(spikes)


def forward_snn(params: ParameterSet, x, neuron: NeuronParams | None = None) -> torch.Tensor:
    """Temporal mean of the final linear layer's per-step outputs.

    Layers are evaluated one at a time over all timesteps (the affine maps are
    batched across T); this is exactly equivalent to stepping the whole network
    per timestep because no layer feeds back into an earlier one.
    """
    neuron = neuron or NeuronParams()
    spec = params.spec
    x = _unwrap(x)
    if x.dim() != 5 or tuple(x.shape[2:]) != tuple(spec.input_shape):
        raise DimensionError(
            f"expected spike input [T,B,{','.join(map(str, spec.input_shape))}], got {tuple(x.shape)}"
        )
    if x.shape[0] != spec.timesteps:
        raise DimensionError(f"T mismatch: model has {spec.timesteps}, input has {x.shape[0]}")
    T, B = x.shape[:2]
    h = x.reshape(T * B, *x.shape[2:])
    n = len(spec.layers)
    for i, (layer, w, b) in enumerate(_param_layers(params)):
        if isinstance(layer, Pool):
            h = tc.avg_pool2x2(h)
            continue
        h = _affine(layer, w, b, h)
        if i < n - 1:
            s = if_neuron_multistep(h.reshape(T, B, *h.shape[1:]), neuron)
            h = s.reshape(T * B, *s.shape[2:])
    return h.reshape(T, B, -1).mean(dim=0)


def forward(params: ParameterSet, x, neuron: NeuronParams | None = None) -> torch.Tensor:
    if params.spec.kind == "ann":
        return forward_ann(params, x)
    return forward_snn(params, x, neuron)


def hidden_activations(params: ParameterSet, x, neuron: NeuronParams | None = None) -> list:
    """Outputs of every activation layer, for inspection and property tests."""
    spec = params.spec
    neuron = neuron or NeuronParams()
    acts = []
    n = len(spec.layers)
    if spec.kind == "ann":
        act = tc.sigmoid if spec.activation == "sigmoid" else tc.relu
        h = x
        for i, (layer, w, b) in enumerate(_param_layers(params)):
            if isinstance(layer, Pool):
                h = tc.avg_pool2x2(h)
                continue
            h = _affine(layer, w, b, h)
            if i < n - 1:
                h = act(h)
                acts.append(h)
        return acts
    x = _unwrap(x)
    T, B = x.shape[:2]
    h = x.reshape(T * B, *x.shape[2:])
    for i, (layer, w, b) in enumerate(_param_layers(params)):
        if isinstance(layer, Pool):
            h = tc.avg_pool2x2(h)
            continue
        h = _affine(layer, w, b, h)
        if i < n - 1:
            s = if_neuron_multistep(h.reshape(T, B, *h.shape[1:]), neuron)
            acts.append(s)
            h = s.reshape(T * B, *s.shape[2:])
    return acts


def _labels_tensor(y, num_classes: int, batch: int) -> torch.Tensor:
    labels = torch.as_tensor(y, dtype=torch.long).reshape(-1)
    if labels.numel() != batch:
        raise UsageError(f"got {labels.numel()} labels for a batch of {batch}")
    if (labels < 0).any() or (labels >= num_classes).any():
        raise UsageError(f"label out of range [0, {num_classes})")
    return labels


def compute_victim_gradients(
    params: ParameterSet, x, y, neuron: NeuronParams | None = None
) -> list[torch.Tensor]:
    """Parameter gradients of the cross-entropy loss at ``(x, y)``.

    The model's own tensors are never modified; gradients are taken with
    respect to detached copies.
    """
    x = _unwrap(x)
    batch = x.shape[1] if params.spec.kind == "snn" else x.shape[0]
    labels = _labels_tensor(y, params.spec.num_classes, batch)
    local = params.clone().requires_grad_(True)
    logits = forward(local, x.detach(), neuron)
    loss = tc.softmax_cross_entropy(logits, labels)
    return [g.detach() for g in tc.backward(loss, local.tensors)]


def save_checkpoint(path, params: ParameterSet) -> None:
    Path(path).write_bytes(encode_checkpoint(params))


def encode_checkpoint(params: ParameterSet) -> bytes:
    import struct

    descriptor = json.dumps(
        {"spec": params.spec.to_dict(), "names": params.names, "meta": params.meta},
        sort_keys=True,
    ).encode()
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        struct.pack("<I", len(descriptor)),
        descriptor,
        struct.pack("<I", len(params.tensors)),
    ]
    parts.extend(pack_tensor_f64(t) for t in params.tensors)
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> ParameterSet:
    r = Reader(buf, "SLMD checkpoint")
    r.magic(CHECKPOINT_MAGIC)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported SLMD version {version}", offset=4)
    n = r.u32()
    try:
        descriptor = json.loads(bytes(r.take(n)))
        spec = ModelSpec.from_dict(descriptor["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad SLMD descriptor: {exc}", offset=12) from exc
    count = r.u32()
    tensors = [r.tensor_f64() for _ in range(count)]
    r.done()
    expected = [shape for _, shape in spec.parameter_shapes()]
    if [tuple(t.shape) for t in tensors] != expected:
        raise FormatError("SLMD tensor shapes do not match the stored spec")
    return ParameterSet(spec, descriptor["names"], tensors, descriptor.get("meta", {}))


def load_checkpoint(path) -> ParameterSet:
    return decode_checkpoint(Path(path).read_bytes())
