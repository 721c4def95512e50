"""In-process federated round with a byte-exact wire boundary.

Clients compute per-sample gradients on private data and ship them as GMSG
frames. The server averages them; an eavesdropper on the same channel keeps
each client's frame as transmitted.

GMSG layout (little endian)::

    "GMSG" | u32 version | u64 client_id | u32 round | 32-byte spec hash
    | u32 tensor count | tensors (u32 ndim, u32 dims..., f64 payload)
    | u32 timesteps | u32 batch size

The trailing two words carry the public hyperparameters the threat model
grants the attacker.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import torch

from . import models
from ._binio import Reader, pack_tensor_f64
from .errors import FormatError, ProtocolError, UsageError

MAGIC = b"GMSG"
VERSION = 1
HASH_BYTES = 32


@dataclass
class ClientState:
    client_id: int
    inputs: torch.Tensor
    labels: torch.Tensor
    params: models.ParameterSet
    neuron: models.NeuronParams = field(default_factory=models.NeuronParams)

    def __len__(self):
        return len(self.labels)


@dataclass
class GradientMessage:
    client_id: int
    round: int
    payload: list
    spec_hash: bytes
    timesteps: int = 1
    batch_size: int = 1


def encode_message(msg: GradientMessage) -> bytes:
    if len(msg.spec_hash) != HASH_BYTES:
        raise UsageError(f"spec hash must be {HASH_BYTES} bytes")
    parts = [
        MAGIC,
        struct.pack("<IQI", VERSION, msg.client_id, msg.round),
        bytes(msg.spec_hash),
        struct.pack("<I", len(msg.payload)),
    ]
    parts.extend(pack_tensor_f64(g) for g in msg.payload)
    parts.append(struct.pack("<II", msg.timesteps, msg.batch_size))
    return b"".join(parts)


def decode_message(buf: bytes) -> GradientMessage:
    r = Reader(buf, "GMSG frame")
    r.magic(MAGIC)
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported GMSG version {version}", offset=4)
    client_id = r.u64()
    rnd = r.u32()
    spec_hash = bytes(r.take(HASH_BYTES))
    count = r.u32()
    payload = [r.tensor_f64() for _ in range(count)]
    timesteps, batch = r.unpack("<II")
    r.done()
    return GradientMessage(client_id, rnd, payload, spec_hash, timesteps, batch)


def _client_input(client: ClientState, index) -> tuple[torch.Tensor, torch.Tensor]:
    idx = [index] if isinstance(index, int) else list(index)
    n = len(client)
    if not idx or any(not 0 <= i < n for i in idx):
        raise UsageError(f"sample index {index!r} outside [0, {n})")
    x = client.inputs[idx].to(torch.float64)
    y = client.labels[idx]
    spec = client.params.spec
    if spec.kind == "snn":
        # images get replicated over T; event samples arrive as [B, T, ...]
        if x.dim() == 1 + len(spec.input_shape):
            x = x.unsqueeze(0).expand(spec.timesteps, *x.shape)
        else:
            x = x.transpose(0, 1)
    return x, y


def client_round(client: ClientState, index, round_index: int = 0) -> GradientMessage:
    """Gradients of one local step on ``client``'s sample(s), as they arrive at the server.

    ``index`` is an int or a list of ints (a local batch). The returned message
    has crossed the wire encoding.
    """
    x, y = _client_input(client, index)
    grads = models.compute_victim_gradients(client.params, x, y, client.neuron)
    spec = client.params.spec
    msg = GradientMessage(
        client_id=client.client_id,
        round=round_index,
        payload=grads,
        spec_hash=spec.digest(),
        timesteps=spec.timesteps if spec.kind == "snn" else 1,
        batch_size=len(y),
    )
    return decode_message(encode_message(msg))


def server_aggregate(msgs) -> list[torch.Tensor]:
    """Unweighted per-layer mean over client messages."""
    msgs = list(msgs)
    if not msgs:
        raise UsageError("server_aggregate needs at least one message")
    ref = msgs[0]
    for m in msgs[1:]:
        if m.spec_hash != ref.spec_hash:
            raise ProtocolError(
                f"client {m.client_id} sent gradients for a different model "
                f"({m.spec_hash.hex()[:12]} != {ref.spec_hash.hex()[:12]})"
            )
        if [tuple(g.shape) for g in m.payload] != [tuple(g.shape) for g in ref.payload]:
            raise ProtocolError(f"client {m.client_id} payload shapes do not match")
    return [torch.stack(layer).mean(dim=0) for layer in zip(*(m.payload for m in msgs))]


def eavesdrop(msgs) -> list[tuple[int, list]]:
    """What a passive listener keeps: each client's gradients, copied off the wire."""
    return [(m.client_id, decode_message(encode_message(m)).payload) for m in msgs]


def run_round(clients, indices, round_index: int = 0):
    """One round: every client sends, the server aggregates, the listener records."""
    msgs = [client_round(c, i, round_index) for c, i in zip(clients, indices)]
    return server_aggregate(msgs), eavesdrop(msgs)
