import struct

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from spikeleak import attacks as A
from spikeleak import fl
from spikeleak import models as M
from spikeleak.errors import FormatError, ProtocolError, UsageError


def client(cid=0, kind="ann", seed=0, n=4, T=3):
    spec = M.lenet_spec(kind, 1, 8, 4, T)
    x = torch.rand((n, 1, 8, 8), generator=torch.Generator().manual_seed(10 + cid), dtype=torch.float64)
    y = torch.arange(n) % 4
    return fl.ClientState(cid, x, y, M.build_model(spec, seed))


def test_payload_equals_direct_gradients():
    c = client()
    msg = fl.client_round(c, 2)
    direct = M.compute_victim_gradients(c.params, c.inputs[2:3], c.labels[2:3])
    assert all(torch.equal(a, b) for a, b in zip(msg.payload, direct))
    assert msg.batch_size == 1 and msg.timesteps == 1
    assert msg.spec_hash == c.params.spec.digest()


def test_snn_client_replicates_images():
    c = client(kind="snn", T=3)
    msg = fl.client_round(c, 1)
    x = c.inputs[1:2].unsqueeze(0).expand(3, 1, 1, 8, 8)
    direct = M.compute_victim_gradients(c.params, x, c.labels[1:2])
    assert all(torch.equal(a, b) for a, b in zip(msg.payload, direct))
    assert msg.timesteps == 3


def test_rounds_with_frozen_weights_repeat():
    c = client()
    a, b = fl.client_round(c, 0, 0), fl.client_round(c, 0, 7)
    assert b.round == 7
    assert all(torch.equal(x, y) for x, y in zip(a.payload, b.payload))


def test_bad_index():
    with pytest.raises(UsageError):
        fl.client_round(client(), 4)
    with pytest.raises(UsageError):
        fl.client_round(client(), [])


def test_message_round_trip_bit_exact():
    msg = fl.client_round(client(), [0, 1])
    buf = fl.encode_message(msg)
    back = fl.decode_message(buf)
    assert fl.encode_message(back) == buf
    assert back.batch_size == 2 and back.client_id == 0


@settings(max_examples=30, deadline=None)
@given(
    st.integers(0, 2**64 - 1),
    st.integers(0, 2**32 - 1),
    st.lists(st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=6), max_size=4),
)
def test_message_round_trip_property(cid, rnd, rows):
    payload = [torch.tensor(r, dtype=torch.float64) for r in rows]
    msg = fl.GradientMessage(cid, rnd, payload, bytes(range(32)), 20, 3)
    back = fl.decode_message(fl.encode_message(msg))
    assert (back.client_id, back.round, back.timesteps, back.batch_size) == (cid, rnd, 20, 3)
    assert all(torch.equal(a, b) for a, b in zip(back.payload, payload))


def test_decode_rejects_damage():
    buf = fl.encode_message(fl.client_round(client(), 0))
    with pytest.raises(FormatError):
        fl.decode_message(b"XMSG" + buf[4:])
    with pytest.raises(FormatError):
        fl.decode_message(buf[:4] + struct.pack("<I", 2) + buf[8:])
    with pytest.raises(FormatError):
        fl.decode_message(buf[:-1])
    with pytest.raises(FormatError):
        fl.decode_message(buf + b"\0")
    with pytest.raises(UsageError):
        fl.encode_message(fl.GradientMessage(0, 0, [], b"short"))


def test_aggregate_examples():
    c = client()
    m = fl.client_round(c, 0)
    single = fl.server_aggregate([m])
    assert all(torch.equal(a, b) for a, b in zip(single, m.payload))
    neg = fl.GradientMessage(1, 0, [-g for g in m.payload], m.spec_hash)
    assert all(float(t.abs().max()) == 0.0 for t in fl.server_aggregate([m, neg]))
    same = fl.server_aggregate([m] * 5)
    assert all(torch.allclose(a, b, rtol=0, atol=1e-15) for a, b in zip(same, m.payload))


def test_aggregate_is_layerwise_mean():
    msgs = [fl.client_round(client(cid, seed=0), cid % 4) for cid in range(3)]
    agg = fl.server_aggregate(msgs)
    for i, layer in enumerate(agg):
        expected = sum(m.payload[i] for m in msgs) / 3
        assert torch.allclose(layer, expected, atol=1e-15)


def test_aggregate_rejects_mismatch():
    a = fl.client_round(client(0), 0)
    b = fl.client_round(client(1, kind="snn"), 0)
    with pytest.raises(ProtocolError):
        fl.server_aggregate([a, b])
    c = fl.GradientMessage(2, 0, a.payload[:-1], a.spec_hash)
    with pytest.raises(ProtocolError):
        fl.server_aggregate([a, c])
    with pytest.raises(UsageError):
        fl.server_aggregate([])


def test_eavesdrop_keeps_every_client_byte_exact():
    clients = [client(cid) for cid in range(3)]
    agg, captured = fl.run_round(clients, [0, 1, 2])
    assert [cid for cid, _ in captured] == [0, 1, 2]
    for c, (_, payload) in zip(clients, captured):
        local = fl.client_round(c, c.client_id)
        assert all(torch.equal(a, b) for a, b in zip(payload, local.payload))
    assert len(agg) == len(captured[0][1])


def test_payload_holds_no_input_shaped_tensor():
    c = client()
    msg = fl.client_round(c, 0)
    assert all(tuple(g.shape) != tuple(c.inputs[0:1].shape) for g in msg.payload)
    assert [tuple(g.shape) for g in msg.payload] == [s for _, s in c.params.spec.parameter_shapes()]


def test_attack_on_captured_equals_attack_on_local():
    c = client()
    _, captured = fl.run_round([c], [3])
    local = M.compute_victim_gradients(c.params, c.inputs[3:4], c.labels[3:4])
    cfg = A.AttackConfig(attack="idlg", iterations=8, seed=0)
    a = A.run_attack(captured[0][1], c.params, cfg)
    b = A.run_attack(local, c.params, cfg)
    assert torch.equal(a.x, b.x) and a.loss_trace == b.loss_trace


def test_transcript_deterministic():
    def transcript():
        clients = [client(cid) for cid in range(2)]
        msgs = [fl.client_round(c, 1, 5) for c in clients]
        return b"".join(fl.encode_message(m) for m in msgs)

    assert transcript() == transcript()
