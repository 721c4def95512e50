"""
A federated round with a listener on the wire
=============================================

Three clients each hold a handful of digits. They send per-sample gradients to
the server as GMSG frames; the server averages them while a passive listener
keeps a copy of every frame. The listener then attacks one client's gradient.
"""

import torch

from spikeleak import attacks, evalkit, fl, models

gen = torch.Generator().manual_seed(0)
spec = models.lenet_spec("ann", in_channels=1, size=16, num_classes=10)
params = models.build_model(spec, seed=0)

# Private data stays on the clients; only the labels are shared structure
clients = []
for cid in range(3):
    x = torch.rand((4, 1, 16, 16), generator=gen, dtype=torch.float64)
    y = torch.randint(10, (4,), generator=gen)
    clients.append(fl.ClientState(cid, x, y, params))

aggregate, captured = fl.run_round(clients, indices=[0, 1, 2])
frame = fl.encode_message(fl.client_round(clients[1], 1))
print(f"one frame is {len(frame)} bytes, {len(aggregate)} gradient tensors per message")

# The averaged update hides individual clients; the raw frames do not
cid, grads = captured[1]
truth = clients[1].inputs[1:2]
res = attacks.run_attack(grads, params, attacks.AttackConfig(attack="idlg", iterations=150, seed=0))
print(f"client {cid}: label {int(res.label)} (true {int(clients[1].labels[1])}), ssim {evalkit.ssim(res.x, truth):.3f}")
