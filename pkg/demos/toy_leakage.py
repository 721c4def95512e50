"""
Gradient leakage on a toy victim
================================

An 8x8 grayscale image, a 4-class LeNet-style network and a single gradient
step. We invert the gradient with DLG and iDLG, first against the sigmoid ANN
and then against its integrate-and-fire twin fed the same image at every
timestep.
"""

import torch

from spikeleak import attacks, evalkit, models

# The private sample and a freshly initialised victim
x = torch.rand((1, 1, 8, 8), generator=torch.Generator().manual_seed(100), dtype=torch.float64)
label = 0

for kind in ("ann", "snn"):
    spec = models.lenet_spec(kind, in_channels=1, size=8, num_classes=4, timesteps=10)
    params = models.build_model(spec, seed=0)

    # What the client would upload: parameter gradients of one cross-entropy step.
    # The SNN sees the image replicated over T.
    net_in = x if kind == "ann" else x.unsqueeze(0).expand(spec.timesteps, *x.shape)
    grads = models.compute_victim_gradients(params, net_in, [label])

    # iDLG reads the label straight off the last layer
    print(f"{kind}: label inferred from row sums = {attacks.infer_label_idlg(grads)}")

    for name in ("dlg", "idlg"):
        cfg = attacks.AttackConfig(attack=name, iterations=100, seed=0)
        res = attacks.run_attack(grads, params, cfg)
        print(
            f"  {name:4s} ssim={evalkit.ssim(res.x, x):.3f} mse={evalkit.mse(res.x, x):.2e} "
            f"loss {res.loss_trace[0]:.2e} -> {res.final_loss:.2e} in {res.iterations_run} iterations"
        )
