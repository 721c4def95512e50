"""
Spike reconstructions and thresholding
======================================

Synthetic gesture streams are binned into [T, 2, 32, 32] frames and pushed
through a spiking LeNet. The attacker's dummy spikes come out as continuous
values, so they are binarized, either once at the end (post-opt) or after every
optimizer step (in-opt).
"""

import torch

from spikeleak import attacks, evalkit, models, spike_codec

T = 8
stream = spike_codec.synth_gesture_stream(class_id=3, seed=0)
frames = spike_codec.events_to_frames(stream, T).data  # [T, 1, 2, 32, 32]
print(f"{len(stream)} events -> {int(frames.sum())} active cells over {T} bins")

spec = models.lenet_spec("snn", in_channels=2, size=32, num_classes=11, timesteps=T)
params = models.build_model(spec, seed=0)
grads = models.compute_victim_gradients(params, frames, [3])

# One continuous run serves every post-opt threshold
base = attacks.AttackConfig(attack="idlg", iterations=50, seed=0)
res = attacks.run_attack(grads, params, base, modality="spikes")
for tau in (0.1, 0.5, 0.9):
    binary = attacks.binarize_post(res.x_continuous, tau)
    print(f"post-opt tau={tau}: l2={evalkit.l2_distance(binary, frames):.2f} ones={int(binary.sum())}")

# In-opt thresholding restarts L-BFGS from the binarized point each iteration
for tau in (0.1, 0.5, 0.9):
    cfg = attacks.AttackConfig(attack="idlg", iterations=50, seed=0, threshold_strategy="in_opt", tau=tau)
    r = attacks.run_attack(grads, params, cfg, modality="spikes")
    print(f"in-opt   tau={tau}: l2={evalkit.l2_distance(r.x, frames):.2f} stopped after {r.iterations_run} iterations")

# Reference scale: how far apart are real streams of the same and of different classes?
streams = torch.stack([spike_codec.events_to_frames(spike_codec.synth_gesture_stream(c, seed=s), T).data[:, 0]
                       for c in range(4) for s in range(3)])
labels = [c for c in range(4) for _ in range(3)]
stats = evalkit.reference_l2_stats(streams, labels)
print(f"intra-class l2 {stats['intra']['mean']:.2f}, inter-class l2 {stats['inter']['mean']:.2f}")
