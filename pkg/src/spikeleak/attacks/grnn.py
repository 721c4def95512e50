"""Generator-based inversion: learn a map from observed gradients to inputs."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import torch
from torch import nn

from .. import models
from .. import tensor_core as tc
from ..errors import DivergedError, UsageError
from .gradient_matching import (
    AttackConfig,
    _input_layout,
    gradient_match_loss,
    infer_label_idlg,
    model_input,
)


def gradient_features(grads) -> torch.Tensor:
    """Flatten a gradient set and rescale it to unit RMS."""
    v = torch.cat([g.detach().reshape(-1) for g in grads]).to(tc.DTYPE)
    norm = torch.linalg.vector_norm(v)
    if norm > 0:
        v = v * (math.sqrt(v.numel()) / norm)
    return v


class Generator(nn.Module):
    """gradient features -> FC -> LeakyReLU -> FC -> LeakyReLU -> FC -> input shape."""

    def __init__(self, in_features: int, out_shape, hidden: int = 1024, output: str = "sigmoid", seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.out_shape = tuple(out_shape)
        self.output = output
        self.net = nn.Sequential(
            nn.Linear(in_features, hidden, dtype=tc.DTYPE),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, hidden, dtype=tc.DTYPE),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, math.prod(self.out_shape), dtype=tc.DTYPE),
        )

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        raw = self.net(features.reshape(1, -1))
        out = torch.sigmoid(raw) if self.output == "sigmoid" else nn.functional.softplus(raw)
        return out.reshape(self.out_shape)


@dataclass
class GRNNResult:
    generator: Generator
    reconstructions: list
    labels: list
    loss_trace: list = field(default_factory=list)
    status: str = "ok"
    epochs_run: int = 0
    wall_ms: float = 0.0


def run_grnn(
    victim_grads,
    params: models.ParameterSet,
    cfg: AttackConfig,
    labels=None,
    neuron=None,
    modality: str = "image",
) -> GRNNResult:
    """Train one generator against every observed gradient set.

    Each sample's gradient-matching loss is divided by the squared norm of its
    victim gradient so samples weigh equally; ``loss_trace`` holds the mean of
    these relative losses per epoch. Labels default to the iDLG inference.
    """
    if cfg.attack != "grnn":
        raise UsageError("run_grnn needs cfg.attack == 'grnn'")
    victim_grads = [list(g) for g in victim_grads]
    if not victim_grads:
        raise UsageError("run_grnn needs at least one gradient sample")
    started = time.perf_counter()
    neuron = neuron or models.NeuronParams()
    spec = params.spec
    out_shape = _input_layout(spec, modality, 1)
    if labels is None:
        labels = [infer_label_idlg(g) for g in victim_grads]
    labels = [int(l) for l in labels]
    feats = [gradient_features(g) for g in victim_grads]
    scales = [float(sum((t**2).sum() for t in g)) or 1.0 for g in victim_grads]

    local = params.clone().requires_grad_(True)
    gen = Generator(
        feats[0].numel(),
        out_shape,
        hidden=cfg.grnn_hidden,
        output="sigmoid" if modality == "image" else "softplus",
        seed=cfg.seed,
    )
    opt = torch.optim.Adam(gen.parameters(), lr=cfg.grnn_lr)
    trace, status, epochs_run = [], "ok", 0
    for epoch in range(cfg.grnn_epochs):
        opt.zero_grad()
        total = 0.0
        for feat, g_victim, label, scale in zip(feats, victim_grads, labels, scales):
            x = gen(feat)
            logits = models.forward(local, model_input(spec, x, modality), neuron)
            ce = tc.softmax_cross_entropy(logits, torch.tensor([label]))
            dummy = tc.backward(ce, local.tensors, create_graph=True)
            loss = gradient_match_loss(dummy, g_victim) / scale / len(feats)
            loss.backward()
            total += float(loss.detach())
        if not math.isfinite(total):
            status = "diverged"
            break
        trace.append(total)
        opt.step()
        epochs_run = epoch + 1
    with torch.no_grad():
        recon = [gen(f).detach().clone() for f in feats]
    return GRNNResult(
        generator=gen,
        reconstructions=recon,
        labels=labels,
        loss_trace=trace,
        status=status,
        epochs_run=epochs_run,
        wall_ms=1000.0 * (time.perf_counter() - started),
    )
