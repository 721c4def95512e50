"""DLG and iDLG gradient-inversion attacks for ANN and spiking victims."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import torch

from .. import models
from .. import tensor_core as tc
from ..errors import DivergedError, UsageError
from ..spike_codec import init_dummy_image, init_dummy_spikes
from .lbfgs import LBFGSState, lbfgs_step

STRATEGIES = ("none", "post_opt", "in_opt")


@dataclass
class AttackConfig:
    attack: str = "dlg"
    iterations: int = 300
    history: int = 100
    lr: float = 1.0
    max_line_search: int = 25
    sigma: float = 0.1
    tau: float | None = None
    threshold_strategy: str = "none"
    seed: int = 0
    batch_size: int = 1
    # GRNN generator training
    grnn_epochs: int = 300
    grnn_lr: float = 1e-3
    grnn_hidden: int = 1024

    def __post_init__(self):
        if self.attack not in ("dlg", "idlg", "grnn"):
            raise UsageError(f"unknown attack {self.attack!r}")
        if self.iterations < 1:
            raise UsageError("iterations must be >= 1")
        if self.threshold_strategy not in STRATEGIES:
            raise UsageError(f"unknown threshold strategy {self.threshold_strategy!r}")
        if self.threshold_strategy != "none":
            if self.tau is None or not 0 < self.tau < 1:
                raise UsageError("tau must lie strictly between 0 and 1")
        if not 1 <= self.batch_size <= 4:
            raise UsageError("batch_size must be between 1 and 4")


@dataclass
class DummyState:
    x_prime: torch.Tensor  # [B,C,H,W] image leaf or [T,B,C,H,W] spike leaf
    y_prime: torch.Tensor | None = None  # [B,K] label logits (DLG only)
    iteration: int = 0
    optimizer: LBFGSState | None = None


@dataclass
class AttackResult:
    x: torch.Tensor  # final reconstruction (thresholded when a strategy is active)
    x_continuous: torch.Tensor  # last optimizer iterate before post-opt thresholding
    label: torch.Tensor
    loss_trace: list = field(default_factory=list)
    status: str = "ok"
    iterations_run: int = 0
    evaluations: int = 0
    wall_ms: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def gradient_match_loss(g_dummy, g_victim):
    """Sum over every parameter tensor of the squared l2 gradient difference."""
    g_dummy, g_victim = list(g_dummy), list(g_victim)
    if len(g_dummy) != len(g_victim):
        raise UsageError(f"gradient sets differ in length: {len(g_dummy)} vs {len(g_victim)}")
    total = None
    for i, (a, b) in enumerate(zip(g_dummy, g_victim)):
        if a.shape != b.shape:
            raise UsageError(f"gradient {i} shape {tuple(a.shape)} vs {tuple(b.shape)}")
        term = tc.squared_difference_sum(a, b)
        total = term if total is None else total + term
    return total


def infer_label_idlg(g_victim) -> int:
    """Row of the last linear layer's weight gradient with the smallest sum.

    Ties go to the lowest class index.
    """
    g_victim = list(g_victim)
    weight_grad = g_victim[-2]
    if weight_grad.dim() != 2:
        raise UsageError("final layer must be linear")
    return int(torch.argmin(weight_grad.sum(dim=1)))


def binarize_post(x, tau: float) -> torch.Tensor:
    """1 where ``x > tau`` (strictly), else 0."""
    if not 0 < tau < 1:
        raise UsageError("tau must lie strictly between 0 and 1")
    data = x if isinstance(x, torch.Tensor) else x.data
    return (data.detach() > tau).to(tc.DTYPE)


def binarize_in_loop(state: DummyState, tau: float) -> DummyState:
    """Replace the dummy input by its binarization and drop the L-BFGS history."""
    state.x_prime = binarize_post(state.x_prime, tau)
    if state.optimizer is not None:
        state.optimizer.reset()
    return state


def _input_layout(spec: models.ModelSpec, modality: str, batch: int):
    C, H, W = spec.input_shape
    if spec.kind == "ann":
        if modality != "image":
            raise UsageError("ANN victims only accept the image modality")
        return (batch, C, H, W)
    if modality == "image":
        return (batch, C, H, W)
    if modality == "spikes":
        return (spec.timesteps, batch, C, H, W)
    raise UsageError(f"unknown modality {modality!r}")


def model_input(spec: models.ModelSpec, x: torch.Tensor, modality: str) -> torch.Tensor:
    """Map the optimized leaf to what the network consumes (frame replication for SNN images)."""
    if spec.kind == "snn" and modality == "image":
        return x.unsqueeze(0).expand(spec.timesteps, *x.shape)
    return x


class _MatchingObjective:
    """Flat-vector objective: gradient-matching loss and its gradient."""

    def __init__(self, params, victim_g, x_shape, num_classes, modality, neuron, label):
        self.params = params.clone().requires_grad_(True)
        self.victim_g = [g.detach() for g in victim_g]
        self.x_shape = x_shape
        self.nx = int(torch.Size(x_shape).numel())
        self.num_classes = num_classes
        self.modality = modality
        self.neuron = neuron
        self.label = label

    def split(self, z):
        x = z[: self.nx].view(self.x_shape)
        y = None if self.label is not None else z[self.nx :].view(-1, self.num_classes)
        return x, y

    def loss(self, z):
        x, y = self.split(z)
        logits = models.forward(
            self.params, model_input(self.params.spec, x, self.modality), self.neuron
        )
        if self.label is not None:
            target = self.label
        else:
            target = torch.softmax(y, dim=1)
        ce = tc.softmax_cross_entropy(logits, target)
        dummy_g = tc.backward(ce, self.params.tensors, create_graph=True)
        return gradient_match_loss(dummy_g, self.victim_g)

    def __call__(self, z):
        z = z.detach().requires_grad_(True)
        value = self.loss(z)
        if not torch.isfinite(value):
            raise DivergedError(f"gradient-matching loss became {float(value)}")
        (grad,) = torch.autograd.grad(value, z)
        if not torch.isfinite(grad).all():
            raise DivergedError("non-finite gradient of the matching loss")
        return float(value.detach()), grad.detach()


def _run(victim_g, params: models.ParameterSet, cfg: AttackConfig, neuron, modality, label):
    started = time.perf_counter()
    neuron = neuron or models.NeuronParams()
    spec = params.spec
    B = cfg.batch_size
    x_shape = _input_layout(spec, modality, B)
    if cfg.threshold_strategy != "none" and modality != "spikes":
        raise UsageError("thresholding strategies apply to the spike modality only")

    if modality == "spikes":
        x0 = init_dummy_spikes(x_shape, cfg.sigma, cfg.seed).data.detach()
        lower, upper = 0.0, None
    else:
        x0 = init_dummy_image(x_shape, seed=cfg.seed).detach()
        lower, upper = 0.0, 1.0
    parts = [x0.flatten()]
    if label is None:
        gen = torch.Generator().manual_seed(int(cfg.seed) + 1)
        y0 = torch.randn((B, spec.num_classes), generator=gen, dtype=tc.DTYPE)
        parts.append(y0.flatten())
    else:
        label = torch.as_tensor(label, dtype=torch.long).reshape(B)
    z = torch.cat(parts)

    objective = _MatchingObjective(params, victim_g, x_shape, spec.num_classes, modality, neuron, label)
    nx = objective.nx

    def project(v):
        v = v.clone()
        v[:nx] = v[:nx].clamp(lower, upper)
        return v

    opt = LBFGSState(cfg.history, cfg.lr, cfg.max_line_search)
    state = DummyState(x_prime=x0, y_prime=None if label is not None else z[nx:], optimizer=opt)
    in_opt = cfg.threshold_strategy == "in_opt"
    trace, status = [], "ok"
    last_good = z
    try:
        opt.f, opt.g = objective(z)
        opt.evaluations += 1
        trace.append(opt.f)
        for k in range(cfg.iterations):
            z_prev = z
            z = lbfgs_step(objective, z, opt, project)
            if in_opt:
                state.x_prime = z[:nx].view(x_shape)
                binarize_in_loop(state, cfg.tau)
                z = torch.cat([state.x_prime.flatten(), z[nx:]])
                opt.f, opt.g = objective(z)
                opt.evaluations += 1
            state.iteration = k + 1
            trace.append(opt.f)
            last_good = z
            if in_opt and torch.equal(z, z_prev):
                break  # deterministic fixed point: further iterations repeat exactly
            if opt.stalled:
                if opt.s:
                    opt.s.clear()
                    opt.y.clear()
                    continue
                break
    except DivergedError:
        status = "diverged"
        z = last_good

    x_cont = z[:nx].view(x_shape).detach().clone()
    if label is None:
        label_out = z[nx:].view(B, spec.num_classes).argmax(dim=1)
    else:
        label_out = label
    if cfg.threshold_strategy == "post_opt":
        x_final = binarize_post(x_cont, cfg.tau)
    else:
        x_final = x_cont
    return AttackResult(
        x=x_final,
        x_continuous=x_cont,
        label=label_out,
        loss_trace=trace,
        status=status,
        iterations_run=state.iteration,
        evaluations=opt.evaluations,
        wall_ms=1000.0 * (time.perf_counter() - started),
    )


def run_dlg(victim_g, params, cfg: AttackConfig, neuron=None, modality="image") -> AttackResult:
    """Jointly optimize a dummy input and soft dummy label to reproduce ``victim_g``."""
    if cfg.attack != "dlg":
        raise UsageError("run_dlg needs cfg.attack == 'dlg'")
    return _run(victim_g, params, cfg, neuron, modality, label=None)


def run_idlg(victim_g, params, cfg: AttackConfig, neuron=None, modality="image") -> AttackResult:
    """Infer the label from the last layer's gradient, then optimize only the input."""
    if cfg.attack != "idlg":
        raise UsageError("run_idlg needs cfg.attack == 'idlg'")
    if cfg.batch_size != 1:
        raise UsageError("label inference from row sums assumes batch size 1")
    label = infer_label_idlg(victim_g)
    return _run(victim_g, params, cfg, neuron, modality, label=[label])


def run_attack(victim_g, params, cfg: AttackConfig, neuron=None, modality="image") -> AttackResult:
    if cfg.attack == "dlg":
        return run_dlg(victim_g, params, cfg, neuron, modality)
    if cfg.attack == "idlg":
        return run_idlg(victim_g, params, cfg, neuron, modality)
    raise UsageError("use run_grnn for the generator-based attack")
