"""Reconstruction metrics, judge models and attack-success accounting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.signal import convolve2d

from . import models
from . import tensor_core as tc
from .data_ingest import LabeledDataset
from .errors import DimensionError, UsageError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _np(a) -> np.ndarray:
    if isinstance(a, torch.Tensor):
        return a.detach().cpu().numpy().astype(np.float64)
    return np.asarray(a, dtype=np.float64)


def _same_shape(a, b):
    a, b = _np(a), _np(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    m = mse(a, b)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / m)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_2d(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    if min(x.shape) < SSIM_WINDOW:
        # global statistics over the whole image
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cov = ((x - mx) * (y - my)).mean()
        return float(
            ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
        )
    w = _gaussian_window()

    def filt(z):
        return convolve2d(z, w, mode="valid")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx**2
    vy = filt(y * y) - my**2
    cov = filt(x * y) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(smap.mean())


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5) averaged over channels.

    Accepts ``[H,W]``, ``[C,H,W]`` or ``[B,C,H,W]``. Images smaller than the
    window fall back to a single global-statistics SSIM per channel.
    """
    a, b = _same_shape(a, b)
    if a.ndim < 2:
        raise DimensionError("ssim needs at least a 2-D image")
    a2 = a.reshape(-1, *a.shape[-2:])
    b2 = b.reshape(-1, *b.shape[-2:])
    return float(np.mean([_ssim_2d(x, y, data_range) for x, y in zip(a2, b2)]))


def l2_distance(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.sqrt(np.sum((a - b) ** 2)))


@dataclass
class MetricReport:
    mse: list = field(default_factory=list)
    psnr_db: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    asr_percent: float | None = None

    def add(self, recon, truth, image: bool = True) -> None:
        if image:
            self.mse.append(mse(recon, truth))
            self.psnr_db.append(psnr(recon, truth))
            self.ssim.append(ssim(recon, truth))
        self.l2.append(l2_distance(recon, truth))

    def summary(self) -> dict:
        out = {}
        for name in ("mse", "psnr_db", "ssim", "l2"):
            vals = np.asarray(getattr(self, name), dtype=np.float64)
            finite = vals[np.isfinite(vals)]
            out[name] = {
                "mean": float(finite.mean()) if len(finite) else None,
                "std": float(finite.std()) if len(finite) else None,
                "n": int(len(vals)),
            }
        out["asr_percent"] = self.asr_percent
        return out


@dataclass
class JudgeModel:
    params: models.ParameterSet
    accuracy: float
    neuron: models.NeuronParams = field(default_factory=models.NeuronParams)

    @property
    def spec(self) -> models.ModelSpec:
        return self.params.spec

    def logits(self, x: torch.Tensor, batch_size: int = 256) -> torch.Tensor:
        """``x`` is ``[N,C,H,W]`` for ANN judges, ``[N,T,C,H,W]`` for spiking ones."""
        x = x.detach()
        out = []
        with torch.no_grad():
            for i in range(0, len(x), batch_size):
                xb = x[i : i + batch_size].to(tc.DTYPE)
                if self.spec.kind == "snn":
                    xb = xb.transpose(0, 1)
                out.append(models.forward(self.params, xb, self.neuron))
        return torch.cat(out) if out else torch.zeros((0, self.spec.num_classes))

    def predict(self, x) -> torch.Tensor:
        return self.logits(x).argmax(dim=1)

    def save(self, path) -> None:
        self.params.meta["accuracy"] = self.accuracy
        models.save_checkpoint(path, self.params)

    @classmethod
    def load(cls, path) -> "JudgeModel":
        params = models.load_checkpoint(path)
        return cls(params, float(params.meta.get("accuracy", float("nan"))))


def accuracy(judge: JudgeModel, data: LabeledDataset) -> float:
    if len(data) == 0:
        return float("nan")
    return 100.0 * float((judge.predict(data.inputs) == data.labels).double().mean())


def train_judge(
    train: LabeledDataset,
    test: LabeledDataset,
    spec: models.ModelSpec,
    epochs: int,
    seed: int = 0,
    lr: float = 0.01,
    momentum: float = 0.9,
    batch_size: int = 32,
    neuron: models.NeuronParams | None = None,
) -> JudgeModel:
    """Mini-batch SGD with momentum on cross-entropy; deterministic given ``seed``."""
    neuron = neuron or models.NeuronParams()
    params = models.build_model(spec, seed).requires_grad_()
    opt = torch.optim.SGD(params.tensors, lr=lr, momentum=momentum)
    gen = torch.Generator().manual_seed(int(seed) + 1)
    n = len(train)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        for i in range(0, n, batch_size):
            idx = order[i : i + batch_size]
            xb = train.inputs[idx].to(tc.DTYPE)
            if spec.kind == "snn":
                xb = xb.transpose(0, 1)
            loss = tc.softmax_cross_entropy(models.forward(params, xb, neuron), train.labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    params.requires_grad_(False)
    judge = JudgeModel(params, 0.0, neuron)
    judge.accuracy = accuracy(judge, test)
    params.meta["accuracy"] = judge.accuracy
    return judge


def asr(reconstructions, true_labels, judge: JudgeModel) -> float:
    """Percentage of reconstructions the judge assigns to their true class."""
    labels = torch.as_tensor(true_labels, dtype=torch.long).reshape(-1)
    if len(labels) == 0:
        raise UsageError("asr needs at least one reconstruction")
    if isinstance(reconstructions, (list, tuple)):
        reconstructions = torch.stack(list(reconstructions))
    pred = judge.predict(reconstructions)
    return 100.0 * float((pred == labels).double().mean())


def reference_l2_stats(samples, labels) -> dict:
    """Pairwise l2 distances split into same-class and cross-class pairs.

    Returns ``{"intra": {...}, "inter": {...}}`` with mean/std/min/max and the
    pair count for each. Classes with fewer than two samples contribute no
    intra-class pairs (a warning is emitted).
    """
    x = torch.as_tensor(_np(samples)).reshape(len(labels), -1)
    y = np.asarray(labels).reshape(-1)
    counts = {int(c): int((y == c).sum()) for c in np.unique(y)}
    lonely = [c for c, k in counts.items() if k < 2]
    if lonely:
        warnings.warn(f"classes {lonely} have fewer than 2 samples; excluded from intra-class stats")
    d = torch.cdist(x, x, compute_mode="donot_use_mm_for_euclid_dist").numpy()
    iu = np.triu_indices(len(y), k=1)
    dist = d[iu]
    same = y[iu[0]] == y[iu[1]]

    def agg(v):
        if len(v) == 0:
            return {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan, "pairs": 0}
        return {
            "mean": float(v.mean()),
            "std": float(v.std()),
            "min": float(v.min()),
            "max": float(v.max()),
            "pairs": int(len(v)),
        }

    return {"intra": agg(dist[same]), "inter": agg(dist[~same])}
