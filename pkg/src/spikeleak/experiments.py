"""Experiment runners shared by the command line and the acceptance suite.

Every sample goes through the federated harness: a client computes the
gradient, the message crosses the wire encoding, and the attack works on the
eavesdropped copy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import torch

from . import attacks, evalkit, fl, models
from .data_ingest import LabeledDataset

CSV_COLUMNS = (
    "sample_id",
    "attack",
    "model_kind",
    "dataset",
    "tau",
    "strategy",
    "status",
    "final_loss",
    "mse",
    "psnr",
    "ssim",
    "l2",
    "judge_pred",
    "true_label",
    "iterations_run",
    "wall_ms",
)

SWEEP_COLUMNS = ("attack", "strategy", "tau", "n", "n_diverged", "asr", "l2_mean", "l2_std")


@dataclass
class SampleOutcome:
    sample_id: int
    true_label: int
    truth: torch.Tensor
    result: attacks.AttackResult


def modality_for(spec: models.ModelSpec, data: LabeledDataset) -> str:
    """Event datasets carry a time axis per sample; everything else is an image."""
    return "spikes" if data.inputs.dim() == 5 else "image"


def truth_tensor(spec: models.ModelSpec, data: LabeledDataset, i: int) -> torch.Tensor:
    """Ground truth in the same layout as the attack leaf."""
    x = data.inputs[i : i + 1].to(torch.float64)
    if x.dim() == 5:
        return x.transpose(0, 1)  # [T,1,C,H,W]
    return x


def attack_samples(
    params: models.ParameterSet,
    data: LabeledDataset,
    indices,
    cfg: attacks.AttackConfig,
    neuron: models.NeuronParams | None = None,
    workers: int = 1,
) -> list[SampleOutcome]:
    """Run ``cfg`` against each listed sample's intercepted gradient.

    Each sample belongs to its own client (client id = sample id). Output order
    follows ``indices`` regardless of ``workers``.
    """
    neuron = neuron or models.NeuronParams()
    modality = modality_for(params.spec, data)
    indices = [int(i) for i in indices]

    def one(i):
        client = fl.ClientState(i, data.inputs, data.labels, params, neuron)
        msg = fl.client_round(client, i)
        (_, grads), = fl.eavesdrop([msg])
        res = attacks.run_attack(grads, params, cfg, neuron, modality)
        return SampleOutcome(i, int(data.labels[i]), truth_tensor(params.spec, data, i), res)

    if workers <= 1:
        return [one(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, indices))


def judge_input(x: torch.Tensor) -> torch.Tensor:
    """Reconstruction layout -> judge batch layout."""
    return x.transpose(0, 1) if x.dim() == 5 else x


def score(outcome: SampleOutcome, recon: torch.Tensor, judge: evalkit.JudgeModel | None):
    """Per-sample metrics for one reconstruction (images get MSE/PSNR/SSIM too)."""
    out = {"l2": evalkit.l2_distance(recon, outcome.truth)}
    if recon.dim() == 4:
        out["mse"] = evalkit.mse(recon, outcome.truth)
        out["psnr"] = evalkit.psnr(recon, outcome.truth)
        out["ssim"] = evalkit.ssim(recon, outcome.truth)
    if judge is not None:
        out["judge_pred"] = int(judge.predict(judge_input(recon))[0])
    return out


def make_row(outcome, recon, judge, cfg, model_kind, dataset, tau=None, strategy="none", timing=True):
    res = outcome.result
    row = {
        "sample_id": outcome.sample_id,
        "attack": cfg.attack,
        "model_kind": model_kind,
        "dataset": dataset,
        "tau": tau,
        "strategy": strategy,
        "status": res.status,
        "final_loss": res.final_loss,
        "true_label": outcome.true_label,
        "iterations_run": res.iterations_run,
        "wall_ms": round(res.wall_ms, 1) if timing else None,
    }
    row.update(score(outcome, recon, judge))
    return row


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.10g}"
    return str(v)


def summarize(rows) -> dict:
    """Table-4 style aggregates; diverged rows are counted but not averaged."""
    ok = [r for r in rows if r["status"] != "diverged"]
    out = {"n": len(rows), "n_diverged": len(rows) - len(ok)}
    for key in ("mse", "psnr", "ssim", "l2", "final_loss"):
        vals = [r[key] for r in ok if r.get(key) is not None and math.isfinite(r[key])]
        out[f"{key}_mean"] = sum(vals) / len(vals) if vals else None
    judged = [r for r in ok if r.get("judge_pred") is not None]
    out["asr"] = (
        100.0 * sum(r["judge_pred"] == r["true_label"] for r in judged) / len(judged) if judged else None
    )
    return out


def sweep_tau(
    params: models.ParameterSet,
    data: LabeledDataset,
    indices,
    attack_names,
    taus,
    strategies,
    base_cfg: attacks.AttackConfig,
    judge: evalkit.JudgeModel | None,
    neuron: models.NeuronParams | None = None,
    dataset: str = "",
    workers: int = 1,
    in_opt_indices=None,
    in_opt_iterations=None,
):
    """Grid over attack x strategy x tau on spike-modality data.

    Post-opt cells share one unthresholded run per sample, since post-opt
    thresholding only touches the final iterate. ``in_opt_indices`` and
    ``in_opt_iterations`` optionally shrink the (much more expensive) in-opt runs
    to a subset of samples and a smaller iteration budget.

    Returns ``(rows, cells)``: long-format per-sample rows and one aggregate per cell.
    """
    from dataclasses import replace

    taus = [float(t) for t in taus]
    for t in taus:
        if not 0 < t < 1:
            raise ValueError(f"tau {t} outside (0, 1)")
    if modality_for(params.spec, data) != "spikes":
        raise ValueError("tau sweeps need spike-modality data")
    rows, cells = [], []
    kind = params.spec.kind
    for name in attack_names:
        if "post_opt" in strategies:
            cfg = replace(base_cfg, attack=name, threshold_strategy="none", tau=None)
            outcomes = attack_samples(params, data, indices, cfg, neuron, workers)
            for tau in taus:
                cell_rows = [
                    make_row(o, attacks.binarize_post(o.result.x_continuous, tau), judge, cfg, kind, dataset, tau, "post_opt")
                    for o in outcomes
                ]
                rows.extend(cell_rows)
                cells.append(_cell(name, "post_opt", tau, cell_rows))
        if "in_opt" in strategies:
            sub = indices if in_opt_indices is None else in_opt_indices
            for tau in taus:
                cfg = replace(base_cfg, attack=name, threshold_strategy="in_opt", tau=tau)
                if in_opt_iterations is not None:
                    cfg = replace(cfg, iterations=in_opt_iterations)
                outcomes = attack_samples(params, data, sub, cfg, neuron, workers)
                cell_rows = [make_row(o, o.result.x, judge, cfg, kind, dataset, tau, "in_opt") for o in outcomes]
                rows.extend(cell_rows)
                cells.append(_cell(name, "in_opt", tau, cell_rows))
    return rows, cells


def _cell(attack, strategy, tau, rows) -> dict:
    s = summarize(rows)
    l2 = [r["l2"] for r in rows if r["status"] != "diverged"]
    mean = sum(l2) / len(l2) if l2 else None
    std = math.sqrt(sum((v - mean) ** 2 for v in l2) / len(l2)) if l2 else None
    return {
        "attack": attack,
        "strategy": strategy,
        "tau": tau,
        "n": s["n"],
        "n_diverged": s["n_diverged"],
        "asr": s["asr"],
        "l2_mean": mean,
        "l2_std": std,
    }
