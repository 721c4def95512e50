"""Batch experiment driver.

    spikeleak train-judge --config run.ini
    spikeleak attack      --config run.ini --attack idlg --samples 20
    spikeleak sweep-tau   --config run.ini --taus 0.1,0.5,0.9 --strategies post_opt,in_opt
    spikeleak ref-stats   --dataset-kind gesture_synth --output out/
    spikeleak inspect     some.spkt

The config is an INI file; command-line flags win over it. Exit codes:
0 success, 2 config error, 3 data error, 4 every sample diverged.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import torch

from . import attacks, evalkit, experiments, fl, models
from . import data_ingest as di
from .datasets import load_mnist_dir
from .errors import DimensionError, FormatError, ProtocolError, UsageError, ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
DATASET_KINDS = ("mnist", "cifar100", "gesture_synth")


class ConfigError(UsageError):
    pass


@dataclass
class ExperimentConfig:
    dataset_kind: str = "mnist"
    dataset_path: str | None = None
    dataset_split: str = "test"
    sha256_manifest: str | None = None
    per_class: int = 5  # synthetic gesture streams per class in the attacked split
    model_kind: str = "ann"
    timesteps: int = 20
    model_seed: int = 0
    attack: attacks.AttackConfig = field(default_factory=attacks.AttackConfig)
    samples: int = 20
    seed: int = 0
    output: str = "spikeleak-out"
    judge_path: str | None = None
    judge_epochs: int = 15
    judge_lr: float | None = None  # None: 0.2 for event data, 0.02 for images
    judge_batch_size: int | None = None  # None: 16 for event data, 32 for images
    judge_train_per_class: int = 19
    workers: int = 1
    record_timing: bool = False

    def validate(self, need_judge: bool = False, need_data_path: bool = True) -> "ExperimentConfig":
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.dataset_kind!r}")
        if self.dataset_kind != "gesture_synth" and need_data_path:
            if not self.dataset_path:
                raise ConfigError(f"dataset kind {self.dataset_kind} needs a dataset path")
            if not Path(self.dataset_path).exists():
                raise ConfigError(f"dataset path does not exist: {self.dataset_path}")
        if self.sha256_manifest and not Path(self.sha256_manifest).exists():
            raise ConfigError(f"digest manifest does not exist: {self.sha256_manifest}")
        if self.model_kind not in ("ann", "snn"):
            raise ConfigError(f"model kind must be ann or snn, got {self.model_kind!r}")
        if self.dataset_kind == "gesture_synth" and self.model_kind != "snn":
            raise ConfigError("event data needs the snn model kind")
        if self.samples < 1:
            raise ConfigError("sample count must be at least 1")
        if self.timesteps < 1 or self.per_class < 1 or self.workers < 1:
            raise ConfigError("timesteps, per_class and workers must be positive")
        if self.dataset_split not in ("train", "test"):
            raise ConfigError("split must be train or test")
        if need_judge:
            if not self.judge_path:
                raise ConfigError("a judge checkpoint path is required")
            if not Path(self.judge_path).exists():
                raise ConfigError(f"judge checkpoint does not exist: {self.judge_path}")
        return self

    def echo(self) -> dict:
        d = asdict(self)
        d["attack"] = asdict(self.attack)
        return d


_ATTACK_KEYS = {
    "attack": str,
    "iterations": int,
    "history": int,
    "lr": float,
    "max_line_search": int,
    "sigma": float,
    "tau": float,
    "threshold_strategy": str,
    "strategy": str,
    "seed": int,
    "batch_size": int,
    "grnn_epochs": int,
    "grnn_lr": float,
    "grnn_hidden": int,
}

# (section, key) -> (ExperimentConfig field, type)
_FILE_KEYS = {
    ("dataset", "kind"): ("dataset_kind", str),
    ("dataset", "path"): ("dataset_path", str),
    ("dataset", "split"): ("dataset_split", str),
    ("dataset", "sha256_manifest"): ("sha256_manifest", str),
    ("dataset", "per_class"): ("per_class", int),
    ("model", "kind"): ("model_kind", str),
    ("model", "timesteps"): ("timesteps", int),
    ("model", "seed"): ("model_seed", int),
    ("run", "samples"): ("samples", int),
    ("run", "seed"): ("seed", int),
    ("run", "output"): ("output", str),
    ("run", "workers"): ("workers", int),
    ("run", "record_timing"): ("record_timing", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
    ("judge", "path"): ("judge_path", str),
    ("judge", "epochs"): ("judge_epochs", int),
    ("judge", "lr"): ("judge_lr", float),
    ("judge", "batch_size"): ("judge_batch_size", int),
    ("judge", "train_per_class"): ("judge_train_per_class", int),
}


def _convert(typ, raw, where):
    try:
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {where}: {raw!r}") from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional INI file plus flag overrides.

    Seed precedence: flag, then ``[run] seed``, then ``SPIKELEAK_SEED``, then 0.
    """
    values: dict = {}
    attack_values: dict = {}
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file does not exist: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in cp.sections():
            for key, raw in cp.items(section):
                if section == "attack":
                    if key not in _ATTACK_KEYS:
                        raise ConfigError(f"unknown key [attack] {key}")
                    attack_values[key] = _convert(_ATTACK_KEYS[key], raw, f"[attack] {key}")
                elif (section, key) in _FILE_KEYS:
                    name, typ = _FILE_KEYS[(section, key)]
                    values[name] = _convert(typ, raw, f"[{section}] {key}")
                else:
                    raise ConfigError(f"unknown key [{section}] {key}")
    if "seed" not in values and os.environ.get("SPIKELEAK_SEED"):
        values["seed"] = _convert(int, os.environ["SPIKELEAK_SEED"], "SPIKELEAK_SEED")
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key in _ATTACK_KEYS and key != "seed":
            attack_values[key] = val
        else:
            values[key] = val
    if "strategy" in attack_values:
        attack_values["threshold_strategy"] = attack_values.pop("strategy")
    cfg = ExperimentConfig(**values)
    attack_values.setdefault("seed", cfg.seed)
    try:
        cfg.attack = attacks.AttackConfig(**attack_values)
    except UsageError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# --------------------------------------------------------------------------- data


def git_blob_hash(data: bytes) -> str:
    """The id git would give ``data`` as a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _input_files(cfg: ExperimentConfig) -> list[Path]:
    files = []
    if cfg.dataset_path:
        p = Path(cfg.dataset_path)
        files.extend(sorted(q for q in p.iterdir() if q.is_file()) if p.is_dir() else [p])
    if cfg.judge_path and Path(cfg.judge_path).exists():
        files.append(Path(cfg.judge_path))
    return files


def verify_digests(cfg: ExperimentConfig) -> None:
    """Check dataset files against a ``sha256sum``-style manifest, if one is configured."""
    if not cfg.sha256_manifest:
        return
    base = Path(cfg.dataset_path) if cfg.dataset_path and Path(cfg.dataset_path).is_dir() else Path(cfg.sha256_manifest).parent
    for lineno, line in enumerate(Path(cfg.sha256_manifest).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            digest, name = line.split(None, 1)
        except ValueError as exc:
            raise ConfigError(f"{cfg.sha256_manifest}:{lineno}: expected '<sha256>  <file>'") from exc
        target = base / name.strip().lstrip("*")
        if not target.exists():
            raise ValidationError(f"{target} listed in digest manifest is missing")
        actual = hashlib.sha256(target.read_bytes()).hexdigest()
        if actual != digest.lower():
            raise ValidationError(f"sha256 mismatch for {target}: expected {digest}, got {actual}")


def load_splits(cfg: ExperimentConfig):
    """``(train, test)`` datasets for the configured source."""
    verify_digests(cfg)
    if cfg.dataset_kind == "mnist":
        return load_mnist_dir(cfg.dataset_path)
    if cfg.dataset_kind == "cifar100":
        p = Path(cfg.dataset_path)
        if p.is_dir():
            train = di.parse_cifar_bin((p / "train.bin").read_bytes(), split="train")
            test = di.parse_cifar_bin((p / "test.bin").read_bytes(), split="test")
            return train, test
        data = di.parse_cifar_bin(p.read_bytes(), split=cfg.dataset_split)
        return data, data
    train = di.synthetic_gesture_dataset(
        cfg.judge_train_per_class, seed=cfg.seed + 1, T=cfg.timesteps, split="train"
    )
    test = di.synthetic_gesture_dataset(cfg.per_class, seed=cfg.seed + 2, T=cfg.timesteps, split="test")
    return train, test


def attack_split(cfg: ExperimentConfig):
    train, test = load_splits(cfg)
    data = test if cfg.dataset_split == "test" else train
    if cfg.samples > len(data):
        raise ConfigError(f"asked for {cfg.samples} samples but the {cfg.dataset_split} split has {len(data)}")
    return data


def victim_model(cfg: ExperimentConfig, data: di.LabeledDataset) -> models.ParameterSet:
    C, H, W = data.inputs.shape[-3:]
    if H != W:
        raise ValidationError(f"victim model expects square inputs, got {H}x{W}")
    spec = models.lenet_spec(cfg.model_kind, C, H, data.num_classes, cfg.timesteps)
    return models.build_model(spec, cfg.model_seed)


def judge_spec(cfg: ExperimentConfig, data: di.LabeledDataset) -> models.ModelSpec:
    C, H, _ = data.inputs.shape[-3:]
    if cfg.dataset_kind == "gesture_synth":
        return models.gesture_judge_spec(H, data.num_classes, cfg.timesteps)
    return models.lenet5_judge_spec(C, H, data.num_classes)


def default_judge_lr(cfg: ExperimentConfig) -> float:
    if cfg.judge_lr is not None:
        return cfg.judge_lr
    return 0.2 if cfg.dataset_kind == "gesture_synth" else 0.02


def default_judge_batch(cfg: ExperimentConfig) -> int:
    if cfg.judge_batch_size is not None:
        return cfg.judge_batch_size
    return 16 if cfg.dataset_kind == "gesture_synth" else 32


# --------------------------------------------------------------------------- outputs


def write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([experiments.format_cell(r.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, bytes):
        return o.hex()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.echo(),
        "seeds": {"run": cfg.seed, "model": cfg.model_seed, "attack": cfg.attack.seed},
        "inputs": {str(p): git_blob_hash(p.read_bytes()) for p in _input_files(cfg)},
        "notes": "MNIST images are zero-padded 28x28 -> 32x32, not resampled",
    }
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)


def dump_tensor(path_stem: Path, x: torch.Tensor) -> Path:
    """PGM/PPM for single images, SPKT for spike tensors."""
    if x.dim() == 5:
        path = path_stem.with_suffix(".spkt")
        di.write_spike_tensor(path, x)
    else:
        img = x[0]
        path = path_stem.with_suffix(".pgm" if img.shape[0] == 1 else ".ppm")
        di.write_pnm(path, img)
    return path


# --------------------------------------------------------------------------- commands


def cmd_train_judge(cfg: ExperimentConfig) -> int:
    cfg.validate()
    if not cfg.judge_path:
        raise ConfigError("train-judge needs a judge checkpoint output path")
    train, test = load_splits(cfg)
    spec = judge_spec(cfg, train)
    judge = evalkit.train_judge(
        train,
        test,
        spec,
        epochs=cfg.judge_epochs,
        seed=cfg.seed,
        lr=default_judge_lr(cfg),
        batch_size=default_judge_batch(cfg),
    )
    Path(cfg.judge_path).parent.mkdir(parents=True, exist_ok=True)
    judge.save(cfg.judge_path)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, "train-judge", {"judge_accuracy": judge.accuracy})
    print(f"judge test accuracy: {judge.accuracy:.2f}% ({len(test)} samples) -> {cfg.judge_path}")
    return EXIT_OK


def _attack_rows(cfg, params, data, judge, dump_dir: Path | None):
    indices = list(range(cfg.samples))
    neuron = models.NeuronParams()
    if cfg.attack.attack == "grnn":
        return _grnn_rows(cfg, params, data, judge, indices, neuron, dump_dir)
    outcomes = experiments.attack_samples(params, data, indices, cfg.attack, neuron, cfg.workers)
    rows = []
    for o in outcomes:
        rows.append(
            experiments.make_row(
                o, o.result.x, judge, cfg.attack, cfg.model_kind, cfg.dataset_kind,
                cfg.attack.tau, cfg.attack.threshold_strategy, cfg.record_timing,
            )
        )
        if dump_dir is not None:
            dump_tensor(dump_dir / f"sample_{o.sample_id:05d}_truth", o.truth)
            dump_tensor(dump_dir / f"sample_{o.sample_id:05d}_recon", o.result.x)
    return rows


def _grnn_rows(cfg, params, data, judge, indices, neuron, dump_dir):
    modality = experiments.modality_for(params.spec, data)
    clients = [fl.ClientState(i, data.inputs, data.labels, params, neuron) for i in indices]
    captured = fl.eavesdrop([fl.client_round(c, i) for c, i in zip(clients, indices)])
    res = attacks.run_grnn([g for _, g in captured], params, cfg.attack, neuron=neuron, modality=modality)
    rows = []
    for k, i in enumerate(indices):
        recon = res.reconstructions[k]
        if recon.dim() == 3:
            recon = recon.unsqueeze(0)
        outcome = experiments.SampleOutcome(
            i,
            int(data.labels[i]),
            experiments.truth_tensor(params.spec, data, i),
            attacks.AttackResult(
                x=recon, x_continuous=recon, label=torch.tensor([res.labels[k]]),
                loss_trace=res.loss_trace, status=res.status,
                iterations_run=res.epochs_run, wall_ms=res.wall_ms / len(indices),
            ),
        )
        rows.append(
            experiments.make_row(outcome, recon, judge, cfg.attack, cfg.model_kind, cfg.dataset_kind,
                                 timing=cfg.record_timing)
        )
        if dump_dir is not None:
            dump_tensor(dump_dir / f"sample_{i:05d}_truth", outcome.truth)
            dump_tensor(dump_dir / f"sample_{i:05d}_recon", recon)
    return rows


def cmd_attack(cfg: ExperimentConfig) -> int:
    cfg.validate(need_judge=True)
    data = attack_split(cfg)
    judge = evalkit.JudgeModel.load(cfg.judge_path)
    params = victim_model(cfg, data)
    out = Path(cfg.output)
    dumps = out / "dumps"
    dumps.mkdir(parents=True, exist_ok=True)
    rows = _attack_rows(cfg, params, data, judge, dumps)
    write_csv(out / "results.csv", experiments.CSV_COLUMNS, rows)
    summary = experiments.summarize(rows)
    summary.update(attack=cfg.attack.attack, model_kind=cfg.model_kind, dataset=cfg.dataset_kind)
    write_json(out / "summary.json", summary)
    write_manifest(out, cfg, "attack")
    print(_summary_line(summary))
    if summary["n_diverged"] == summary["n"]:
        print("every sample diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _summary_line(s: dict) -> str:
    parts = [f"{s.get('attack', '')} on {s.get('model_kind', '')}/{s.get('dataset', '')}:"]
    for key in ("ssim_mean", "psnr_mean", "mse_mean", "l2_mean", "asr"):
        if s.get(key) is not None:
            parts.append(f"{key}={s[key]:.4g}")
    parts.append(f"n={s['n']} diverged={s['n_diverged']}")
    return " ".join(parts)


def cmd_sweep_tau(cfg: ExperimentConfig, taus, strategies, attack_names=None, in_opt_iterations=None) -> int:
    cfg.validate(need_judge=True)
    for t in taus:
        if not 0 < t < 1:
            raise ConfigError(f"tau {t} outside (0, 1)")
    for s in strategies:
        if s not in ("post_opt", "in_opt"):
            raise ConfigError(f"unknown strategy {s!r}")
    data = attack_split(cfg)
    if experiments.modality_for(None, data) != "spikes":
        raise ConfigError("sweep-tau needs spike-modality (event) data")
    judge = evalkit.JudgeModel.load(cfg.judge_path)
    params = victim_model(cfg, data)
    names = attack_names or [cfg.attack.attack]
    base = replace(cfg.attack, threshold_strategy="none", tau=None)
    rows, cells = experiments.sweep_tau(
        params, data, range(cfg.samples), names, taus, strategies, base, judge,
        dataset=cfg.dataset_kind, workers=cfg.workers, in_opt_iterations=in_opt_iterations,
    )
    if not cfg.record_timing:
        for r in rows:
            r["wall_ms"] = None
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep_long.csv", experiments.CSV_COLUMNS, rows)
    write_csv(out / "sweep_cells.csv", experiments.SWEEP_COLUMNS, cells)
    write_manifest(
        out, cfg, "sweep-tau",
        {"taus": list(taus), "strategies": list(strategies), "in_opt_iterations": in_opt_iterations},
    )
    for c in cells:
        print(f"{c['attack']:5s} {c['strategy']:8s} tau={c['tau']:<5g} asr={c['asr']:.1f}% l2={c['l2_mean']:.3f}")
    if all(c["n_diverged"] == c["n"] for c in cells):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_ref_stats(cfg: ExperimentConfig) -> int:
    cfg.validate()
    data = attack_split(cfg)
    sub = data.subset(range(cfg.samples))
    stats = evalkit.reference_l2_stats(sub.inputs, sub.labels)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"type": "intra", **stats["intra"]}, {"type": "inter", **stats["inter"]}]
    write_csv(out / "ref_stats.csv", ("type", "mean", "std", "min", "max"), rows)
    write_manifest(out, cfg, "ref-stats", {"pairs": {r["type"]: r["pairs"] for r in rows}})
    for r in rows:
        print(f"{r['type']}: mean={r['mean']:.4f} std={r['std']:.4f} min={r['min']:.4f} max={r['max']:.4f}")
    return EXIT_OK


def describe_file(path) -> str:
    """Human-readable summary of a SPKT/EVST/SLMD/GMSG file."""
    buf = Path(path).read_bytes()
    magic = buf[:4]
    if magic == b"SPKT":
        st = di.decode_spike_tensor(buf)
        d = st.data
        return (
            f"SPKT spike tensor T={d.shape[0]} B={d.shape[1]} C={d.shape[2]} H={d.shape[3]} W={d.shape[4]}\n"
            f"  binary={st.is_binary()} nonzero={int((d != 0).sum())} mean={float(d.mean()):.6g}"
        )
    if magic == b"EVST":
        ev = di.decode_event_stream(buf)
        on = int((ev.p == 1).sum())
        return (
            f"EVST event stream sensor={ev.sensor_size[0]}x{ev.sensor_size[1]} events={len(ev)}\n"
            f"  t=[{int(ev.t.min())}, {int(ev.t.max())}] us  on={on} off={len(ev) - on}"
        )
    if magic == b"SLMD":
        p = models.decode_checkpoint(buf)
        lines = [f"SLMD checkpoint kind={p.spec.kind} input={p.spec.input_shape} classes={p.spec.num_classes}"]
        if p.spec.kind == "snn":
            lines.append(f"  timesteps={p.spec.timesteps}")
        for k, v in sorted(p.meta.items()):
            lines.append(f"  meta {k}={v}")
        for name, t in zip(p.names, p.tensors):
            lines.append(f"  {name:12s} {tuple(t.shape)}")
        return "\n".join(lines)
    if magic == b"GMSG":
        m = fl.decode_message(buf)
        lines = [
            f"GMSG client={m.client_id} round={m.round} spec={m.spec_hash.hex()[:16]}",
            f"  timesteps={m.timesteps} batch={m.batch_size} tensors={len(m.payload)}",
        ]
        for t in m.payload:
            lines.append(f"  {tuple(t.shape)} |g|={float(t.norm()):.6g}")
        return "\n".join(lines)
    raise FormatError(f"unrecognised magic {bytes(magic)!r}", offset=0)


def cmd_inspect(path) -> int:
    if not Path(path).exists():
        raise ConfigError(f"no such file: {path}")
    print(describe_file(path))
    return EXIT_OK


# --------------------------------------------------------------------------- argv


def _floats(s: str):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from exc


def _words(s: str):
    return [v.strip() for v in s.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikeleak", description="Gradient leakage experiments on ANN and SNN victims.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("--config", help="INI file; flags override its values")
        p.add_argument("--dataset-kind", dest="dataset_kind", choices=DATASET_KINDS)
        p.add_argument("--dataset-path", dest="dataset_path")
        p.add_argument("--split", dest="dataset_split", choices=("train", "test"))
        p.add_argument("--per-class", dest="per_class", type=int)
        p.add_argument("--model", dest="model_kind", choices=("ann", "snn"))
        p.add_argument("--timesteps", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--output")
        p.add_argument("--judge", dest="judge_path")
        p.add_argument("--workers", type=int)
        p.add_argument("--record-timing", dest="record_timing", action="store_const", const=True,
                       help="fill wall_ms (makes CSVs differ between runs)")

    def attack_flags(p):
        p.add_argument("--attack", choices=("dlg", "idlg", "grnn"))
        p.add_argument("--iterations", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--strategy", choices=attacks.gradient_matching.STRATEGIES)
        p.add_argument("--sigma", type=float)
        p.add_argument("--grnn-epochs", dest="grnn_epochs", type=int)

    p = sub.add_parser("train-judge", help="train and checkpoint a judge classifier")
    common(p)
    p.add_argument("--epochs", dest="judge_epochs", type=int)
    p.add_argument("--lr", dest="judge_lr", type=float)

    p = sub.add_parser("attack", help="run one attack over the first N samples")
    common(p)
    attack_flags(p)

    p = sub.add_parser("sweep-tau", help="threshold x strategy grid on event data")
    common(p)
    attack_flags(p)
    p.add_argument("--taus", type=_floats, default=[0.1, 0.25, 0.5, 0.75, 0.9, 0.95])
    p.add_argument("--strategies", type=_words, default=["post_opt", "in_opt"])
    p.add_argument("--attacks", type=_words, help="comma list, default: the configured attack")
    p.add_argument("--in-opt-iterations", dest="in_opt_iterations", type=int,
                   help="iteration budget for in-opt runs (default: --iterations)")

    p = sub.add_parser("ref-stats", help="intra/inter-class l2 statistics")
    common(p)

    p = sub.add_parser("inspect", help="pretty-print a SPKT/EVST/SLMD/GMSG file")
    p.add_argument("file")
    return parser


_NON_CONFIG = {"verb", "config", "file", "taus", "strategies", "attacks", "in_opt_iterations"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "inspect":
            return cmd_inspect(args.file)
        overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
        cfg = load_config(args.config, overrides)
        if args.verb == "train-judge":
            return cmd_train_judge(cfg)
        if args.verb == "attack":
            return cmd_attack(cfg)
        if args.verb == "sweep-tau":
            if args.in_opt_iterations is not None and args.in_opt_iterations < 1:
                raise ConfigError("in-opt iterations must be at least 1")
            return cmd_sweep_tau(cfg, args.taus, args.strategies, args.attacks, args.in_opt_iterations)
        if args.verb == "ref-stats":
            return cmd_ref_stats(cfg)
    except UsageError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ValidationError, DimensionError, ProtocolError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
