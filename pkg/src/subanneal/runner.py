"""Experiment execution: datasets in, metric CSVs and manifests out.

A run executes one task from a validated config. Metric files are plain CSV
with a fixed column set; the manifest (written atomically at the end) records
the config, its hash, the seeds, every metric file produced, wall-clock time
and the library version. Re-running the same config in deterministic mode
reproduces the metric files byte for byte; wall-clock lives only in the
manifest so it never breaks that contract.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .annealing import (
    FixedMaskController,
    IterativeController,
    RandomAnnealConfig,
    TemperatureConfig,
    random_anneal_controller,
    temperature_controller,
    tune,
)
from .config import ExperimentConfig
from .data import load_dataset, normalization_stats, normalize, subset
from .ensemble import EnsembleConfig, run_ensemble, train_parent
from .masks import load_mask_set, load_weights, save_mask_set, save_weights
from .metrics import evaluate
from .models import build_model
from .nn.optim import make_optimizer
from .nn.schedules import (
    Constant,
    OneCycle,
    StepDecay,
    lr_at,
    parent_stepwise,
)
from .pruning import PruneSpec, magnitude_mask, random_mask
from .rng import substream
from .training import predict_logits, softmax

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "train_loss", "test_acc", "test_nll", "test_ece",
                   "realized_sparsity", "lr", "mean_active_fraction")

SUMMARY_COLUMNS = ("method", "selector", "lr_schedule", "rho", "mean_acc",
                   "std_acc", "mean_nll", "mean_ece", "epochs", "seed_count",
                   "phi", "tau0", "best_in_method")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in METRICS_COLUMNS])


def read_metrics_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if value == "" or value is None:
                    row[key] = None
                elif key == "epoch":
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            rows.append(row)
    return rows


def write_json_atomic(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def set_deterministic() -> None:
    """Serial, single-threaded BLAS so trajectories are bit-reproducible."""
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except ImportError:  # pragma: no cover - threadpoolctl ships with sklearn
        log.warning("threadpoolctl unavailable; BLAS thread count unchanged")


# --- data and model assembly -------------------------------------------------

class RunData:
    """Train/test tensors plus the unit-scale test set for corruption."""

    def __init__(self, cfg: ExperimentConfig):
        blobs = cfg.blobs
        if cfg.dataset == "synthetic-blobs":
            train = load_dataset("synthetic-blobs", "train", n=blobs["n"],
                                 d=blobs["d"], k=blobs["k"],
                                 separation=blobs["separation"],
                                 data_seed=blobs["data_seed"])
            test = load_dataset("synthetic-blobs", "test",
                                n=max(blobs["n"] // 4, blobs["k"]),
                                d=blobs["d"], k=blobs["k"],
                                separation=blobs["separation"],
                                data_seed=blobs["data_seed"])
        else:
            train = load_dataset(cfg.dataset, "train")
            test = load_dataset(cfg.dataset, "test")
        train = subset(train, cfg.train_subset)
        test = subset(test, cfg.test_subset)
        self.num_classes = train.num_classes
        self.input_shape = tuple(train.x.shape[1:])
        self.mean, self.std = normalization_stats(train.x)
        self.x_train = normalize(train.x, self.mean, self.std)
        self.y_train = train.y
        self.x_test = normalize(test.x, self.mean, self.std)
        self.y_test = test.y
        self.x_test_raw = test.x  # unit scale, for corruption

    def normalizer(self, x: np.ndarray) -> np.ndarray:
        return normalize(x, self.mean, self.std)


def _dtype(cfg: ExperimentConfig):
    return np.float64 if cfg.dtype == "float64" else np.float32


def build_net(cfg: ExperimentConfig, data: RunData, seed: int):
    return build_model(cfg.model, data.input_shape, data.num_classes,
                       substream(seed, "init"), dtype=_dtype(cfg))


def build_schedule(desc: dict, epochs: int, steps_per_epoch: int):
    kind = desc["kind"]
    if kind == "constant":
        return Constant(desc["value"])
    if kind == "onecycle":
        return OneCycle(desc["start"], desc["max"], desc["end"],
                        desc["warmup_fraction"],
                        max(epochs * steps_per_epoch, 1))
    if kind == "step":
        return StepDecay(tuple((e, v) for e, v in desc["breakpoints"]))
    return parent_stepwise(epochs, desc["hi"], desc["lo"])


def build_opt(cfg: ExperimentConfig, base_lr: float):
    opt = cfg.optimizer
    return make_optimizer(opt["kind"], base_lr, momentum=opt["momentum"],
                          nesterov=opt["nesterov"],
                          weight_decay=opt["weight_decay"], beta1=opt["beta1"],
                          beta2=opt["beta2"], eps=opt["eps"])


def _base_lr(desc: dict) -> float:
    if desc["kind"] == "constant":
        return desc["value"]
    if desc["kind"] == "onecycle":
        return desc["start"]
    if desc["kind"] == "step":
        return desc["breakpoints"][0][1]
    return desc["hi"]


# --- parents ------------------------------------------------------------------

def parent_cache_key(cfg: ExperimentConfig, seed: int) -> str:
    import hashlib

    relevant = {
        "dataset": cfg.dataset, "model": cfg.model,
        "parent_epochs": cfg.parent_epochs, "parent_lr": cfg.parent_lr,
        "optimizer": cfg.optimizer, "batch_size": cfg.batch_size,
        "train_subset": cfg.train_subset, "blobs": cfg.blobs,
        "dtype": cfg.dtype, "seed": seed,
    }
    canon = json.dumps(relevant, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def get_parent(cfg: ExperimentConfig, data: RunData, seed: int, out_dir: Path):
    """Train the parent for this seed, or reload it from the run cache."""
    key = parent_cache_key(cfg, seed)
    path = out_dir / "parents" / f"parent-{key}-s{seed}.ssam"
    net = build_net(cfg, data, seed)
    if path.exists():
        saved = load_weights(path)
        for name, value in saved.items():
            net.set_param(name, value.astype(_dtype(cfg)))
        return net, path
    steps = -(-len(data.y_train) // cfg.batch_size)
    schedule = build_schedule(cfg.parent_lr, cfg.parent_epochs, steps)
    optimizer = build_opt(cfg, _base_lr(cfg.parent_lr))
    train_parent(net, (data.x_train, data.y_train), cfg.parent_epochs,
                 optimizer, schedule, cfg.batch_size,
                 substream(seed, "shuffle", "parent"))
    path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(net.params(), path)
    return net, path


# --- single method cell --------------------------------------------------------

def make_controller(method: str, cfg: ExperimentConfig, parent, seed: int,
                    rho: float, phi: int, tau0: float):
    """The subnetwork controller for one (method, rho, phi, tau0) cell.

    One-shot and temperature annealing draw the target mask from the same
    named stream, so paired-seed comparisons share identical targets.
    """
    child = parent.clone()
    weights = child.weights()
    spec = PruneSpec(cfg.selector, rho, cfg.granularity)
    mask_rng = substream(seed, "mask")
    if method == "oneshot":
        target = (random_mask(child.weight_shapes(), spec, mask_rng)
                  if cfg.selector == "random" else magnitude_mask(weights, spec))
        return child, FixedMaskController(target)
    if method == "iterative":
        return child, IterativeController(spec, max(phi, 1), weights, mask_rng)
    if method == "temperature-anneal":
        target = (random_mask(child.weight_shapes(), spec, mask_rng)
                  if cfg.selector == "random" else magnitude_mask(weights, spec))
        tau_cfg = TemperatureConfig(tau0=tau0, variant=cfg.variant,
                                    decay=cfg.decay_for(method),
                                    anneal_epochs=phi)
        return child, temperature_controller(target, tau_cfg)
    if method == "random-anneal":
        rand_cfg = RandomAnnealConfig(
            rho=rho, anneal_epochs=phi, distribution=cfg.distribution,
            decay=cfg.decay_for(method), mu1=cfg.bimodal_mu1,
            sigma1=cfg.bimodal_sigma1, mu2=cfg.bimodal_mu2,
            sigma2=cfg.bimodal_sigma2)
        return child, random_anneal_controller(child.weight_shapes(), rand_cfg,
                                               mask_rng)
    raise ValueError(f"unknown method {method!r}")


def run_cell(cfg: ExperimentConfig, data: RunData, parent, seed: int,
             method: str, rho: float, phi: int, tau0: float):
    """Tune one child network; returns its per-epoch rows."""
    child, controller = make_controller(method, cfg, parent, seed, rho, phi,
                                        tau0)
    steps = -(-len(data.y_train) // cfg.batch_size)
    schedule = build_schedule(cfg.lr, cfg.epochs, steps)
    optimizer = build_opt(cfg, _base_lr(cfg.lr))
    rows = tune(child, controller, (data.x_train, data.y_train), cfg.epochs,
                schedule, optimizer, cfg.batch_size,
                rng_shuffle=substream(seed, "shuffle", "child"),
                rng_mask=substream(seed, "bernoulli"),
                eval_data=(data.x_test, data.y_test), eval_mode=cfg.eval_mask)
    return child, rows


def _cell_slug(method: str, rho: float, phi: int, tau0: float) -> str:
    base = f"{method}-rho{rho}-phi{phi}"
    if method == "temperature-anneal":
        base += f"-tau{tau0}"
    return base.replace(".", "p")


def _cell_grid(cfg: ExperimentConfig):
    cells = []
    for method in cfg.method:
        for rho in cfg.rho:
            phis = cfg.phi if method != "oneshot" else [0]
            for phi in phis:
                taus = cfg.tau0 if method == "temperature-anneal" else [0.0]
                for tau0 in taus:
                    cells.append((method, rho, phi, tau0))
    return cells


# --- tasks ---------------------------------------------------------------------

def run(cfg: ExperimentConfig) -> Path:
    """Execute the config; returns the manifest path.

    Failures are recorded in the manifest (status: failed) and re-raised so
    callers can exit nonzero.
    """
    if cfg.deterministic:
        set_deterministic()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    started = time.perf_counter()
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seeds": cfg.run_seeds(),
        "status": "running",
        "cells": [],
        "metrics_files": [],
    }
    try:
        data = RunData(cfg)
        if cfg.task == "train-parent":
            _task_train_parent(cfg, data, out_dir, manifest)
        elif cfg.task == "prune-tune" or cfg.task == "ablate":
            _task_sweep(cfg, data, out_dir, manifest)
        elif cfg.task == "ensemble":
            _task_ensemble(cfg, data, out_dir, manifest)
        elif cfg.task == "eval":
            _task_eval(cfg, data, out_dir, manifest)
        manifest["status"] = "ok"
    except Exception as err:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(err).__name__}: {err}"
        manifest["wall_clock_s"] = time.perf_counter() - started
        write_json_atomic(manifest_path, manifest)
        raise
    manifest["wall_clock_s"] = time.perf_counter() - started
    write_json_atomic(manifest_path, manifest)
    return manifest_path


def _task_train_parent(cfg, data, out_dir, manifest):
    for seed in cfg.run_seeds():
        net = build_net(cfg, data, seed)
        steps = -(-len(data.y_train) // cfg.batch_size)
        schedule = build_schedule(cfg.parent_lr, cfg.parent_epochs, steps)
        optimizer = build_opt(cfg, _base_lr(cfg.parent_lr))
        rows = train_parent(net, (data.x_train, data.y_train),
                            cfg.parent_epochs, optimizer, schedule,
                            cfg.batch_size, substream(seed, "shuffle", "parent"),
                            eval_data=(data.x_test, data.y_test))
        csv_path = out_dir / "metrics" / f"parent-s{seed}.csv"
        write_metrics_csv(csv_path, rows)
        weights_path = out_dir / f"parent-s{seed}.weights.ssam"
        save_weights(net.params(), weights_path)
        manifest["metrics_files"].append(str(csv_path.relative_to(out_dir)))
        manifest["cells"].append({
            "method": "parent", "selector": "-", "lr_schedule":
                cfg.parent_lr["kind"], "rho": 0.0, "phi": 0, "tau0": 0.0,
            "epochs": cfg.parent_epochs, "seed": seed,
            "metrics": str(csv_path.relative_to(out_dir)),
            "weights": str(weights_path.relative_to(out_dir)),
        })


def _task_sweep(cfg, data, out_dir, manifest):
    cells = _cell_grid(cfg)
    for seed in cfg.run_seeds():
        parent, parent_path = get_parent(cfg, data, seed, out_dir)
        for method, rho, phi, tau0 in cells:
            child, rows = run_cell(cfg, data, parent, seed, method, rho, phi,
                                   tau0)
            slug = _cell_slug(method, rho, phi, tau0)
            csv_path = out_dir / "metrics" / f"{slug}-s{seed}.csv"
            write_metrics_csv(csv_path, rows)
            manifest["metrics_files"].append(str(csv_path.relative_to(out_dir)))
            manifest["cells"].append({
                "method": method, "selector": cfg.selector,
                "lr_schedule": cfg.lr["kind"], "rho": rho, "phi": phi,
                "tau0": tau0, "epochs": cfg.epochs, "seed": seed,
                "metrics": str(csv_path.relative_to(out_dir)),
                "parent": str(parent_path.relative_to(out_dir)),
            })
    if cfg.task == "ablate":
        rows = summarize_manifests([out_dir / "manifest.json"],
                                   manifest_payloads=[manifest],
                                   base_dirs=[out_dir])
        write_summary_csv(out_dir / "summary.csv", rows)


def _task_ensemble(cfg, data, out_dir, manifest):
    ens = cfg.ensemble
    for seed in cfg.run_seeds():
        parent = build_net(cfg, data, seed)
        ecfg = EnsembleConfig(
            n_members=ens["n_members"], t_parent=cfg.parent_epochs,
            t_child=cfg.epochs, t_anneal=cfg.phi[0], rho=cfg.rho[0],
            tau0=cfg.tau0[0], variant=cfg.variant,
            decay=cfg.decay_for("temperature-anneal"),
            partitioning=ens["partitioning"],
            include_parent=ens["include_parent"],
            granularity=cfg.granularity, batch_size=cfg.batch_size,
            optimizer_kind=cfg.optimizer["kind"],
            momentum=cfg.optimizer["momentum"],
            nesterov=cfg.optimizer["nesterov"],
            weight_decay=cfg.optimizer["weight_decay"],
            beta1=cfg.optimizer["beta1"], beta2=cfg.optimizer["beta2"],
            eps=cfg.optimizer["eps"],
            parent_lr_hi=cfg.parent_lr.get("hi", 0.1),
            parent_lr_lo=cfg.parent_lr.get("lo", 0.001),
            child_lr_start=cfg.lr.get("start", 0.001),
            child_lr_max=cfg.lr.get("max", 0.1),
            child_lr_end=cfg.lr.get("end", 1e-7),
            corruption_severities=tuple(ens["corruption_severities"]))
        started = time.perf_counter()
        result = run_ensemble(parent, ecfg, (data.x_train, data.y_train),
                              (data.x_test, data.y_test), seed,
                              corrupt_base=data.x_test_raw,
                              normalizer=data.normalizer)
        wall = time.perf_counter() - started
        seed_dir = out_dir / f"seed-{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        for i, (net, mask) in enumerate(result.members):
            save_weights(net.params(), seed_dir / f"member-{i}.weights.ssam")
            save_mask_set(mask, seed_dir / f"member-{i}.mask.ssam")
            write_metrics_csv(seed_dir / f"member-{i}.csv",
                              result.member_rows[i])
        member_mean_acc = float(np.mean([r.accuracy
                                         for r in result.member_records]))
        summary = {
            "config": cfg.to_dict(),
            "seed": seed,
            "members": [rec.to_dict() for rec in result.member_records],
            "member_mean_accuracy": member_mean_acc,
            "ensemble_minus_mean_member":
                result.ensemble_record.accuracy - member_mean_acc,
            "ensemble": result.ensemble_record.to_dict(),
            "corrupted": {
                str(sev): {
                    "ensemble": block["ensemble"].to_dict(),
                    "members": [r.to_dict() for r in block["members"]],
                } for sev, block in result.corrupted.items()
            },
            "failures": result.failures,
            "wall_clock_s": wall,
        }
        summary_path = seed_dir / "ensemble-summary.json"
        write_json_atomic(summary_path, summary)
        manifest["metrics_files"].append(str(summary_path.relative_to(out_dir)))
        manifest["cells"].append({
            "method": "ensemble", "selector": cfg.selector,
            "lr_schedule": cfg.lr["kind"], "rho": cfg.rho[0],
            "phi": cfg.phi[0], "tau0": cfg.tau0[0], "epochs": cfg.epochs,
            "seed": seed,
            "metrics": str(summary_path.relative_to(out_dir)),
        })


def _task_eval(cfg, data, out_dir, manifest):
    net = build_net(cfg, data, cfg.seed)
    for name, value in load_weights(cfg.weights).items():
        net.set_param(name, value.astype(_dtype(cfg)))
    mask = load_mask_set(cfg.mask) if cfg.mask else None
    logits = predict_logits(net, data.x_test, mask=mask)
    record = evaluate(softmax(logits), data.y_test)
    payload = {"config": cfg.to_dict(), "clean": record.to_dict(),
               "corrupted": {}}
    for severity in cfg.ensemble["corruption_severities"]:
        from .ensemble import corrupt

        xc = data.normalizer(corrupt(data.x_test_raw, severity,
                                     substream(cfg.seed, "corrupt", severity)))
        rec = evaluate(softmax(predict_logits(net, xc, mask=mask)), data.y_test)
        payload["corrupted"][str(severity)] = rec.to_dict()
    eval_path = out_dir / "eval.json"
    write_json_atomic(eval_path, payload)
    manifest["metrics_files"].append(str(eval_path.relative_to(out_dir)))


# --- summaries -------------------------------------------------------------------

def summarize_manifests(manifest_paths, manifest_payloads=None,
                        base_dirs=None) -> list:
    """Aggregate final-epoch metrics per cell across repeats.

    Accuracy std is the sample standard deviation (n-1), zero for a single
    repeat. The best mean accuracy within each (method, selector,
    lr_schedule, rho) group gets best_in_method = 1, so the best-over-
    hyperparameters reading of the table stays recoverable.
    """
    if manifest_payloads is None:
        manifest_payloads = []
        base_dirs = []
        for path in manifest_paths:
            path = Path(path)
            manifest_payloads.append(json.loads(path.read_text()))
            base_dirs.append(path.parent)

    datasets = {m["config"]["dataset"] for m in manifest_payloads}
    if len(datasets) > 1:
        raise ValueError(f"cannot summarize mixed datasets: {sorted(datasets)}")

    groups = {}
    for payload, base in zip(manifest_payloads, base_dirs):
        for cell in payload["cells"]:
            if cell["method"] in ("parent", "ensemble"):
                continue
            key = (cell["method"], cell["selector"], cell["lr_schedule"],
                   cell["rho"], cell["phi"], cell["tau0"], cell["epochs"])
            rows = read_metrics_csv(Path(base) / cell["metrics"])
            final = rows[-1]
            groups.setdefault(key, []).append(final)

    out = []
    for key, finals in sorted(groups.items()):
        method, selector, lr_schedule, rho, phi, tau0, epochs = key
        accs = [f["test_acc"] for f in finals]
        nlls = [f["test_nll"] for f in finals]
        eces = [f["test_ece"] for f in finals]
        out.append({
            "method": method, "selector": selector,
            "lr_schedule": lr_schedule, "rho": rho,
            "mean_acc": float(np.mean(accs)),
            "std_acc": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
            "mean_nll": float(np.mean(nlls)),
            "mean_ece": float(np.mean(eces)),
            "epochs": epochs, "seed_count": len(accs),
            "phi": phi, "tau0": tau0, "best_in_method": 0,
        })
    best = {}
    for i, row in enumerate(out):
        key = (row["method"], row["selector"], row["lr_schedule"], row["rho"])
        if key not in best or out[best[key]]["mean_acc"] < row["mean_acc"]:
            best[key] = i
    for i in best.values():
        out[i]["best_in_method"] = 1
    return out


def write_summary_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in SUMMARY_COLUMNS])


def summarize_dir(directory) -> Path:
    """Summarize every manifest below ``directory`` into summary.csv."""
    directory = Path(directory)
    manifests = sorted(directory.glob("**/manifest.json"))
    if not manifests:
        raise FileNotFoundError(f"no manifest.json under {directory}")
    rows = summarize_manifests(manifests)
    out = directory / "summary.csv"
    write_summary_csv(out, rows)
    return out
