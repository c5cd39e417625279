"""Config-driven training, evaluation and method comparison."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as M
from .checkpoint import load_network, save_network
from .config import ConfigError, RunConfig
from .nn import (Network, grad_check, kink_free_indices, make_linear_net, make_residual_mlp, make_tiny_resnet,
                 make_tiny_segnet)
from .optim import Optimizer, OptimizerConfig, lr_at_epoch
from .stability import is_divergent
from .transforms import TransformPipeline

log = logging.getLogger(__name__)

RECORD_FIELDS = ("run_id", "epoch", "split", "loss", "metrics", "wall_time", "seed", "config_hash", "diverged")

# row order of the comparison table
METHODS = {
    "baseline": ("Baseline", {}, []),
    "gradient_centralization": ("Gradient Centralization", {}, [{"name": "centralize"}]),
    "gradient_clipping": ("Gradient Clipping", {}, [{"name": "clip", "tau": 0.1}]),
    "weight_decay_1e-3": ("Weight Decay 1E-3", {"kind": "adamw", "lambda": 1e-3}, []),
    "weight_decay_1e-4": ("Weight Decay 1E-4", {"kind": "adamw", "lambda": 1e-4}, []),
    "znorm": ("ZNorm", {}, [{"name": "znorm"}]),
}


@dataclass
class MetricsRecord:
    run_id: str
    epoch: int
    split: str
    loss: float
    metrics: dict
    wall_time: float
    seed: int
    config_hash: str
    diverged: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def validate_record(obj: dict) -> None:
    missing = [k for k in RECORD_FIELDS if k not in obj]
    extra = [k for k in obj if k not in RECORD_FIELDS]
    if missing or extra:
        raise ValueError(f"metrics record: missing {missing}, unexpected {extra}")


@dataclass
class RunResult:
    config: RunConfig
    net: Network
    records: list[MetricsRecord] = field(default_factory=list)
    epoch_train_loss: list[float] = field(default_factory=list)
    diverged_at: tuple[int, int] | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def final(self, split: str) -> MetricsRecord | None:
        recs = [r for r in self.records if r.split == split]
        return recs[-1] if recs else None


def task_of(cfg: RunConfig) -> str:
    arch = cfg.model["arch"]
    if arch == "tiny_segnet":
        return "segmentation"
    if arch == "linear" or cfg.dataset["name"] == "regression":
        return "regression"
    return "classification"


def build_dataset(cfg: RunConfig) -> data_mod.Dataset:
    d = cfg.dataset
    seed = cfg.seed_for("data")
    name = d["name"]
    if name == "two_moons":
        ds = data_mod.gen_two_moons(d["n"], d["noise_std"], seed)
    elif name == "blobs":
        ds = data_mod.gen_blobs(d["n"], d["k"], seed)
    elif name == "blob_masks":
        ds = data_mod.gen_blob_masks(d["n"], d["size"], seed, d["noise_std"])
    elif name == "blob_classes":
        ds = data_mod.gen_blob_classes(d["n"], d["size"], seed, d["channels"])
    elif name == "regression":
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(d["n"], d["in_dim"]))
        ds = data_mod.Dataset(x, x @ rng.normal(size=(d["in_dim"], d["out_dim"])), name="regression")
    elif name == "csv":
        ds = data_mod.read_csv(d["path"], d["label_column"])
    elif name == "file":
        return data_mod.load_dataset(d["path"])
    elif name == "cifar10":
        paths = d["path"] if isinstance(d["path"], list) else [d["path"]]
        ds = data_mod.read_cifar10_files(paths, d["limit"])
        if d.get("test_path"):
            tpaths = d["test_path"] if isinstance(d["test_path"], list) else [d["test_path"]]
            test = data_mod.read_cifar10_files(tpaths, d["test_limit"])
            n, m = len(ds), len(test)
            return data_mod.Dataset(np.concatenate([ds.inputs, test.inputs]),
                                    np.concatenate([ds.targets, test.targets]),
                                    np.arange(n), np.arange(n, n + m), name="cifar10")
    else:
        raise ConfigError(f"dataset.name: unknown dataset {name!r}")
    frac = d.get("test_fraction", 0.0) or 0.0
    return ds.split(frac, cfg.seed_for("split")) if frac > 0 else ds


def build_model(cfg: RunConfig, ds: data_mod.Dataset) -> Network:
    m = cfg.model
    seed = cfg.seed_for("model")
    arch = m["arch"]
    x, y = ds.inputs, ds.targets
    if arch in ("residual_mlp", "plain_mlp"):
        if x.ndim != 2:
            raise ConfigError(f"model.arch: {arch} needs (N, features) inputs, dataset has {x.shape}")
        classes = int(y.max()) + 1 if len(y) else 2
        return make_residual_mlp(m["width"], m["depth"], x.shape[1], classes, seed,
                                 skip=arch == "residual_mlp")
    if arch == "tiny_resnet":
        if x.ndim != 4:
            raise ConfigError(f"model.arch: tiny_resnet needs (N, C, H, W) inputs, dataset has {x.shape}")
        classes = max(int(y.max()) + 1 if len(y) else 10, 2)
        if ds.name == "cifar10":
            classes = 10
        return make_tiny_resnet(m["channels"], m["blocks"], classes, seed, in_channels=x.shape[1],
                                stem_stride=m["stem_stride"])
    if arch == "tiny_segnet":
        if x.ndim != 4:
            raise ConfigError(f"model.arch: tiny_segnet needs (N, C, H, W) inputs, dataset has {x.shape}")
        return make_tiny_segnet(m["channels"], m["blocks"], seed, in_channels=x.shape[1])
    if arch == "linear":
        out_dim = y.shape[1] if y.ndim == 2 else 1
        return make_linear_net(x.shape[1], out_dim, seed, hidden=m["hidden"])
    raise ConfigError(f"model.arch: unknown architecture {arch!r}")


def build_optimizer(cfg: RunConfig) -> Optimizer:
    o = dict(cfg.optimizer)
    o["weight_decay"] = o.pop("lambda")
    return Optimizer(OptimizerConfig(**o), TransformPipeline.from_config(cfg.pipeline, cfg.pipeline_scope))


def evaluate(net: Network, x, y, task: str, metric_names, cfg: RunConfig | None = None,
             chunk: int = 256) -> tuple[float, dict]:
    """Loss and metrics over a full split, processed in chunks."""
    n = x.shape[0]
    total, outs = 0.0, []
    for start in range(0, n, chunk):
        out, loss = net.forward(x[start:start + chunk], y[start:start + chunk])
        total += loss * out.shape[0]
        outs.append(out)
    out = np.concatenate(outs)
    values = {}
    if task == "classification" and "accuracy" in metric_names:
        values["accuracy"] = M.accuracy(out.argmax(axis=1), y)
    if task == "segmentation":
        prob = 1.0 / (1.0 + np.exp(-out[:, 0]))
        masks = np.asarray(y).reshape(prob.shape)
        counts = M.ConfusionCounts(0, 0, 0, 0)
        dists, skipped = [], 0
        for p, t in zip(prob, masks):
            counts = counts + M.confusion(p, t, 0.5)
            if "hausdorff" in metric_names:
                ps, ts = M.mask_to_pointset(p), M.mask_to_pointset(t)
                if len(ps) and len(ts):
                    dists.append(M.hausdorff(ps, ts))
                else:
                    skipped += 1
        if "f1" in metric_names:
            values["f1"] = M.f1(counts)
        if "tversky" in metric_names:
            a = cfg.eval.tversky_alpha if cfg else 0.5
            b = cfg.eval.tversky_beta if cfg else 0.5
            values["tversky"] = M.tversky(counts, a, b)
        if "hausdorff" in metric_names:
            values["hausdorff"] = float(np.mean(dists)) if dists else math.nan
            values["hausdorff_skipped"] = skipped
    return total / n, values


def train(cfg: RunConfig, log_path=None, checkpoint_path=None) -> RunResult:
    """Run one configured training job. Deterministic given ``cfg``."""
    ds = build_dataset(cfg)
    x_tr, y_tr = ds.train
    bs = cfg.schedule.batch_size
    if bs > len(x_tr):
        raise ConfigError(f"schedule.batch_size: {bs} exceeds training set size {len(x_tr)}")
    net = build_model(cfg, ds)
    net.validate(x_tr.shape[1:])
    opt = build_optimizer(cfg)
    task = task_of(cfg)
    chash = cfg.config_hash()
    run_id = f"{cfg.name}-{chash[:8]}"
    shuffle = np.random.default_rng(cfg.seed_for("shuffle"))
    result = RunResult(cfg, net)
    sched = cfg.schedule
    t0 = time.perf_counter()
    fh = open(log_path, "w") if log_path else None

    def emit(rec: MetricsRecord):
        result.records.append(rec)
        if fh:
            fh.write(rec.to_json() + "\n")
            fh.flush()

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(1, sched.epochs + 1):
                opt.lr = lr_at_epoch(cfg.optimizer["lr"], epoch, sched.lr_decay_factor,
                                     sched.lr_decay_every, sched.lr_decay_start_epoch)
                order = shuffle.permutation(len(x_tr))
                batch_losses = []
                for b, start in enumerate(range(0, len(order), bs)):
                    idx = order[start:start + bs]
                    loss, grads = net.backward(x_tr[idx], y_tr[idx])
                    if is_divergent(loss):
                        result.diverged_at = (epoch, b)
                        break
                    opt.step(net, grads)
                    batch_losses.append(loss)
                if result.diverged:
                    emit(MetricsRecord(run_id, epoch, "train", math.nan, {}, time.perf_counter() - t0,
                                       cfg.seed, chash, diverged=True))
                    log.warning("divergence at epoch %d batch %d", *result.diverged_at)
                    break
                result.epoch_train_loss.append(float(np.mean(batch_losses)))
                if epoch % cfg.eval.eval_every == 0 or epoch == sched.epochs:
                    for split, (xs, ys) in (("train", (x_tr, y_tr)), ("test", ds.test)):
                        if len(xs) == 0:
                            continue
                        loss, values = evaluate(net, xs, ys, task, cfg.eval.metrics, cfg)
                        if split == "train":
                            values.update(running_loss=result.epoch_train_loss[-1], lr=opt.lr)
                        emit(MetricsRecord(run_id, epoch, split, loss, values, time.perf_counter() - t0,
                                           cfg.seed, chash, diverged=False))
                    log.info("epoch %d train_loss=%.5f %s", epoch, result.epoch_train_loss[-1],
                             result.records[-1].metrics)
    finally:
        if fh:
            fh.close()
    if checkpoint_path:
        save_network(net, checkpoint_path, meta={"run_id": run_id, "config_hash": chash})
    return result


def eval_checkpoint(checkpoint, cfg: RunConfig | None = None, dataset_path=None,
                    metric_names=("loss", "accuracy", "f1", "tversky", "hausdorff")) -> MetricsRecord:
    net, meta = load_network(checkpoint)
    if dataset_path is not None:
        ds = data_mod.load_dataset(dataset_path)
    elif cfg is not None:
        ds = build_dataset(cfg)
    else:
        raise ConfigError("eval: need a config or a dataset file")
    x, y = (ds.test if len(ds.test_idx) else ds.train)
    try:
        net.validate(x.shape[1:])
    except Exception as exc:
        raise ConfigError(f"eval: checkpoint does not accept dataset inputs of shape {x.shape[1:]}: {exc}") from None
    task = {"bce": "segmentation", "softmax_ce": "classification"}.get(net.loss, "regression")
    t0 = time.perf_counter()
    try:
        loss, values = evaluate(net, x, y, task, metric_names, cfg)
    except Exception as exc:
        raise ConfigError(f"eval: checkpoint outputs do not match dataset targets: {exc}") from None
    return MetricsRecord(meta.get("run_id", "eval"), 0, "test" if len(ds.test_idx) else "train",
                         loss, values, time.perf_counter() - t0, cfg.seed if cfg else 0,
                         meta.get("config_hash", ""))


def run_gradcheck(cfg: RunConfig):
    """Finite-difference check of the configured model on a small batch."""
    ds = build_dataset(cfg)
    x, y = ds.train
    net = build_model(cfg, ds)
    order = np.random.default_rng(cfg.seed_for("shuffle")).permutation(len(x))
    # central differences straddling a ReLU kink are meaningless; keep samples clear of them
    idx = kink_free_indices(net, x, cfg.gradcheck.batch, 10 * cfg.gradcheck.h, order)
    if len(idx) < cfg.gradcheck.batch:
        log.warning("only %d kink-free samples found for grad check", len(idx))
    if not idx:
        idx = order[:cfg.gradcheck.batch]
    return grad_check(net, x[idx], y[idx], h=cfg.gradcheck.h, tol=cfg.gradcheck.tol)


def method_config(cfg: RunConfig, method: str) -> RunConfig:
    if method not in METHODS:
        raise ConfigError(f"compare: unknown method {method!r} (expected one of {list(METHODS)})")
    _, opt_changes, pipeline = METHODS[method]
    opt = {**cfg.optimizer, "kind": "adam", "lambda": 0.0, **opt_changes}
    return cfg.with_overrides(name=f"{cfg.name}-{method}", optimizer=opt, pipeline=pipeline)


def smoothed(values, window: int = 5) -> list[float]:
    """Trailing moving average (shorter window at the start)."""
    return [float(np.mean(values[max(0, i - window + 1):i + 1])) for i in range(len(values))]


def compare(cfg: RunConfig, methods, out_dir=None) -> list[dict]:
    if not methods:
        raise ConfigError("compare: at least one method is required")
    order = [m for m in METHODS if m in methods]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"compare: unknown method {m!r} (expected one of {list(METHODS)})")
    rows = []
    for method in order:
        mcfg = method_config(cfg, method)
        log_path = Path(out_dir) / f"{method}.jsonl" if out_dir else None
        res = train(mcfg, log_path=log_path)
        test = res.final("test") or res.final("train")
        rows.append({
            "method": method, "label": METHODS[method][0], "dataset": cfg.dataset["name"],
            "model": cfg.model["arch"], "seed": cfg.seed, "diverged": res.diverged,
            "train_loss": res.epoch_train_loss[-1] if res.epoch_train_loss else math.nan,
            "epoch_train_loss": res.epoch_train_loss,
            "test_split": test.split if test else None,
            **({k: v for k, v in test.metrics.items()} if test else {}),
        })
    return rows


def format_table(rows: list[dict], task: str) -> str:
    if task == "segmentation":
        cols = [("Test F1", "f1"), ("Test Tversky", "tversky"), ("Test Hausdorff Dist", "hausdorff")]
    else:
        cols = [("Test Accuracy", "accuracy"), ("Train Loss", "train_loss")]
    header = ["Datasets", "Model", "Methods"] + [c for c, _ in cols]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        cells = [r["dataset"], r["model"], r["label"] + (" (diverged)" if r["diverged"] else "")]
        for _, key in cols:
            v = r.get(key, math.nan)
            cells.append(f"{v:.4f}" if isinstance(v, float) else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    seeds = sorted({r["seed"] for r in rows})
    lines.append(f"\nshared seed: {', '.join(map(str, seeds))}; metrics on the "
                 f"{rows[0]['test_split'] if rows else '-'} split")
    return "\n".join(lines)
