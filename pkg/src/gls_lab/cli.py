"""Experiment harness: data generation, noise injection, training runs, sweeps and reports.

Sweep config (JSON, ``"version": 1``)::

    {
      "version": 1,
      "dataset": {"source": "synthetic", "kind": "type1", "n_per_class": 500, "flip_mode": "coin"},
      "split": [0.7, 0.1, 0.2],
      "noise": [0.0, 0.2, {"kind": "binary_asym", "e0": 0.1, "e1": 0.3}],
      "r_grid": [0.4, 0.0, -0.4, "neg-inf"],
      "seeds": [0, 1, 2, 3, 4],
      "r_star": 0.2,
      "loss": {"kind": "gls"},
      "train": {"epochs": 200, "batch_size": 128, "optimizer": "adam", "lr": 0.1,
                "lr_decay_every": 40, "lr_decay_factor": 0.1, "hidden": [16, 16]},
      "bias_variance": {"replicates": 10}
    }

A CSV dataset uses ``{"source": "csv", "path": ..., "label_column": "label",
"delimiter": ","}``; features are standardized with statistics of the
training split. ``train.lr_grid`` (optional) selects the learning rate per
cell by validation accuracy on the noisy validation labels.

Each cell ``(noise, r, seed)`` is one deterministic run: the seed fixes the
synthetic draw, the split, the label noise (train and validation; the test
split stays clean) and the network initialization. Records are JSON lines in
``records.jsonl``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .core_types import LabeledDataset, NoiseSpec, build_transition
from .datagen import SyntheticSpec, gen_synthetic, load_csv, split, standardize_splits, write_csv
from .errors import DivergedTrainingError, GLSError
from .losses import LossSpec
from .metrics import ConfidenceReport, bias_variance_from_predictions, bootstrap_indices
from .noise_math import inject_noise, r_opt_binary, r_opt_multiclass
from .trainer import OptimizerSpec, TrainConfig, predict_and_accuracy, save_checkpoint, train

CONFIG_VERSION = 1
RECORD_VERSION = 1
NEG_INF = "neg-inf"
HIST_BINS = 20
ROUND_DIGITS = 12
RECORDS_FILE = "records.jsonl"
BV_FILE = "bias_variance.jsonl"


# --------------------------------------------------------------------------- config


def parse_rate(v) -> float:
    if isinstance(v, str):
        if v.strip().lower() in (NEG_INF, "-inf"):
            return -math.inf
        v = float(v)
    r = float(v)
    if math.isnan(r) or r > 1:
        raise GLSError(f"smooth rate must be <= 1, got {v!r}")
    return r


def rate_key(r: float) -> str:
    return NEG_INF if math.isinf(r) else repr(float(r))


@dataclass(frozen=True)
class SweepConfig:
    dataset: dict
    noise: tuple
    r_grid: tuple
    seeds: tuple
    train: dict = field(default_factory=dict)
    loss: dict = field(default_factory=lambda: {"kind": "gls"})
    split: tuple = (0.7, 0.1, 0.2)
    r_star: float | None = None
    bias_variance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.noise or not self.r_grid or not self.seeds:
            raise GLSError("noise, r_grid and seeds must be nonempty")
        object.__setattr__(self, "noise", tuple(n if isinstance(n, NoiseSpec) else NoiseSpec.from_json(n) for n in self.noise))
        object.__setattr__(self, "r_grid", tuple(parse_rate(r) for r in self.r_grid))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        keys = [n.key() for n in self.noise]
        if len(set(keys)) != len(keys) or len(set(self.r_grid)) != len(self.r_grid) or len(set(self.seeds)) != len(self.seeds):
            raise GLSError("grid entries must be unique")
        if self.dataset.get("source", "synthetic") not in ("synthetic", "csv"):
            raise GLSError(f"unknown dataset source {self.dataset.get('source')!r}")

    @classmethod
    def from_json(cls, obj: dict) -> "SweepConfig":
        if obj.get("version") != CONFIG_VERSION:
            raise GLSError(f"config version must be {CONFIG_VERSION}, got {obj.get('version')!r}")
        known = {"version", "dataset", "noise", "r_grid", "seeds", "train", "loss", "split", "r_star", "bias_variance"}
        extra = set(obj) - known
        if extra:
            raise GLSError(f"unknown config keys: {sorted(extra)}")
        return cls(
            dataset=dict(obj.get("dataset", {"source": "synthetic"})),
            noise=tuple(obj["noise"]),
            r_grid=tuple(obj["r_grid"]),
            seeds=tuple(obj["seeds"]),
            train=dict(obj.get("train", {})),
            loss=dict(obj.get("loss", {"kind": "gls"})),
            split=tuple(obj.get("split", (0.7, 0.1, 0.2))),
            r_star=obj.get("r_star"),
            bias_variance=dict(obj.get("bias_variance", {})),
        )

    def to_json(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "dataset": self.dataset,
            "noise": [n.to_json() for n in self.noise],
            "r_grid": [NEG_INF if math.isinf(r) else r for r in self.r_grid],
            "seeds": list(self.seeds),
            "train": self.train,
            "loss": self.loss,
            "split": list(self.split),
            "r_star": self.r_star,
            "bias_variance": self.bias_variance,
        }

    def cells(self):
        return [(n, r, s) for n in self.noise for r in self.r_grid for s in self.seeds]


def load_config(path) -> SweepConfig:
    return SweepConfig.from_json(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------- single cell


def build_datasets(cfg: SweepConfig, noise: NoiseSpec, seed: int):
    """(train, val, test) for one cell; train/val carry noisy labels plus clean ones."""
    d = cfg.dataset
    if d.get("source", "synthetic") == "synthetic":
        spec_fields = {k: v for k, v in d.items() if k not in ("source", "seed")}
        ds = gen_synthetic(SyntheticSpec(**spec_fields, seed=seed))
        tr, va, te = split(ds, cfg.split, seed)
    else:
        ds = load_csv(d["path"], d.get("label_column", "label"), d.get("delimiter", ","))
        ds = LabeledDataset(ds.features, ds.labels, ds.num_classes)
        tr, va, te = standardize_splits(*split(ds, cfg.split, seed))
    K = tr.num_classes
    if not noise.is_clean:
        T = build_transition(noise, K)
        tr = inject_noise(tr, T, [seed, 1])
        va = inject_noise(va, T, [seed, 2])
    return tr, va, te


def make_loss(cfg: SweepConfig, r: float, train_ds: LabeledDataset, noise: NoiseSpec, seed: int = 0) -> LossSpec:
    kind = cfg.loss.get("kind", "gls")
    if kind == "gls":
        return LossSpec.gls(r)
    if kind == "gls_c":
        clean_frac = float(cfg.loss.get("clean_fraction", 0.1))
        n_clean = max(2, int(round(clean_frac * len(train_ds))))
        idx = np.random.default_rng([seed, 3]).permutation(len(train_ds))[:n_clean]
        sub = train_ds.subset(np.sort(idx))
        clean = LabeledDataset(sub.features, sub.clean_labels if sub.clean_labels is not None else sub.labels, sub.num_classes)
        return LossSpec("gls_c", r=r, e0_hat=float(cfg.loss.get("e0_hat", noise.e0)),
                        e1_hat=float(cfg.loss.get("e1_hat", noise.e1)), clean_subset=clean)
    raise GLSError(f"sweeps vary the smooth rate; loss kind {kind!r} is not supported here")


def make_train_config(cfg: SweepConfig, loss: LossSpec, seed: int, lr: float | None = None) -> TrainConfig:
    t = cfg.train
    lr = float(t.get("lr", 0.1)) if lr is None else lr
    if t.get("optimizer", "adam") == "adam":
        opt = OptimizerSpec("adam", lr=lr, weight_decay=float(t.get("weight_decay", 0.0)))
    else:
        opt = OptimizerSpec.sgd(lr, float(t.get("momentum", 0.9)), float(t.get("weight_decay", 1e-4)),
                                bool(t.get("nesterov", True)))
    return TrainConfig(
        loss=loss,
        epochs=int(t.get("epochs", 200)),
        batch_size=int(t.get("batch_size", 128)),
        optimizer=opt,
        lr_decay_every=int(t.get("lr_decay_every", 40)),
        lr_decay_factor=float(t.get("lr_decay_factor", 0.1)),
        seed=seed,
        hidden=tuple(int(h) for h in t.get("hidden", (16, 16))),
        warmup=t.get("warmup"),
        track_metrics=False,
    )


def _num(v):
    # JSON has no NaN; empty subsets are recorded as null.
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _hist(values) -> list[int]:
    return np.histogram(values, bins=HIST_BINS, range=(-1.0, 1.0))[0].astype(int).tolist()


def run_cell(cfg_json: dict, noise_json, r_key: str, seed: int) -> dict:
    """One training run; returns a JSON-ready record (status ``failed`` on divergence)."""
    cfg = SweepConfig.from_json(cfg_json)
    noise = NoiseSpec.from_json(noise_json)
    r = parse_rate(r_key)
    rec = {"version": RECORD_VERSION, "noise": noise.key(), "noise_spec": noise.to_json(), "r": rate_key(r),
           "seed": seed, "backend": kernels.BACKEND}
    try:
        tr, va, te = build_datasets(cfg, noise, seed)
        loss = make_loss(cfg, r, tr, noise, seed)
        lrs = cfg.train.get("lr_grid") or [float(cfg.train.get("lr", 0.1))]
        best = None
        for lr in lrs:
            try:
                rep = train(tr, None, make_train_config(cfg, loss, seed, float(lr)))
            except DivergedTrainingError:
                if len(lrs) == 1:
                    raise
                continue
            _, val_acc = predict_and_accuracy(rep.model, va, use_clean=False)
            if best is None or val_acc > best[0]:
                best = (val_acc, float(lr), rep)
        if best is None:
            raise DivergedTrainingError(-1, float("nan"))
        val_acc, lr, rep = best
        _, test_acc = predict_and_accuracy(rep.model, te)
        conf = ConfidenceReport.from_predictions(rep.model.predict_proba(te.features), te.labels)
        correct = np.argmax(rep.model.predict_proba(te.features), axis=1) == te.labels
        rec.update(
            status="ok",
            lr=lr,
            test_accuracy=test_acc,
            val_accuracy=val_acc,
            expected_mc=conf.expected_mc,
            mc_plus_mean=_num(conf.mc_correct_mean),
            mc_minus_mean=_num(conf.mc_wrong_mean),
            n_plus=conf.n_plus,
            n_minus=conf.n_minus,
            train_loss_final=rep.train_loss[-1],
            mc_hist_correct=_hist(conf.mc[correct]),
            mc_hist_wrong=_hist(conf.mc[~correct]),
        )
    except (DivergedTrainingError, GLSError, ValueError) as exc:
        rec.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return rec


# --------------------------------------------------------------------------- sweep


def _cell_key(noise_key: str, r_key: str, seed: int):
    return (noise_key, r_key, int(seed))


def read_records(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            # A torn final line from an interrupted run is dropped and recomputed.
            continue
        if rec.get("version") != RECORD_VERSION:
            raise GLSError(f"{path}:{ln}: unsupported record version {rec.get('version')!r}")
        out.append(rec)
    return out


def resolve_threads(cli_threads: int | None) -> int:
    env = os.environ.get("GLS_LAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(cli_threads or 1))


@dataclass
class SweepResult:
    config: SweepConfig
    records: list

    def ok_records(self):
        return [r for r in self.records if r.get("status") == "ok"]

    def aggregate(self, seeds=None) -> dict:
        """``{(noise_key, r_key): (mean, std, n)}`` over successful records (std with ddof=0)."""
        seeds = None if seeds is None else set(int(s) for s in seeds)
        groups: dict = {}
        for rec in self.ok_records():
            if seeds is not None and rec["seed"] not in seeds:
                continue
            groups.setdefault((rec["noise"], rec["r"]), []).append(rec["test_accuracy"])
        return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}

    def empirical_r_opt(self, seeds=None) -> dict:
        """Per noise key: the r with the best mean test accuracy (ties toward r closest to 0, then larger r)."""
        agg = self.aggregate(seeds)
        out = {}
        for noise in self.config.noise:
            cands = [(round(agg[(noise.key(), rate_key(r))][0], ROUND_DIGITS), r)
                     for r in self.config.r_grid if (noise.key(), rate_key(r)) in agg]
            if not cands:
                continue
            best = max(c[0] for c in cands)
            winners = [r for a, r in cands if a == best]
            out[noise.key()] = (sorted(winners, key=lambda r: (abs(r), -r))[0], best)
        return out


def run_sweep(cfg: SweepConfig, out_dir, threads: int = 1, resume: bool = False, log=None) -> SweepResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec_path = out / RECORDS_FILE
    cfg_path = out / "config.json"
    cfg_text = json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n"
    existing = read_records(rec_path)
    if existing and not resume:
        raise GLSError(f"{rec_path} already has records; pass --resume to continue or use a fresh --out")
    if resume and cfg_path.exists() and cfg_path.read_text() != cfg_text:
        raise GLSError(f"{cfg_path} differs from the current config; refusing to mix sweeps")
    cfg_path.write_text(cfg_text)
    done = {_cell_key(r["noise"], r["r"], r["seed"]) for r in existing}
    todo = [(n, r, s) for n, r, s in cfg.cells() if _cell_key(n.key(), rate_key(r), s) not in done]
    cfg_json = cfg.to_json()
    jobs = [(cfg_json, n.to_json(), rate_key(r), s) for n, r, s in todo]
    records = list(existing)
    with open(rec_path, "a", encoding="utf-8") as fh:
        def emit(rec):
            fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")
            fh.flush()
            records.append(rec)
            if log:
                log(f"{rec['noise']} r={rec['r']} seed={rec['seed']} {rec['status']} "
                    f"acc={rec.get('test_accuracy') or float('nan'):.4f}")

        if threads > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for rec in pool.map(run_cell, *zip(*jobs)):
                    emit(rec)
        else:
            for job in jobs:
                emit(run_cell(*job))
    return SweepResult(cfg, records)


def load_result(result_dir) -> SweepResult:
    d = Path(result_dir)
    if not (d / "config.json").exists() or not (d / RECORDS_FILE).exists():
        raise GLSError(f"{d} holds no sweep results")
    recs = read_records(d / RECORDS_FILE)
    if not recs:
        raise GLSError(f"{d / RECORDS_FILE} is empty")
    return SweepResult(load_config(d / "config.json"), recs)


# --------------------------------------------------------------------------- r_opt prediction


def predict_r_opt(r_star: float, noise: NoiseSpec, K: int = 2) -> float:
    """Closed-form smooth rate cancelling the global confidence bias.

    Symmetric noise uses the K-class formula. Binary asymmetric and sparse
    (pairwise binary) noise use the binary formula with ``e0``, the rate under
    which the exact decomposition's global coefficient vanishes; for equal
    pair rates this is the symmetric binary value.
    """
    if noise.kind == "symmetric":
        return r_opt_multiclass(r_star, noise.epsilon, K)
    if noise.kind in ("binary_asym", "sparse"):
        return r_opt_binary(r_star, noise.e0)
    raise GLSError(f"no closed-form r_opt for noise kind {noise.kind!r}")


# --------------------------------------------------------------------------- reports


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def report(result_dir, out_dir=None) -> dict:
    """Write report CSVs and a text summary; returns ``{name: path}``. Byte-deterministic."""
    res = load_result(result_dir)
    cfg = res.config
    out = Path(out_dir) if out_dir else Path(result_dir) / "report"
    out.mkdir(parents=True, exist_ok=True)
    agg = res.aggregate()
    noise_keys = [n.key() for n in cfg.noise]
    files = {}

    rows_m, rows_s = [], []
    for r in cfg.r_grid:
        rk = rate_key(r)
        rows_m.append([rk] + [agg.get((nk, rk), (math.nan,))[0] for nk in noise_keys])
        rows_s.append([rk] + [agg.get((nk, rk), (math.nan, math.nan))[1] for nk in noise_keys])
    files["accuracy_table"] = _write(out / "accuracy_table.csv", _csv_text(["r"] + noise_keys, rows_m))
    files["accuracy_std"] = _write(out / "accuracy_std.csv", _csv_text(["r"] + noise_keys, rows_s))

    ropt = res.empirical_r_opt()
    K = _num_classes(cfg)
    rows = []
    for n in cfg.noise:
        if n.key() not in ropt:
            continue
        r_emp, acc = ropt[n.key()]
        pred = None
        if cfg.r_star is not None:
            try:
                pred = predict_r_opt(float(cfg.r_star), n, K)
            except GLSError:
                pred = None
        rate = n.epsilon if n.kind == "symmetric" else n.e1
        rows.append([n.key(), rate, rate_key(r_emp), acc, pred])
    files["r_opt"] = _write(out / "r_opt.csv", _csv_text(
        ["noise", "noise_rate", "empirical_r_opt", "best_mean_accuracy", "predicted_r_opt"], rows))

    hist_rows = []
    edges = np.linspace(-1.0, 1.0, HIST_BINS + 1)
    for rec in sorted(res.ok_records(), key=lambda x: (x["noise"], parse_rate(x["r"]), x["seed"])):
        for subset in ("correct", "wrong"):
            for b, count in enumerate(rec[f"mc_hist_{subset}"]):
                hist_rows.append([rec["noise"], rec["r"], rec["seed"], subset, float(edges[b]), float(edges[b + 1]), count])
    files["confidence_hist"] = _write(out / "confidence_hist.csv", _csv_text(
        ["noise", "r", "seed", "subset", "bin_lo", "bin_hi", "count"], hist_rows))

    bv_path = Path(result_dir) / BV_FILE
    if bv_path.exists():
        bv = [json.loads(line) for line in bv_path.read_text().splitlines() if line.strip()]
        bv.sort(key=lambda x: (x["noise"], parse_rate(x["r"])))
        files["bias_variance"] = _write(out / "bias_variance.csv", _csv_text(
            ["noise", "r", "bias", "variance", "replicates", "test_accuracy_mean"],
            [[b["noise"], b["r"], b["bias"], b["variance"], b["replicates"], b["test_accuracy_mean"]] for b in bv]))

    failed = [r for r in res.records if r.get("status") != "ok"]
    lines = [f"cells: {len(res.records)} recorded, {len(failed)} failed (excluded from aggregation)"]
    for nk in noise_keys:
        if nk in ropt:
            lines.append(f"{nk}: empirical r_opt = {rate_key(ropt[nk][0])} (mean accuracy {ropt[nk][1]:.6f})")
    for rec in sorted(failed, key=lambda x: (x["noise"], x["r"], x["seed"])):
        lines.append(f"FAILED {rec['noise']} r={rec['r']} seed={rec['seed']}: {rec.get('error', '')}")
    lines.append("r_opt is the argmax of mean test accuracy over r; ties go to the r closest to 0, then the larger r.")
    files["summary"] = _write(out / "summary.txt", "\n".join(lines) + "\n")
    return files


def _num_classes(cfg: SweepConfig) -> int:
    if cfg.dataset.get("source", "synthetic") == "synthetic":
        return 2
    return load_csv(cfg.dataset["path"], cfg.dataset.get("label_column", "label"), cfg.dataset.get("delimiter", ",")).num_classes


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


# --------------------------------------------------------------------------- bias / variance


def run_bias_variance(cfg: SweepConfig, out_dir, replicates: int | None = None, log=None) -> list[dict]:
    """For every (noise, r): bootstrap-resampled training sets, one model each, evaluated on the clean test split.

    Uses the first configured seed for the data draw and split.
    """
    R = int(replicates or cfg.bias_variance.get("replicates", 10))
    if R < 2:
        raise GLSError("need at least 2 replicates")
    seed = cfg.seeds[0]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for noise in cfg.noise:
        tr, _, te = build_datasets(cfg, noise, seed)
        for r in cfg.r_grid:
            loss = make_loss(cfg, r, tr, noise, seed)
            preds, accs = [], []
            for k in range(R):
                boot = tr.subset(bootstrap_indices(len(tr), [seed, k]))
                rep = train(boot, None, make_train_config(cfg, loss, seed * 1000 + k))
                preds.append(rep.model.predict_proba(te.features))
                accs.append(predict_and_accuracy(rep.model, te)[1])
            bv = bias_variance_from_predictions(preds, te.labels)
            row = {"noise": noise.key(), "r": rate_key(r), "bias": bv.bias, "variance": bv.variance,
                   "replicates": R, "test_accuracy_mean": float(np.mean(accs))}
            rows.append(row)
            if log:
                log(f"{row['noise']} r={row['r']} bias={bv.bias:.6f} variance={bv.variance:.6f}")
    (out / BV_FILE).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
    return rows


# --------------------------------------------------------------------------- entry point


def _cmd_gen_data(a):
    spec = SyntheticSpec(kind=a.kind, n_per_class=a.n_per_class, seed=a.seed or 0, flip_mode=a.flip_mode)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(gen_synthetic(spec), out)
    print(f"wrote {out}")
    return 0


def _cmd_inject_noise(a):
    ds = load_csv(a.input)
    ds = LabeledDataset(ds.features, ds.labels, ds.num_classes)
    noise = NoiseSpec.from_json(json.loads(a.noise))
    noisy = inject_noise(ds, build_transition(noise, ds.num_classes), a.seed or 0)
    write_csv(noisy, a.out)
    print(f"wrote {a.out}: {int(np.sum(noisy.labels != noisy.clean_labels))} of {len(noisy)} labels changed")
    return 0


def _cmd_train(a):
    cfg = load_config(a.config)
    seed = cfg.seeds[0] if a.seed is None else a.seed
    r = cfg.r_grid[0] if a.r is None else parse_rate(a.r)
    noise = cfg.noise[0] if a.noise is None else NoiseSpec.from_json(json.loads(a.noise))
    tr, _, te = build_datasets(cfg, noise, seed)
    tc = make_train_config(cfg, make_loss(cfg, r, tr, noise, seed), seed)
    rep = train(tr, te, replace(tc, track_metrics=True))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(rep.model, out / "model.json")
    summary = {"noise": noise.key(), "r": rate_key(r), "seed": seed, "backend": kernels.BACKEND,
               "train_loss": rep.train_loss, "train_accuracy": rep.train_accuracy,
               "test_accuracy": rep.test_accuracy, "expected_mc": rep.expected_mc}
    (out / "train_report.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(f"final test accuracy {rep.final_test_accuracy:.4f}, expected model confidence {rep.expected_mc[-1]:.4f}")
    return 0


def _cmd_sweep(a):
    cfg = load_config(a.config)
    if a.seed is not None:
        cfg = SweepConfig.from_json({**cfg.to_json(), "seeds": [a.seed]})
    res = run_sweep(cfg, a.out, resolve_threads(a.threads), a.resume, log=print if a.verbose else None)
    for nk, (r, acc) in res.empirical_r_opt().items():
        print(f"{nk}: empirical r_opt = {rate_key(r)} (mean accuracy {acc:.4f})")
    return 0


def _cmd_report(a):
    for name, path in report(a.results, a.out).items():
        print(f"{name}: {path}")
    return 0


def _cmd_verify(a):
    from .verify import main_lines

    lines, ok = main_lines(a.seed or 0)
    print("\n".join(lines))
    return 0 if ok else 1


def _cmd_bias_variance(a):
    cfg = load_config(a.config)
    run_bias_variance(cfg, a.out, a.replicates, log=print)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gls-lab", description="Generalized label smoothing experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic 2-D dataset as CSV")
    g.add_argument("--kind", choices=("type1", "type2"), default="type1")
    g.add_argument("--n-per-class", type=int, default=500)
    g.add_argument("--flip-mode", choices=("coin", "other"), default="coin")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_data)

    n = sub.add_parser("inject-noise", help="resample labels of a CSV through a transition matrix")
    n.add_argument("--in", dest="input", required=True)
    n.add_argument("--noise", required=True, help='JSON noise spec, e.g. 0.2 or {"kind":"binary_asym","e0":0.1,"e1":0.3}')
    n.add_argument("--seed", type=int)
    n.add_argument("--out", required=True)
    n.set_defaults(func=_cmd_inject_noise)

    t = sub.add_parser("train", help="one training run from a sweep config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--r", help="smooth rate (default: first of r_grid); 'neg-inf' allowed")
    t.add_argument("--noise", help="JSON noise spec (default: first of the noise grid)")
    t.add_argument("--out", required=True)
    t.set_defaults(func=_cmd_train)

    s = sub.add_parser("sweep", help="run every (noise, r, seed) cell")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=_cmd_sweep)

    r = sub.add_parser("report", help="tables and plot data from sweep records")
    r.add_argument("results")
    r.add_argument("--out")
    r.set_defaults(func=_cmd_report)

    v = sub.add_parser("verify", help="run the identity suite")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=_cmd_verify)

    b = sub.add_parser("bias-variance", help="bootstrap bias/variance per (noise, r)")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--replicates", type=int)
    b.set_defaults(func=_cmd_bias_variance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GLSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
