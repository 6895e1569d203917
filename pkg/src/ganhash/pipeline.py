"""Experiment driver: dataset preparation, GAN pretraining, joint training
per code width and synthetic fraction, indexing, the LSH baseline, metric
reports, and synthetic-sample grids. Every artifact is a pure function of
the config and its seeds, so a re-run overwrites files byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import lsh as lsh_mod
from .data import Dataset, load_cifar10, make_toy_dataset, split_supervised
from .errors import ConfigError
from .evaluation import EvalReport, evaluate, evaluate_codes
from .gan import GanConfig, GanState, generate_batch, load_gan, pretrain_gan, save_gan
from .io import load_arrays, save_arrays
from .model import HashModelConfig, build_hash_model, load_hash_model, save_hash_model
from .retrieval import load_codes, save_codes
from .trainer import TrainConfig, train, write_log_csv

DATA_ROOT_ENV = "GANHASH_DATA_ROOT"


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "toy"  # "toy" | "cifar10"
    class_count: int = 4
    per_class: int = 500
    image_size: int = 8
    label_mode: str = "single"
    seed: int = 7
    query_per_class: int = 50
    query_seed: int = 1007
    path: str | None = None  # cifar10 batch directory or file
    include_queries_in_db: bool = False


@dataclass(frozen=True)
class SplitSpec:
    labeled_per_class: int = 50
    seed: int = 13


@dataclass(frozen=True)
class EvalSpec:
    radius: int = 2
    top_n: int | None = None
    ks: list = field(default_factory=lambda: [1, 5, 10, 50])


@dataclass(frozen=True)
class SampleGridSpec:
    per_class: int = 16
    seed: int = 11
    upscale: int = 8


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = DatasetSpec()
    split: SplitSpec = SplitSpec()
    gan: GanConfig = GanConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalSpec = EvalSpec()
    samples: SampleGridSpec = SampleGridSpec()
    code_bits: list = field(default_factory=lambda: [12])
    synthetic_fractions: list = field(default_factory=lambda: [1.0])
    gan_seed: int = 3
    model_seed: int = 5
    lsh_seed: int = 17

    def to_json_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "dataset": DatasetSpec,
    "split": SplitSpec,
    "gan": GanConfig,
    "train": TrainConfig,
    "eval": EvalSpec,
    "samples": SampleGridSpec,
}


def _strict(cls, d: dict, context: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {context}")
    return cls(**d)


def config_from_dict(d: dict) -> ExperimentConfig:
    """Strict parse: any unrecognized key raises ConfigError naming it."""
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object")
    top = dict(d)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = top.pop(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section {name!r} must be an object")
        kwargs[name] = _strict(cls, section, f"section {name!r}")
    leftover_fields = {
        f.name for f in dataclasses.fields(ExperimentConfig) if f.name not in _SECTIONS
    }
    unknown = sorted(set(top) - leftover_fields)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} at config top level")
    kwargs.update(top)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return config_from_dict(raw)


def shift_seeds(cfg: ExperimentConfig, offset: int) -> ExperimentConfig:
    """Add ``offset`` to every seed in the config (CLI --seed support)."""
    if offset == 0:
        return cfg
    return dataclasses.replace(
        cfg,
        dataset=dataclasses.replace(
            cfg.dataset,
            seed=cfg.dataset.seed + offset,
            query_seed=cfg.dataset.query_seed + offset,
        ),
        split=dataclasses.replace(cfg.split, seed=cfg.split.seed + offset),
        train=dataclasses.replace(cfg.train, seed=cfg.train.seed + offset),
        samples=dataclasses.replace(cfg.samples, seed=cfg.samples.seed + offset),
        gan_seed=cfg.gan_seed + offset,
        model_seed=cfg.model_seed + offset,
        lsh_seed=cfg.lsh_seed + offset,
    )


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedData:
    pool: Dataset  # retrieval database source (labeled + unlabeled)
    labeled: Dataset
    unlabeled: Dataset
    queries: Dataset
    db: Dataset  # pool, expanded with queries when configured


def _resolve_path(path: str) -> str:
    if os.path.isabs(path):
        return path
    root = os.environ.get(DATA_ROOT_ENV)
    return os.path.join(root, path) if root else path


def _sample_queries(full: Dataset, per_class: int, seed: int) -> tuple[Dataset, Dataset]:
    """Split a loaded dataset into (queries, pool) by per-class sampling."""
    rng = np.random.default_rng(seed)
    chosen = []
    for j in range(full.class_count):
        members = full.class_indices(j)
        if len(members) < per_class:
            raise ConfigError(
                f"class {j} has {len(members)} examples, need {per_class} queries"
            )
        pick = rng.choice(len(members), size=per_class, replace=False)
        chosen.extend(int(members[p]) for p in pick)
    chosen_idx = np.array(sorted(set(chosen)), dtype=np.int64)
    rest = np.setdiff1d(np.arange(len(full)), chosen_idx)
    return full.select(chosen_idx), full.select(rest)


def prepare_data(spec: DatasetSpec, split: SplitSpec) -> PreparedData:
    if spec.kind == "toy":
        pool = make_toy_dataset(
            spec.class_count, spec.per_class, spec.image_size, spec.label_mode, spec.seed
        )
        queries = make_toy_dataset(
            spec.class_count, spec.query_per_class, spec.image_size,
            spec.label_mode, spec.query_seed,
        )
    elif spec.kind == "cifar10":
        if not spec.path:
            raise ConfigError("dataset.path is required for kind 'cifar10'")
        full = load_cifar10(_resolve_path(spec.path))
        queries, pool = _sample_queries(full, spec.query_per_class, spec.query_seed)
    else:
        raise ConfigError(f"unknown dataset.kind {spec.kind!r}")

    labeled, unlabeled = split_supervised(pool, split.labeled_per_class, split.seed)

    if spec.include_queries_in_db:
        offset = int(pool.ids.max()) + 1 if len(pool) else 0
        db = Dataset(
            pixels=np.concatenate([pool.pixels, queries.pixels]),
            labels=np.concatenate([pool.labels, queries.labels]),
            is_labeled=np.concatenate([pool.is_labeled, queries.is_labeled]),
            ids=np.concatenate([pool.ids, queries.ids + offset]),
            class_count=pool.class_count,
            label_mode=pool.label_mode,
            true_labels=np.concatenate([pool.true_labels, queries.true_labels]),
        )
    else:
        db = pool
    return PreparedData(pool=pool, labeled=labeled, unlabeled=unlabeled,
                        queries=queries, db=db)


# ---------------------------------------------------------------------------
# Stage naming
# ---------------------------------------------------------------------------

def _tag(code_bits: int, fraction: float) -> str:
    return f"k{code_bits}_sf{int(round(fraction * 100)):03d}"


def gan_path(out):
    return os.path.join(out, "gan.ckpt")


def model_path(out, k, frac):
    return os.path.join(out, f"model_{_tag(k, frac)}.ckpt")


def _eff_gan_config(cfg: ExperimentConfig) -> GanConfig:
    return dataclasses.replace(
        cfg.gan,
        image_size=cfg.dataset.image_size if cfg.dataset.kind == "toy" else 32,
        class_count=cfg.dataset.class_count if cfg.dataset.kind == "toy" else 10,
        label_mode=cfg.dataset.label_mode if cfg.dataset.kind == "toy" else "single",
    )


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_pretrain_gan(cfg: ExperimentConfig, out: str) -> GanState:
    data = prepare_data(cfg.dataset, cfg.split)
    state = pretrain_gan(data.labeled, data.unlabeled, _eff_gan_config(cfg), cfg.gan_seed)
    save_gan(gan_path(out), state)
    return state


def stage_train(cfg: ExperimentConfig, out: str) -> None:
    data = prepare_data(cfg.dataset, cfg.split)
    gan_state = load_gan(gan_path(out))
    g = gan_state.config
    for k in cfg.code_bits:
        init = build_hash_model(
            HashModelConfig(
                image_size=g.image_size, channels=g.channels,
                class_count=g.class_count, code_bits=int(k),
                label_mode=g.label_mode,
            ),
            seed=cfg.model_seed,
            gan=gan_state,
        )
        for frac in cfg.synthetic_fractions:
            tcfg = dataclasses.replace(cfg.train, synthetic_fraction=float(frac))
            model, _, log = train(data.labeled, gan_state, init, tcfg)
            save_hash_model(model_path(out, k, frac), model)
            write_log_csv(os.path.join(out, f"trainlog_{_tag(k, frac)}.csv"), log)


def stage_index(cfg: ExperimentConfig, out: str) -> None:
    data = prepare_data(cfg.dataset, cfg.split)
    for k in cfg.code_bits:
        for frac in cfg.synthetic_fractions:
            model = load_hash_model(model_path(out, k, frac))
            index = build_index(data.db, model)
            save_codes(os.path.join(out, f"codes_model_{_tag(k, frac)}.bin"), index)


def stage_encode_lsh(cfg: ExperimentConfig, out: str) -> None:
    data = prepare_data(cfg.dataset, cfg.split)
    feats = lsh_mod.pixel_features(data.db)
    for k in cfg.code_bits:
        model = lsh_mod.fit_lsh(feats, int(k), cfg.lsh_seed)
        save_arrays(
            os.path.join(out, f"lsh_k{k}.ckpt"),
            {"projection": model.projection, "thresholds": model.thresholds},
            meta={"kind": "lsh", "code_bits": int(k)},
        )
        index = lsh_mod.build_lsh_index(data.db, model)
        save_codes(os.path.join(out, f"codes_lsh_k{k}.bin"), index)


def _write_report(out: str, name: str, report: EvalReport) -> None:
    with open(os.path.join(out, f"eval_{name}.json"), "w") as f:
        f.write(report.to_json())
        f.write("\n")
    with open(os.path.join(out, f"pr_{name}.csv"), "w") as f:
        f.write("recall,precision\n")
        for r, p in report.pr_curve:
            f.write(f"{r!r},{p!r}\n")
    with open(os.path.join(out, f"topk_{name}.csv"), "w") as f:
        f.write("k,precision\n")
        for k, p in report.precision_at_k:
            f.write(f"{k},{p!r}\n")


def stage_eval(cfg: ExperimentConfig, out: str) -> None:
    data = prepare_data(cfg.dataset, cfg.split)
    ks = [k for k in cfg.eval.ks if k <= len(data.db)]
    for k in cfg.code_bits:
        for frac in cfg.synthetic_fractions:
            model = load_hash_model(model_path(out, k, frac))
            index = load_codes(os.path.join(out, f"codes_model_{_tag(k, frac)}.bin"))
            report = evaluate(data.queries, index, model, ks,
                              cfg.eval.radius, cfg.eval.top_n)
            _write_report(out, f"model_{_tag(k, frac)}", report)

        arrays, meta = load_arrays(os.path.join(out, f"lsh_k{k}.ckpt"))
        lmodel = lsh_mod.LshModel(arrays["projection"], arrays["thresholds"])
        lindex = load_codes(os.path.join(out, f"codes_lsh_k{k}.bin"))
        qcodes = lsh_mod.lsh_encode_many(lmodel, lsh_mod.pixel_features(data.queries))
        report = evaluate_codes(qcodes, data.queries.labels, data.queries.ids,
                                lindex, ks, cfg.eval.radius, cfg.eval.top_n)
        _write_report(out, f"lsh_k{k}", report)


def stage_dump_samples(cfg: ExperimentConfig, out: str) -> None:
    gan_state = load_gan(gan_path(out))
    g = gan_state.config
    rng = np.random.default_rng(cfg.samples.seed)
    for j in range(g.class_count):
        labels = np.zeros((cfg.samples.per_class, g.class_count), dtype=np.float32)
        labels[:, j] = 1.0
        zs = rng.standard_normal((cfg.samples.per_class, g.noise_dim))
        pixels = generate_batch(gan_state, labels, zs)
        _save_grid(os.path.join(out, f"samples_class{j}.png"), pixels, cfg.samples.upscale)


def _save_grid(path, pixels: np.ndarray, upscale: int) -> None:
    n, s, _, _ = pixels.shape
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    canvas = np.zeros((rows * (s + 1) + 1, cols * (s + 1) + 1, 3), dtype=np.uint8)
    tiles = np.rint((pixels + 1.0) / 2.0 * 255.0).clip(0, 255).astype(np.uint8)
    for i in range(n):
        r, c = divmod(i, cols)
        y, x = r * (s + 1) + 1, c * (s + 1) + 1
        canvas[y : y + s, x : x + s] = tiles[i]
    img = Image.fromarray(canvas).resize(
        (canvas.shape[1] * upscale, canvas.shape[0] * upscale), Image.NEAREST
    )
    img.save(path)


STAGES = {
    "pretrain-gan": stage_pretrain_gan,
    "train": stage_train,
    "index": stage_index,
    "encode-lsh": stage_encode_lsh,
    "eval": stage_eval,
    "dump-samples": stage_dump_samples,
}
STAGE_ORDER = ["pretrain-gan", "train", "index", "encode-lsh", "eval", "dump-samples"]


def run_pipeline(cfg: ExperimentConfig, out: str, stage: str | None = None) -> None:
    """Run all stages (or a single one) into ``out``."""
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.json"), "w") as f:
        json.dump(cfg.to_json_dict(), f, sort_keys=True, indent=1)
        f.write("\n")
    names = [stage] if stage else STAGE_ORDER
    for name in names:
        if name not in STAGES:
            raise ConfigError(f"unknown stage {name!r}")
        STAGES[name](cfg, out)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def collect_reports(run_dir) -> dict:
    """{(method, K): report dict} for every eval_*.json under run_dir."""
    found = {}
    for fname in sorted(os.listdir(run_dir)):
        if not (fname.startswith("eval_") and fname.endswith(".json")):
            continue
        stem = fname[len("eval_") : -len(".json")]
        if stem.startswith("model_"):
            tag = stem[len("model_") :]  # k{K}_sf{pct}
            kpart, sfpart = tag.split("_sf")
            method = f"model_sf{sfpart}"
            k = int(kpart[1:])
        elif stem.startswith("lsh_"):
            method = "lsh"
            k = int(stem[len("lsh_k") :])
        else:
            continue
        with open(os.path.join(run_dir, fname)) as f:
            found[(method, k)] = json.load(f)
    return found


def report(run_dir) -> tuple[str, bool]:
    """Aggregate MAP per method per code width; write summary + curve CSVs.

    Returns (rendered table, complete) where ``complete`` is False when the
    directory held no reports (partial summaries still succeed).
    """
    reports = collect_reports(run_dir)
    if not reports:
        return "warning: no eval reports found in " + str(run_dir), False

    methods = sorted({m for m, _ in reports})
    widths = sorted({k for _, k in reports})
    lines = ["method," + ",".join(f"k{k}" for k in widths)]
    for m in methods:
        cells = []
        for k in widths:
            rep = reports.get((m, k))
            cells.append("" if rep is None else repr(rep["map"]))
        lines.append(m + "," + ",".join(cells))
    summary = "\n".join(lines) + "\n"
    with open(os.path.join(run_dir, "summary.csv"), "w") as f:
        f.write(summary)

    with open(os.path.join(run_dir, "curves_pr.csv"), "w") as f:
        f.write("method,k,recall,precision\n")
        for (m, k), rep in sorted(reports.items()):
            for r, p in rep["pr_curve"]:
                f.write(f"{m},{k},{r!r},{p!r}\n")
    with open(os.path.join(run_dir, "curves_topk.csv"), "w") as f:
        f.write("method,k,cutoff,precision\n")
        for (m, k), rep in sorted(reports.items()):
            for cutoff, p in rep["precision_at_k"]:
                f.write(f"{m},{k},{cutoff},{p!r}\n")

    table = ["MAP by method and code width:"]
    header = f"{'method':<16}" + "".join(f"{('k' + str(k)):>10}" for k in widths)
    table.append(header)
    for m in methods:
        row = f"{m:<16}"
        for k in widths:
            rep = reports.get((m, k))
            row += f"{rep['map']:>10.4f}" if rep else f"{'-':>10}"
        table.append(row)
    return "\n".join(table), True
