"""Stage-based pipeline with content-hashed manifests.

Each stage writes its artifacts plus a manifest (config hash, input hashes,
artifact hashes) under workdir/<stage>/. Rerunning a stage whose manifest
matches current config and inputs is a no-op; a config change against
existing artifacts is an error unless forced.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import insertion as insertion_mod
from . import metrics as metrics_mod
from .embeddings import (
    Vocabulary,
    build_frequency_table,
    build_vocabulary,
    load_embeddings,
)
from .encoder import (
    EncoderConfig,
    EncoderMethod,
    encode_article,
    encode_sentence,
    fit_principal_component,
    load_encoding,
    pc_to_json,
    save_encoding,
)
from .entities import (
    EntityTag,
    Gazetteer,
    annotate,
    build_entity_index,
    entity_from_json,
    entity_to_json,
    load_external_annotations,
    load_gazetteer,
    template_from_model_tokens,
    templatize_caption,
)
from .errors import DataError, DependencyError
from .model import (
    AttentionTrace,
    ModelDims,
    TrainingConfig,
    TrainSample,
    generate,
    load_checkpoint,
    pseudo_image_features,
    save_checkpoint,
    train,
)
from .model.kernels import BACKEND

log = logging.getLogger(__name__)

STAGES = (
    "ingest", "annotate", "encode", "train",
    "generate", "insert", "evaluate", "report",
)

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "annotate": ("ingest",),
    "encode": ("ingest",),
    "train": ("ingest", "annotate", "encode"),
    "generate": ("ingest", "encode", "train"),
    "insert": ("ingest", "annotate", "generate"),
    "evaluate": ("ingest", "annotate", "insert"),
    "report": ("evaluate",),
}


# ---------------------------------------------------------------------------
# Configuration

_DEFAULTS: dict[str, object] = {
    "corpus": "",
    "embeddings": "",
    "gazetteer": "",
    "workdir": "work",
    "seed": 0,
    "split": "0.8,0.1,0.1",
    "eval_split": "test",
    "vocab.min_count": 4,
    "caption.max_len": 31,
    "encoder.method": "avg",
    "encoder.sif_a": 1e-3,
    "encoder.max_sentences": 55,
    "encoder.include_headline": False,
    "model.d_e": 32,
    "model.hidden": 64,
    "model.d_att": 16,
    "model.regions": 4,
    "model.d_img": 8,
    "train.lr": 0.002,
    "train.decay_factor": 0.8,
    "train.first_decay_epoch": 10,
    "train.decay_every": 8,
    "train.dropout": 0.2,
    "train.batch_size": 16,
    "train.epochs": 50,
    "insert.strategies": "rand,ctx,att",
}


def _parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    """Flat `key = value` lines; '#' starts a comment; values are strings,
    numbers, or booleans."""
    out: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise DataError(f"config line {line_no}: expected key = value")
        key, raw = stripped.split("=", 1)
        out[key.strip()] = _parse_value(raw)
    return out


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        values = dict(_DEFAULTS)
        text = Path(path).read_text(encoding="utf-8")
        for key, val in parse_config_text(text).items():
            if key not in _DEFAULTS:
                raise DataError(f"unknown config key {key!r}")
            values[key] = val
        values.update(overrides or {})
        return cls(values)

    @classmethod
    def from_values(cls, overrides: dict) -> "PipelineConfig":
        values = dict(_DEFAULTS)
        values.update(overrides)
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def split_ratios(self) -> tuple[float, float, float]:
        parts = [p for p in str(self.values["split"]).split(",") if p.strip()]
        if len(parts) != 3:
            raise DataError(f"split must have 3 ratios, got {self.values['split']!r}")
        return tuple(float(p) for p in parts)  # type: ignore[return-value]

    @property
    def strategies(self) -> list[str]:
        out = [s.strip() for s in str(self.values["insert.strategies"]).split(",") if s.strip()]
        for s in out:
            if s not in insertion_mod.STRATEGIES:
                raise DataError(f"unknown insertion strategy {s!r}")
        return out

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            method=EncoderMethod(str(self.values["encoder.method"]).lower()),
            sif_a=float(self.values["encoder.sif_a"]),
            max_sentences=int(self.values["encoder.max_sentences"]),
            include_headline=bool(self.values["encoder.include_headline"]),
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            lr=float(self.values["train.lr"]),
            decay_factor=float(self.values["train.decay_factor"]),
            first_decay_epoch=int(self.values["train.first_decay_epoch"]),
            decay_every=int(self.values["train.decay_every"]),
            dropout=float(self.values["train.dropout"]),
            batch_size=int(self.values["train.batch_size"]),
            epochs=int(self.values["train.epochs"]),
            seed=self.seed,
        )

    def model_dims(self, vocab_size: int, d_w: int) -> ModelDims:
        return ModelDims(
            vocab=vocab_size,
            d_e=int(self.values["model.d_e"]),
            d_img=int(self.values["model.d_img"]),
            d_w=d_w,
            hidden=int(self.values["model.hidden"]),
            regions=int(self.values["model.regions"]),
            sentences=int(self.values["encoder.max_sentences"]),
            d_att=int(self.values["model.d_att"]),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, default=str)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Manifests

def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


@dataclass
class StageContext:
    config: PipelineConfig
    workdir: Path
    force: bool = False

    def stage_dir(self, stage: str) -> Path:
        return self.workdir / stage

    def manifest_path(self, stage: str) -> Path:
        return self.stage_dir(stage) / "manifest.json"


def _stage_inputs(ctx: StageContext, stage: str) -> dict[str, str]:
    """External files plus dependency manifests, hashed."""
    paths: list[Path] = []
    cfg = ctx.config
    if stage == "ingest":
        paths.append(Path(str(cfg["corpus"])))
    if stage == "annotate" and str(cfg["gazetteer"]):
        paths.append(Path(str(cfg["gazetteer"])))
    if stage in ("encode", "insert"):
        paths.append(Path(str(cfg["embeddings"])))
    for dep in STAGE_DEPS[stage]:
        paths.append(ctx.manifest_path(dep))
    out = {}
    for p in paths:
        if not p.exists():
            raise DataError(f"input file not found: {p}")
        out[str(p)] = file_sha256(p)
    return out


def _check_deps(ctx: StageContext, stage: str) -> None:
    for dep in STAGE_DEPS[stage]:
        if not ctx.manifest_path(dep).exists():
            raise DependencyError(f"stage {stage!r} needs {dep!r}: run {dep} first")


def _load_manifest(ctx: StageContext, stage: str) -> dict | None:
    path = ctx.manifest_path(stage)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


def _finish_stage(ctx: StageContext, stage: str, inputs: dict[str, str]) -> None:
    stage_dir = ctx.stage_dir(stage)
    artifacts = {}
    for p in sorted(stage_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[str(p.relative_to(stage_dir))] = file_sha256(p)
    manifest = {
        "stage": stage,
        "config_hash": ctx.config.config_hash(),
        "kernel_backend": BACKEND,
        "inputs": inputs,
        "artifacts": artifacts,
    }
    _write_json(ctx.manifest_path(stage), manifest)


def run_stage(ctx: StageContext, stage: str) -> bool:
    """Run one stage; returns False for a fresh no-op, True when work was
    done."""
    if stage not in STAGES:
        raise DataError(f"unknown stage {stage!r}")
    _check_deps(ctx, stage)
    inputs = _stage_inputs(ctx, stage)
    manifest = _load_manifest(ctx, stage)
    if manifest is not None and not ctx.force:
        if manifest.get("config_hash") != ctx.config.config_hash():
            raise DataError(
                f"stage {stage!r} artifacts were built with a different config; "
                "rerun with --force to rebuild"
            )
        if manifest.get("inputs") == inputs:
            log.info("stage %s is up to date", stage)
            return False
    ctx.stage_dir(stage).mkdir(parents=True, exist_ok=True)
    log.info("running stage %s", stage)
    _STAGE_FUNCS[stage](ctx)
    _finish_stage(ctx, stage, inputs)
    return True


def run_pipeline(ctx: StageContext) -> None:
    for stage in STAGES:
        run_stage(ctx, stage)


# ---------------------------------------------------------------------------
# Image feature files (binary grid cache)

FEATURES_MAGIC = b"IFEA"
FEATURES_VERSION = 1


def save_image_features(grid: np.ndarray, path: str | Path) -> None:
    r, d = grid.shape
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<III", FEATURES_VERSION, r, d))
        fh.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())


def load_image_features(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != FEATURES_MAGIC:
            raise DataError(f"{path}: not an image feature file")
        version, r, d = struct.unpack("<III", fh.read(12))
        if version != FEATURES_VERSION:
            raise DataError(f"{path}: unsupported feature version {version}")
        data = fh.read(r * d * 8)
        if len(data) != r * d * 8:
            raise DataError(f"{path}: truncated feature data")
    return np.frombuffer(data, dtype="<f8").reshape(r, d).astype(np.float64)


def resolve_image_grid(ref: str, regions: int, d_img: int) -> np.ndarray:
    """A ref that names an existing file is loaded; anything else seeds the
    deterministic pseudo-feature generator."""
    path = Path(ref)
    if path.is_file():
        grid = load_image_features(path)
        if grid.shape != (regions, d_img):
            raise DataError(
                f"{ref}: feature grid shape {grid.shape} does not match "
                f"configured ({regions}, {d_img})"
            )
        return grid
    return pseudo_image_features(ref, regions, d_img)


# ---------------------------------------------------------------------------
# Shared stage helpers

def _load_bundles(ctx: StageContext) -> list[corpus_mod.SampleBundle]:
    report = corpus_mod.ingest_jsonl(ctx.stage_dir("ingest") / "bundles.jsonl")
    if report.errors:
        raise DataError("ingested bundles failed to re-parse; rerun ingest")
    return report.bundles


def _load_split(ctx: StageContext) -> corpus_mod.DatasetSplit:
    obj = json.loads((ctx.stage_dir("ingest") / "split.json").read_text(encoding="utf-8"))
    return corpus_mod.split_from_json(obj)


def _load_annotations(ctx: StageContext) -> dict[str, dict]:
    out = {}
    with open(ctx.stage_dir("annotate") / "annotations.jsonl", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            out[obj["id"]] = obj
    return out


def _read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Stage implementations

def _stage_ingest(ctx: StageContext) -> None:
    cfg = ctx.config
    report = corpus_mod.ingest_jsonl(str(cfg["corpus"]))
    for err in report.errors:
        log.warning("%s:%d: %s", cfg["corpus"], err.line_no, err.message)
    if not report.bundles:
        raise DataError(f"no valid samples in {cfg['corpus']}")
    split = corpus_mod.split_dataset(report.bundles, cfg.split_ratios, cfg.seed)
    out = ctx.stage_dir("ingest")
    corpus_mod.emit_jsonl(report.bundles, out / "bundles.jsonl")
    _write_json(out / "split.json", corpus_mod.split_to_json(split))
    _write_json(
        out / "report.json",
        {
            "n_samples": len(report.bundles),
            "n_errors": len(report.errors),
            "errors": [{"line": e.line_no, "message": e.message} for e in report.errors],
        },
    )


def _stage_annotate(ctx: StageContext) -> None:
    cfg = ctx.config
    gaz = load_gazetteer(str(cfg["gazetteer"])) if str(cfg["gazetteer"]) else Gazetteer()
    bundles = _load_bundles(ctx)
    rows = []
    for b in bundles:
        if b.entities:
            ext = load_external_annotations(b)
            caption_entities = ext.caption
            article_entities = ext.article
        else:
            caption_entities = annotate(b.caption.raw_text, gaz)
            article_entities = annotate(b.article.raw_text, gaz)
        template = templatize_caption(b.caption, caption_entities)
        rows.append(
            {
                "id": b.id,
                "template": template.model_tokens(),
                "placeholders": [
                    {"tag": p.tag.value, "ordinal": p.ordinal}
                    for p in template.placeholders
                ],
                "caption_entities": [entity_to_json(e) for e in template.sources],
                "article_entities": [entity_to_json(e) for e in article_entities],
            }
        )
    _write_jsonl(ctx.stage_dir("annotate") / "annotations.jsonl", rows)


def _stage_encode(ctx: StageContext) -> None:
    cfg = ctx.config
    enc_cfg = cfg.encoder_config()
    table = load_embeddings(str(cfg["embeddings"]))
    bundles = _load_bundles(ctx)
    split = _load_split(ctx)
    train_ids = set(split.train)

    train_sentences = [
        s for b in bundles if b.id in train_ids for s in b.article.sentences
    ]
    freq = build_frequency_table(train_sentences)

    pc = None
    if enc_cfg.method is EncoderMethod.TBB:
        rows = np.array(
            [
                encode_sentence(s, EncoderMethod.WAVG, table, freq, enc_cfg.sif_a)
                for s in train_sentences
            ]
        )
        pc = fit_principal_component(rows, fitted_on="train")

    out = ctx.stage_dir("encode")
    enc_dir = out / "enc"
    enc_dir.mkdir(parents=True, exist_ok=True)
    for b in bundles:
        enc = encode_article(b.article, enc_cfg, table, freq, pc)
        save_encoding(enc, enc_dir / f"{b.id}.aenc")
    _write_json(out / "freq.json", freq.to_json())
    if pc is not None:
        _write_json(out / "pc.json", pc_to_json(pc))
    _write_json(
        out / "meta.json",
        {
            "dim": table.dim,
            "method": enc_cfg.method.value,
            "max_sentences": enc_cfg.max_sentences,
            "sif_a": enc_cfg.sif_a,
        },
    )


def _encode_meta(ctx: StageContext) -> dict:
    return json.loads((ctx.stage_dir("encode") / "meta.json").read_text(encoding="utf-8"))


def _build_samples(
    ctx: StageContext,
    ids: list[str],
    annotations: dict[str, dict],
    vocab: Vocabulary,
    dims: ModelDims,
) -> list[TrainSample]:
    max_len = int(ctx.config["caption.max_len"])
    enc_dir = ctx.stage_dir("encode") / "enc"
    bundles = {b.id: b for b in _load_bundles(ctx)}
    samples = []
    for sample_id in ids:
        ann = annotations[sample_id]
        tokens = ann["template"][:max_len]
        sample = TrainSample(
            sample_id=sample_id,
            ids=vocab.encode(tokens, add_sentinels=True),
            grid=resolve_image_grid(
                bundles[sample_id].image_feature_ref, dims.regions, dims.d_img
            ),
            a_f=load_encoding(enc_dir / f"{sample_id}.aenc").matrix,
        )
        samples.append(sample)
    return samples


def _stage_train(ctx: StageContext) -> None:
    cfg = ctx.config
    annotations = _load_annotations(ctx)
    split = _load_split(ctx)
    max_len = int(cfg["caption.max_len"])
    vocab = build_vocabulary(
        [annotations[i]["template"] for i in split.train],
        min_count=int(cfg["vocab.min_count"]),
        max_len=max_len,
    )
    meta = _encode_meta(ctx)
    dims = cfg.model_dims(vocab_size=len(vocab), d_w=int(meta["dim"]))
    samples = _build_samples(ctx, split.train, annotations, vocab, dims)
    params, history = train(samples, dims, cfg.training_config())

    out = ctx.stage_dir("train")
    _write_json(out / "vocab.json", vocab.to_json())
    save_checkpoint(
        params, out / "checkpoint.bin",
        config=cfg.training_config(), vocab_hash=vocab.content_hash(),
    )
    _write_json(out / "loss_log.json", history)


def _stage_generate(ctx: StageContext) -> None:
    cfg = ctx.config
    params, _ = load_checkpoint(ctx.stage_dir("train") / "checkpoint.bin")
    vocab = Vocabulary.from_json(
        json.loads((ctx.stage_dir("train") / "vocab.json").read_text(encoding="utf-8"))
    )
    split = _load_split(ctx)
    eval_ids = split.ids(str(cfg["eval_split"]))
    bundles = {b.id: b for b in _load_bundles(ctx)}
    enc_dir = ctx.stage_dir("encode") / "enc"
    max_len = int(cfg["caption.max_len"])

    gen_rows = []
    trace_rows = []
    for sample_id in eval_ids:
        grid = resolve_image_grid(
            bundles[sample_id].image_feature_ref, params.dims.regions, params.dims.d_img
        )
        a_f = load_encoding(enc_dir / f"{sample_id}.aenc").matrix
        ids, trace = generate(grid, a_f, params, max_len=max_len)
        gen_rows.append({"id": sample_id, "template": vocab.decode(ids)})
        trace_rows.append({"id": sample_id, **trace.to_json()})
    out = ctx.stage_dir("generate")
    _write_jsonl(out / "generated.jsonl", gen_rows)
    _write_jsonl(out / "traces.jsonl", trace_rows)


def _stage_insert(ctx: StageContext) -> None:
    cfg = ctx.config
    annotations = _load_annotations(ctx)
    bundles = {b.id: b for b in _load_bundles(ctx)}
    gen_rows = _read_jsonl(ctx.stage_dir("generate") / "generated.jsonl")
    traces = {
        row["id"]: AttentionTrace.from_json(row)
        for row in _read_jsonl(ctx.stage_dir("generate") / "traces.jsonl")
    }
    table = load_embeddings(str(cfg["embeddings"]))
    out = ctx.stage_dir("insert")

    for strategy in cfg.strategies:
        rows = []
        for gen in gen_rows:
            sample_id = gen["id"]
            bundle = bundles[sample_id]
            template = template_from_model_tokens(gen["template"])
            index = build_entity_index(
                bundle.article,
                [entity_from_json(e) for e in annotations[sample_id]["article_entities"]],
            )
            if strategy == insertion_mod.RAND_INS:
                filled = insertion_mod.rand_insert(template, index, seed=cfg.seed)
            elif strategy == insertion_mod.CTX_INS:
                filled = insertion_mod.ctx_insert(template, bundle.article, index, table)
            else:
                filled = insertion_mod.att_insert(
                    template, traces[sample_id], bundle.article, index
                )
            rows.append(insertion_mod.filled_to_json(sample_id, template, filled))
        _write_jsonl(out / f"filled_{strategy}.jsonl", rows)


def _mentions_from_provenance(provenance: list[dict]) -> list[tuple[str, EntityTag]]:
    out = []
    for p in provenance:
        if p.get("surface") is None:
            continue
        out.append((p["surface"], EntityTag(p["tag"])))
    return out


def _stage_evaluate(ctx: StageContext) -> None:
    cfg = ctx.config
    annotations = _load_annotations(ctx)
    bundles = {b.id: b for b in _load_bundles(ctx)}
    out = ctx.stage_dir("evaluate")

    for strategy in cfg.strategies:
        rows = _read_jsonl(ctx.stage_dir("insert") / f"filled_{strategy}.jsonl")
        candidates = []
        references = []
        pred_mentions = []
        gold_mentions = []
        for row in rows:
            sample_id = row["id"]
            candidates.append(list(row["filled"]))
            references.append(list(bundles[sample_id].caption.tokens))
            pred_mentions.append(_mentions_from_provenance(row["provenance"]))
            gold_mentions.append(
                [
                    (e["surface"], EntityTag(e["tag"]))
                    for e in annotations[sample_id]["caption_entities"]
                ]
            )
        report = metrics_mod.score_captions(
            candidates, references, pred_mentions, gold_mentions
        )
        _write_json(out / f"report_{strategy}.json", report.to_json())


REPORT_COLUMNS = (
    "strategy", "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider",
    "exact_p", "exact_r", "partial_p", "partial_r",
)


def consolidated_report(ctx: StageContext) -> list[dict]:
    eval_dir = ctx.stage_dir("evaluate")
    rows = []
    for strategy in ctx.config.strategies:
        path = eval_dir / f"report_{strategy}.json"
        if not path.exists():
            continue
        obj = json.loads(path.read_text(encoding="utf-8"))
        rows.append(
            {
                "strategy": strategy,
                "bleu1": obj["bleu1"], "bleu2": obj["bleu2"],
                "bleu3": obj["bleu3"], "bleu4": obj["bleu4"],
                "rouge_l": obj["rouge_l"], "cider": obj["cider"],
                "exact_p": obj["entity"]["exact"]["precision"],
                "exact_r": obj["entity"]["exact"]["recall"],
                "partial_p": obj["entity"]["partial"]["precision"],
                "partial_r": obj["entity"]["partial"]["recall"],
            }
        )
    if not rows:
        raise DataError("nothing evaluated yet: run evaluate first")
    return rows


def format_report_table(rows: list[dict]) -> str:
    widths = {c: max(len(c), 9) for c in REPORT_COLUMNS}
    for row in rows:
        widths["strategy"] = max(widths["strategy"], len(row["strategy"]))
    lines = ["  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS)]
    for row in rows:
        cells = [row["strategy"].ljust(widths["strategy"])]
        for c in REPORT_COLUMNS[1:]:
            cells.append(f"{row[c]:.4f}".ljust(widths[c]))
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def _stage_report(ctx: StageContext) -> None:
    rows = consolidated_report(ctx)
    out = ctx.stage_dir("report")
    _write_json(out / "report.json", rows)
    (out / "report.txt").write_text(format_report_table(rows), encoding="utf-8")


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "annotate": _stage_annotate,
    "encode": _stage_encode,
    "train": _stage_train,
    "generate": _stage_generate,
    "insert": _stage_insert,
    "evaluate": _stage_evaluate,
    "report": _stage_report,
}
