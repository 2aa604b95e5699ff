"""Reproducible end-to-end experiments and report emission.

An experiment is described by a plain-text ``key = value`` spec file (one
experiment per file). Running it executes the full pipeline at desk scale:

    teacher (load or pretrain) -> plan -> truncate -> pretrain student ->
    zero-shot perplexity -> fine-tune with the chosen method -> perplexity

and produces a result row plus per-phase loss logs and checkpoints. Every
output byte except wall time is a pure function of (spec, seed).

Independent experiments can run concurrently when given distinct output
directories; phases within one experiment are sequential.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, fields

from .checkpoint import Checkpoint, ModelConfig, read_checkpoint, write_checkpoint
from .data import read_token_corpus
from .distill import (
    DISTILL_METHODS,
    DistillConfig,
    SmoothingSpec,
    build_self_teacher,
    make_step_fn,
)
from .model import init_checkpoint, perplexity
from .planner import STRATEGIES, plan_layers
from .training import TrainConfig, train, write_loss_log
from .truncate import truncate


class ExperimentError(RuntimeError):
    """A pipeline phase failed; the message carries the phase label."""


@dataclass
class ExperimentSpec:
    name: str
    pretrain_corpus: str
    finetune_corpus: str
    seed: int = 0
    teacher_layers: int = 4
    student_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    vocab_size: int = 256
    max_seq_len: int = 64
    strategy: str = "pseudo_uniform"
    method: str = "none"
    teacher_ckpt: str = ""
    teacher_steps: int = 300
    pretrain_steps: int = 200
    pretrain_lr: float = 1e-3
    pretrain_batch: int = 8
    finetune_steps: int = 200
    finetune_lr: float = 1e-3
    finetune_batch: int = 8
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    train_seq_len: int = 0  # 0 means the model's max_seq_len
    steps_per_epoch: int = 50
    lambda_kd: float = 0.5
    temperature: float = 2.0
    anneal_max: int = 4
    mask_ratio: float = 0.3
    rail_weight: float = 1.0
    rail_reseed_each_epoch: bool = True
    alpha: float = 0.1
    a: float = 0.9

    def validate(self) -> None:
        if not self.name:
            raise ValueError("spec needs a name")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.method not in DISTILL_METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_layers=self.teacher_layers,
            n_heads=self.n_heads,
            d_model=self.d_model,
            vocab_size=self.vocab_size,
            max_seq_len=self.max_seq_len,
        )

    def distill_config(self) -> DistillConfig:
        return DistillConfig(
            lambda_kd=self.lambda_kd,
            temperature=self.temperature,
            anneal_max=self.anneal_max,
            mask_ratio=self.mask_ratio,
            rail_weight=self.rail_weight,
            rail_reseed_each_epoch=self.rail_reseed_each_epoch,
        )

    def train_config(self, phase: str, seed_offset: int) -> TrainConfig:
        lr = getattr(self, f"{phase}_lr")
        steps = getattr(self, f"{phase}_steps")
        batch = getattr(self, f"{phase}_batch")
        return TrainConfig(
            learning_rate=lr,
            steps=steps,
            batch_size=batch,
            seed=self.seed + seed_offset,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seq_len=self.train_seq_len or None,
        )


_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False}


def load_spec(path: str) -> ExperimentSpec:
    """Parse a ``key = value`` spec file; unknown keys are rejected."""
    field_types = {f.name: f.type for f in fields(ExperimentSpec)}
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in field_types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            kind = field_types[key]
            if kind == "int":
                values[key] = int(value)
            elif kind == "float":
                values[key] = float(value)
            elif kind == "bool":
                if value.lower() not in _BOOL_VALUES:
                    raise ValueError(f"{path}:{lineno}: bad boolean {value!r}")
                values[key] = _BOOL_VALUES[value.lower()]
            else:
                values[key] = value
    missing = {"name", "pretrain_corpus", "finetune_corpus"} - values.keys()
    if missing:
        raise ValueError(f"{path}: missing required keys: {sorted(missing)}")
    spec = ExperimentSpec(**values)
    spec.validate()
    return spec


@dataclass
class ResultRow:
    name: str
    strategy: str
    zero_shot_ppl: float
    finetuned_ppl: float
    wall_time_s: float
    seed: int


ROW_FIELDS = ("name", "strategy", "zero_shot_ppl", "finetuned_ppl", "wall_time_s", "seed")


def rows_to_csv(rows: list[ResultRow]) -> str:
    lines = [",".join(ROW_FIELDS)]
    for row in rows:
        lines.append(
            ",".join(
                [
                    row.name,
                    row.strategy,
                    repr(row.zero_shot_ppl),
                    repr(row.finetuned_ppl),
                    repr(row.wall_time_s),
                    str(row.seed),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> list[ResultRow]:
    lines = [line for line in text.splitlines() if line]
    if not lines or lines[0] != ",".join(ROW_FIELDS):
        raise ValueError("not a result-row CSV (bad header)")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(ROW_FIELDS):
            raise ValueError(f"bad result row: {line!r}")
        rows.append(
            ResultRow(
                name=cells[0],
                strategy=cells[1],
                zero_shot_ppl=float(cells[2]),
                finetuned_ppl=float(cells[3]),
                wall_time_s=float(cells[4]),
                seed=int(cells[5]),
            )
        )
    return rows


def _phase(label: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, ExperimentError):
                raise ExperimentError(f"{label}: {exc}") from exc
            return False

    return _Ctx()


def run_experiment(spec: ExperimentSpec, out_dir: str | None = None) -> ResultRow:
    """Execute plan -> truncate -> pretrain -> evaluate -> fine-tune -> evaluate."""
    spec.validate()
    started = time.perf_counter()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def save_ckpt(name: str, ckpt: Checkpoint) -> None:
        if out_dir is not None:
            write_checkpoint(ckpt, os.path.join(out_dir, name))

    def save_log(name: str, log) -> None:
        if out_dir is not None:
            write_loss_log(os.path.join(out_dir, name), log)

    with _phase("load-corpora"):
        for path in (spec.pretrain_corpus, spec.finetune_corpus):
            if not os.path.exists(path):
                raise FileNotFoundError(f"corpus not found: {path}")
        pretrain_corpus = read_token_corpus(spec.pretrain_corpus)
        finetune_corpus = read_token_corpus(spec.finetune_corpus)

    with _phase("teacher"):
        if spec.teacher_ckpt:
            teacher = read_checkpoint(spec.teacher_ckpt)
        else:
            teacher = init_checkpoint(spec.model_config(), spec.seed)
            if spec.teacher_steps > 0:
                cfg = spec.train_config("pretrain", seed_offset=17)
                cfg.steps = spec.teacher_steps
                teacher, teacher_log = train(teacher, pretrain_corpus, cfg)
                save_log("teacher_loss.csv", teacher_log)
        save_ckpt("teacher.tckp", teacher)

    with _phase("plan"):
        plan = plan_layers(
            spec.strategy,
            teacher.config.n_layers,
            spec.student_layers,
            seed=spec.seed,
        )

    with _phase("truncate"):
        student = truncate(teacher, plan)

    with _phase("pretrain"):
        cfg = spec.train_config("pretrain", seed_offset=1)
        student, pretrain_log = train(student, pretrain_corpus, cfg)
        save_log("pretrain_loss.csv", pretrain_log)
        save_ckpt("student_pretrained.tckp", student)

    with _phase("eval-zero-shot"):
        zero_shot = perplexity(student, finetune_corpus)

    with _phase("finetune"):
        cfg = spec.train_config("finetune", seed_offset=2)
        dcfg = spec.distill_config()
        if spec.method == "self_kd":
            self_cfg = spec.train_config("finetune", seed_offset=3)
            frozen = build_self_teacher(student, finetune_corpus, self_cfg)
            loss_fn = make_step_fn(
                "vanilla_kd",
                student.config,
                dcfg,
                teacher=frozen,
                train_cfg=cfg,
                steps_per_epoch=spec.steps_per_epoch,
                seed=spec.seed,
            )
        else:
            smoothing = None
            if spec.method in ("ls", "tf_reg"):
                smoothing = SmoothingSpec(
                    alpha=spec.alpha,
                    a=spec.a,
                    num_classes=spec.vocab_size,
                    mode=spec.method,
                )
            loss_fn = make_step_fn(
                spec.method,
                student.config,
                dcfg,
                teacher=teacher if spec.method not in ("none", "ls", "tf_reg") else None,
                smoothing=smoothing,
                train_cfg=cfg,
                steps_per_epoch=spec.steps_per_epoch,
                seed=spec.seed,
            )
        student, finetune_log = train(student, finetune_corpus, cfg, loss_fn=loss_fn)
        save_log("finetune_loss.csv", finetune_log)
        save_ckpt("student_finetuned.tckp", student)

    with _phase("eval-finetuned"):
        finetuned = perplexity(student, finetune_corpus)

    row = ResultRow(
        name=spec.name,
        strategy=spec.strategy,
        zero_shot_ppl=zero_shot,
        finetuned_ppl=finetuned,
        wall_time_s=time.perf_counter() - started,
        seed=spec.seed,
    )
    if out_dir is not None:
        with open(os.path.join(out_dir, "result.csv"), "w", encoding="utf-8") as fh:
            fh.write(rows_to_csv([row]))
    return row


def emit_report(rows: list[ResultRow], csv_path: str, txt_path: str) -> None:
    """Write rows as CSV and an aligned text table, sorted by (strategy, name)."""
    if not rows:
        raise ValueError("emit_report needs at least one row")
    ordered = sorted(rows, key=lambda r: (r.strategy, r.name))
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(ordered))

    header = ["name", "strategy", "zero_shot_ppl", "finetuned_ppl", "wall_time_s", "seed"]
    cells = [header]
    for row in ordered:
        cells.append(
            [
                row.name,
                row.strategy,
                f"{row.zero_shot_ppl:.4f}",
                f"{row.finetuned_ppl:.4f}",
                f"{row.wall_time_s:.3f}",
                str(row.seed),
            ]
        )
    widths = [max(len(line[col]) for line in cells) for col in range(len(header))]
    with open(txt_path, "w", encoding="utf-8", newline="\n") as fh:
        for i, line in enumerate(cells):
            fh.write("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() + "\n")
            if i == 0:
                fh.write("  ".join("-" * w for w in widths) + "\n")
