"""Command-line entry point: ``shrinkcast <subcommand> [flags]``.

Subcommands: plan, truncate, clean, pretrain, finetune, distill, eval-ppl,
run, report. Exit codes: 0 success, 1 usage error, 2 runtime error; runtime
failures print a single machine-parseable line ``error: <command>: <message>``
to stderr.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import ModelConfig, read_checkpoint, write_checkpoint
from .cleaner import clean_file
from .data import read_token_corpus
from .distill import (
    DISTILL_METHODS,
    DistillConfig,
    SmoothingSpec,
    build_self_teacher,
    make_step_fn,
)
from .experiment import emit_report, load_spec, rows_from_csv, run_experiment, rows_to_csv
from .model import init_checkpoint, perplexity
from .planner import STRATEGIES, LayerPlan, plan_layers
from .training import TrainConfig, train, write_loss_log
from .truncate import truncate


class _UsageExit(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {self.prog}: {message}\n")
        raise _UsageExit(1)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--batch", type=int, default=8)
    parser.add_argument("--seq-len", type=int, default=0, help="0 = model max")
    parser.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--loss-log", default="", help="write per-step CSV here")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        steps=args.steps,
        batch_size=args.batch,
        seed=args.seed,
        optimizer=args.optimizer,
        seq_len=args.seq_len or None,
    )


def _parse_config(text: str) -> ModelConfig:
    try:
        parts = [int(p) for p in text.split(",")]
        config = ModelConfig(*parts)
        config.validate()
        return config
    except (ValueError, TypeError) as exc:
        raise ValueError(
            f"bad --init-config {text!r} (expected "
            f"n_layers,n_heads,d_model,vocab_size,max_seq_len): {exc}"
        ) from exc


def build_parser() -> _Parser:
    parser = _Parser(prog="shrinkcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="compute a layer-selection plan")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("-n", "--teacher-layers", type=int, required=True)
    p.add_argument("-k", "--student-layers", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("truncate", help="build a student checkpoint from a plan")
    p.add_argument("--teacher", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--plan", help="plan line, as printed by the plan subcommand")
    group.add_argument("--plan-file", help="file containing one plan line")
    p.add_argument("--out", required=True)

    p = sub.add_parser("clean", help="filter a text corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--stats", default="", help="write a stats CSV here")
    p.add_argument("--short-threshold", type=int, default=5)
    p.add_argument("--ratio-threshold", type=float, default=0.10)
    p.add_argument("--html-strip-threshold", type=float, default=0.30)
    p.add_argument("--jobs", type=int, default=1)

    for name, help_text in (
        ("pretrain", "train a model on a token corpus"),
        ("finetune", "further train a checkpoint on a token corpus"),
    ):
        p = sub.add_parser(name, help=help_text)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--ckpt", default="", help="starting checkpoint")
        group.add_argument(
            "--init-config",
            default="",
            help="random init: n_layers,n_heads,d_model,vocab_size,max_seq_len",
        )
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        _add_train_flags(p)

    p = sub.add_parser("distill", help="train a student against a teacher")
    p.add_argument("--student", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--method", choices=[m for m in DISTILL_METHODS if m != "none"],
                   required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-kd", type=float, default=0.5)
    p.add_argument("--temperature", type=float, default=2.0)
    p.add_argument("--anneal-max", type=int, default=4)
    p.add_argument("--mask-ratio", type=float, default=0.3)
    p.add_argument("--rail-weight", type=float, default=1.0)
    p.add_argument("--rail-fixed-pairing", action="store_true",
                   help="keep one random layer pairing instead of reseeding per epoch")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--a", type=float, default=0.9)
    p.add_argument("--steps-per-epoch", type=int, default=50)
    _add_train_flags(p)

    p = sub.add_parser("eval-ppl", help="perplexity of a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("run", help="run a full experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="merge result rows into report tables")
    p.add_argument("--rows", nargs="+", required=True, help="result-row CSV files")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-txt", required=True)
    return parser


def _cmd_plan(args) -> None:
    plan = plan_layers(args.strategy, args.teacher_layers, args.student_layers, seed=args.seed)
    print(plan.to_line())


def _cmd_truncate(args) -> None:
    line = args.plan
    if args.plan_file:
        with open(args.plan_file, "r", encoding="utf-8") as fh:
            line = fh.read().strip()
    plan = LayerPlan.from_line(line)
    teacher = read_checkpoint(args.teacher)
    write_checkpoint(truncate(teacher, plan), args.out)
    print(f"wrote {args.out} ({plan.student_layers} layers)")


def _cmd_clean(args) -> None:
    stats = clean_file(
        args.input,
        args.output,
        stats_path=args.stats or None,
        short_threshold=args.short_threshold,
        ratio_threshold=args.ratio_threshold,
        html_threshold=args.html_strip_threshold,
        jobs=args.jobs,
    )
    print(
        f"kept {stats.kept_records}/{stats.input_records} "
        f"(html={stats.dropped_html} short={stats.dropped_short} "
        f"ratio={stats.dropped_ratio} dup={stats.dropped_duplicate} "
        f"retention={stats.retention:.4f})"
    )


def _cmd_train(args) -> None:
    if args.ckpt:
        ckpt = read_checkpoint(args.ckpt)
    else:
        ckpt = init_checkpoint(_parse_config(args.init_config), args.seed)
    corpus = read_token_corpus(args.corpus)
    trained, log = train(ckpt, corpus, _train_config(args))
    write_checkpoint(trained, args.out)
    if args.loss_log:
        write_loss_log(args.loss_log, log)
    final = log[-1].loss if log else float("nan")
    print(f"wrote {args.out} (steps={len(log)} final_loss={final:.6f})")


def _cmd_distill(args) -> None:
    student = read_checkpoint(args.student)
    teacher = read_checkpoint(args.teacher)
    corpus = read_token_corpus(args.corpus)
    cfg = _train_config(args)
    dcfg = DistillConfig(
        lambda_kd=args.lambda_kd,
        temperature=args.temperature,
        anneal_max=args.anneal_max,
        mask_ratio=args.mask_ratio,
        rail_weight=args.rail_weight,
        rail_reseed_each_epoch=not args.rail_fixed_pairing,
    )
    method = args.method
    if method == "self_kd":
        teacher = build_self_teacher(student, corpus, cfg)
        method = "vanilla_kd"
    smoothing = None
    if method in ("ls", "tf_reg"):
        smoothing = SmoothingSpec(
            alpha=args.alpha, a=args.a,
            num_classes=student.config.vocab_size, mode=method,
        )
    loss_fn = make_step_fn(
        method,
        student.config,
        dcfg,
        teacher=teacher if method not in ("ls", "tf_reg") else None,
        smoothing=smoothing,
        train_cfg=cfg,
        steps_per_epoch=args.steps_per_epoch,
        seed=args.seed,
    )
    trained, log = train(student, corpus, cfg, loss_fn=loss_fn)
    write_checkpoint(trained, args.out)
    if args.loss_log:
        write_loss_log(args.loss_log, log)
    final = log[-1].loss if log else float("nan")
    print(f"wrote {args.out} (method={args.method} steps={len(log)} final_loss={final:.6f})")


def _cmd_eval_ppl(args) -> None:
    ckpt = read_checkpoint(args.ckpt)
    corpus = read_token_corpus(args.corpus)
    print(f"{perplexity(ckpt, corpus):.6f}")


def _cmd_run(args) -> None:
    spec = load_spec(args.spec)
    row = run_experiment(spec, out_dir=args.out_dir)
    sys.stdout.write(rows_to_csv([row]))


def _cmd_report(args) -> None:
    rows = []
    for path in args.rows:
        with open(path, "r", encoding="utf-8") as fh:
            rows.extend(rows_from_csv(fh.read()))
    emit_report(rows, args.out_csv, args.out_txt)
    print(f"wrote {args.out_csv} and {args.out_txt} ({len(rows)} rows)")


_COMMANDS = {
    "plan": _cmd_plan,
    "truncate": _cmd_truncate,
    "clean": _cmd_clean,
    "pretrain": _cmd_train,
    "finetune": _cmd_train,
    "distill": _cmd_distill,
    "eval-ppl": _cmd_eval_ppl,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit:
        return 1
    try:
        _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        sys.stderr.write(f"error: {args.command}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
