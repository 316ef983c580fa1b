"""Batch entry points: grade, train-embed, project, eval-feedback, serve."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import pipeline
from .contrastive import (
    LabelVocab,
    LossConfig,
    dataset_records_to_samples,
    load_dataset_jsonl,
    load_head,
    save_head,
    train_projection,
)
from .embeddings import EmbeddingVector, deterministic_provider, remote_provider_from_env
from .errors import AgpError
from .metrics import FeedbackPair, corpus_to_csv, evaluate_corpus
from .models import PerformanceTier, load_assignment_config
from .projection import ProjectionConfig, project_cohort, projection_to_json_dict
from .prompt_pool import init_pool


def _make_provider(kind: str, dim: int):
    if kind == "remote":
        return remote_provider_from_env()
    return deterministic_provider(dim=dim)


def _cmd_grade(args) -> int:
    try:
        config = load_assignment_config(args.assignment)
    except AgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    provider = _make_provider(args.embed, args.embed_dim)
    pool = None
    if args.prompt_pool:
        try:
            pool = init_pool(args.prompt_pool, provider)
        except AgpError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1

    feedback_endpoint = os.environ.get("AGP_LLM_ENDPOINT")
    if not args.no_feedback and not feedback_endpoint:
        print(
            "error: feedback generation requires AGP_LLM_ENDPOINT (or pass --no-feedback)",
            file=sys.stderr,
        )
        return 1
    options = pipeline.PipelineOptions(
        parallelism=args.parallelism,
        seed=args.seed,
        generate_feedback=not args.no_feedback,
        include_question=args.include_question,
        feedback_endpoint=feedback_endpoint,
        feedback_model=os.environ.get("AGP_LLM_MODEL", "default"),
    )
    try:
        result, embeddings = pipeline.run_grading(
            config, args.submissions, provider, pool, options
        )
    except AgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    pipeline.write_outputs(args.out, result, embeddings, config, seed=args.seed)
    for line in result.errors:
        print(f"warning: {line}", file=sys.stderr)
    print(f"graded {len(result.graded)} submissions -> {args.out}")
    return 2 if result.errors else 0


def _cmd_train_embed(args) -> int:
    records = load_dataset_jsonl(args.data)
    if not records:
        print("error: dataset is empty", file=sys.stderr)
        return 1
    samples = dataset_records_to_samples(records)
    problems = sorted({problem_id for _, problem_id, _ in samples})
    vocab = LabelVocab.from_problems(problems)
    cfg = LossConfig(tau=args.tau, alpha=args.alpha, mnr_scale=args.mnr_scale)
    try:
        head, trace = train_projection(
            samples, vocab, cfg, d_out=args.dout, epochs=args.epochs, lr=args.lr, seed=args.seed
        )
    except AgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    save_head(head, args.out)
    trace_path = Path(args.out).with_suffix(".trace.csv")
    trace_path.write_text(
        "epoch,mean_loss\n" + "\n".join(f"{i},{loss:.8f}" for i, loss in enumerate(trace)) + "\n",
        encoding="utf-8",
    )
    print(f"trained head -> {args.out}; loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return 0


def _cmd_project(args) -> int:
    records = load_dataset_jsonl(args.data)
    if not records:
        print("error: dataset is empty", file=sys.stderr)
        return 1
    head = load_head(args.head) if args.head else None
    cohort = []
    for raw in records:
        vec = EmbeddingVector(values=raw["embedding"], dim=len(raw["embedding"]), normalized=False)
        if head is not None:
            projected = head.project(vec.values)[0]
            vec = EmbeddingVector(values=projected, dim=head.d_out, normalized=True)
        cohort.append((raw["student_id"], raw["problem_id"], PerformanceTier(raw["tier"]), vec))
    k = min(args.k, len(cohort) - 1)
    if k < 2:
        print("error: need at least 3 records to project", file=sys.stderr)
        return 1
    if k != args.k:
        print(f"warning: k clamped to {k} for a cohort of {len(cohort)}", file=sys.stderr)
    config = ProjectionConfig(k=k, seed=args.seed)
    points = project_cohort(cohort, config)
    payload = projection_to_json_dict(records[0]["problem_id"], points, config)
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"projected {len(points)} points -> {args.out}")
    return 0


def _cmd_eval_feedback(args) -> int:
    pairs = []
    for line in Path(args.pairs).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        pairs.append(
            FeedbackPair(
                student_id=raw.get("student_id", ""),
                assignment_id=raw.get("assignment_id", ""),
                generated=raw["generated"],
                reference=raw["reference"],
            )
        )
    if not pairs:
        print("error: no pairs in input", file=sys.stderr)
        return 1
    provider = _make_provider(args.embed, args.embed_dim)
    corpus = evaluate_corpus(pairs, provider)
    Path(args.out).write_text(corpus_to_csv(corpus), encoding="utf-8")
    if corpus.errors:
        print(f"warning: {len(corpus.errors)} pairs failed and were excluded", file=sys.stderr)
    print(
        f"evaluated {len(pairs)} pairs -> {args.out} "
        f"(avg F1 {corpus.averages.f1:.4f}, avg cosine {corpus.averages.sentence_cosine:.4f})"
    )
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(args.port, args.data_dir, ui_dir=args.ui_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agp", description="autograding pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    grade = sub.add_parser("grade", help="grade a directory of submissions")
    grade.add_argument("--assignment", required=True, help="assignment config JSON")
    grade.add_argument("--submissions", required=True, help="directory of submissions")
    grade.add_argument("--out", required=True, help="output directory")
    grade.add_argument("--prompt-pool", default=None, help="instructional prompt pool JSON")
    grade.add_argument("--no-feedback", action="store_true", help="skip LLM feedback generation")
    grade.add_argument(
        "--include-question", action="store_true", default=False,
        help="include the problem text in the feedback request",
    )
    grade.add_argument("--embed", choices=("deterministic", "remote"), default="deterministic")
    grade.add_argument("--embed-dim", type=int, default=int(os.environ.get("AGP_EMBED_DIM", "64")))
    grade.add_argument("--parallelism", type=int, default=1)
    grade.add_argument("--seed", type=int, default=42)
    grade.set_defaults(func=_cmd_grade)

    train = sub.add_parser("train-embed", help="train the projection head on a dataset JSONL")
    train.add_argument("--data", required=True)
    train.add_argument("--alpha", type=float, default=0.5)
    train.add_argument("--tau", type=float, default=0.07)
    train.add_argument("--mnr-scale", type=float, default=20.0)
    train.add_argument("--dout", type=int, default=64)
    train.add_argument("--epochs", type=int, default=100)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--seed", type=int, default=42)
    train.add_argument("--out", required=True, help="head JSON output path")
    train.set_defaults(func=_cmd_train_embed)

    project = sub.add_parser("project", help="project a dataset JSONL to 2D")
    project.add_argument("--data", required=True)
    project.add_argument("--head", default=None, help="optional trained head JSON")
    project.add_argument("--k", type=int, default=15)
    project.add_argument("--seed", type=int, default=42)
    project.add_argument("--out", required=True)
    project.set_defaults(func=_cmd_project)

    evalf = sub.add_parser("eval-feedback", help="score generated vs reference feedback")
    evalf.add_argument("--pairs", required=True, help="JSONL of generated/reference pairs")
    evalf.add_argument("--embed", choices=("deterministic", "remote"), default="deterministic")
    evalf.add_argument("--embed-dim", type=int, default=int(os.environ.get("AGP_EMBED_DIM", "64")))
    evalf.add_argument("--out", required=True, help="metrics CSV output path")
    evalf.set_defaults(func=_cmd_eval_feedback)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir", required=True)
    serve.add_argument("--ui-dir", default=None, help="static UI directory to mount at /ui")
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
