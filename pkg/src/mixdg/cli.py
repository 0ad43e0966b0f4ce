"""Command line interface.

Four subcommands cover the full workflow: ``gen-data`` writes a
synthetic multi-domain dataset, ``train`` runs the held-out-domain
protocol and saves curves, checkpoints, and a report, ``eval`` scores a
checkpoint on a dataset per domain, and ``compare-losses`` quantifies
the gap between the two margin-softmax variants. Every command takes
``--config`` (JSON file of dotted keys) and repeated ``--set
key=value`` overrides, and is fully deterministic given the seeds in
its configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from typing import Sequence

from . import config as cfgmod
from .data import generate, load_dataset, save_dataset, DomainDataset
from .model import PromptTemplate, init_encoder, make_class_embeddings
from .training import (
    compare_losses,
    evaluate,
    load_checkpoint,
    render_report,
    run_protocol,
    save_checkpoint,
)

__all__ = ["build_parser", "main"]

INCOMPLETE_MARKER = "INCOMPLETE"


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file of dotted keys")
    p.add_argument(
        "--set",
        metavar="KEY=VALUE",
        action="append",
        default=[],
        dest="overrides",
        help="override one config key; repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    epilog = cfgmod.describe_keys()
    parser = argparse.ArgumentParser(
        prog="mixdg",
        description="margin-softmax training with embedding mixup and a held-out-domain harness",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen-data",
        help="write a synthetic multi-domain dataset",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_config_args(p)
    p.add_argument("--out", metavar="PATH", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser(
        "train",
        help="run the held-out-domain protocol on a dataset",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_config_args(p)
    p.add_argument("--data", metavar="PATH", required=True, help="dataset file")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")
    p.add_argument("--format", choices=("text", "csv"), default="text", help="report format")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "eval",
        help="score a checkpoint on a dataset, per domain",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_config_args(p)
    p.add_argument("--checkpoint", metavar="PATH", required=True, help="checkpoint file")
    p.add_argument("--data", metavar="PATH", required=True, help="dataset file")
    p.add_argument("--out", metavar="PATH", help="also write the table here")
    p.add_argument("--format", choices=("text", "csv"), default="text", help="table format")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "compare-losses",
        help="measure the gap between the two margin-softmax variants",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _add_config_args(p)
    p.add_argument("--data", metavar="PATH", required=True, help="dataset file")
    p.add_argument(
        "--checkpoint",
        metavar="PATH",
        help="embed raw features with this checkpoint instead of a fresh encoder",
    )
    p.add_argument("--out", metavar="PATH", help="also write the statistics here")
    p.add_argument("--format", choices=("text", "csv"), default="text", help="output format")
    p.set_defaults(func=cmd_compare_losses)

    return parser


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = cfgmod.effective_config(args.config, args.overrides)
    synth = cfgmod.synth_config(cfg)
    dataset = generate(synth)
    save_dataset(dataset, args.out)
    print(
        f"wrote {args.out}: {len(dataset)} samples, "
        f"{dataset.n_classes} classes x {dataset.n_domains} domains, "
        f"{synth.n_per_cell} per cell, dim {dataset.dim}"
    )
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = cfgmod.effective_config(args.config, args.overrides)
    dataset, _ = load_dataset(args.data)
    train_cfg = cfgmod.train_config(cfg)
    encoder_cfg = cfgmod.encoder_config(cfg)

    os.makedirs(args.out, exist_ok=True)
    marker = os.path.join(args.out, INCOMPLETE_MARKER)
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("run did not finish; outputs in this directory may be partial\n")

    print(cfgmod.format_echo(cfg), end="")
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=1)
        fh.write("\n")

    result = run_protocol(dataset, train_cfg, encoder_cfg)

    for i, task in enumerate(result.tasks):
        stem = f"{i}_{_sanitize(task.target_domain)}"
        with open(os.path.join(args.out, f"curves_{stem}.csv"), "w", encoding="utf-8") as fh:
            fh.write(task.record.to_csv_text())
        save_checkpoint(
            os.path.join(args.out, f"checkpoint_{stem}.json"),
            task.params,
            make_class_embeddings(
                dataset.class_names,
                encoder_cfg.embed_dim,
                encoder_cfg.seed,
                PromptTemplate(encoder_cfg.template),
            ),
            template=encoder_cfg.template,
            metadata={
                "config": cfg,
                "target_domain": task.target_domain,
                "baseline_accuracy": task.baseline_accuracy,
                "final_accuracy": task.final_accuracy,
            },
        )

    report = render_report(result, args.format)
    suffix = "csv" if args.format == "csv" else "txt"
    with open(os.path.join(args.out, f"report.{suffix}"), "w", encoding="utf-8") as fh:
        fh.write(report)
    os.remove(marker)
    print(report, end="")
    return 0


def _domain_table(
    dataset: DomainDataset, accuracies: list[tuple[str, float]], fmt: str
) -> str:
    avg = sum(a for _, a in accuracies) / len(accuracies)
    rows = accuracies + [("Avg", avg)]
    if fmt == "csv":
        lines = ["domain,accuracy"] + [f"{name},{acc:.2f}" for name, acc in rows]
    else:
        width = max(len(name) for name, _ in rows)
        lines = [f"{name.ljust(width)}  {acc:.2f}" for name, acc in rows]
    return "\n".join(lines) + "\n"


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset, _ = load_dataset(args.data)
    if dataset.class_names != checkpoint.classes.class_names:
        raise ValueError("dataset and checkpoint disagree on class names")
    accuracies = []
    for d in dataset.domains_present():
        subset = DomainDataset(
            tuple(s for s in dataset.samples if s.domain == d),
            dataset.class_names,
            dataset.domain_names,
            dataset.encoded,
        )
        acc = evaluate(checkpoint.params, checkpoint.classes, subset)
        accuracies.append((dataset.domain_names[d], acc))
    table = _domain_table(dataset, accuracies, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    print(table, end="")
    return 0


def _float_repr(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def cmd_compare_losses(args: argparse.Namespace) -> int:
    cfg = cfgmod.effective_config(args.config, args.overrides)
    dataset, table = load_dataset(args.data)
    loss_cfg = cfgmod.loss_config(cfg)
    encoder_cfg = cfgmod.encoder_config(cfg)

    params = None
    if args.checkpoint:
        checkpoint = load_checkpoint(args.checkpoint)
        classes = checkpoint.classes
        params = checkpoint.params
    elif table is not None:
        classes = table
    else:
        embed_dim = dataset.dim if dataset.encoded else encoder_cfg.embed_dim
        classes = make_class_embeddings(
            dataset.class_names,
            embed_dim,
            encoder_cfg.seed,
            PromptTemplate(encoder_cfg.template),
        )
    if not dataset.encoded and params is None:
        params = init_encoder(
            dataset.dim,
            encoder_cfg.embed_dim,
            encoder_cfg.hidden_dim,
            seed=encoder_cfg.seed,
        )

    report = compare_losses(dataset, classes, loss_cfg, params, seed=cfg["train.seed"])
    pairs = [
        ("samples", str(report.n_samples)),
        ("mean_abs_diff", _float_repr(report.mean_abs_diff)),
        ("max_abs_diff", _float_repr(report.max_abs_diff)),
        ("identical", "yes" if report.identical else "no"),
        ("grad_cosine_mean", _float_repr(report.grad_cosine_mean)),
        ("grad_cosine_min", _float_repr(report.grad_cosine_min)),
        ("grad_cosine_max", _float_repr(report.grad_cosine_max)),
        ("grad_pairs_skipped", str(report.skipped_zero_grads)),
    ]
    if args.format == "csv":
        text = "metric,value\n" + "\n".join(f"{k},{v}" for k, v in pairs) + "\n"
    else:
        width = max(len(k) for k, _ in pairs)
        text = "\n".join(f"{k.ljust(width)}  {v}" for k, v in pairs) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
