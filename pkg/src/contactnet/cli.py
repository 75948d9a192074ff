"""Command-line interface: dataset generation, training, evaluation,
module ablations, loss-weight sweeps and overlay rendering."""

from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path

import torch

from .config import RunConfig
from .scenes import SceneConfig, Vocab, generate_dataset, read_dataset, write_dataset
from .train import (evaluate_model, extract_detections, load_checkpoint,
                    run_ablation, run_loss_sweep, save_checkpoint, train_model)
from .viz import render_overlay

METRIC_KEYS = ("mAP", "SC-Acc.", "C-Acc.", "mIoU", "wIoU")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _load_samples(dir_path):
    path = Path(dir_path)
    if not (path / "manifest.json").exists():
        raise SystemExit(
            f"no dataset at {path}; run `contactnet gen --out {path}` first")
    return read_dataset(path)


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row) for row in rows]
    return "\n".join(lines)


def _metric_row(label: str, report: dict) -> list[str]:
    return [label] + [f"{report[k]:.4f}" for k in METRIC_KEYS]


def cmd_gen(args) -> None:
    cfg = _load_config(args)
    vocab = Vocab()
    scene_cfg = cfg.data.scene_config(vocab)
    count = args.count or cfg.data.num_samples
    out = Path(args.out or cfg.data.train_dir)
    samples = generate_dataset(cfg.seed, scene_cfg, count)
    write_dataset(samples, out, vocab)
    n_pairs = sum(len(s.pairs) for s in samples)
    print(f"wrote {count} scenes ({n_pairs} interaction pairs) to {out}")


def cmd_train(args) -> None:
    cfg = _load_config(args)
    data_dir = args.data or cfg.data.train_dir
    samples, vocab = _load_samples(data_dir)
    out = Path(args.out or "runs/run")
    out.mkdir(parents=True, exist_ok=True)
    model, history, optimizer = train_model(
        cfg, samples, vocab, log_path=out / "train_log.jsonl")
    save_checkpoint(out / "checkpoint.pt", model, optimizer, cfg, vocab,
                    step=len(history))
    cfg.save(out / "config.yaml")
    last = history[-1] if history else {}
    print(f"trained {len(history)} steps; final total loss "
          f"{last.get('total', float('nan')):.4f}; checkpoint at {out / 'checkpoint.pt'}")


def cmd_eval(args) -> None:
    model, cfg, vocab, step = load_checkpoint(args.checkpoint)
    data_dir = args.data or cfg.data.eval_dir or cfg.data.train_dir
    samples, _ = _load_samples(data_dir)
    report = evaluate_model(model, samples, vocab)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text)
        print(f"report written to {args.out}")
    print(_format_table(["split", *METRIC_KEYS],
                        [_metric_row(str(data_dir), report)]))


def cmd_ablate(args) -> None:
    cfg = _load_config(args)
    samples, vocab = _load_samples(args.data or cfg.data.train_dir)
    eval_samples = None
    if cfg.data.eval_dir:
        eval_samples, _ = _load_samples(cfg.data.eval_dir)
    rows = run_ablation(cfg, samples, vocab, eval_samples)
    table = _format_table(["module", *METRIC_KEYS],
                          [_metric_row(label, rep) for label, rep in rows])
    print(table)
    if args.out:
        Path(args.out).write_text(json.dumps(
            [{"module": label, **rep} for label, rep in rows], indent=1))
        print(f"rows written to {args.out}")


def cmd_sweep_loss(args) -> None:
    cfg = _load_config(args)
    samples, vocab = _load_samples(args.data or cfg.data.train_dir)
    rows = run_loss_sweep(cfg, samples, vocab)
    table = _format_table(
        ["alpha", "beta", *METRIC_KEYS],
        [[f"{a:g}", f"{b:g}"] + _metric_row("", rep)[1:] for a, b, rep in rows])
    print(table)
    if args.out:
        Path(args.out).write_text(json.dumps(
            [{"alpha": a, "beta": b, **rep} for a, b, rep in rows], indent=1))
        print(f"rows written to {args.out}")


def cmd_viz(args) -> None:
    model, cfg, vocab, _ = load_checkpoint(args.checkpoint)
    samples, _ = _load_samples(args.data or cfg.data.train_dir)
    out = Path(args.out or "viz")
    out.mkdir(parents=True, exist_ok=True)
    ids = args.ids or list(range(min(4, len(samples))))
    from .train import batch_tensors

    with torch.no_grad():
        for sid in ids:
            sample = samples[sid]
            images, maps, _ = batch_tensors([sample])
            outputs = model(images)
            dets = extract_detections(outputs, (maps.shape[2], maps.shape[1]), vocab)[0]
            pred_map = outputs.seg_probs[0].argmax(dim=0).numpy()
            panel = render_overlay(sample.image, dets, pred_map, vocab)
            panel.save(out / f"overlay_{sid:06d}.png")
    print(f"wrote {len(ids)} overlays to {out}")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="contactnet",
        description="Joint interaction detection and contact segmentation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **extra):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path")
        for flag, kwargs in extra.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=fn)
        return p

    add("gen", cmd_gen, **{"--count": dict(type=int, help="number of scenes")})
    add("train", cmd_train, **{"--data": dict(help="dataset directory")})
    add("eval", cmd_eval, **{
        "--checkpoint": dict(required=True), "--data": dict(help="dataset directory")})
    add("ablate", cmd_ablate, **{"--data": dict(help="dataset directory")})
    add("sweep-loss", cmd_sweep_loss, **{"--data": dict(help="dataset directory")})
    add("viz", cmd_viz, **{
        "--checkpoint": dict(required=True),
        "--data": dict(help="dataset directory"),
        "--ids": dict(type=int, nargs="*", help="sample indices to render")})

    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
