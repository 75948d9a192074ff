"""Training loop, loss assembly, checkpointing and evaluation."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, build_model
from .contact_prior import contact_prior_loss
from .matching import LossReport, build_cost_matrix, hungarian, match_loss, total_loss
from .metrics import (DetectionMetrics, ScoredPair, SegMetricsAccumulator,
                      hoi_map, metrics_report)
from .model import ModelOutputs, PairContactModel
from .scenes import SceneSample, Vocab
from .segmenter import seg_loss


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; message carries the step and
    the per-component breakdown."""


def set_seed(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))


def batch_tensors(samples: list[SceneSample], device="cpu"):
    """Stack samples into (images, contact maps, contact label vectors)."""
    images = torch.stack([
        torch.from_numpy(s.image).permute(2, 0, 1) for s in samples]).to(device)
    maps = torch.stack([
        torch.from_numpy(s.contact_map.astype(np.int64)) for s in samples]).to(device)
    labels = torch.stack([
        torch.from_numpy(s.contact_labels.astype(np.float32)) for s in samples]).to(device)
    return images, maps, labels


def compute_losses(outputs: ModelOutputs, samples: list[SceneSample],
                   maps: torch.Tensor, labels: torch.Tensor,
                   vocab: Vocab, config: RunConfig):
    """Hungarian-matched detection loss plus the two dense supervision terms,
    combined as alpha * match + beta * (bce + ce). The match term is averaged
    over the batch; bce is dropped (zero) when the contact prior is disabled.
    """
    tc = config.train
    weights = tc.match_weights()
    image_size = (maps.shape[2], maps.shape[1])
    preds = outputs.predictions
    zero = torch.zeros((), dtype=preds.human_boxes.dtype)

    match_terms = []
    for i, sample in enumerate(samples):
        cost = build_cost_matrix(preds, i, sample.pairs, image_size, weights)
        m = hungarian(cost)
        match_terms.append(match_loss(
            preds, sample.pairs, m, image_size,
            no_interaction_index=vocab.no_interaction_index,
            weights=weights, batch_idx=i))
    match_term = torch.stack(match_terms).mean() if match_terms else zero

    if outputs.prior is not None:
        bce = contact_prior_loss(outputs.prior, labels)
    else:
        bce = zero
    ce = seg_loss(outputs.seg_probs, maps,
                  background_weight=config.model.background_weight)
    return total_loss(match_term, bce, ce, alpha=tc.alpha, beta=tc.beta)


def train_model(config: RunConfig, samples: list[SceneSample], vocab: Vocab,
                log_path: str | Path | None = None,
                model: PairContactModel | None = None):
    """Train on the given samples; returns (model, per-step reports, optimizer).

    Deterministic for a fixed config seed on a single device: model init,
    batch order and dropout all derive from it.
    """
    set_seed(config.seed)
    if model is None:
        model = build_model(config, vocab)
    tc = config.train
    optimizer = torch.optim.AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    order_rng = np.random.default_rng(config.seed)
    log_file = open(log_path, "w") if log_path else None

    history: list[dict] = []
    step = 0
    model.train()
    try:
        for epoch in range(tc.epochs):
            teacher_force = epoch < tc.teacher_force_epochs
            order = order_rng.permutation(len(samples))
            for start in range(0, len(samples), tc.batch_size):
                batch_idx = order[start:start + tc.batch_size]
                batch = [samples[i] for i in batch_idx]
                images, maps, labels = batch_tensors(batch)
                try:
                    outputs = model(images, gt_pairs=[s.pairs for s in batch],
                                    teacher_force=teacher_force)
                    loss, report = compute_losses(outputs, batch, maps, labels, vocab, config)
                except ValueError as e:
                    if "non-finite" in str(e):
                        raise TrainingDiverged(
                            f"non-finite predictions at step {step}: {e}") from e
                    raise
                if not math.isfinite(report.total):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step}: {report.to_dict()}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                entry = {"step": step, "epoch": epoch, **report.to_dict()}
                history.append(entry)
                if log_file:
                    log_file.write(json.dumps(entry) + "\n")
                step += 1
                if tc.max_steps is not None and step >= tc.max_steps:
                    return model, history, optimizer
        return model, history, optimizer
    finally:
        if log_file:
            log_file.close()


def save_checkpoint(path: str | Path, model: PairContactModel,
                    optimizer: torch.optim.Optimizer | None,
                    config: RunConfig, vocab: Vocab, step: int) -> None:
    """Persist all parameter groups keyed by module path, plus optimizer
    state, the config snapshot and the step counter."""
    payload = {
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer else None,
        "config": config.to_dict(),
        "vocab": vocab.to_dict(),
        "step": step,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path):
    """Rebuild the model from a checkpoint; returns (model, config, vocab, step)."""
    payload = torch.load(path, weights_only=False)
    config = RunConfig.from_dict(payload["config"])
    vocab = Vocab.from_dict(payload["vocab"])
    model = build_model(config, vocab)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, config, vocab, payload["step"]


def extract_detections(outputs: ModelOutputs, image_size: tuple[int, int],
                       vocab: Vocab) -> list[list[ScoredPair]]:
    """Per-image scored pair lists from raw predictions.

    Queries whose most likely action is no_interaction are dropped; each
    survivor scores object probability times action probability.
    """
    from .boxes import box_cxcywh_to_xyxy, scale_boxes_to_pixels

    w, h = image_size
    preds = outputs.predictions
    obj_probs = torch.softmax(preds.object_logits, dim=-1)
    act_probs = torch.softmax(preds.action_logits, dim=-1)
    result = []
    for i in range(preds.human_boxes.shape[0]):
        hb = scale_boxes_to_pixels(box_cxcywh_to_xyxy(preds.human_boxes[i]), w, h).numpy()
        ob = scale_boxes_to_pixels(box_cxcywh_to_xyxy(preds.object_boxes[i]), w, h).numpy()
        dets = []
        for q in range(hb.shape[0]):
            action = int(act_probs[i, q].argmax())
            if action == vocab.no_interaction_index:
                continue
            obj = int(obj_probs[i, q].argmax())
            score = float(obj_probs[i, q, obj] * act_probs[i, q, action])
            dets.append(ScoredPair(
                human_box=hb[q], object_box=ob[q],
                object_class=obj, action_class=action, score=score))
        result.append(dets)
    return result


ABLATION_ROWS = (
    ("baseline", dict(cpam_enabled=False, ho_enhancer_enabled=False, mask_guided_enabled=False)),
    ("+CPAM", dict(cpam_enabled=True, ho_enhancer_enabled=False, mask_guided_enabled=False)),
    ("+H-O", dict(cpam_enabled=True, ho_enhancer_enabled=True, mask_guided_enabled=False)),
    ("+M-G", dict(cpam_enabled=True, ho_enhancer_enabled=True, mask_guided_enabled=True)),
)


def run_ablation(config: RunConfig, samples: list[SceneSample], vocab: Vocab,
                 eval_samples: list[SceneSample] | None = None) -> list[tuple[str, dict]]:
    """Train the four incremental configurations (modules added one at a
    time) with identical seeds and data order; returns (label, report) rows."""
    eval_samples = eval_samples if eval_samples is not None else samples
    rows = []
    for label, flag_values in ABLATION_ROWS:
        run_cfg = config.replace_flags(**flag_values)
        model, _, _ = train_model(run_cfg, samples, vocab)
        rows.append((label, evaluate_model(model, eval_samples, vocab)))
    return rows


def run_loss_sweep(config: RunConfig, samples: list[SceneSample], vocab: Vocab,
                   grid: tuple[tuple[float, float], ...] = (
                       (0.1, 1.0), (0.5, 1.0), (1.0, 1.0),
                       (0.1, 0.5), (0.5, 0.1), (1.0, 0.1)),
                   eval_samples: list[SceneSample] | None = None) -> list[tuple[float, float, dict]]:
    """Train once per (alpha, beta) combination; returns (alpha, beta, report)."""
    import dataclasses

    eval_samples = eval_samples if eval_samples is not None else samples
    rows = []
    for alpha, beta in grid:
        run_cfg = dataclasses.replace(
            config, train=dataclasses.replace(config.train, alpha=alpha, beta=beta))
        model, _, _ = train_model(run_cfg, samples, vocab)
        rows.append((alpha, beta, evaluate_model(model, eval_samples, vocab)))
    return rows


@torch.no_grad()
def evaluate_model(model: PairContactModel, samples: list[SceneSample],
                   vocab: Vocab, batch_size: int = 8) -> dict:
    """All five metrics over a sample list, as a JSON-ready report."""
    model.eval()
    seg_acc = SegMetricsAccumulator()
    all_preds: list[list[ScoredPair]] = []
    all_gts: list[list] = []
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        images, maps, _ = batch_tensors(batch)
        outputs = model(images)
        pred_maps = outputs.seg_probs.argmax(dim=1).numpy()
        for i, sample in enumerate(batch):
            seg_acc.add(pred_maps[i], sample.contact_map)
            all_gts.append(sample.pairs)
        all_preds.extend(extract_detections(
            outputs, (maps.shape[2], maps.shape[1]), vocab))
    det = hoi_map(all_preds, all_gts)
    return metrics_report(det, seg_acc.result())
