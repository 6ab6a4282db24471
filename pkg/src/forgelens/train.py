"""Training loop, evaluation, cross-domain runs, and the ablation grids."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, inference_mode
from .autodiff.ops import take_per_row, log_softmax
from .autodiff.tensor import narrow, reduce_mean
from .checkpoint import apply_state, load_checkpoint, save_checkpoint
from .config import TrainConfig, config_to_text, load_config, parse_config
from .data import DatasetView, PerturbSettings, downsample_mask, load_dataset, perturb
from .detector import ForgeryDetector, build_detector
from .encoders import warm_start_image_encoder, warm_start_text_encoder
from .errors import ConfigError, InputError, NumericError
from .lm import format_streams, predict_answer, pretrain_lm
from .losses import combine_losses, cross_entropy, dice_loss, focal_loss, giou_loss, l1_box
from .metrics import MetricsReport, compute_report
from .optim import AdamW, lr_at


@dataclass
class TrainResult:
    checkpoint: Path
    best_checkpoint: Optional[Path]
    log_path: Path
    final_val: Optional[MetricsReport]
    best_val_auc: float
    grad_accum: Dict[str, float]
    frozen_unchanged: bool
    steps: int


def _frozen_snapshot(detector: ForgeryDetector) -> Dict[str, bytes]:
    return {name: p.data.tobytes() for name, p in detector.frozen_parameters().items()}


def _frozen_matches(detector: ForgeryDetector, snapshot: Dict[str, bytes]) -> bool:
    current = _frozen_snapshot(detector)
    return current.keys() == snapshot.keys() and all(
        current[k] == snapshot[k] for k in snapshot
    )


def _align_vision_bridge(detector: ForgeryDetector, samples, cfg: TrainConfig):
    """Teach the frozen LM to read bridged image tokens by captioning them."""
    from .autodiff import concat

    bos = detector.vocab.index["<bos>"]
    opt = AdamW({f"vision_bridge.{n}": p for n, p in detector.vision_bridge.named_parameters()},
                lr=cfg.train.aux_lr)
    for _ in range(cfg.train.bridge_align_epochs):
        for image, caption in samples:
            enc = detector.image_encoder(image)
            prefix = detector.vision_bridge(enc.fused_patches)
            if len(caption) < 2:
                continue
            stream = [bos] + list(caption)
            seq = concat([prefix, detector.lm.embed_tokens(stream[:-1])], axis=0)
            logits = detector.lm.forward_embeddings(seq)
            k = prefix.shape[0]
            rows = narrow(logits, (slice(k, k + len(stream) - 1), slice(None)))
            logp = log_softmax(rows, axis=-1)
            loss = -reduce_mean(take_per_row(logp, np.asarray(stream[1:], dtype=np.int64)))
            opt.zero_grad()
            loss.backward()
            opt.step()
    detector.vision_bridge.freeze()


def prepare_detector(cfg: TrainConfig, view: DatasetView) -> ForgeryDetector:
    """Build the model, run the warm starts, and freeze the base stack."""
    detector = build_detector(cfg)
    n = min(cfg.train.warm_start_samples, len(view))
    samples = []
    for i in range(n):
        pair, _ = view.load(i)
        samples.append((pair.image, pair.caption))

    ws_rng = np.random.default_rng([cfg.seed, 0x11])
    warm_start_image_encoder(detector.image_encoder, [img for img, _ in samples],
                             ws_rng, epochs=cfg.train.warm_start_epochs, lr=cfg.train.aux_lr)
    warm_start_text_encoder(detector.text_encoder, [cap for _, cap in samples],
                            np.random.default_rng([cfg.seed, 0x12]),
                            epochs=cfg.train.warm_start_epochs, lr=cfg.train.aux_lr)
    bos = detector.vocab.index["<bos>"]
    captions = [cap for _, cap in samples]
    streams = [[bos] + list(c) for c in captions]
    streams += format_streams(detector.assembler, captions, bos)
    pretrain_lm(detector.lm, streams, epochs=cfg.train.lm_pretrain_epochs, lr=cfg.train.aux_lr)
    _align_vision_bridge(detector, samples, cfg)
    detector.invalidate_caches()
    return detector


def sample_losses(detector: ForgeryDetector, cfg: TrainConfig, image, caption,
                  label: int, mask: np.ndarray, bbox, collectors: Dict[str, list]):
    """Forward one sample and append its loss terms to the collectors."""
    out = detector.forward(image, caption, target_label=label)
    collectors["ce"].append(cross_entropy(out.answer_logits, [out.assembly.target_token]))
    if cfg.modules.artifact and cfg.loss.pixel:
        seg = downsample_mask(mask, out.m_s_log.shape[0])
        collectors["focal"].append(focal_loss(out.m_s_log, seg, gamma=cfg.loss.focal_gamma))
        collectors["dice"].append(dice_loss(out.m_s_log, seg, smooth=cfg.loss.dice_smooth))
    if cfg.modules.artifact and cfg.loss.patch and bbox is not None:
        collectors["l1"].append(l1_box(out.bbox, bbox))
        collectors["giou"].append(giou_loss(out.bbox, bbox))
    return out


def train(cfg: TrainConfig, out_path, quiet: bool = True) -> TrainResult:
    """Full training run per the config; writes final/best checkpoints and a log."""
    cfg.validate()
    if not cfg.train_dir:
        raise ConfigError("config is missing train_dir")
    view = load_dataset(cfg.train_dir, "train")
    try:
        val_view = load_dataset(cfg.train_dir, "test")
    except InputError:
        val_view = None

    detector = prepare_detector(cfg, view)
    snapshot = _frozen_snapshot(detector)

    trainables = detector.trainable_parameters()
    opt = AdamW(trainables, lr=cfg.train.lr, betas=(cfg.train.beta1, cfg.train.beta2),
                eps=cfg.train.eps, weight_decay=cfg.train.weight_decay)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    log_path = out_path.with_suffix(out_path.suffix + ".log.jsonl")
    best_path = out_path.with_suffix(out_path.suffix + ".best")

    n = len(view)
    batch = cfg.train.batch_size
    steps_per_epoch = math.ceil(n / batch)
    total_steps = cfg.train.epochs * steps_per_epoch
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5E])
    perturb_settings = PerturbSettings(
        jpeg_prob=cfg.train.perturb_jpeg_prob, blur_prob=cfg.train.perturb_blur_prob
    )

    step = 0
    best_auc = -1.0
    best_saved = None
    final_val = None
    with open(log_path, "w") as log_fh:
        for epoch in range(cfg.train.epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, batch):
                opt.lr = lr_at(step, total_steps, cfg.train.lr, cfg.train.warmup_frac)
                collectors: Dict[str, list] = {k: [] for k in ("ce", "focal", "dice", "l1", "giou")}
                for idx in order[start : start + batch]:
                    pair, ann = view.load(int(idx))
                    image = perturb(pair.image, _perturb_seed(cfg.seed, epoch, int(idx)),
                                    perturb_settings)
                    sample_losses(detector, cfg, image, pair.caption, pair.label,
                                  ann.mask, ann.bbox, collectors)
                total, breakdown = combine_losses(
                    collectors["ce"], collectors["focal"] or None, collectors["dice"] or None,
                    collectors["l1"] or None, collectors["giou"] or None,
                    patch_enabled=cfg.modules.artifact and cfg.loss.patch,
                )
                if not np.isfinite(breakdown.total):
                    raise NumericError(
                        f"non-finite loss at step {step}: {breakdown.to_dict()}"
                    )
                opt.zero_grad()
                total.backward()
                opt.step()
                log_fh.write(json.dumps(
                    {"step": step, "epoch": epoch, "lr": opt.lr, **breakdown.to_dict()},
                    separators=(",", ":"),
                ) + "\n")
                step += 1
            if val_view is not None:
                report = evaluate(detector, val_view, domain=view.records[0]["domain"],
                                  split="test")
                final_val = report
                log_fh.write(json.dumps(
                    {"epoch": epoch, "val": json.loads(report.to_json())},
                    separators=(",", ":"),
                ) + "\n")
                if report.auc > best_auc:
                    best_auc = report.auc
                    save_checkpoint(best_path, dict(detector.named_parameters()))
                    best_saved = best_path

    save_checkpoint(out_path, dict(detector.named_parameters()))
    (out_path.parent / (out_path.name + ".cfg")).write_text(config_to_text(cfg))
    if best_saved is not None:
        (best_path.parent / (best_path.name + ".cfg")).write_text(config_to_text(cfg))
    return TrainResult(
        checkpoint=out_path,
        best_checkpoint=best_saved,
        log_path=log_path,
        final_val=final_val,
        best_val_auc=best_auc,
        grad_accum=dict(opt.grad_accum),
        frozen_unchanged=_frozen_matches(detector, snapshot),
        steps=step,
    )


def _perturb_seed(seed: int, epoch: int, idx: int) -> int:
    state = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x9E, epoch, idx]).generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


# -- evaluation -----------------------------------------------------------------


def evaluate(detector: ForgeryDetector, view: DatasetView, domain: str = "",
             split: str = "test", dump_maps: Optional[Path] = None) -> MetricsReport:
    scores, labels, preds = [], [], []
    options = detector.assembler.scoring_options
    with inference_mode():
        for i in range(len(view)):
            pair, _ = view.load(i)
            out = detector.forward(pair.image, pair.caption)
            label, score = predict_answer(out.answer_logits.data, options, detector.vocab)
            scores.append(score)
            labels.append(pair.label)
            preds.append(label)
            if dump_maps is not None and out.m_s is not None:
                from .localization import save_map_pgm

                dump_maps.mkdir(parents=True, exist_ok=True)
                save_map_pgm(dump_maps / f"{view.records[i]['id']}.pgm", out.m_s)
    return compute_report(scores, labels, preds, domain or (view.records[0]["domain"] if view.records else ""), split)


def evaluate_localization(detector: ForgeryDetector, view: DatasetView) -> Tuple[float, float]:
    """Pixel accuracy of argmax(M_s) and mean box IoU on image-edited samples."""
    accs, ious = [], []
    with inference_mode():
        for i in range(len(view)):
            pair, ann = view.load(i)
            if ann.bbox is None:
                continue
            out = detector.forward(pair.image, pair.caption)
            seg = downsample_mask(ann.mask, out.m_s.shape[0])
            pred = np.argmax(out.m_s.data, axis=-1)
            accs.append(float((pred == seg).mean()))
            ious.append(_box_iou(out.bbox.data, np.asarray(ann.bbox)))
    if not accs:
        raise InputError("dataset holds no image-manipulated samples")
    return float(np.mean(accs)), float(np.mean(ious))


def _box_iou(a: np.ndarray, b: np.ndarray) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def load_trained(ckpt_path) -> ForgeryDetector:
    """Rebuild a detector from a checkpoint plus its config sidecar."""
    ckpt_path = Path(ckpt_path)
    cfg_path = ckpt_path.parent / (ckpt_path.name + ".cfg")
    if not cfg_path.exists():
        raise ConfigError(f"missing config sidecar {cfg_path}")
    cfg = parse_config(cfg_path.read_text())
    detector = build_detector(cfg)
    for module in detector.frozen_stack():
        module.freeze()
    apply_state(dict(detector.named_parameters()), load_checkpoint(ckpt_path))
    detector.invalidate_caches()
    return detector


def cross_domain(ckpt_path, data_dirs: Sequence[str], split: str = "test") -> List[MetricsReport]:
    """Evaluate one trained checkpoint across several domain datasets."""
    detector = load_trained(ckpt_path)
    reports = []
    for d in data_dirs:
        view = load_dataset(d, split)
        reports.append(evaluate(detector, view, domain=view.records[0]["domain"], split=split))
    return reports


# -- ablations --------------------------------------------------------------------


MODULE_GRID = (
    ("baseline", dict(cross_modal=False, artifact=False, soft_prompt=True, answer_heuristics=True)),
    ("cross_modal_only", dict(cross_modal=True, artifact=False, soft_prompt=True, answer_heuristics=True)),
    ("artifact_only", dict(cross_modal=False, artifact=True, soft_prompt=True, answer_heuristics=True)),
    ("full", dict(cross_modal=True, artifact=True, soft_prompt=True, answer_heuristics=True)),
)

PROMPT_GRID = (
    ("no_soft_prompt", dict(cross_modal=True, artifact=True, soft_prompt=False, answer_heuristics=True)),
    ("no_answer_heuristics", dict(cross_modal=True, artifact=True, soft_prompt=True, answer_heuristics=False)),
    ("no_soft_prompt_no_heuristics", dict(cross_modal=True, artifact=True, soft_prompt=False, answer_heuristics=False)),
    ("full", dict(cross_modal=True, artifact=True, soft_prompt=True, answer_heuristics=True)),
)


def ablate(cfg: TrainConfig, out_dir, eval_dirs: Sequence[str],
           grids: Sequence[str] = ("modules", "prompts")) -> dict:
    """Train every variant in the requested grids and tabulate held-out metrics.

    Returns {grid: {variant: {"domains": {name: report-dict}, "avg_auc": float}}};
    the "full" variant is trained once and reused across grids.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chosen = []
    if "modules" in grids:
        chosen.append(("modules", MODULE_GRID))
    if "prompts" in grids:
        chosen.append(("prompts", PROMPT_GRID))
    if not chosen:
        raise ConfigError(f"no known grid in {grids!r}")

    trained: Dict[str, Path] = {}
    results: Dict[str, dict] = {}
    for grid_name, grid in chosen:
        results[grid_name] = {}
        for variant, toggles in grid:
            if variant not in trained:
                vcfg = replace(cfg, modules=replace(cfg.modules, **toggles))
                ckpt = out_dir / f"{variant}.ckpt"
                train(vcfg, ckpt)
                trained[variant] = ckpt
            reports = cross_domain(trained[variant], eval_dirs)
            results[grid_name][variant] = {
                "domains": {r.domain: json.loads(r.to_json()) for r in reports},
                "avg_auc": float(np.mean([r.auc for r in reports])),
            }
    (out_dir / "ablation.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    return results
