import os
for v in ("OMP_NUM_THREADS","OPENBLAS_NUM_THREADS","MKL_NUM_THREADS"):
    os.environ.setdefault(v, "1")
import tempfile, pathlib, time
import numpy as np
from forgelens.config import TrainConfig
from forgelens.data import build_dataset, get_style, load_dataset
from forgelens.train import prepare_detector, evaluate, sample_losses, evaluate_localization
from forgelens.losses import combine_losses
from forgelens.optim import AdamW, lr_at

tmp = pathlib.Path("/root/pkg/.calib/sweep")
if not (tmp/"alpha"/"manifest-train.jsonl").exists():
    build_dataset(get_style("alpha"), tmp/"alpha", {"train": (200, 200), "test": (60, 60)}, seed=5)
    build_dataset(get_style("beta"), tmp/"beta", {"test": (60, 60)}, seed=6)

for LR in (6e-4, 1e-3):
    cfg = TrainConfig(); cfg.seed = 3; cfg.train_dir = str(tmp/"alpha"); cfg.train.warm_start_samples = 64
    cfg.train.perturb_jpeg_prob = 0.0; cfg.train.perturb_blur_prob = 0.0
    view = load_dataset(cfg.train_dir, "train"); val = load_dataset(cfg.train_dir, "test")
    beta = load_dataset(str(tmp/"beta"), "test")
    det = prepare_detector(cfg, view)
    opt = AdamW(det.trainable_parameters(), lr=LR, weight_decay=cfg.train.weight_decay)
    n = len(view); rng = np.random.default_rng(0); batch = 16; epochs = 10
    import math
    total_steps = epochs * math.ceil(n/batch); step = 0
    t0 = time.perf_counter()
    for epoch in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, batch):
            opt.lr = lr_at(step, total_steps, LR, 0.1)
            coll = {k: [] for k in ("ce","focal","dice","l1","giou")}
            for idx in order[s:s+batch]:
                pair, ann = view.load(int(idx))
                sample_losses(det, cfg, pair.image, pair.caption, pair.label, ann.mask, ann.bbox, coll)
            total, bd = combine_losses(coll["ce"], coll["focal"] or None, coll["dice"] or None,
                                       coll["l1"] or None, coll["giou"] or None, patch_enabled=True)
            opt.zero_grad(); total.backward(); opt.step()
            step += 1
        if epoch % 3 == 2:
            pa, iou = evaluate_localization(det, val)
            print(f"  lr={LR} ep{epoch:02d} pixacc={pa:.3f} IoU={iou:.3f}", flush=True)
    pa, iou = evaluate_localization(det, val)
    va = evaluate(det, val, split="test")
    be = evaluate(det, beta, split="test")
    print(f"lr={LR}: val_auc={va.auc:.3f} beta_auc={be.auc:.3f} pixacc={pa:.3f} IoU={iou:.3f} ({time.perf_counter()-t0:.0f}s)", flush=True)
