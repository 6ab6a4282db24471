import os
for v in ("OMP_NUM_THREADS","OPENBLAS_NUM_THREADS","MKL_NUM_THREADS"):
    os.environ.setdefault(v, "1")
import pathlib, time
import numpy as np
from forgelens.config import TrainConfig
from forgelens.data import load_dataset
from forgelens.train import prepare_detector, evaluate, sample_losses, evaluate_localization
from forgelens.losses import combine_losses
from forgelens.optim import AdamW, lr_at
import math

tmp = pathlib.Path("/root/pkg/.calib/sweep")
cfg = TrainConfig(); cfg.seed = 3; cfg.train_dir = str(tmp/"alpha"); cfg.train.warm_start_samples = 64
cfg.train.perturb_jpeg_prob = 0.0; cfg.train.perturb_blur_prob = 0.0
view = load_dataset(cfg.train_dir, "train"); val = load_dataset(cfg.train_dir, "test")
beta = load_dataset(str(tmp/"beta"), "test")
det = prepare_detector(cfg, view)
LR = 6e-4
opt = AdamW(det.trainable_parameters(), lr=LR, weight_decay=cfg.train.weight_decay)
n = len(view); rng = np.random.default_rng(0); batch = 16; epochs = 10
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
    if epoch % 3 == 2 or epoch == epochs-1:
        pa, iou = evaluate_localization(det, val)
        print(f"ep{epoch:02d} pixacc={pa:.3f} IoU={iou:.3f}", flush=True)
va = evaluate(det, val, split="test"); be = evaluate(det, beta, split="test")
pa, iou = evaluate_localization(det, val)
print(f"final: val_auc={va.auc:.3f} beta_auc={be.auc:.3f} pixacc={pa:.3f} IoU={iou:.3f} ({time.perf_counter()-t0:.0f}s)", flush=True)
