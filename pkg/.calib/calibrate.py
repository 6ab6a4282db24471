import os
for v in ("OMP_NUM_THREADS","OPENBLAS_NUM_THREADS","MKL_NUM_THREADS"):
    os.environ.setdefault(v, "1")
import sys, time, pathlib
import numpy as np
from forgelens.config import TrainConfig
from forgelens.data import build_dataset, get_style, load_dataset
from forgelens.train import prepare_detector, evaluate, sample_losses, evaluate_localization
from forgelens.losses import combine_losses
from forgelens.optim import AdamW, lr_at

root = pathlib.Path("/root/pkg/.calib/data")
if not (root/"alpha"/"manifest-train.jsonl").exists():
    t0 = time.perf_counter()
    build_dataset(get_style("alpha"), root/"alpha", {"train": (1000, 1000), "test": (250, 250)}, seed=11)
    for s in ("beta", "gamma", "delta"):
        build_dataset(get_style(s), root/s, {"test": (250, 250)}, seed=11)
    print(f"datasets built in {time.perf_counter()-t0:.0f}s", flush=True)

variant = sys.argv[1] if len(sys.argv) > 1 else "full"
cfg = TrainConfig()
cfg.seed = 11
cfg.train_dir = str(root/"alpha")
if variant == "baseline":
    cfg.modules.cross_modal = False; cfg.modules.artifact = False
elif variant == "cm":
    cfg.modules.artifact = False
elif variant == "va":
    cfg.modules.cross_modal = False

view = load_dataset(cfg.train_dir, "train")
val = load_dataset(cfg.train_dir, "test")
evals = {s: load_dataset(str(root/s), "test") for s in ("beta","gamma","delta")}
t0 = time.perf_counter()
det = prepare_detector(cfg, view)
print(f"[{variant}] warm start {time.perf_counter()-t0:.0f}s", flush=True)
opt = AdamW(det.trainable_parameters(), lr=cfg.train.lr, betas=(cfg.train.beta1, cfg.train.beta2),
            eps=cfg.train.eps, weight_decay=cfg.train.weight_decay)
n = len(view); rng = np.random.default_rng([cfg.seed, 0x5E]); batch = cfg.train.batch_size
epochs = cfg.train.epochs
import math
total_steps = epochs * math.ceil(n/batch); step = 0
from forgelens.data import PerturbSettings, perturb
ps = PerturbSettings(jpeg_prob=cfg.train.perturb_jpeg_prob, blur_prob=cfg.train.perturb_blur_prob)
from forgelens.train import _perturb_seed
for epoch in range(epochs):
    t1 = time.perf_counter()
    order = rng.permutation(n); ce = []
    for s in range(0, n, batch):
        opt.lr = lr_at(step, total_steps, cfg.train.lr, cfg.train.warmup_frac)
        coll = {k: [] for k in ("ce","focal","dice","l1","giou")}
        for idx in order[s:s+batch]:
            pair, ann = view.load(int(idx))
            img = perturb(pair.image, _perturb_seed(cfg.seed, epoch, int(idx)), ps)
            sample_losses(det, cfg, img, pair.caption, pair.label, ann.mask, ann.bbox, coll)
        total, bd = combine_losses(coll["ce"], coll["focal"] or None, coll["dice"] or None,
                                   coll["l1"] or None, coll["giou"] or None,
                                   patch_enabled=cfg.modules.artifact)
        opt.zero_grad(); total.backward(); opt.step()
        ce.append(bd.l_ce); step += 1
    va = evaluate(det, val, split="test")
    held = {s: evaluate(det, v, split="test").auc for s, v in evals.items()}
    avg = float(np.mean(list(held.values())))
    extra = ""
    if cfg.modules.artifact:
        pa, iou = evaluate_localization(det, val)
        extra = f" pixacc={pa:.3f} iou={iou:.3f}"
    print(f"[{variant}] ep{epoch:02d} ({time.perf_counter()-t1:.0f}s) ce={np.mean(ce):.3f} "
          f"val_auc={va.auc:.3f} held={held} avg={avg:.3f}{extra}", flush=True)
