"""Synthetic manipulated image-text pairs with exact ground truth.

Scenes are 2-4 colored shapes on a styled background plus a one-line
caption that truthfully describes the salient pair of shapes, their
spatial relation, and the scene mood (rendered as background brightness).
Four built-in styles ("alpha".."delta") differ in palette, background,
shape vocabulary, and filler words, giving a measurable distribution
shift between domains while the content vocabulary stays shared.

Fakes come in three kinds:

* ``image_swap``  - one shape cell is overwritten with a foreign textured
  patch; the manipulation mask/bbox cover exactly that cell.
* ``text_flip``   - one caption token (color, relation, or mood word) is
  replaced by a contradicting one; flipped indices are recorded.
* ``both``        - both of the above.

Everything is a pure function of (seed, style), so regeneration is
byte-identical.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, InputError

IMAGE_SIZE = 32
CELL = 8
GRID = IMAGE_SIZE // CELL

# -- vocabulary ---------------------------------------------------------------

SPECIAL_WORDS = ["<bos>", "###Human:", "<Img>", "</Img>", "###Assistant:"]
OPTION_WORDS = ["A", "B"]
QUESTION_WORDS = ["does", "the", "image", "match", "text", "?", "options", "(", ")", "real", "fake", "news"]
PROMPT_WORDS = ["a", "photo", "of", "pristine", "flawless", "tampered", "corrupted", "scene"]
COLOR_WORDS = ["red", "orange", "yellow", "green", "blue", "purple", "teal", "pink", "brown", "gray"]
SHAPE_WORDS = ["circle", "square", "triangle", "diamond", "cross", "ring"]
RELATION_WORDS = ["above", "below", "left", "right"]
MOOD_WORDS = ["bright", "gloomy"]
STYLE_FILLERS = {
    "alpha": ["harbor", "dispatch", "tide"],
    "beta": ["meadow", "bulletin", "fern"],
    "gamma": ["canyon", "wire", "dune"],
    "delta": ["glacier", "journal", "frost"],
}

RELATION_ANTONYM = {"above": "below", "below": "above", "left": "right", "right": "left"}
MOOD_ANTONYM = {"bright": "gloomy", "gloomy": "bright"}

COLOR_RGB = {
    "red": (0.85, 0.12, 0.12),
    "orange": (0.95, 0.55, 0.10),
    "yellow": (0.95, 0.90, 0.20),
    "green": (0.15, 0.70, 0.22),
    "blue": (0.15, 0.32, 0.85),
    "purple": (0.55, 0.20, 0.75),
    "teal": (0.10, 0.70, 0.70),
    "pink": (0.95, 0.50, 0.70),
    "brown": (0.55, 0.35, 0.15),
    "gray": (0.55, 0.55, 0.55),
}


class Vocab:
    """Fixed token inventory shared by the data generator and both text models."""

    def __init__(self):
        words: List[str] = []
        for group in (SPECIAL_WORDS, OPTION_WORDS, QUESTION_WORDS, PROMPT_WORDS,
                      COLOR_WORDS, SHAPE_WORDS, RELATION_WORDS, MOOD_WORDS):
            words.extend(group)
        for style in sorted(STYLE_FILLERS):
            words.extend(STYLE_FILLERS[style])
        self.words = words
        self.index = {w: i for i, w in enumerate(words)}

    def __len__(self):
        return len(self.words)

    def encode(self, tokens: Sequence[str]) -> List[int]:
        try:
            return [self.index[t] for t in tokens]
        except KeyError as exc:
            raise InputError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.words[i] for i in ids]


VOCAB = Vocab()


# -- domain styles ------------------------------------------------------------


@dataclass(frozen=True)
class DomainStyle:
    name: str
    palette: Tuple[str, ...]
    background: Tuple[float, float, float]
    shapes: Tuple[str, ...]
    fillers: Tuple[str, ...]
    mood_slot_early: bool  # template variant: mood right after the opener

    def validate(self):
        if len(self.palette) < 2 or len(self.shapes) < 2:
            raise ConfigError(f"style {self.name!r} needs >=2 palette colors and shapes")


STYLES: Dict[str, DomainStyle] = {
    "alpha": DomainStyle("alpha", ("red", "orange", "yellow", "brown"), (0.82, 0.72, 0.55),
                         ("circle", "square", "triangle", "cross"), tuple(STYLE_FILLERS["alpha"]), False),
    "beta": DomainStyle("beta", ("blue", "teal", "purple", "gray"), (0.45, 0.58, 0.78),
                        ("circle", "square", "diamond", "ring"), tuple(STYLE_FILLERS["beta"]), True),
    "gamma": DomainStyle("gamma", ("green", "teal", "yellow", "pink"), (0.62, 0.82, 0.66),
                         ("triangle", "diamond", "cross", "ring"), tuple(STYLE_FILLERS["gamma"]), False),
    "delta": DomainStyle("delta", ("purple", "gray", "blue", "brown"), (0.30, 0.28, 0.38),
                         ("square", "triangle", "cross", "ring"), tuple(STYLE_FILLERS["delta"]), True),
}


def get_style(name: str) -> DomainStyle:
    try:
        return STYLES[name]
    except KeyError:
        raise ConfigError(f"unknown style {name!r}; available: {sorted(STYLES)}") from None


# -- sample containers --------------------------------------------------------


@dataclass
class ImageTextPair:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    caption: List[int]
    caption_text: str
    label: int  # 1 = fake
    kind: str  # none | image_swap | text_flip | both
    domain: str


@dataclass
class ForgeryAnnotation:
    mask: np.ndarray  # (H, W) uint8 in {0, 1}; all zeros unless the image was edited
    bbox: Optional[Tuple[float, float, float, float]]  # normalized x1, y1, x2, y2
    flipped_tokens: List[int] = field(default_factory=list)


# -- shape stamps -------------------------------------------------------------


def _shape_stamp(kind: str) -> np.ndarray:
    yy, xx = np.mgrid[0:CELL, 0:CELL]
    cy = cx = (CELL - 1) / 2.0
    dy, dx = yy - cy, xx - cx
    r = np.sqrt(dx * dx + dy * dy)
    if kind == "circle":
        return r <= 3.2
    if kind == "square":
        return (np.abs(dx) <= 2.6) & (np.abs(dy) <= 2.6)
    if kind == "triangle":
        return (dy >= -3) & (np.abs(dx) <= (dy + 3) * 0.58)
    if kind == "diamond":
        return (np.abs(dx) + np.abs(dy)) <= 3.4
    if kind == "cross":
        return (np.abs(dx) <= 1.2) | (np.abs(dy) <= 1.2)
    if kind == "ring":
        return (r <= 3.4) & (r >= 1.9)
    raise ConfigError(f"unknown shape kind {kind!r}")


_STAMPS = {k: _shape_stamp(k) for k in SHAPE_WORDS}

FOREIGN_COLORS = ((0.98, 0.05, 0.90), (0.55, 1.00, 0.05))  # outside every style palette


# -- generation ---------------------------------------------------------------


def _render_scene(rng, style: DomainStyle):
    mood = MOOD_WORDS[int(rng.integers(0, 2))]
    brightness = 1.0 if mood == "bright" else 0.38
    img = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.float32)
    img[:] = np.asarray(style.background, dtype=np.float32) * brightness

    n_shapes = int(rng.integers(2, 5))
    cells = rng.choice(GRID * GRID, size=n_shapes, replace=False)
    shapes = []
    for cell in cells:
        r, c = divmod(int(cell), GRID)
        kind = style.shapes[int(rng.integers(0, len(style.shapes)))]
        color = style.palette[int(rng.integers(0, len(style.palette)))]
        shapes.append((r, c, kind, color))
        stamp = _STAMPS[kind]
        block = img[r * CELL : (r + 1) * CELL, c * CELL : (c + 1) * CELL]
        block[stamp] = COLOR_RGB[color]

    img += rng.uniform(-0.015, 0.015, size=img.shape).astype(np.float32)
    np.clip(img, 0.0, 1.0, out=img)
    return img, shapes, mood


def _relation(a, b) -> str:
    (r0, c0), (r1, c1) = a, b
    if r0 != r1:
        return "above" if r0 < r1 else "below"
    return "left" if c0 < c1 else "right"


def _caption_tokens(rng, style: DomainStyle, shapes, mood: str) -> List[str]:
    r0, c0, kind0, color0 = shapes[0]
    r1, c1, kind1, color1 = shapes[1]
    rel = _relation((r0, c0), (r1, c1))
    opener = style.fillers[int(rng.integers(0, len(style.fillers)))]
    closer = style.fillers[int(rng.integers(0, len(style.fillers)))]
    core = [color0, kind0, rel, color1, kind1]
    if style.mood_slot_early:
        return [opener, mood] + core + [closer]
    return [opener] + core + [mood, closer]


def _flip_token(rng, style: DomainStyle, tokens: List[str]) -> Tuple[List[str], int]:
    """Replace one grounded caption token with a contradicting one."""
    mood_idx = 1 if style.mood_slot_early else len(tokens) - 2
    color_idx = 2 if style.mood_slot_early else 1
    rel_idx = color_idx + 2
    choice = int(rng.integers(0, 3))
    flipped = list(tokens)
    if choice == 0:
        alternatives = [c for c in style.palette if c != tokens[color_idx]]
        flipped[color_idx] = alternatives[int(rng.integers(0, len(alternatives)))]
        return flipped, color_idx
    if choice == 1:
        flipped[rel_idx] = RELATION_ANTONYM[tokens[rel_idx]]
        return flipped, rel_idx
    flipped[mood_idx] = MOOD_ANTONYM[tokens[mood_idx]]
    return flipped, mood_idx


def _swap_patch(rng, img: np.ndarray, shapes) -> np.ndarray:
    """Overwrite one shape's cell with a foreign checkerboard; returns the mask."""
    r, c, _, _ = shapes[int(rng.integers(0, len(shapes)))]
    y0, x0 = r * CELL, c * CELL
    yy, xx = np.mgrid[0:CELL, 0:CELL]
    checker = ((yy // 2 + xx // 2) % 2).astype(np.float32)[..., None]
    patch = checker * FOREIGN_COLORS[0] + (1.0 - checker) * FOREIGN_COLORS[1]
    patch = patch + rng.uniform(-0.05, 0.05, size=patch.shape)
    img[y0 : y0 + CELL, x0 : x0 + CELL] = np.clip(patch, 0.0, 1.0).astype(np.float32)
    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    mask[y0 : y0 + CELL, x0 : x0 + CELL] = 1
    return mask


def tight_bbox(mask: np.ndarray) -> Optional[Tuple[float, float, float, float]]:
    """Normalized tight bounding box of a binary mask, or None if empty."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    h, w = mask.shape
    return (cols[0] / w, rows[0] / h, (cols[-1] + 1) / w, (rows[-1] + 1) / h)


KINDS = ("none", "image_swap", "text_flip", "both")


def generate_pair(seed: int, style: DomainStyle, force_kind: Optional[str] = None):
    """Deterministically render one (pair, annotation) from a 64-bit seed."""
    if force_kind is not None and force_kind not in KINDS:
        raise ConfigError(f"unknown manipulation kind {force_kind!r}")
    style.validate()
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)

    img, shapes, mood = _render_scene(rng, style)
    tokens = _caption_tokens(rng, style, shapes, mood)

    if force_kind is None:
        kind = "none" if rng.random() < 0.5 else KINDS[1 + int(rng.integers(0, 3))]
    else:
        kind = force_kind

    mask = np.zeros((IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)
    flipped: List[int] = []
    if kind in ("image_swap", "both"):
        mask = _swap_patch(rng, img, shapes)
    if kind in ("text_flip", "both"):
        tokens, idx = _flip_token(rng, STYLES.get(style.name, style), tokens)
        flipped = [idx]

    pair = ImageTextPair(
        image=img,
        caption=VOCAB.encode(tokens),
        caption_text=" ".join(tokens),
        label=0 if kind == "none" else 1,
        kind=kind,
        domain=style.name,
    )
    ann = ForgeryAnnotation(mask=mask, bbox=tight_bbox(mask), flipped_tokens=flipped)
    return pair, ann


# -- perturbations ------------------------------------------------------------


@dataclass(frozen=True)
class PerturbSettings:
    jpeg_prob: float = 0.25
    blur_prob: float = 0.25
    jpeg_quality: Tuple[float, float] = (0.5, 0.9)
    blur_sigma: Tuple[float, float] = (0.3, 0.8)


_DCT8 = None


def _dct8() -> np.ndarray:
    global _DCT8
    if _DCT8 is None:
        k = np.arange(8)[:, None]
        n = np.arange(8)[None, :]
        d = np.cos(np.pi * (2 * n + 1) * k / 16.0) * np.sqrt(2.0 / 8.0)
        d[0] /= np.sqrt(2.0)
        _DCT8 = d
    return _DCT8


def _jpeg_like(img: np.ndarray, quality: float) -> np.ndarray:
    d = _dct8()
    h, w, c = img.shape
    step = 0.02 + (1.0 - quality) * 0.22
    blocks = img.reshape(h // 8, 8, w // 8, 8, c)
    coeff = np.einsum("ka,hawbc,lb->hkwlc", d, blocks, d)
    coeff = np.round(coeff / step) * step
    out = np.einsum("ka,hkwlc,lb->hawbc", d, coeff, d)
    return out.reshape(h, w, c)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(2.5 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (xs / max(sigma, 1e-12)) ** 2)
    kern /= kern.sum()
    pad = np.pad(img, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    out = sum(kern[i] * pad[i : i + img.shape[0]] for i in range(kern.size))
    pad = np.pad(out, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = sum(kern[i] * pad[:, i : i + img.shape[1]] for i in range(kern.size))
    return out


def perturb(image: np.ndarray, seed: int, settings: PerturbSettings = PerturbSettings()) -> np.ndarray:
    """Seeded JPEG-like quantization and/or Gaussian blur, clipped to [0,1]."""
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out = image.astype(np.float64)
    if rng.random() < settings.jpeg_prob:
        q = rng.uniform(*settings.jpeg_quality)
        out = _jpeg_like(out, q)
    if rng.random() < settings.blur_prob:
        sigma = rng.uniform(*settings.blur_sigma)
        out = _gaussian_blur(out, sigma)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# -- portable pixmap I/O -------------------------------------------------------


def write_ppm(path: Path, image: np.ndarray):
    u8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{u8.shape[1]} {u8.shape[0]}\n255\n".encode())
        fh.write(u8.tobytes())


def read_ppm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P6":
            raise InputError(f"{path}: not a binary PPM")
        w, h = map(int, fh.readline().split())
        fh.readline()
        buf = fh.read(w * h * 3)
    return np.frombuffer(buf, dtype=np.uint8).reshape(h, w, 3).astype(np.float32) / 255.0


def write_pgm(path: Path, gray: np.ndarray):
    u8 = gray.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{u8.shape[1]} {u8.shape[0]}\n255\n".encode())
        fh.write(u8.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise InputError(f"{path}: not a binary PGM")
        w, h = map(int, fh.readline().split())
        fh.readline()
        buf = fh.read(w * h)
    return np.frombuffer(buf, dtype=np.uint8).reshape(h, w)


# -- on-disk datasets ----------------------------------------------------------


def _item_seed(dataset_seed: int, style_name: str, split: str, index: int) -> int:
    entropy = [int(dataset_seed) & 0xFFFFFFFFFFFFFFFF,
               zlib.crc32(style_name.encode()),
               zlib.crc32(split.encode()),
               index]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def build_dataset(style: DomainStyle, out_dir, counts: Dict[str, Tuple[int, int]], seed: int):
    """Write images, masks, and per-split manifests under ``out_dir``.

    ``counts`` maps split name to (n_real, n_fake).  Fake kinds cycle
    through image_swap / text_flip / both so the mix is exact.
    """
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create dataset directory {out}: {exc}") from exc

    fake_cycle = ("image_swap", "text_flip", "both")
    for split, (n_real, n_fake) in counts.items():
        records = []
        for i in range(n_real + n_fake):
            kind = "none" if i < n_real else fake_cycle[(i - n_real) % 3]
            pair, ann = generate_pair(_item_seed(seed, style.name, split, i), style, force_kind=kind)
            sample_id = f"{style.name}-{split}-{i:05d}"
            image_rel = f"images/{sample_id}.ppm"
            write_ppm(out / image_rel, pair.image)
            mask_rel = None
            if ann.mask.any():
                mask_rel = f"masks/{sample_id}.pgm"
                write_pgm(out / mask_rel, ann.mask * 255)
            records.append({
                "id": sample_id,
                "image": image_rel,
                "mask": mask_rel,
                "caption": pair.caption,
                "caption_text": pair.caption_text,
                "label": pair.label,
                "kind": pair.kind,
                "bbox": list(ann.bbox) if ann.bbox else None,
                "flipped_tokens": ann.flipped_tokens,
                "domain": pair.domain,
            })
        records.sort(key=lambda r: r["id"])
        manifest = out / f"manifest-{split}.jsonl"
        try:
            with open(manifest, "w") as fh:
                for rec in records:
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        except OSError as exc:
            raise InputError(f"cannot write manifest {manifest}: {exc}") from exc
    return out


@dataclass
class DatasetView:
    """Manifest-backed view of one split; samples load lazily from disk."""

    root: Path
    split: str
    records: List[dict]

    def __len__(self):
        return len(self.records)

    def load(self, i: int) -> Tuple[ImageTextPair, ForgeryAnnotation]:
        rec = self.records[i]
        image = read_ppm(self.root / rec["image"])
        if rec["mask"]:
            mask = (read_pgm(self.root / rec["mask"]) > 127).astype(np.uint8)
        else:
            mask = np.zeros(image.shape[:2], dtype=np.uint8)
        pair = ImageTextPair(
            image=image,
            caption=list(rec["caption"]),
            caption_text=rec["caption_text"],
            label=int(rec["label"]),
            kind=rec["kind"],
            domain=rec["domain"],
        )
        bbox = tuple(rec["bbox"]) if rec["bbox"] else None
        ann = ForgeryAnnotation(mask=mask, bbox=bbox, flipped_tokens=list(rec["flipped_tokens"]))
        return pair, ann


def load_dataset(root, split: str) -> DatasetView:
    root = Path(root)
    manifest = root / f"manifest-{split}.jsonl"
    if not manifest.exists():
        raise InputError(f"manifest not found: {manifest}")
    records = [json.loads(line) for line in manifest.read_text().splitlines() if line.strip()]
    return DatasetView(root=root, split=split, records=records)


def downsample_mask(mask: np.ndarray, target: int) -> np.ndarray:
    """Max-pool a binary mask down to (target, target)."""
    h, w = mask.shape
    fh, fw = h // target, w // target
    return mask.reshape(target, fh, target, fw).max(axis=(1, 3))
