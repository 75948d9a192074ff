"""Synthetic scene generation and dataset I/O.

Each scene renders "humans" as composites of 17 colored body-part regions
laid out at known coordinates inside the human box, and objects as flat
shapes. Contact ground truth is painted where a part region overlaps the
object mask, dilated by one pixel, so every label is exact by construction.

On-disk layout (see README for the full schema):
    manifest.json            vocab, image size, sample list
    img_<id>.npy             float32 (H, W, 3) image in [0, 1]
    mask_<id>.png            uint8 (H, W), pixel value = part index, 0 = background
    ann_<id>.json            interaction pairs + 17-entry contact label vector
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import binary_dilation

from .errors import ConfigError, SchemaError

NUM_PARTS = 17
NO_INTERACTION = "no_interaction"

DEFAULT_BODY_PARTS = (
    "head", "neck", "chest", "belly", "buttocks",
    "left_upper_arm", "right_upper_arm", "left_forearm", "right_forearm",
    "left_hand", "right_hand", "left_thigh", "right_thigh",
    "left_shin", "right_shin", "left_foot", "right_foot",
)

DEFAULT_ACTIONS = (
    "hold", "carry", "kick", "sit_on", "push", "ride", "eat", "step_on",
    NO_INTERACTION,
)

DEFAULT_OBJECTS = ("ball", "cup", "chair", "box", "bike", "book")

# Relative (x1, y1, x2, y2) of each part inside the human box, part order as
# DEFAULT_BODY_PARTS. Regions tile a rough standing figure and do not overlap.
PART_LAYOUT = (
    (0.30, 0.00, 0.70, 0.14),   # head
    (0.40, 0.14, 0.60, 0.18),   # neck
    (0.25, 0.18, 0.75, 0.32),   # chest
    (0.25, 0.32, 0.75, 0.44),   # belly
    (0.25, 0.44, 0.75, 0.52),   # buttocks
    (0.05, 0.18, 0.25, 0.30),   # left_upper_arm
    (0.75, 0.18, 0.95, 0.30),   # right_upper_arm
    (0.00, 0.30, 0.20, 0.42),   # left_forearm
    (0.80, 0.30, 1.00, 0.42),   # right_forearm
    (0.00, 0.42, 0.16, 0.52),   # left_hand
    (0.84, 0.42, 1.00, 0.52),   # right_hand
    (0.26, 0.52, 0.48, 0.70),   # left_thigh
    (0.52, 0.52, 0.74, 0.70),   # right_thigh
    (0.28, 0.70, 0.46, 0.88),   # left_shin
    (0.54, 0.70, 0.72, 0.88),   # right_shin
    (0.22, 0.88, 0.46, 1.00),   # left_foot
    (0.54, 0.88, 0.78, 1.00),   # right_foot
)

# Candidate contact parts per default action, 1-based part indices.
DEFAULT_ACTION_PARTS = {
    "hold": (10, 11),
    "carry": (3, 6, 7, 8, 9),
    "kick": (16, 17),
    "sit_on": (5, 12, 13),
    "push": (8, 9, 10, 11),
    "ride": (5, 10, 11),
    "eat": (1, 10, 11),
    "step_on": (16, 17),
}


def part_color(part: int) -> tuple[float, float, float]:
    """Distinct render color for 1-based part index."""
    hue = (part - 1) / NUM_PARTS
    val = 0.92 if part % 2 else 0.62
    return colorsys.hsv_to_rgb(hue, 0.85, val)


def object_color(obj: int) -> tuple[float, float, float]:
    """Pastel render color for 0-based object class, distinct from parts."""
    return colorsys.hsv_to_rgb((obj + 0.5) / 8.0, 0.30, 0.98)


@dataclass(frozen=True)
class Vocab:
    """Names for the three label spaces.

    ``actions`` always contains the reserved no_interaction entry as its
    LAST element; ``body_parts`` has exactly 17 entries (the part count is
    architectural, it sizes the contact prior and segmentation channels).
    """

    body_parts: tuple[str, ...] = DEFAULT_BODY_PARTS
    actions: tuple[str, ...] = DEFAULT_ACTIONS
    objects: tuple[str, ...] = DEFAULT_OBJECTS

    def __post_init__(self):
        if len(self.body_parts) != NUM_PARTS:
            raise ConfigError(f"need exactly {NUM_PARTS} body parts, got {len(self.body_parts)}")
        if not self.actions or not self.objects:
            raise ConfigError("empty action or object vocabulary")
        if self.actions[-1] != NO_INTERACTION:
            raise ConfigError(f"last action must be {NO_INTERACTION!r}, got {self.actions[-1]!r}")
        for names in (self.body_parts, self.actions, self.objects):
            if len(set(names)) != len(names):
                raise ConfigError(f"duplicate names in vocab: {names}")

    @property
    def num_real_actions(self) -> int:
        return len(self.actions) - 1

    @property
    def no_interaction_index(self) -> int:
        return len(self.actions) - 1

    def to_dict(self) -> dict:
        return {
            "body_parts": list(self.body_parts),
            "actions": list(self.actions),
            "objects": list(self.objects),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(
            body_parts=tuple(d["body_parts"]),
            actions=tuple(d["actions"]),
            objects=tuple(d["objects"]),
        )


@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel box, corners (x1, y1) top-left and (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass
class InteractionPair:
    """One ground-truth <human, action, object, contact parts> tuple."""

    human_box: Box
    object_box: Box
    object_class: int
    action_class: int
    contact_parts: frozenset[int]


@dataclass
class SceneSample:
    """One image with its interaction pairs, part-labeled contact map and
    the 17-entry binary contact label vector."""

    image: np.ndarray          # (H, W, 3) float32 in [0, 1]
    pairs: list[InteractionPair]
    contact_map: np.ndarray    # (H, W) uint8, 0 = background, k = part k
    contact_labels: np.ndarray  # (17,) uint8


@dataclass(frozen=True)
class SceneConfig:
    height: int = 128
    width: int = 128
    min_pairs: int = 1
    max_pairs: int = 2
    vocab: Vocab = field(default_factory=Vocab)
    human_width: tuple[int, int] = (36, 60)
    human_height: tuple[int, int] = (56, 96)
    object_size: tuple[int, int] = (12, 26)
    parts_per_pair: tuple[int, int] = (1, 2)
    # Optional restriction of contact parts to a set of 1-based indices.
    part_pool: tuple[int, ...] | None = None
    noise: float = 0.04
    max_attempts: int = 30

    def __post_init__(self):
        if self.height % 32 or self.width % 32:
            raise ConfigError(f"image size {self.height}x{self.width} must be a multiple of 32")
        if self.height < 32 or self.width < 32:
            raise ConfigError("image smaller than one backbone stride")
        if not (0 <= self.min_pairs <= self.max_pairs):
            raise ConfigError(f"bad pair range ({self.min_pairs}, {self.max_pairs})")
        if self.part_pool is not None:
            bad = [p for p in self.part_pool if not 1 <= p <= NUM_PARTS]
            if bad or not self.part_pool:
                raise ConfigError(f"part_pool entries must be in [1, {NUM_PARTS}]: {self.part_pool}")

    def action_candidates(self) -> dict[int, tuple[int, ...]]:
        """Candidate contact parts per real action index.

        Actions with default names use the hand-built table; anything else
        falls back to a deterministic round-robin over the 17 parts.
        """
        out = {}
        for idx, name in enumerate(self.vocab.actions[:-1]):
            if name in DEFAULT_ACTION_PARTS:
                out[idx] = DEFAULT_ACTION_PARTS[name]
            else:
                out[idx] = ((2 * idx) % NUM_PARTS + 1, (2 * idx + 1) % NUM_PARTS + 1)
        return out


def part_rects(human: Box) -> list[tuple[int, int, int, int]]:
    """Integer pixel rects of the 17 part regions inside a human box.

    Rects are clamped to at least one pixel so tiny humans still expose
    every part.
    """
    hx1, hy1 = int(human.x1), int(human.y1)
    w = human.x2 - human.x1
    h = human.y2 - human.y1
    rects = []
    for rx1, ry1, rx2, ry2 in PART_LAYOUT:
        x1 = hx1 + int(round(rx1 * w))
        y1 = hy1 + int(round(ry1 * h))
        x2 = max(hx1 + int(round(rx2 * w)), x1 + 1)
        y2 = max(hy1 + int(round(ry2 * h)), y1 + 1)
        rects.append((x1, y1, x2, y2))
    return rects


def _rect_mask(shape: tuple[int, int], rect: tuple[int, int, int, int]) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    x1, y1, x2, y2 = rect
    m[max(y1, 0):max(y2, 0), max(x1, 0):max(x2, 0)] = True
    return m


def object_mask(shape: tuple[int, int], box: Box, obj_class: int) -> np.ndarray:
    """Boolean mask of the object's rendered shape.

    Shape alternates with the class index; every shape covers the center of
    its box, which the generator relies on to guarantee contact overlap.
    """
    h, w = shape
    x1, y1, x2, y2 = (int(v) for v in box.as_tuple())
    yy, xx = np.mgrid[0:h, 0:w]
    cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    rx, ry = (x2 - x1) / 2.0, (y2 - y1) / 2.0
    kind = obj_class % 4
    if kind == 0:      # disk
        m = ((xx + 0.5 - cx) / rx) ** 2 + ((yy + 0.5 - cy) / ry) ** 2 <= 1.0
    elif kind == 1:    # filled box
        m = (xx >= x1) & (xx < x2) & (yy >= y1) & (yy < y2)
    elif kind == 2:    # diamond
        m = np.abs(xx + 0.5 - cx) / rx + np.abs(yy + 0.5 - cy) / ry <= 1.0
    else:              # triangle, apex up
        frac = np.clip((yy + 0.5 - y1) / max(y2 - y1, 1), 0, 1)
        m = (np.abs(xx + 0.5 - cx) <= frac * rx) & (yy >= y1) & (yy < y2)
    m[:max(y1, 0), :] = False
    m[max(y2, 0):, :] = False
    return m


def encode_contact_labels(contact_map: np.ndarray) -> np.ndarray:
    """Binary vector of length 17; entry k-1 is 1 iff part label k occurs."""
    if contact_map.ndim != 2:
        raise ValueError(f"contact map must be 2-D, got shape {contact_map.shape}")
    present = np.unique(contact_map)
    if present.size and present.max() > NUM_PARTS:
        raise ValueError(f"contact map contains label {present.max()} > {NUM_PARTS}")
    labels = np.zeros(NUM_PARTS, dtype=np.uint8)
    for k in present:
        if k > 0:
            labels[int(k) - 1] = 1
    return labels


def _pair_hull(human: Box, obj: Box) -> tuple[int, int, int, int]:
    return (
        int(np.floor(min(human.x1, obj.x1))),
        int(np.floor(min(human.y1, obj.y1))),
        int(np.ceil(max(human.x2, obj.x2))),
        int(np.ceil(max(human.y2, obj.y2))),
    )


def _expand(rect, pad, w, h):
    x1, y1, x2, y2 = rect
    return (max(x1 - pad, 0), max(y1 - pad, 0), min(x2 + pad, w), min(y2 + pad, h))


def _rects_touch(a, b, pad=2):
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    return ax1 - pad < bx2 and bx1 - pad < ax2 and ay1 - pad < by2 and by1 - pad < ay2


def generate_scene(seed: int, config: SceneConfig) -> SceneSample:
    """Render one deterministic scene.

    The same (seed, config) always produces a byte-identical sample. Objects
    are centered on (or on the boundary between) their target part regions,
    so every contact action yields at least one nonempty contact band.
    """
    rng = np.random.default_rng(seed)
    h, w = config.height, config.width
    vocab = config.vocab

    image = np.full((h, w, 3), 0.08, dtype=np.float32)
    image += rng.uniform(0.0, config.noise, size=(h, w, 3)).astype(np.float32)
    contact_map = np.zeros((h, w), dtype=np.uint8)

    candidates_by_action = config.action_candidates()
    pool = set(config.part_pool) if config.part_pool else None
    eligible_actions = [
        a for a, cand in candidates_by_action.items()
        if pool is None or pool & set(cand)
    ]
    if config.max_pairs > 0 and not eligible_actions:
        raise ConfigError(f"part_pool {config.part_pool} matches no action's candidate parts")

    n_pairs = int(rng.integers(config.min_pairs, config.max_pairs + 1))
    pairs: list[InteractionPair] = []

    for _ in range(n_pairs):
        placed = None
        for _attempt in range(config.max_attempts):
            hw = int(rng.integers(*config.human_width, endpoint=True))
            hh = int(rng.integers(*config.human_height, endpoint=True))
            hw = min(hw, w - 6)
            hh = min(hh, h - 6)
            hx1 = int(rng.integers(2, w - hw - 2, endpoint=True))
            hy1 = int(rng.integers(2, h - hh - 2, endpoint=True))
            human = Box(hx1, hy1, hx1 + hw, hy1 + hh)
            rects = part_rects(human)

            action = int(rng.choice(eligible_actions))
            cand = [p for p in candidates_by_action[action] if pool is None or p in pool]
            n_parts = int(rng.integers(*config.parts_per_pair, endpoint=True))
            n_parts = max(1, min(n_parts, len(cand)))

            # Pick the object center: inside a single part region, or on the
            # shared boundary of two adjacent candidate regions.
            targets = [int(rng.choice(cand))]
            if n_parts >= 2:
                first = _expand(rects[targets[0] - 1], 2, w, h)
                adj = [p for p in cand if p != targets[0]
                       and _rects_touch(first, rects[p - 1])]
                if adj:
                    targets.append(int(rng.choice(adj)))
            if len(targets) == 2:
                ra = _expand(rects[targets[0] - 1], 2, w, h)
                rb = _expand(rects[targets[1] - 1], 2, w, h)
                ix1, iy1 = max(ra[0], rb[0]), max(ra[1], rb[1])
                ix2, iy2 = min(ra[2], rb[2]), min(ra[3], rb[3])
                cx, cy = (ix1 + ix2) // 2, (iy1 + iy2) // 2
            else:
                tx1, ty1, tx2, ty2 = rects[targets[0] - 1]
                cx = int(rng.integers(tx1, tx2))
                cy = int(rng.integers(ty1, ty2))

            osz = int(rng.integers(*config.object_size, endpoint=True))
            osz = min(osz, w - 4, h - 4)
            half = osz // 2
            cx = int(np.clip(cx, half + 1, w - half - 2))
            cy = int(np.clip(cy, half + 1, h - half - 2))
            obj_class = int(rng.integers(0, len(vocab.objects)))
            obj = Box(cx - half, cy - half, cx - half + osz, cy - half + osz)
            omask = object_mask((h, w), obj, obj_class)

            hull = _pair_hull(human, obj)
            hull_mask = _rect_mask((h, w), hull)
            bands: dict[int, np.ndarray] = {}
            for p in cand:
                overlap = _rect_mask((h, w), rects[p - 1]) & omask
                if not overlap.any():
                    continue
                band = binary_dilation(overlap, structure=np.ones((3, 3), bool))
                bands[p] = band & hull_mask
            if not bands or not all(t in bands for t in targets):
                continue
            union_band = np.logical_or.reduce(list(bands.values()))
            if (contact_map[union_band] != 0).any():
                continue  # keep pairs' contact regions disjoint across the scene
            placed = (human, rects, obj, obj_class, action, bands)
            break

        if placed is None:
            continue
        human, rects, obj, obj_class, action, bands = placed
        for p, rect in zip(range(1, NUM_PARTS + 1), rects):
            x1, y1, x2, y2 = rect
            image[y1:y2, x1:x2] = part_color(p)
        omask = object_mask((h, w), obj, obj_class)
        image[omask] = 0.65 * np.asarray(object_color(obj_class), dtype=np.float32) \
            + 0.35 * image[omask]
        # Lower part index wins contested pixels, so paint high-to-low.
        for p in sorted(bands, reverse=True):
            contact_map[bands[p]] = p
        survived = frozenset(
            p for p, band in bands.items() if (contact_map[band] == p).any()
        )
        pairs.append(InteractionPair(
            human_box=human,
            object_box=obj,
            object_class=obj_class,
            action_class=action,
            contact_parts=survived,
        ))

    np.clip(image, 0.0, 1.0, out=image)
    return SceneSample(
        image=image,
        pairs=pairs,
        contact_map=contact_map,
        contact_labels=encode_contact_labels(contact_map),
    )


def generate_dataset(base_seed: int, config: SceneConfig, count: int) -> list[SceneSample]:
    """Independent scenes for seeds base_seed .. base_seed + count - 1."""
    return [generate_scene(base_seed + i, config) for i in range(count)]


# --------------------------------------------------------------------------
# dataset I/O


def write_dataset(samples: list[SceneSample], dir_path: str | Path, vocab: Vocab) -> dict:
    """Write samples plus manifest.json to dir_path; returns the manifest."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    if not samples:
        raise ValueError("refusing to write an empty dataset")
    h, w = samples[0].image.shape[:2]
    entries = []
    for i, s in enumerate(samples):
        sid = f"{i:06d}"
        np.save(out / f"img_{sid}.npy", s.image.astype(np.float32))
        Image.fromarray(s.contact_map.astype(np.uint8), mode="L").save(out / f"mask_{sid}.png")
        ann = {
            "pairs": [
                {
                    "human_box": [int(v) for v in p.human_box.as_tuple()],
                    "object_box": [int(v) for v in p.object_box.as_tuple()],
                    "object_class": p.object_class,
                    "action_class": p.action_class,
                    "contact_parts": sorted(p.contact_parts),
                }
                for p in s.pairs
            ],
            "contact_labels": s.contact_labels.astype(int).tolist(),
        }
        (out / f"ann_{sid}.json").write_text(json.dumps(ann, indent=1))
        entries.append({
            "id": sid,
            "image": f"img_{sid}.npy",
            "mask": f"mask_{sid}.png",
            "annotation": f"ann_{sid}.json",
        })
    manifest = {
        "height": int(h),
        "width": int(w),
        "vocab": vocab.to_dict(),
        "samples": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def read_dataset(dir_path: str | Path) -> tuple[list[SceneSample], Vocab]:
    """Read and validate a dataset directory written by write_dataset.

    Raises SchemaError naming the offending sample for any malformed file,
    shape mismatch, out-of-range label or class index.
    """
    root = Path(dir_path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise SchemaError(f"missing manifest.json in {root}")
    try:
        manifest = json.loads(mpath.read_text())
        h, w = int(manifest["height"]), int(manifest["width"])
        vocab = Vocab.from_dict(manifest["vocab"])
        entries = manifest["samples"]
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise SchemaError(f"malformed manifest.json: {e}") from e
    if h % 32 or w % 32:
        raise SchemaError(f"manifest image size {h}x{w} not a multiple of 32")

    samples = []
    for entry in entries:
        sid = entry.get("id", "?")
        for key in ("image", "mask", "annotation"):
            if key not in entry or not (root / entry[key]).exists():
                raise SchemaError(f"sample {sid}: missing {key} file")
        image = np.load(root / entry["image"])
        if image.shape != (h, w, 3):
            raise SchemaError(f"sample {sid}: image shape {image.shape} != {(h, w, 3)}")
        mask = np.asarray(Image.open(root / entry["mask"]), dtype=np.uint8)
        if mask.shape != (h, w):
            raise SchemaError(f"sample {sid}: mask shape {mask.shape} != {(h, w)}")
        n_bad = int((mask > NUM_PARTS).sum())
        if n_bad:
            raise SchemaError(
                f"sample {sid}: mask has {n_bad} pixels with label > {NUM_PARTS}")
        try:
            ann = json.loads((root / entry["annotation"]).read_text())
            pairs = []
            for j, p in enumerate(ann["pairs"]):
                pair = InteractionPair(
                    human_box=Box(*p["human_box"]),
                    object_box=Box(*p["object_box"]),
                    object_class=int(p["object_class"]),
                    action_class=int(p["action_class"]),
                    contact_parts=frozenset(int(k) for k in p["contact_parts"]),
                )
                if not 0 <= pair.object_class < len(vocab.objects):
                    raise ValueError(f"pair {j}: object class {pair.object_class} out of range")
                if not 0 <= pair.action_class < vocab.num_real_actions:
                    raise ValueError(f"pair {j}: action class {pair.action_class} out of range")
                if any(not 1 <= k <= NUM_PARTS for k in pair.contact_parts):
                    raise ValueError(f"pair {j}: contact part out of range")
                pairs.append(pair)
            labels = np.asarray(ann["contact_labels"], dtype=np.uint8)
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"sample {sid}: bad annotation: {e}") from e
        if labels.shape != (NUM_PARTS,):
            raise SchemaError(f"sample {sid}: contact_labels length {labels.shape}")
        samples.append(SceneSample(
            image=image, pairs=pairs, contact_map=mask, contact_labels=labels))
    return samples, vocab
