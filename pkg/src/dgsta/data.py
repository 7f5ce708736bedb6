"""Skeleton sequence containers, DHG-14/28 and SHREC'17 readers, synthetic gestures.

File format (both datasets): one frame per line, 66 whitespace-separated
numbers = 22 joints x (x, y, z) in metres. LF and CRLF both parse.

DHG-14/28 tree::

    <root>/gesture_<g>/finger_<f>/subject_<s>/essai_<e>/skeleton_world.txt

SHREC'17 tree: the same nesting with ``skeletons_world.txt``, plus
``train_gestures.txt`` / ``test_gestures.txt`` in the root whose rows start
with ``g f s e`` (further columns are ignored).

Releases differ in file-name and directory casing; ``FILE_ALIASES`` and
case-insensitive directory matching absorb that.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .graph import PALM

JOINTS = 22
FIELDS = JOINTS * 3

FILE_ALIASES = ("skeleton_world.txt", "skeletons_world.txt", "Skeleton_world.txt", "Skeletons_world.txt")
SPLIT_FILES = {"train": ("train_gestures.txt", "Train_gestures.txt"), "test": ("test_gestures.txt", "Test_gestures.txt")}
_LEVELS = ("gesture", "finger", "subject", "essai")


@dataclass
class SkeletonSequence:
    frames: np.ndarray  # (L, 22, 3)
    label: int
    subject: int = 0
    finger: int = 1
    gesture: int | None = None
    trial: int | None = None
    split: str | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        f = self.frames
        if f.ndim != 3 or f.shape[0] < 1 or f.shape[2] != 3:
            raise DataError(f"frames must be (L >= 1, joints, 3), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise DataError("sequence contains non-finite coordinates")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def replace(self, frames: np.ndarray) -> "SkeletonSequence":
        return SkeletonSequence(frames, self.label, self.subject, self.finger, self.gesture, self.trial, self.split)


@dataclass(frozen=True)
class IndexEntry:
    path: Path | None
    gesture: int
    finger: int
    subject: int
    trial: int
    split: str | None = None


def label_for(gesture: int, finger: int, gestures: int) -> int:
    """Class index: gesture-1 for 14 classes, (gesture-1)*2 + (finger-1) for 28."""
    if gestures == 14:
        return gesture - 1
    if gestures == 28:
        return (gesture - 1) * 2 + (finger - 1)
    raise ParameterError(f"gesture count must be 14 or 28, got {gestures}")


@dataclass
class Dataset:
    name: str
    classes: int
    sequences: list[SkeletonSequence]
    index: list[IndexEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sequences)

    def subjects(self) -> list[int]:
        return sorted({s.subject for s in self.sequences})


def load_skeleton_file(path: str | Path, joints: int = JOINTS) -> np.ndarray:
    """Frames in file order as an (L, joints, 3) array."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"{path}: cannot read ({e.strerror})") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != joints * 3:
            raise DataError(f"{path}:{lineno}: expected {joints * 3} values, found {len(tokens)}")
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise DataError(f"{path}:{lineno}: cannot parse {bad!r} as a number") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}:{lineno}: non-finite coordinate")
        rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no frames")
    return np.array(rows).reshape(len(rows), joints, 3)


def _is_float(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


def write_skeleton_file(path: str | Path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    lines = [" ".join(repr(float(v)) for v in f.ravel()) for f in frames]
    Path(path).write_text("\n".join(lines) + "\n")


def _numbered_dirs(parent: Path, level: str) -> dict[int, Path]:
    pat = re.compile(rf"^{level}_(\d+)$", re.IGNORECASE)
    out = {}
    for p in parent.iterdir():
        m = pat.match(p.name)
        if m and p.is_dir():
            n = int(m.group(1))
            if n in out:
                raise DataError(f"duplicate directories for {level} {n} under {parent}")
            out[n] = p
    return out


def _find_file(trial_dir: Path) -> Path | None:
    for name in FILE_ALIASES:
        p = trial_dir / name
        if p.is_file():
            return p
    return None


def _walk_tree(root: Path) -> list[IndexEntry]:
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    entries = []
    for g, gdir in sorted(_numbered_dirs(root, "gesture").items()):
        for f, fdir in sorted(_numbered_dirs(gdir, "finger").items()):
            for s, sdir in sorted(_numbered_dirs(fdir, "subject").items()):
                for e, edir in sorted(_numbered_dirs(sdir, "essai").items()):
                    path = _find_file(edir)
                    if path is None:
                        raise DataError(f"{edir}: no skeleton file (tried {', '.join(FILE_ALIASES)})")
                    entries.append(IndexEntry(path, g, f, s, e))
    if not entries:
        raise DataError(f"no gesture_*/finger_*/subject_*/essai_* sequences under {root}")
    return entries


def index_dhg(root: str | Path) -> list[IndexEntry]:
    return _walk_tree(Path(root))


def _read_split(root: Path, split: str) -> list[tuple[int, int, int, int]]:
    for name in SPLIT_FILES[split]:
        p = root / name
        if p.is_file():
            break
    else:
        raise DataError(f"{root}: missing SHREC split file {SPLIT_FILES[split][0]}")
    keys = []
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        try:
            keys.append(tuple(int(v) for v in parts[:4]))
        except ValueError:
            raise DataError(f"{p}:{lineno}: expected integer gesture/finger/subject/essai ids") from None
        if len(keys[-1]) != 4:
            raise DataError(f"{p}:{lineno}: expected at least 4 columns")
    return keys


def index_shrec(root: str | Path) -> list[IndexEntry]:
    """Every sequence named by the split files, tagged "train" or "test"."""
    root = Path(root)
    by_key = {(e.gesture, e.finger, e.subject, e.trial): e for e in _walk_tree(root)}
    seen: dict[tuple, str] = {}
    entries = []
    for split in ("train", "test"):
        for key in _read_split(root, split):
            if key in seen:
                raise DataError(f"sequence {key} listed twice (in {seen[key]} and {split})")
            seen[key] = split
            if key not in by_key:
                raise DataError(f"split file lists {key} but {root} has no such sequence")
            e = by_key[key]
            entries.append(IndexEntry(e.path, *key, split=split))
    return entries


def load_index(entries: list[IndexEntry], gestures: int, name: str) -> Dataset:
    seqs = []
    for e in entries:
        frames = load_skeleton_file(e.path)
        seqs.append(
            SkeletonSequence(frames, label_for(e.gesture, e.finger, gestures), e.subject, e.finger, e.gesture, e.trial, e.split)
        )
    return Dataset(name, gestures, seqs, list(entries))


def load_dataset(kind: str, root: str | Path, gestures: int = 14) -> Dataset:
    if kind == "dhg":
        return load_index(index_dhg(root), gestures, "dhg")
    if kind == "shrec":
        return load_index(index_shrec(root), gestures, "shrec")
    raise ParameterError(f"unknown dataset {kind!r}")


# ---------------------------------------------------------------------------
# synthetic gestures


def hand_template() -> np.ndarray:
    """A flat open right hand, (22, 3) metres, wrist at the origin, fingers along +y."""
    pts = np.zeros((JOINTS, 3))
    pts[PALM] = (0.0, 0.045, 0.0)
    bases = [(-0.035, 0.03), (-0.02, 0.08), (0.0, 0.085), (0.018, 0.08), (0.034, 0.072)]
    seg = [0.02, 0.018, 0.015]
    for f, (x0, y0) in enumerate(bases):
        j = 2 + 4 * f
        pts[j] = (x0, y0, 0.0)
        direction = np.array([-0.5, 0.85, 0.0]) if f == 0 else np.array([0.0, 1.0, 0.0])
        direction /= np.linalg.norm(direction)
        for k, length in enumerate(seg):
            pts[j + k + 1] = pts[j + k] + length * direction
    return pts


def _directions(k: int) -> np.ndarray:
    """k well-spread unit vectors (Fibonacci sphere)."""
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    r = np.sqrt(1 - z * z)
    phi = np.pi * (3 - np.sqrt(5)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def synthetic_trajectory(cls: int, classes: int, length: int, speed: float = 1.0) -> np.ndarray:
    """Noise-free (length, 22, 3) motion of class `cls`.

    Each class moves the hand along its own direction, turns it about the
    z axis at its own rate and curls the fingers with its own phase.
    """
    base = hand_template()
    u = _directions(classes)[cls]
    omega = (cls - (classes - 1) / 2) * (1.2 / max(classes - 1, 1))
    phase = 2 * np.pi * cls / classes
    out = np.empty((length, JOINTS, 3))
    for k in range(length):
        s = speed * k / max(length - 1, 1)
        pts = base.copy()
        curl = 0.5 * (1 + math.sin(2 * np.pi * s + phase))
        for f in range(5):
            j = 2 + 4 * f
            for m in range(1, 4):
                # fold each finger segment toward -z around its base joint
                rel = pts[j + m] - pts[j]
                bend = curl * 0.5 * m
                pts[j + m] = pts[j] + np.array([rel[0], rel[1] * math.cos(bend), -np.linalg.norm(rel[:2]) * math.sin(bend)])
        pts = pts @ _rot_z(omega * s).T
        out[k] = pts + 0.08 * s * u
    return out


def synth_gestures(
    classes: int,
    per_class: int,
    length: int = 32,
    rng: np.random.Generator | int = 0,
    noise: float = 0.002,
    subjects: int = 5,
) -> Dataset:
    """Deterministic labelled sequences; sample k of each class belongs to subject k % subjects."""
    if classes < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")
    if per_class < 1 or length < 1:
        raise ParameterError("per_class and length must be positive")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    seqs, index = [], []
    for c in range(classes):
        for k in range(per_class):
            speed = rng.uniform(0.9, 1.1)
            frames = synthetic_trajectory(c, classes, length, speed)
            frames = frames + rng.normal(0.0, noise, size=frames.shape)
            subject = k % subjects + 1
            seqs.append(SkeletonSequence(frames, c, subject, 1, c + 1, k + 1))
            index.append(IndexEntry(None, c + 1, 1, subject, k + 1))
    return Dataset("synthetic", classes, seqs, index)


def parse_synthetic_spec(text: str) -> dict:
    """``classes=K,per_class=M,seed=S[,length=L][,noise=x]`` -> dict."""
    allowed = {"classes": int, "per_class": int, "seed": int, "length": int, "noise": float}
    out = {"classes": 3, "per_class": 20, "seed": 0}
    for part in filter(None, (p.strip() for p in text.split(","))):
        key, sep, val = part.partition("=")
        if not sep or key not in allowed:
            raise ParameterError(f"bad synthetic spec item {part!r}; keys are {sorted(allowed)}")
        try:
            out[key] = allowed[key](val)
        except ValueError:
            raise ParameterError(f"bad value for {key}: {val!r}") from None
    return out
