from pathlib import Path

import numpy as np
import pytest

from dgsta.data import write_skeleton_file

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _tiny_frames(seed: int, n: int = 4) -> np.ndarray:
    r = np.random.default_rng(seed)
    return r.normal(scale=0.05, size=(n, 22, 3))


def make_tree(root: Path, *, gestures=14, fingers=2, subjects=20, trials=5, filename="skeleton_world.txt", frames=4):
    k = 0
    for g in range(1, gestures + 1):
        for f in range(1, fingers + 1):
            for s in range(1, subjects + 1):
                for e in range(1, trials + 1):
                    d = root / f"gesture_{g}" / f"finger_{f}" / f"subject_{s}" / f"essai_{e}"
                    d.mkdir(parents=True)
                    write_skeleton_file(d / filename, _tiny_frames(k, frames))
                    k += 1
    return root


@pytest.fixture(scope="session")
def dhg_tree(tmp_path_factory):
    """Full-size DHG-14/28 layout: 14 gestures x 2 fingers x 20 subjects x 5 trials."""
    return make_tree(tmp_path_factory.mktemp("dhg"))


@pytest.fixture(scope="session")
def shrec_tree(tmp_path_factory):
    """Small SHREC-style tree with split files (3 gestures, 2 fingers, 4 subjects, 2 trials)."""
    root = make_tree(tmp_path_factory.mktemp("shrec"), gestures=3, subjects=4, trials=2, filename="skeletons_world.txt")
    train, test = [], []
    for g in range(1, 4):
        for f in range(1, 3):
            for s in range(1, 5):
                for e in range(1, 3):
                    row = f"{g} {f} {s} {e} {g} {(g - 1) * 2 + f} 4"
                    (test if s == 4 else train).append(row)
    (root / "train_gestures.txt").write_text("\n".join(train) + "\n")
    (root / "test_gestures.txt").write_text("\n".join(test) + "\n")
    return root
