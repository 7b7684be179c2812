"""Synthetic corpus builder for the test suite.

Each class gets a visibly different byte texture (distinct base level,
period, and alphabet spread), so the spectral pipeline separates them
cleanly; per-file jitter keeps files within a class from being byte
duplicates. Everything is seeded, so corpora are reproducible.
"""

from pathlib import Path

import numpy as np

from codewave.index import IndexEntry, TestCaseIndex, WeaknessClass

CLASS_IDS = ["CWE-20", "CWE-79", "CWE-119", "CWE-189", "CWE-399"]


def class_content(class_idx: int, file_idx: int, size: int, seed: int) -> bytes:
    rng = np.random.default_rng(seed * 10_007 + class_idx * 101 + file_idx)
    base = 25 + 40 * class_idx
    period = 3 + 2 * class_idx
    ramp = (np.arange(size) % period) * 6
    jitter = rng.integers(0, 3, size=size)
    return (base + ramp + jitter).astype(np.uint8).tobytes()


def build_corpus(root, n_classes: int = 5, files_per_class: int = 20,
                 size: int = 2048, seed: int = 7,
                 mislabel: int = 0, case_name: str = "synthetic",
                 case_version: str = "1.0") -> TestCaseIndex:
    """Write class-structured files under `root` and return a train index.

    Directory names sort with the class order, so the first half of the
    index covers the low-numbered classes only. With `mislabel` > 0, that
    many files from the first three classes get annotated with a wrong label
    drawn from the same three classes; the high-numbered classes keep clean
    labels so halving the index drops them entirely.
    """
    root = Path(root)
    if n_classes > len(CLASS_IDS):
        raise ValueError(f"at most {len(CLASS_IDS)} classes supported")
    entries = []
    labels: list[int] = []
    paths: list[str] = []
    for class_idx in range(n_classes):
        for file_idx in range(files_per_class):
            rel = f"c{class_idx}/f{file_idx:03d}.bin"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(class_content(class_idx, file_idx, size, seed))
            paths.append(rel)
            labels.append(class_idx)
    if mislabel:
        rng = np.random.default_rng(seed + 1)
        noisy_span = min(3, n_classes)
        candidates = [i for i, lab in enumerate(labels) if lab < noisy_span]
        flips = rng.choice(candidates, size=mislabel, replace=False)
        for i in flips:
            wrong = (labels[i] + int(rng.integers(1, noisy_span))) % noisy_span
            labels[i] = wrong
    order = np.argsort(paths)
    for i in order:
        wc = WeaknessClass.cwe(CLASS_IDS[labels[i]])
        entries.append(IndexEntry(paths[i], [(wc, [])]))
    return TestCaseIndex(case_name, case_version, entries, mode="train")


def random_content_copy(index: TestCaseIndex, src_root, dst_root,
                        seed: int = 99) -> TestCaseIndex:
    """Mirror an index tree with fresh random bytes in every file.

    Stands in for a 'fixed version' of the corpus: same paths, none of the
    byte textures the models were trained on.
    """
    src_root = Path(src_root)
    dst_root = Path(dst_root)
    rng = np.random.default_rng(seed)
    entries = []
    for entry in index.entries:
        data = rng.integers(0, 256, size=len((src_root / entry.path).read_bytes()))
        target = dst_root / entry.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data.astype(np.uint8).tobytes())
        entries.append(IndexEntry(entry.path, list(entry.classes)))
    return TestCaseIndex(index.case_name, index.case_version, entries,
                         mode=index.mode)
