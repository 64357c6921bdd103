"""Train/evaluate SVM detectors on labeled weight-feature CSVs.

The input is the feature export produced by the embedding toolkit: a header
"label,f0001,...", then one row per model with label 0 (clean) or 1 (stego)
and the selected parameter values in full float precision. Rows arrive in
consecutive clean/stego pairs, one pair per pool item.

Splitting happens at pair granularity: a pair is either wholly train or
wholly test, so both splits stay exactly label-balanced and no pool item
leaks across the boundary. Features are standardized on the training split
only; the SVMs run with library-default hyperparameters, deliberately
untuned. Given the same (csv, split, kernel, seed) the report is identical
across reruns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import confusion_matrix
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

KERNELS = ("poly", "rbf")


class HarnessError(Exception):
    """Base error; exit_code drives the CLI's process status."""

    exit_code = 1


class InputError(HarnessError):
    """File missing or unreadable."""

    exit_code = 2


class SchemaError(HarnessError):
    """The CSV does not follow the feature-export layout."""

    exit_code = 3


class OptionError(HarnessError):
    """Caller asked for an impossible split or kernel."""

    exit_code = 4


@dataclass
class FeatureTable:
    """Parsed feature CSV: labels, the feature matrix, and column names."""

    labels: np.ndarray
    features: np.ndarray
    feature_names: list[str]

    @property
    def n_rows(self) -> int:
        return int(self.labels.size)

    @property
    def n_pairs(self) -> int:
        return self.n_rows // 2


@dataclass
class SvmReport:
    """Held-out evaluation of one kernel on one split."""

    kernel: str
    accuracy: float
    n_train: int
    n_test: int
    tn: int
    fp: int
    fn: int
    tp: int
    train_pairs: int
    test_pairs: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "accuracy": self.accuracy,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "confusion": {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp},
            "train_pairs": self.train_pairs,
            "test_pairs": self.test_pairs,
            "seed": self.seed,
        }

    def to_text(self) -> str:
        return (
            f"kernel={self.kernel} accuracy={self.accuracy:.4f} "
            f"(n_train={self.n_train}, n_test={self.n_test}, "
            f"tn={self.tn} fp={self.fp} fn={self.fn} tp={self.tp}, seed={self.seed})"
        )


def load_features(path: str) -> FeatureTable:
    """Read and validate a feature CSV.

    Checks: header starts with "label"; every row has the header's column
    count; labels are 0/1; values parse as floats; rows come in consecutive
    pairs each holding one clean and one stego model.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read features {path}: {exc}") from exc
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0] != "label" or len(header) < 2:
        raise SchemaError(
            f"{path}: header must be 'label,<feature columns>', got {lines[0][:60]!r}"
        )
    width = len(header)

    labels: list[int] = []
    rows: list[list[float]] = []
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != width:
            raise SchemaError(
                f"{path}: line {i} has {len(cells)} columns, header has {width}"
            )
        if cells[0] not in ("0", "1"):
            raise SchemaError(f"{path}: line {i} label {cells[0]!r} is not 0 or 1")
        labels.append(int(cells[0]))
        try:
            rows.append([float(v) for v in cells[1:]])
        except ValueError as exc:
            raise SchemaError(f"{path}: line {i}: {exc}") from exc

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    if len(rows) % 2 != 0:
        raise SchemaError(
            f"{path}: {len(rows)} rows cannot form clean/stego pairs (odd count)"
        )
    label_arr = np.array(labels, dtype=int)
    pair_sums = label_arr.reshape(-1, 2).sum(axis=1)
    bad = np.flatnonzero(pair_sums != 1)
    if bad.size:
        raise SchemaError(
            f"{path}: rows {2 * bad[0] + 2}-{2 * bad[0] + 3} do not hold one clean "
            "and one stego model (labels unbalanced within the pair)"
        )
    return FeatureTable(
        labels=label_arr,
        features=np.array(rows, dtype=np.float64),
        feature_names=header[1:],
    )


def split_pairs(
    n_pairs: int, train_pairs: int, test_pairs: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint row indices for train/test, drawn at pair granularity."""
    if train_pairs < 1 or test_pairs < 1:
        raise OptionError(
            f"need at least one pair on each side, got train={train_pairs} test={test_pairs}"
        )
    if train_pairs + test_pairs > n_pairs:
        raise OptionError(
            f"split needs {train_pairs}+{test_pairs} pairs, CSV holds {n_pairs}"
        )
    perm = np.random.default_rng(seed).permutation(n_pairs)
    train_p = perm[:train_pairs]
    test_p = perm[train_pairs : train_pairs + test_pairs]

    def to_rows(pairs: np.ndarray) -> np.ndarray:
        return np.sort(np.concatenate([2 * pairs, 2 * pairs + 1]))

    return to_rows(train_p), to_rows(test_p)


def train_eval(
    csv_path: str,
    split: tuple[int, int] = (50, 10),
    kernel: str = "poly",
    seed: int = 0,
) -> SvmReport:
    """Fit an SVM on the train split, report held-out accuracy and confusion.

    split is (train pairs, test pairs). Standardization statistics come from
    the training rows alone.
    """
    if kernel not in KERNELS:
        raise OptionError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    train_pairs, test_pairs = int(split[0]), int(split[1])
    table = load_features(csv_path)
    train_rows, test_rows = split_pairs(table.n_pairs, train_pairs, test_pairs, seed)

    scaler = StandardScaler().fit(table.features[train_rows])
    x_train = scaler.transform(table.features[train_rows])
    x_test = scaler.transform(table.features[test_rows])
    y_train = table.labels[train_rows]
    y_test = table.labels[test_rows]

    clf = SVC(kernel=kernel)  # library defaults on purpose: no tuning
    clf.fit(x_train, y_train)
    pred = clf.predict(x_test)

    tn, fp, fn, tp = confusion_matrix(y_test, pred, labels=[0, 1]).ravel()
    return SvmReport(
        kernel=kernel,
        accuracy=float((tn + tp) / y_test.size),
        n_train=int(y_train.size),
        n_test=int(y_test.size),
        tn=int(tn),
        fp=int(fp),
        fn=int(fn),
        tp=int(tp),
        train_pairs=train_pairs,
        test_pairs=test_pairs,
        seed=seed,
    )


def reports_to_json(csv_path: str, reports: list[SvmReport]) -> str:
    payload = {
        "csv": csv_path,
        "results": [r.to_dict() for r in reports],
    }
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"
