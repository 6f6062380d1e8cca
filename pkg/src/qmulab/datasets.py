"""Synthetic dataset generators and the CSV dataset format.

CSV schema: header ``f0,...,f{d-1},label[,split][,forget]`` with labels in
{-1, 1}, split in {train, test}, forget in {0, 1}.  Missing split/forget
columns default to an 80/20 seeded split and an all-zero mask.  Features
are standardized to [-pi, pi] per feature at generation time.
"""

import numpy as np
from sklearn.datasets import make_blobs, make_moons

from qmulab.learn import Dataset

GENERATORS = ("two_moons", "blobs", "xor")


def _standardize(features):
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (features - lo) / span * (2 * np.pi) - np.pi


def _split_tags(n, seed):
    rng = np.random.default_rng([int(seed), 42])
    order = rng.permutation(n)
    tags = np.array(["train"] * n, dtype=object)
    tags[order[int(round(0.8 * n)):]] = "test"
    return tags


def generate_dataset(name, n, noise, seed):
    """Balanced +-1 dataset with a deterministic 80/20 split."""
    if n < 4:
        raise ValueError("need at least 4 samples")
    rng = np.random.default_rng(seed)
    half = n // 2
    if name == "two_moons":
        x, y = make_moons(n_samples=(half, n - half), noise=noise,
                          random_state=np.random.RandomState(seed))
    elif name == "blobs":
        x, y = make_blobs(n_samples=[half, n - half], centers=[(-1.5, 0.0), (1.5, 0.0)],
                          cluster_std=max(noise, 1e-6),
                          random_state=np.random.RandomState(seed))
    elif name == "xor":
        signs = rng.choice([-1.0, 1.0], size=(n, 1))
        a = rng.uniform(0.2, 1.0, size=(n, 2))
        x = a * np.concatenate([signs, np.ones((n, 1))], axis=1)
        # Class +1 lives in the (+,+)/(-,-) quadrants.
        flip = np.ones(n)
        flip[half:] = -1.0
        x[:, 1] *= signs[:, 0] * flip
        y = (flip > 0).astype(int)
        x += rng.normal(0.0, noise, size=x.shape)
    else:
        raise ValueError(f"unknown generator {name!r}")
    labels = np.where(np.asarray(y) == 1, 1, -1)
    features = _standardize(np.asarray(x, dtype=np.float64))
    return Dataset(
        features=features,
        labels=labels,
        split=_split_tags(n, seed),
        forget_mask=np.zeros(n, dtype=bool),
    )


def mark_forget_subcluster(data, size, label=1, feature=0):
    """Mark `size` train rows of `label` with the smallest `feature` value as D_r."""
    idx = data.train_indices()
    idx = idx[data.labels[idx] == label]
    if len(idx) < size:
        raise ValueError("not enough train rows of that label")
    chosen = idx[np.argsort(data.features[idx, feature], kind="stable")[:size]]
    mask = data.forget_mask.copy()
    mask[chosen] = True
    return Dataset(data.features, data.labels, data.split, mask)


def mark_forget_class(data, label):
    idx = data.train_indices()
    mask = data.forget_mask.copy()
    mask[idx[data.labels[idx] == label]] = True
    return Dataset(data.features, data.labels, data.split, mask)


def save_csv(data, path):
    d = data.n_features
    header = ",".join([f"f{i}" for i in range(d)] + ["label", "split", "forget"])
    lines = [header]
    for i in range(len(data.features)):
        feats = ",".join("%.17g" % v for v in data.features[i])
        lines.append(f"{feats},{data.labels[i]},{data.split[i]},{int(data.forget_mask[i])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_csv(path, split_seed=0):
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    header = rows[0].split(",")
    feat_cols = [i for i, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()]
    try:
        label_col = header.index("label")
    except ValueError:
        raise ValueError("dataset CSV is missing the 'label' column")
    split_col = header.index("split") if "split" in header else None
    forget_col = header.index("forget") if "forget" in header else None
    feats, labels, splits, forgets = [], [], [], []
    for row in rows[1:]:
        parts = row.split(",")
        feats.append([float(parts[i]) for i in feat_cols])
        labels.append(int(float(parts[label_col])))
        splits.append(parts[split_col] if split_col is not None else None)
        forgets.append(bool(int(parts[forget_col])) if forget_col is not None else False)
    n = len(feats)
    split = np.asarray(splits, dtype=object) if split_col is not None else _split_tags(n, split_seed)
    return Dataset(
        features=np.asarray(feats, dtype=np.float64),
        labels=np.asarray(labels),
        split=split,
        forget_mask=np.asarray(forgets, dtype=bool),
    )
