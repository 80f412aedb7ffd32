"""Dataset containers, deterministic splits, and seeded batch iteration.

Windows are [n, channels, width] float64. Source domains carry labels; the
target's labels (when known at all) live on the bundle as eval_labels and are
never visible to training code.
"""

from dataclasses import dataclass, field

import numpy as np

ROLES = ("source", "target")


@dataclass
class DomainDataset:
    domain_id: str
    windows: np.ndarray
    labels: np.ndarray | None
    role: str

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        if self.windows.ndim != 3:
            raise ValueError(f"{self.domain_id}: windows must be [n, channels, width], "
                             f"got shape {self.windows.shape}")
        if self.role not in ROLES:
            raise ValueError(f"{self.domain_id}: role must be one of {ROLES}, got {self.role!r}")
        if self.role == "source":
            if self.labels is None:
                raise ValueError(f"{self.domain_id}: source domain requires labels")
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.windows),):
                raise ValueError(f"{self.domain_id}: labels length {self.labels.shape} does "
                                 f"not match {len(self.windows)} windows")
        elif self.labels is not None:
            raise ValueError(f"{self.domain_id}: target labels must be held out as "
                             "eval_labels on the bundle")
        if not np.isfinite(self.windows).all():
            raise ValueError(f"{self.domain_id}: windows contain non-finite values")

    def __len__(self):
        return len(self.windows)


@dataclass
class DatasetBundle:
    sources: list
    target: DomainDataset
    class_count: int
    eval_labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sources:
            raise ValueError("bundle needs at least one source domain")
        if self.class_count < 2:
            raise ValueError(f"class_count must be >= 2, got {self.class_count}")
        shape = self.target.windows.shape[1:]
        for ds in self.sources:
            if ds.role != "source":
                raise ValueError(f"{ds.domain_id}: expected role 'source'")
            if ds.windows.shape[1:] != shape:
                raise ValueError(f"{ds.domain_id}: window shape {ds.windows.shape[1:]} "
                                 f"differs from target {shape}")
            if ds.labels.min() < 0 or ds.labels.max() >= self.class_count:
                bad = int(np.argmax((ds.labels < 0) | (ds.labels >= self.class_count)))
                raise ValueError(f"{ds.domain_id}: label {ds.labels[bad]} at row {bad} "
                                 f"outside [0, {self.class_count})")
        if self.target.role != "target":
            raise ValueError(f"{self.target.domain_id}: expected role 'target'")
        if self.eval_labels is not None:
            self.eval_labels = np.asarray(self.eval_labels, dtype=np.int64)
            if self.eval_labels.shape != (len(self.target),):
                raise ValueError("eval_labels length does not match target windows")
            if self.eval_labels.min() < 0 or self.eval_labels.max() >= self.class_count:
                raise ValueError("eval_labels outside the declared class range")

    @property
    def channels(self):
        return self.target.windows.shape[1]

    @property
    def width(self):
        return self.target.windows.shape[2]


def _entropy(seed):
    """Normalize an int or sequence-of-ints seed into SeedSequence entropy."""
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return [int(seed)]


def split_indices(n, ratio, seed):
    """Seeded disjoint permutation split; train size = round(ratio * n)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(
        np.random.SeedSequence(_entropy(seed) + [0x5917])).permutation(n)
    cut = int(round(ratio * n))
    return perm[:cut], perm[cut:]


def split(ds, ratio, seed):
    """Split one domain into (train, test) datasets."""
    if len(ds) < 2:
        raise ValueError(f"{ds.domain_id}: cannot split {len(ds)} sample(s)")
    idx_tr, idx_te = split_indices(len(ds), ratio, seed)
    lab = ds.labels
    tr = DomainDataset(ds.domain_id, ds.windows[idx_tr],
                       None if lab is None else lab[idx_tr], ds.role)
    te = DomainDataset(ds.domain_id, ds.windows[idx_te],
                       None if lab is None else lab[idx_te], ds.role)
    return tr, te


@dataclass
class Batch:
    domain_id: str
    inputs: np.ndarray
    labels: np.ndarray | None


def batch_iter(ds, batch_size, seed, epoch=0):
    """One epoch: a seeded permutation cut into batches; the final short
    batch is emitted."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(ds)
    perm = np.random.default_rng(
        np.random.SeedSequence(_entropy(seed) + [epoch])).permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start:start + batch_size]
        yield Batch(ds.domain_id, ds.windows[idx],
                    None if ds.labels is None else ds.labels[idx])


def batch_stream(ds, batch_size, seed):
    """Endless batches: epoch after epoch, each with its own permutation."""
    epoch = 0
    while True:
        yield from batch_iter(ds, batch_size, seed, epoch=epoch)
        epoch += 1
