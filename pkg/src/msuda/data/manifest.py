"""Manifest + CSV ingestion and emission for dataset bundles.

A bundle on disk is a manifest.json declaring class_count/channels/width and a
list of domains, each pointing at a CSV whose rows are: label (-1 when
unlabeled) followed by the channel-major flattened window. Labeled target
rows are quarantined into bundle.eval_labels at load.
"""

import csv
import json
import os
from pathlib import Path

import numpy as np

from .datasets import DatasetBundle, DomainDataset


class ManifestError(ValueError):
    pass


def _csv_header(channels, width):
    return ["label"] + [f"c{c}_t{t}" for c in range(channels) for t in range(width)]


def _load_domain_csv(path, channels, width, class_count):
    expected = 1 + channels * width
    if not path.exists():
        raise ManifestError(f"{path}: file not found")
    labels, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ManifestError(f"{path}: empty file, expected a header row")
        if len(header) != expected:
            raise ManifestError(f"{path}: header has {len(header)} columns, "
                                f"expected {expected}")
        for i, row in enumerate(reader):
            if len(row) != expected:
                raise ManifestError(f"{path}: row {i} has {len(row)} columns, "
                                    f"expected {expected}")
            try:
                lab = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ManifestError(f"{path}: row {i}: {exc}") from None
            if lab != -1 and not 0 <= lab < class_count:
                raise ManifestError(f"{path}: row {i}: label {lab} outside "
                                    f"[0, {class_count}) and not -1")
            labels.append(lab)
            rows.append(vals)
    if not rows:
        raise ManifestError(f"{path}: no data rows")
    windows = np.asarray(rows, dtype=np.float64).reshape(len(rows), channels, width)
    return windows, np.asarray(labels, dtype=np.int64)


def load_manifest(path):
    """Read a manifest.json (or a directory containing one) into a bundle."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise ManifestError(f"{path}: manifest not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    for key in ("class_count", "channels", "width", "domains"):
        if key not in doc:
            raise ManifestError(f"{path}: missing required key {key!r}")
    class_count, channels, width = doc["class_count"], doc["channels"], doc["width"]
    if min(class_count, channels, width) < 1:
        raise ManifestError(f"{path}: class_count/channels/width must be positive")
    base = path.parent
    sources, targets = [], []
    seen = set()
    for spec in doc["domains"]:
        for key in ("domain_id", "role", "csv"):
            if key not in spec:
                raise ManifestError(f"{path}: domain entry missing {key!r}: {spec}")
        did = spec["domain_id"]
        if did in seen:
            raise ManifestError(f"{path}: duplicate domain_id {did!r}")
        seen.add(did)
        windows, labels = _load_domain_csv(base / spec["csv"], channels, width, class_count)
        if spec["role"] == "source":
            if (labels == -1).any():
                bad = int(np.argmax(labels == -1))
                raise ManifestError(f"{base / spec['csv']}: row {bad}: source domain "
                                    "rows must be labeled")
            sources.append(DomainDataset(did, windows, labels, "source"))
        elif spec["role"] == "target":
            targets.append((did, windows, labels))
        else:
            raise ManifestError(f"{path}: domain {did!r} has unknown role {spec['role']!r}")
    if len(targets) != 1:
        raise ManifestError(f"{path}: expected exactly one target domain, got {len(targets)}")
    if not sources:
        raise ManifestError(f"{path}: expected at least one source domain")
    did, windows, labels = targets[0]
    if (labels == -1).all():
        eval_labels = None
    elif (labels >= 0).all():
        eval_labels = labels
    else:
        bad = int(np.argmax(labels == -1))
        raise ManifestError(f"{path}: target {did!r} mixes labeled and unlabeled rows "
                            f"(first unlabeled at row {bad})")
    target = DomainDataset(did, windows, None, "target")
    return DatasetBundle(sources=sources, target=target, class_count=class_count,
                         eval_labels=eval_labels)


def _write_domain_csv(path, windows, labels):
    n, channels, width = windows.shape
    flat = windows.reshape(n, channels * width)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(channels, width))
        for i in range(n):
            writer.writerow([int(labels[i])] + [repr(float(v)) for v in flat[i]])
    os.replace(tmp, path)


def write_bundle(bundle, out_dir):
    """Emit manifest.json plus one CSV per domain; returns the manifest path.

    Target eval labels, when present, are written into the target CSV so the
    bundle round-trips through load_manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for ds in bundle.sources:
        name = f"{ds.domain_id}.csv"
        _write_domain_csv(out / name, ds.windows, ds.labels)
        entries.append({"domain_id": ds.domain_id, "role": "source", "csv": name})
    tgt = bundle.target
    if bundle.eval_labels is not None:
        tgt_labels = bundle.eval_labels
    else:
        tgt_labels = np.full(len(tgt), -1, dtype=np.int64)
    name = f"{tgt.domain_id}.csv"
    _write_domain_csv(out / name, tgt.windows, tgt_labels)
    entries.append({"domain_id": tgt.domain_id, "role": "target", "csv": name})
    doc = {"class_count": bundle.class_count, "channels": bundle.channels,
           "width": bundle.width, "domains": entries}
    mpath = out / "manifest.json"
    tmp = mpath.with_name("manifest.json.tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, mpath)
    return mpath
