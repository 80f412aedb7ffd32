"""Dataset containers, manifest ingestion, batching, and synthetic domains."""

from .datasets import (Batch, DatasetBundle, DomainDataset, batch_iter,
                       batch_stream, split, split_indices)
from .manifest import ManifestError, load_manifest, write_bundle
from .synth import PRESETS, SynthSpec, synth_generate
