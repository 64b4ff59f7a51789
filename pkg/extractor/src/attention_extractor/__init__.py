"""Export transformer key/query activations into KMV1 files for kernel
matrix-vector experiments."""

from .extract import TraceManifest, extract, load_manifest, read_sentences
from .kmv1 import write_matrix

__all__ = ["TraceManifest", "extract", "load_manifest", "read_sentences", "write_matrix"]

__version__ = "0.1.0"
