"""Frozen speech-foundation-model embedding extraction into SGE1 bundles."""

from .audio import AudioError, load_waveform
from .backends import Backend, BackendUnavailableError, load_backend
from .bundle_format import BundleFormatError, check_bundle_dir, write_bundle_dir
from .manifest import EXPECTED_DIMS, ExtractManifest, InputItem, ManifestError, load_manifest
from .pipeline import ExtractError, extract, pool_hidden_states

__version__ = "0.1.0"

__all__ = [
    "AudioError", "load_waveform",
    "Backend", "BackendUnavailableError", "load_backend",
    "BundleFormatError", "check_bundle_dir", "write_bundle_dir",
    "EXPECTED_DIMS", "ExtractManifest", "InputItem", "ManifestError", "load_manifest",
    "ExtractError", "extract", "pool_hidden_states",
]
