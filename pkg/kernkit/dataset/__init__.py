"""Font records, split manifests and corpus access.

The synthetic generator lives in :mod:`kernkit.dataset.synth` and is imported
from there directly.
"""
from kernkit.dataset.records import (
    FontRecord,
    GlyphImage,
    KerningTable,
    load_font_record,
    load_kerning_table,
    save_font_record,
    save_kerning_table,
)
from kernkit.dataset.splits import Corpus, load_corpus, load_manifest, save_manifest, validate_splits

__all__ = [
    "Corpus",
    "FontRecord",
    "GlyphImage",
    "KerningTable",
    "load_corpus",
    "load_font_record",
    "load_kerning_table",
    "load_manifest",
    "save_font_record",
    "save_kerning_table",
    "save_manifest",
    "validate_splits",
]
