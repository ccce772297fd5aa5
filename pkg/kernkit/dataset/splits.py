"""
Split manifests, family disjointness and corpus access.

A corpus directory holds ``splits.json`` and one record directory per font
under ``fonts/<font_id>/``.
"""
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

from pydantic import ValidationError

from kernkit.dataset.records import FontRecord, load_font_record
from kernkit.errors import DataValidationError, SplitError
from kernkit.schemas import SplitManifest
from kernkit.storage import load_json, save_json

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")

PathLike = Union[str, Path]


def load_manifest(path: PathLike) -> SplitManifest:
    try:
        return SplitManifest.model_validate(load_json(path))
    except ValidationError as e:
        raise SplitError(f"invalid split manifest {path}: {e.errors()[0]['msg']}") from None


def save_manifest(manifest: SplitManifest, path: PathLike) -> None:
    save_json(path, manifest.model_dump())


def validate_splits(manifest: SplitManifest, records: Union[Mapping[str, FontRecord], Iterable[FontRecord]]) -> List[str]:
    """
    Check that no font and no family appears in more than one split.

    Args:
        manifest: Split manifest
        records: Records by font id (or an iterable of records)

    Returns:
        List of violation messages; empty means the manifest is valid

    Raises:
        SplitError: If the manifest names a font with no record
    """
    if not isinstance(records, Mapping):
        records = {record.font_id: record for record in records}

    violations: List[str] = []
    font_splits: Dict[str, List[str]] = defaultdict(list)
    family_splits: Dict[str, set] = defaultdict(set)
    for split in SPLIT_NAMES:
        for font_id in manifest.split(split):
            record = records.get(font_id)
            if record is None:
                raise SplitError(f"unknown font_id '{font_id}' in split '{split}'")
            font_splits[font_id].append(split)
            family_splits[record.family_id].add(split)

    for font_id, splits in font_splits.items():
        if len(splits) > 1:
            violations.append(f"font '{font_id}' listed in {', '.join(splits)}")
    for family_id, splits in sorted(family_splits.items()):
        if len(splits) > 1:
            ordered = [s for s in SPLIT_NAMES if s in splits]
            violations.append(f"family '{family_id}' split across {', '.join(ordered)}")
    return violations


class Corpus:
    """Lazy, cached access to the font records of a corpus directory."""

    def __init__(self, root: PathLike, manifest: Optional[SplitManifest] = None):
        self.root = Path(root)
        self.manifest = manifest if manifest is not None else load_manifest(self.root / "splits.json")
        self._records: Dict[str, FontRecord] = {}

    def font_dir(self, font_id: str) -> Path:
        return self.root / "fonts" / font_id

    def _load(self, font_id: str) -> FontRecord:
        record = load_font_record(self.font_dir(font_id))
        if record.font_id != font_id:
            raise DataValidationError(
                f"{self.font_dir(font_id)} declares font_id '{record.font_id}'"
            )
        return record

    def record(self, font_id: str) -> FontRecord:
        record = self._records.get(font_id)
        if record is None:
            record = self._load(font_id)
            self._records[font_id] = record
        return record

    def fonts(self, split: str, threads: int = 1) -> List[FontRecord]:
        """Records of one split, in manifest order."""
        ids = self.manifest.split(split)
        if threads > 1:
            missing = [fid for fid in ids if fid not in self._records]
            with ThreadPoolExecutor(max_workers=threads) as pool:
                loaded = list(pool.map(self._load, missing))
            for font_id, record in zip(missing, loaded):
                self._records.setdefault(font_id, record)
        return [self.record(font_id) for font_id in ids]

    def validate(self) -> None:
        """
        Raise if the manifest breaks family disjointness.

        Raises:
            SplitError: Listing every violation
        """
        records = {font_id: self.record(font_id) for font_id in self.manifest.all_ids()}
        violations = validate_splits(self.manifest, records)
        if violations:
            raise SplitError("; ".join(violations))
        logger.info(
            f"Corpus {self.root}: {len(self.manifest.train)} train, "
            f"{len(self.manifest.val)} val, {len(self.manifest.test)} test fonts"
        )


def load_corpus(root: PathLike, validate: bool = True) -> Corpus:
    corpus = Corpus(root)
    if validate:
        corpus.validate()
    return corpus
