"""
Atomic file helpers shared by every artefact writer.
"""
import json
import logging
from pathlib import Path
from typing import Any, Union

from kernkit.errors import DataValidationError, StorageError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def load_json(file_path: PathLike) -> Any:
    """
    Load JSON from file.

    Raises:
        DataValidationError: If the file is missing or not valid JSON
    """
    file_path = Path(file_path)
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataValidationError(f"file not found: {file_path}") from None
    except json.JSONDecodeError as e:
        raise DataValidationError(f"invalid JSON in {file_path}: {e}") from None


def dumps_json(data: Any) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_bytes_atomic(file_path: PathLike, payload: bytes) -> None:
    """Write to a temporary sibling, then rename over the target."""
    file_path = Path(file_path)
    temp_file = file_path.with_name(file_path.name + ".tmp")
    try:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(temp_file, "wb") as f:
            f.write(payload)
        # Atomic rename
        temp_file.replace(file_path)
    except OSError as e:
        if temp_file.exists():
            temp_file.unlink()
        raise StorageError(f"failed to write {file_path}: {e}") from e


def save_json(file_path: PathLike, data: Any) -> None:
    """Save JSON to file atomically."""
    write_bytes_atomic(file_path, dumps_json(data).encode("utf-8"))


def read_bytes(file_path: PathLike) -> bytes:
    file_path = Path(file_path)
    try:
        return file_path.read_bytes()
    except FileNotFoundError:
        raise DataValidationError(f"file not found: {file_path}") from None
    except OSError as e:
        raise StorageError(f"failed to read {file_path}: {e}") from e
