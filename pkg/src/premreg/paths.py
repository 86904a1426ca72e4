"""Path sanitization and data-source resolution shared by the CLI and the pipeline."""
from __future__ import annotations

from pathlib import Path

from . import datasets


def strip_quotes(raw: str) -> str:
    cleaned = raw.strip().strip("\"").strip("'")
    return cleaned


def normalize_input_path(raw: str) -> Path:
    return Path(strip_quotes(raw)).expanduser()


def resolve_source(raw: str) -> str | Path:
    """A bundled dataset name, or a path to a CSV file when no bundled name matches."""

    cleaned = strip_quotes(raw)
    if datasets.is_bundled(cleaned) and not Path(cleaned).suffix:
        return cleaned.lower()
    return normalize_input_path(cleaned)


def source_label(source: str | Path) -> str:
    return source if isinstance(source, str) else Path(source).stem


def default_out_dir(base: str | Path, source: str | Path, method: str) -> Path:
    return Path(base) / f"{source_label(source)}_{method}"


def coerce_out_dir(path: str | Path) -> Path:
    candidate = Path(path)
    if candidate.suffix:
        return candidate.parent / candidate.stem
    return candidate
