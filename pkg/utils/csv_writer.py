import csv
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence


def format_value(value: Any) -> str:
    """
    Formats a cell value without locale dependence.

    Floats use repr(), the shortest string that round-trips to the same double, so every
    written value can be re-read bit-exactly. Booleans are written as 0/1.
    """
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        # numpy scalars
        return format_value(value.item())
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Writes rows under a fixed header.

    Args:
        path (str | Path): Destination file; parent directories are created.
        header (Sequence[str]): Column names.
        rows (Iterable[Sequence[Any]]): Rows, each with len(header) values.

    Returns:
        Path: The written path.

    Raises:
        ValueError: If a row does not match the header width.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"Row {row!r} does not match header {list(header)!r}")
            writer.writerow([format_value(value) for value in row])
    logging.getLogger(__name__).info(f"Wrote {path}")
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    """Reads a CSV written by write_csv() into a list of dicts keyed by header."""
    with open(path, "r", newline="", encoding="utf-8") as file:
        return list(csv.DictReader(file))
