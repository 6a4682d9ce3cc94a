import json
import logging
from enum import Enum
from fractions import Fraction
from typing import IO, Optional, Sequence

logger = logging.getLogger(__name__)


def _encode(value):
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (set, frozenset)):
        return sorted(str(item) for item in value)
    return str(value)


class RecordWriter:
    """One JSON object per line, keys sorted so equal runs give equal bytes."""

    def __init__(self, stream: IO[str], model: str, seed: int, version: str):
        self.stream = stream
        self.model = model
        self.seed = seed
        self.version = version
        self.count = 0

    def write(self, kind: str, n_star: Optional[int] = None, **fields):
        record = {
            "kind": kind,
            "model": self.model,
            "n_star": n_star,
            "seed": self.seed,
            "version": self.version,
            **fields,
        }
        self.stream.write(json.dumps(record, sort_keys=True, default=_encode) + "\n")
        self.count += 1


def summary_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(header) for header in headers]] + [
        [_encode(cell) if not isinstance(cell, str) else cell for cell in row]
        for row in rows
    ]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths))
        for row in cells
    ]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(line.rstrip() for line in lines)
