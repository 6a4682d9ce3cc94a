import logging
import os
from typing import Any, Callable, Optional

from ccqm.graphs import ModelSpec, TruncatedGraph

logger = logging.getLogger(__name__)


class DistanceCache:
    """Advisory store of BFS distances as lines "model,N,x,y,d"."""

    def __init__(self, path: str):
        self.path = path
        self.entries: dict[tuple[str, int, str, str], int] = {}
        self.dirty = False
        if os.path.exists(path):
            self.load()

    def load(self):
        with open(self.path) as f:
            for number, line in enumerate(f, start=1):
                parts = line.strip().split(",")
                if len(parts) != 5:
                    logger.debug(f"Skipping cache line {number}: {line.strip()!r}")
                    continue
                model, bound, x, y, value = parts
                try:
                    self.entries[(model, int(bound), x, y)] = int(value)
                except ValueError:
                    logger.debug(f"Skipping cache line {number}: {line.strip()!r}")
        logger.info(f"Loaded {len(self.entries)} cached distances from {self.path}")

    def get(self, model: str, bound: int, x: str, y: str) -> Optional[int]:
        return self.entries.get((model, bound, x, y))

    def put(self, model: str, bound: int, x: str, y: str, value: int):
        self.entries[(model, bound, x, y)] = value
        self.dirty = True

    def lookup(self, model: ModelSpec) -> Callable[[TruncatedGraph, Any, Any], int]:
        def distance(graph: TruncatedGraph, x, y) -> int:
            key = (
                model.kind,
                graph.bound,
                model.format_vertex(x),
                model.format_vertex(y),
            )
            if (cached := self.get(*key)) is not None:
                return cached
            value = graph.distance(x, y)
            self.put(*key, value)
            return value

        return distance

    def save(self):
        if not self.dirty:
            return
        with open(self.path, "w") as f:
            for (model, bound, x, y), value in sorted(self.entries.items()):
                f.write(f"{model},{bound},{x},{y},{value}\n")
        self.dirty = False
