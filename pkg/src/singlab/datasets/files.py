import csv
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from singlab.errors import DomainError
from singlab.mixture import TrainingSet

from .base import DatasetSource


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


class CsvSource(DatasetSource):
    """
    Training set read from CSV: one point per row.

    An optional header row is recognised when it is not numeric; a final
    column named `label` holds integer class ids.
    """

    def __init__(self, path):
        self.path = Path(path)

    def load(self) -> TrainingSet:
        if not self.path.exists():
            raise DomainError(f"dataset file '{self.path}' not found")

        with open(self.path, newline="") as f:
            reader = csv.reader(f)
            rows = [(reader.line_num, row) for row in reader if row and any(cell.strip() for cell in row)]
        if not rows:
            raise DomainError(f"dataset file '{self.path}' is empty")

        has_label = False
        if not all(_is_number(cell) for cell in rows[0][1]):
            header = [cell.strip().lower() for cell in rows[0][1]]
            has_label = header[-1] == "label"
            rows = rows[1:]

        points: List[List[float]] = []
        labels: List[int] = []
        for line_no, row in rows:
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise DomainError(f"{self.path}:{line_no}: non-numeric value in {row}") from None
            if has_label:
                label = values.pop()
                if not label.is_integer():
                    raise DomainError(f"{self.path}:{line_no}: label {row[-1].strip()} is not an integer")
                labels.append(int(label))
            if points and len(values) != len(points[0]):
                raise DomainError(
                    f"{self.path}:{line_no}: {len(values)} coordinates, earlier rows have {len(points[0])}"
                )
            points.append(values)

        return TrainingSet.from_array(points, labels=labels if has_label else None)

    def describe(self) -> str:
        return f"csv:{self.path}"


class InlineSource(DatasetSource):
    """Points (and labels) given directly in the experiment config."""

    def __init__(self, points: Sequence, labels: Optional[Sequence[int]] = None):
        self.points = points
        self.labels = labels

    def load(self) -> TrainingSet:
        widths = [np.size(p) for p in self.points]
        for i, width in enumerate(widths):
            if width != widths[0]:
                raise DomainError(f"inline point {i} has {width} coordinates, point 0 has {widths[0]}")
        return TrainingSet.from_array(self.points, labels=self.labels)

    def describe(self) -> str:
        return "inline"
