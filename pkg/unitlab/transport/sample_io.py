"""SampleSet CSV files.

The iteration tag is a "# t=<iteration>" comment line inside the CSV itself,
followed by a "dim0,dim1,..." header and one row per sample.
"""

import csv
import logging
import re
from pathlib import Path

import numpy as np

from ..core.error_handling import FileFormatError, handle_errors
from .models import SampleSet

logger = logging.getLogger(__name__)

_TAG_LINE = re.compile(r"^#\s*t=(-?\d+)\s*$")


def write_sample_set(path: str | Path, sample_set: SampleSet) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as handle:
        handle.write(f"# t={sample_set.iteration_tag}\n")
        writer = csv.writer(handle)
        writer.writerow([f"dim{i}" for i in range(sample_set.d)])
        for row in sample_set.samples:
            writer.writerow([repr(float(value)) for value in row])
    logger.debug(f"Wrote {sample_set.n} samples to {target}")
    return target


@handle_errors(error_types={ValueError: FileFormatError}, default_error=FileFormatError)
def read_sample_set(path: str | Path) -> SampleSet:
    source = Path(path)
    with open(source, newline="", encoding="utf-8") as handle:
        tag_match = _TAG_LINE.match(handle.readline().strip())
        if tag_match is None:
            raise FileFormatError(f"{source}: first line must be '# t=<iteration>'")
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header != [f"dim{i}" for i in range(len(header))]:
            raise FileFormatError(f"{source}: header must be dim0,dim1,...")
        rows = [[float(value) for value in row] for row in reader if row]

    if any(len(row) != len(header) for row in rows):
        raise FileFormatError(f"{source}: every row needs {len(header)} values")
    if not rows:
        raise FileFormatError(f"{source}: no samples")
    return SampleSet(np.array(rows), iteration_tag=int(tag_match.group(1)))
