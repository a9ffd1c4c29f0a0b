#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Field snapshots and result files.

A snapshot is a packed little-endian header followed by the field values
as float64:

    magic b"CNSM" | version u2 | kind u1 | nx u4 | ny u4 | lx f8 | ly f8

``kind`` is 0 for a scalar field (nx*ny values) and 1 for a vector field
(2*nx*ny face values, x slots first). Result tables are plain CSV with
floats written at full precision.
"""

# Stdlib:
import csv
import logging
import math
import os

from dataclasses import dataclass

# External:
import numpy as np

# Internal:
from ksnslab.errors import KsnsError, SnapshotFormatError
from ksnslab.operators import ScalarField, VectorField, build_grid


LOGGER = logging.getLogger(__name__)

MAGIC = b"CNSM"
VERSION = 1
SCALAR_KIND = 0
VECTOR_KIND = 1

HEADER = np.dtype([
    ("magic", "S4"),
    ("version", "<u2"),
    ("kind", "u1"),
    ("nx", "<u4"),
    ("ny", "<u4"),
    ("lx", "<f8"),
    ("ly", "<f8"),
])


#############
# SNAPSHOTS #
#############

@dataclass(frozen=True, eq=False)
class FieldSnapshot(object):
    """A field together with its on-disk header"""
    field: object

    @property
    def kind(self):
        return VECTOR_KIND if isinstance(self.field, VectorField) else SCALAR_KIND

    def to_bytes(self):
        grid = self.field.grid
        header = np.zeros(1, dtype=HEADER)
        header["magic"] = MAGIC
        header["version"] = VERSION
        header["kind"] = self.kind
        header["nx"], header["ny"] = grid.nx, grid.ny
        header["lx"], header["ly"] = grid.lx, grid.ly

        if self.kind == VECTOR_KIND:
            payload = self.field.stacked()
        else:
            payload = self.field.values
        return header.tobytes() + np.asarray(payload, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, raw):
        """Decode a snapshot.

        :param raw: (bytes) File contents.
        :returns FieldSnapshot: The decoded snapshot.
        :raises: SnapshotFormatError on any malformed input.
        """
        if len(raw) < HEADER.itemsize:
            raise SnapshotFormatError(
                "Snapshot is {} bytes, shorter than its header".format(len(raw))
            )

        header = np.frombuffer(raw[:HEADER.itemsize], dtype=HEADER)[0]
        if bytes(header["magic"]) != MAGIC:
            raise SnapshotFormatError("Bad magic {!r}".format(bytes(header["magic"])))
        if int(header["version"]) != VERSION:
            raise SnapshotFormatError(
                "Unsupported snapshot version {}".format(int(header["version"]))
            )

        kind = int(header["kind"])
        if kind not in (SCALAR_KIND, VECTOR_KIND):
            raise SnapshotFormatError("Unknown field kind {}".format(kind))

        try:
            grid = build_grid(
                float(header["lx"]), float(header["ly"]),
                int(header["nx"]), int(header["ny"]),
            )
        except KsnsError as err:
            raise SnapshotFormatError("Bad snapshot grid: {}".format(err))

        width = grid.size * (2 if kind == VECTOR_KIND else 1)
        payload = raw[HEADER.itemsize:]
        if len(payload) != 8 * width:
            raise SnapshotFormatError(
                "Payload has {} bytes, expected {}".format(len(payload), 8 * width)
            )

        values = np.frombuffer(payload, dtype="<f8").astype(float)
        if not np.all(np.isfinite(values)):
            raise SnapshotFormatError("Snapshot holds non-finite values")

        if kind == VECTOR_KIND:
            return cls(VectorField.from_stacked(grid, values))
        return cls(ScalarField(grid, values))


def write_snapshot(path, field):
    with open(path, "wb") as handle:
        handle.write(FieldSnapshot(field).to_bytes())
    LOGGER.debug("Wrote snapshot %s", path)


def read_snapshot(path):
    """Read a field from a snapshot file.

    :raises: SnapshotFormatError if the file is unreadable or malformed.
    """
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as err:
        raise SnapshotFormatError("Cannot read snapshot {}: {}".format(path, err))
    return FieldSnapshot.from_bytes(raw).field


##########
# TABLES #
##########

def format_cell(value):
    """CSV cell text; floats round-trip exactly"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_rows(path, header, rows):
    """Write a CSV table and return the number of data rows"""
    count = 0
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])
            count += 1
    LOGGER.debug("Wrote %d rows to %s", count, path)
    return count


def read_rows(path):
    with open(path, "r", newline="") as handle:
        return list(csv.DictReader(handle))


def write_norms(path, rows):
    return write_rows(path, ("t", "component", "weighted_norm"), rows)


def write_diagnostics(path, diag):
    """Per-iteration table; wall_ms stays empty unless timings were recorded"""
    return write_rows(path, ("iter", "y_distance", "ratio", "wall_ms"), diag.rows())


def write_verdict(path, lines):
    text = "\n".join(lines) + "\n"
    with open(path, "w") as handle:
        handle.write(text)
    return text


def output_path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)
