"""Binary field dumps.

A dump is a short ASCII header followed by the raw payload::

    STOKESHOMOG-FIELD 1
    kind=cell
    dims=2,64,64
    <key>=<value>        (any number of metadata lines)
    END
    <prod(dims) little-endian float64 values, row-major>

``kind`` is one of ``cell``, ``mac-u``, ``mac-v`` or ``mac-p``.
"""
import os

import numpy as np

from .cell import CorrectorField, CorrectorSet, INDEX_PAIRS
from .exceptions import FieldDumpError, MissingArtifactError

MAGIC = "STOKESHOMOG-FIELD 1"
KINDS = ("cell", "mac-u", "mac-v", "mac-p")
END = "END"
DTYPE = np.dtype("<f8")
MAX_ELEMENTS = 1 << 31
MAX_HEADER_LINES = 256


class FieldDump:
    """An array with its kind and metadata, as stored on disk."""

    __slots__ = ("kind", "data", "meta")

    def __init__(self, kind, data, meta=None):
        if kind not in KINDS:
            raise FieldDumpError(
                "Unknown field kind {!r}, expected one of {}".format(kind, ", ".join(KINDS))
            )
        self.kind = kind
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.meta = {str(k): str(v) for k, v in (meta or {}).items()}
        for key, value in self.meta.items():
            if not key or "=" in key or "\n" in key + value or key in ("kind", "dims"):
                raise FieldDumpError("Bad metadata entry {!r}={!r}".format(key, value))

    @property
    def dims(self):
        return self.data.shape

    def __eq__(self, other):
        return (
            isinstance(other, FieldDump)
            and other.kind == self.kind
            and other.meta == self.meta
            and other.data.shape == self.data.shape
            and other.data.tobytes() == self.data.tobytes()
        )

    def __repr__(self):
        return "FieldDump({}, dims={})".format(self.kind, self.dims)


def dumps(field):
    """Serialize a :class:`FieldDump` to bytes."""
    lines = [MAGIC, "kind=" + field.kind, "dims=" + ",".join(map(str, field.dims))]
    lines.extend("{}={}".format(k, v) for k, v in field.meta.items())
    lines.append(END)
    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + field.data.astype(DTYPE, copy=False).tobytes(order="C")


def loads(blob):
    """Parse bytes written by :func:`dumps`.

    :raises FieldDumpError: Wrong magic, malformed header, dims overflowing the
                            element limit, or a payload of the wrong length.
    """
    pos = 0
    lines = []
    while True:
        end = blob.find(b"\n", pos)
        if end < 0:
            raise FieldDumpError("Header is not terminated by an END line")
        try:
            line = blob[pos:end].decode("ascii")
        except UnicodeDecodeError:
            raise FieldDumpError("Header line {} is not ASCII".format(len(lines) + 1))
        pos = end + 1
        if not lines and line != MAGIC:
            raise FieldDumpError("Bad magic {!r}, expected {!r}".format(line[:40], MAGIC))
        if line == END:
            break
        lines.append(line)
        if len(lines) > MAX_HEADER_LINES:
            raise FieldDumpError("Header is not terminated by an END line")

    entries = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise FieldDumpError("Malformed header line {!r}".format(line))
        entries[key] = value
    kind = entries.pop("kind", None)
    if kind is None or "dims" not in entries:
        raise FieldDumpError("Header needs kind and dims lines")
    try:
        dims = tuple(int(d) for d in entries.pop("dims").split(","))
    except ValueError:
        raise FieldDumpError("Malformed dims line")
    if not dims or any(d <= 0 for d in dims):
        raise FieldDumpError("dims must be positive, got {}".format(dims))
    count = 1
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise FieldDumpError("dims {} overflow the element limit".format(dims))
    payload = blob[pos:]
    expected = count * DTYPE.itemsize
    if len(payload) != expected:
        raise FieldDumpError(
            "Payload is truncated or oversized: {} bytes, expected {}".format(
                len(payload), expected
            )
        )
    data = np.frombuffer(payload, dtype=DTYPE).reshape(dims).copy()
    return FieldDump(kind, data, entries)


def dump_field(path, field):
    with open(path, "wb") as f:
        f.write(dumps(field))


def load_field(path):
    """Read a dump from ``path``.

    :raises MissingArtifactError: ``path`` does not exist.
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise MissingArtifactError("No field dump at {}".format(path))
    return loads(blob)


# domain helpers


def corrector_path(directory, i, k):
    return os.path.join(directory, "chi_{}{}.field".format(i, k))


def dump_correctors(directory, chi):
    """Write the four correctors, velocity and pressure stacked as ``(3, n, n)``."""
    paths = []
    for entry in chi:
        data = np.concatenate([entry.velocity, entry.pressure[None]])
        meta = dict(
            i=entry.i,
            k=entry.k,
            n_cell=entry.n_cell,
            field=repr(chi.field),
            iterations=entry.iterations,
            residual=repr(float(entry.residual)),
        )
        path = corrector_path(directory, entry.i, entry.k)
        dump_field(path, FieldDump("cell", data, meta))
        paths.append(path)
    return paths


def load_correctors(directory, field, n_cell=None):
    """Load the corrector set of ``field`` written by :func:`dump_correctors`.

    :param n_cell: When given, the cell lattice the dumps must have been solved on.
    :raises MissingArtifactError: A dump is missing or was written for another
                                  coefficient field or lattice.
    """
    entries = []
    for i, k in INDEX_PAIRS:
        dump = load_field(corrector_path(directory, i, k))
        if dump.kind != "cell" or dump.data.ndim != 3 or dump.data.shape[0] != 3:
            raise FieldDumpError("chi_{}{} dump is not a cell corrector".format(i, k))
        if dump.meta.get("field") != repr(field):
            raise MissingArtifactError(
                "chi_{}{} in {} was solved for {}, not {!r}".format(
                    i, k, directory, dump.meta.get("field"), field
                )
            )
        if n_cell is not None and dump.data.shape[-1] != n_cell:
            raise MissingArtifactError(
                "chi_{}{} in {} was solved on n_cell={}, not {}".format(
                    i, k, directory, dump.data.shape[-1], n_cell
                )
            )
        entries.append(
            CorrectorField(
                i,
                k,
                dump.data[:2],
                dump.data[2],
                int(dump.meta.get("iterations", 0)),
                float(dump.meta.get("residual", 0.0)),
            )
        )
    return CorrectorSet(field, entries)


def dump_state(directory, prefix, grid, state, meta=None):
    """Write one staggered state as ``<prefix>-u``, ``-v`` and ``-p`` dumps."""
    u, v = grid.split(state.u)
    meta = dict(meta or {}, t=repr(float(state.t)), n=grid.n)
    paths = []
    for kind, data in (("mac-u", u), ("mac-v", v), ("mac-p", state.p.reshape(grid.n, grid.n))):
        path = os.path.join(directory, "{}-{}.field".format(prefix, kind[4:]))
        dump_field(path, FieldDump(kind, data, meta))
        paths.append(path)
    return paths
