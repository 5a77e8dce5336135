"""Tabular datasets with finite attribute domains and one-hot encoding.

Every attribute has a finite domain: either an explicit list of labels or
a set of numeric buckets defined by ascending bin edges.  Rows carry a
unique ID plus one value per attribute, and encode to one bit vector per
attribute with exactly one high bit.  The shuffling stages downstream
only ever move whole bit vectors around, so encoding and decoding here
are the only places that touch raw values.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

BitVector = tuple[int, ...]

# Above this many cells (sum of domain sizes) the one-hot representation
# gets bulky; we warn rather than refuse.
DOMAIN_WARNING_THRESHOLD = 10_000


class DatasetError(ValueError):
    """Raised for malformed schemas, rows, or input files."""


class EncodingError(DatasetError):
    """Raised when a bit vector violates the one-hot contract."""


def _format_number(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def high_bit(vector: BitVector) -> int:
    """Return the index of the single high bit, or raise EncodingError."""
    ones = [i for i, b in enumerate(vector) if b == 1]
    if len(ones) != 1 or any(b not in (0, 1) for b in vector):
        raise EncodingError(
            f"bit vector {vector!r} must contain exactly one high bit"
        )
    return ones[0]


@dataclass(frozen=True)
class Attribute:
    """One column: a name plus its finite domain.

    Categorical attributes list their labels in ``values``.  Numeric
    attributes additionally carry ``bin_edges`` (ascending, one more edge
    than there are buckets, last edge may be inf); ``values`` then holds
    the bucket labels.
    """

    name: str
    values: tuple[str, ...]
    bin_edges: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise DatasetError("attribute name must be non-empty")
        if not self.values:
            raise DatasetError(f"attribute {self.name!r} has an empty domain")
        if len(set(self.values)) != len(self.values):
            raise DatasetError(f"attribute {self.name!r} has duplicate domain labels")
        if self.bin_edges is not None:
            edges = self.bin_edges
            if len(edges) != len(self.values) + 1:
                raise DatasetError(
                    f"attribute {self.name!r}: {len(edges)} bin edges do not "
                    f"bound {len(self.values)} buckets"
                )
            if any(e2 <= e1 for e1, e2 in zip(edges, edges[1:])):
                raise DatasetError(f"attribute {self.name!r}: bin edges must ascend")
            if any(math.isinf(e) for e in edges[:-1]):
                raise DatasetError(
                    f"attribute {self.name!r}: only the last bin edge may be infinite"
                )

    @property
    def is_numeric(self) -> bool:
        return self.bin_edges is not None

    @property
    def size(self) -> int:
        return len(self.values)

    def bucket_range(self, index: int) -> tuple[float, float]:
        """Half-open range [lo, hi) of bucket ``index``."""
        if not self.is_numeric:
            raise DatasetError(f"attribute {self.name!r} has no bucketing rule")
        return self.bin_edges[index], self.bin_edges[index + 1]

    def bucket_of(self, x: float) -> int:
        """Index of the bucket containing ``x``."""
        if not self.is_numeric:
            raise DatasetError(
                f"attribute {self.name!r} has no bucketing rule for numeric "
                f"value {x!r}"
            )
        edges = self.bin_edges
        if x < edges[0] or x >= edges[-1]:
            raise DatasetError(
                f"value {x!r} outside the bucket range "
                f"[{_format_number(edges[0])}, {_format_number(edges[-1])}) "
                f"of attribute {self.name!r}"
            )
        lo, hi = 0, len(edges) - 2
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if x >= edges[mid]:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def value_index(self, value: object) -> int:
        """Domain index of a raw value (label or number)."""
        if isinstance(value, str):
            if value in self.values:
                return self.values.index(value)
            if self.is_numeric:
                try:
                    parsed = float(value)
                except ValueError:
                    pass
                else:
                    return self.bucket_of(parsed)
            raise DatasetError(
                f"value {value!r} is not in the domain of attribute {self.name!r}"
            )
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return self.bucket_of(float(value))
        raise DatasetError(
            f"unsupported value {value!r} for attribute {self.name!r}"
        )

    def encode(self, value: object) -> BitVector:
        idx = self.value_index(value)
        return tuple(1 if i == idx else 0 for i in range(self.size))

    def decode(self, vector: BitVector) -> str:
        if len(vector) != self.size:
            raise EncodingError(
                f"bit vector of length {len(vector)} does not match the "
                f"{self.size}-value domain of attribute {self.name!r}"
            )
        return self.values[high_bit(vector)]


def _auto_labels(edges: tuple[float, ...]) -> tuple[str, ...]:
    labels = []
    for lo, hi in zip(edges, edges[1:]):
        if math.isinf(hi):
            labels.append(f"{_format_number(lo)}+")
        else:
            labels.append(f"[{_format_number(lo)},{_format_number(hi)})")
    return tuple(labels)


@dataclass(frozen=True)
class Schema:
    """Ordered collection of attributes."""

    attributes: tuple[Attribute, ...]

    def __post_init__(self) -> None:
        if not self.attributes:
            raise DatasetError("schema must declare at least one attribute")
        names = [a.name.lower() for a in self.attributes]
        if len(set(names)) != len(names):
            raise DatasetError("schema attribute names must be unique")
        cells = sum(a.size for a in self.attributes)
        if cells > DOMAIN_WARNING_THRESHOLD:
            warnings.warn(
                f"one-hot encoding will use {cells} cells per row; consider "
                f"coarser buckets",
                stacklevel=2,
            )

    @property
    def k(self) -> int:
        return len(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index_of(self, name: str) -> int:
        lowered = name.lower()
        for i, a in enumerate(self.attributes):
            if a.name.lower() == lowered:
                return i
        raise DatasetError(f"schema has no attribute named {name!r}")

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self.index_of(name)]

    @classmethod
    def from_dict(cls, payload: dict) -> Schema:
        try:
            specs = payload["attributes"]
        except (TypeError, KeyError):
            raise DatasetError("schema payload must have an 'attributes' list")
        attrs = []
        for spec in specs:
            name = spec.get("name")
            if name is None:
                raise DatasetError("every schema attribute needs a 'name'")
            if "bins" in spec:
                edges = tuple(
                    math.inf if e is None else float(e) for e in spec["bins"]
                )
                labels = spec.get("labels")
                values = tuple(labels) if labels else _auto_labels(edges)
                attrs.append(Attribute(name, values, edges))
            elif "domain" in spec:
                attrs.append(Attribute(name, tuple(str(v) for v in spec["domain"])))
            else:
                raise DatasetError(
                    f"attribute {name!r} needs either 'domain' or 'bins'"
                )
        return cls(tuple(attrs))

    def to_dict(self) -> dict:
        out = []
        for a in self.attributes:
            if a.is_numeric:
                edges = [None if math.isinf(e) else e for e in a.bin_edges]
                out.append({"name": a.name, "bins": edges, "labels": list(a.values)})
            else:
                out.append({"name": a.name, "domain": list(a.values)})
        return {"attributes": out}


@dataclass(frozen=True)
class Row:
    uid: str
    values: tuple[object, ...]


@dataclass(frozen=True)
class Dataset:
    """Validated raw rows against a schema."""

    schema: Schema
    rows: tuple[Row, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for row in self.rows:
            if row.uid in seen:
                raise DatasetError(f"duplicate row ID {row.uid!r}")
            seen.add(row.uid)
            if len(row.values) != self.schema.k:
                raise DatasetError(
                    f"row {row.uid!r} has {len(row.values)} values, expected "
                    f"{self.schema.k}"
                )
            for attr, value in zip(self.schema.attributes, row.values):
                attr.value_index(value)

    @property
    def n(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class EncodedRow:
    uid: str
    vectors: tuple[BitVector, ...]


@dataclass(frozen=True)
class EncodedDataset:
    """One bit vector per attribute per row, exactly one high bit each."""

    schema: Schema
    rows: tuple[EncodedRow, ...] = field(default=())

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for row in self.rows:
            if row.uid in seen:
                raise DatasetError(f"duplicate row ID {row.uid!r}")
            seen.add(row.uid)
            if len(row.vectors) != self.schema.k:
                raise DatasetError(
                    f"row {row.uid!r} has {len(row.vectors)} vectors, expected "
                    f"{self.schema.k}"
                )
            for attr, vector in zip(self.schema.attributes, row.vectors):
                if len(vector) != attr.size:
                    raise EncodingError(
                        f"row {row.uid!r}: vector length {len(vector)} does not "
                        f"match the {attr.size}-value domain of {attr.name!r}"
                    )
                high_bit(vector)

    @property
    def n(self) -> int:
        return len(self.rows)

    def value_index(self, slot: int, attr_name: str) -> int:
        pos = self.schema.index_of(attr_name)
        return high_bit(self.rows[slot].vectors[pos])


def one_hot_encode(dataset: Dataset) -> EncodedDataset:
    """Encode every value as a one-hot bit vector over its domain."""
    encoded = []
    for row in dataset.rows:
        vectors = tuple(
            attr.encode(value)
            for attr, value in zip(dataset.schema.attributes, row.values)
        )
        encoded.append(EncodedRow(row.uid, vectors))
    return EncodedDataset(dataset.schema, tuple(encoded))


def decode(encoded: EncodedDataset) -> Dataset:
    """Rebuild rows of labels.  Numeric values come back as bucket labels."""
    rows = []
    for row in encoded.rows:
        values = tuple(
            attr.decode(vector)
            for attr, vector in zip(encoded.schema.attributes, row.vectors)
        )
        rows.append(Row(row.uid, values))
    return Dataset(encoded.schema, tuple(rows))


def load_csv(path: str, schema: Schema) -> Dataset:
    """Load rows from a CSV file whose first column is the unique row ID.

    The header must name every schema attribute, in schema order, after
    the ID column.  Numeric attribute cells are parsed as numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: file is empty")
        got = [h.strip().lower() for h in header[1:]]
        expected = [name.lower() for name in schema.names]
        if got != expected:
            raise DatasetError(
                f"{path}: header columns {header[1:]!r} do not match schema "
                f"attributes {list(schema.names)!r}"
            )
        rows = []
        ids: set[str] = set()
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != schema.k + 1:
                raise DatasetError(
                    f"{path} row {lineno - 1}: expected {schema.k + 1} columns, "
                    f"got {len(record)}"
                )
            uid = record[0].strip()
            if not uid:
                raise DatasetError(f"{path} row {lineno - 1}: empty row ID")
            if uid in ids:
                raise DatasetError(f"{path}: duplicate row ID {uid!r}")
            ids.add(uid)
            values: list[object] = []
            for attr, cell in zip(schema.attributes, record[1:]):
                cell = cell.strip()
                if attr.is_numeric:
                    try:
                        parsed: object = float(cell)
                    except ValueError:
                        parsed = cell
                else:
                    parsed = cell
                try:
                    attr.value_index(parsed)
                except DatasetError as exc:
                    raise DatasetError(
                        f"{path} row {lineno - 1}, attribute {attr.name!r}: {exc}"
                    ) from None
                values.append(parsed)
            rows.append(Row(uid, tuple(values)))
    return Dataset(schema, tuple(rows))
