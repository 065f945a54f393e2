"""Loading and cleaning of listing / calendar snapshot CSVs."""

from __future__ import annotations

import csv
import datetime as dt
from collections import Counter
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

from airprice.errors import ParseError, SchemaError

WINDOWS = (30, 60, 90, 365)


@dataclass(frozen=True)
class ListingRecord:
    listing_id: int
    price: float | None
    bedrooms: float
    bathrooms: float
    accommodates: int
    cleaning_fee: float | None
    security_deposit: float | None
    extra_people: float | None
    room_type: str
    zipcode: str
    latitude: float
    longitude: float
    availability_30: int
    availability_60: int
    availability_90: int
    availability_365: int
    neighborhood: str | None = None
    snapshot_date: dt.date | None = None
    city: str | None = None

    def availability(self, window: int) -> int:
        return getattr(self, f"availability_{window}")


@dataclass(frozen=True)
class CalendarEntry:
    listing_id: int
    date: dt.date
    available: bool
    price: float | None = None


@dataclass
class DropReport:
    """Per-reason counts of rows removed during a cleaning step."""

    n_input: int = 0
    counts: Counter = field(default_factory=Counter)

    def add(self, reason: str) -> None:
        self.counts[reason] += 1

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def n_kept(self) -> int:
        return self.n_input - self.total

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_kept": self.n_kept,
            "dropped": dict(sorted(self.counts.items())),
        }


# record field -> CSV column
DEFAULT_LISTING_SCHEMA: dict[str, str] = {
    "listing_id": "id",
    "price": "price",
    "bedrooms": "bedrooms",
    "bathrooms": "bathrooms",
    "accommodates": "accommodates",
    "cleaning_fee": "cleaning_fee",
    "security_deposit": "security_deposit",
    "extra_people": "extra_people",
    "room_type": "room_type",
    "zipcode": "zipcode",
    "latitude": "latitude",
    "longitude": "longitude",
    "availability_30": "availability_30",
    "availability_60": "availability_60",
    "availability_90": "availability_90",
    "availability_365": "availability_365",
    "neighborhood": "neighbourhood_cleansed",
    "snapshot_date": "last_scraped",
    "city": "city",
}
OPTIONAL_COLUMNS = ("neighborhood", "snapshot_date", "city")
MONEY_FIELDS = ("price", "cleaning_fee", "security_deposit", "extra_people")
FEE_FIELDS = ("cleaning_fee", "security_deposit", "extra_people")
INT_FIELDS = ("accommodates",) + tuple(f"availability_{w}" for w in WINDOWS)
FLOAT_FIELDS = ("bedrooms", "bathrooms", "latitude", "longitude")


def parse_money(text: str | None, row: int | None = None, column: str | None = None) -> float | None:
    """Parse a US-formatted currency cell such as ``"$1,250.00"``.

    Blank cells give ``None``. Only ``$`` and ``,`` are tolerated as decoration.
    """
    if text is None:
        return None
    s = text.strip()
    if not s:
        return None
    cleaned = s.replace("$", "").replace(",", "")
    try:
        value = float(cleaned)
    except ValueError:
        raise ParseError(f"malformed money value {text!r}", row=row, column=column) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"non-finite money value {text!r}", row=row, column=column)
    return value


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed number {text!r}", row=row, column=column) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"non-finite number {text!r}", row=row, column=column)
    return value


def _parse_int(text: str, row: int, column: str) -> int:
    value = _parse_float(text, row, column)
    if not value.is_integer():
        raise ParseError(f"expected an integer, got {text!r}", row=row, column=column)
    return int(value)


def normalize_zipcode(text: str) -> str:
    z = text.strip()
    return z[:5] if len(z) > 5 else z


def _resolve_schema(schema: Mapping[str, str] | None) -> dict[str, str]:
    resolved = dict(DEFAULT_LISTING_SCHEMA)
    if schema:
        unknown = set(schema) - set(resolved)
        if unknown:
            raise SchemaError(f"unknown record fields in schema map: {sorted(unknown)}")
        resolved.update(schema)
    return resolved


def _check_header(header: Iterable[str] | None, required: Iterable[str], path: Path) -> None:
    if header is None:
        raise SchemaError(f"{path}: file has no header row")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing required columns: {', '.join(missing)}")


def _parse_listing_row(raw: dict, rownum: int, cols: dict[str, str], present: set[str],
                       require_price: bool, report: DropReport) -> ListingRecord | None:
    def cell(name: str) -> str:
        col = cols[name]
        if name not in present:
            return ""
        return (raw.get(col) or "").strip()

    id_text = cell("listing_id")
    if not id_text:
        report.add("missing_id")
        return None
    values: dict = {"listing_id": _parse_int(id_text, rownum, cols["listing_id"])}

    for name in MONEY_FIELDS:
        values[name] = parse_money(cell(name), row=rownum, column=cols[name])
    if values["price"] is None and require_price:
        report.add("missing_value")
        return None
    for name in FLOAT_FIELDS + INT_FIELDS:
        text = cell(name)
        if not text:
            report.add("missing_value")
            return None
        parse = _parse_int if name in INT_FIELDS else _parse_float
        values[name] = parse(text, rownum, cols[name])

    values["room_type"] = cell("room_type")
    values["zipcode"] = normalize_zipcode(cell("zipcode"))
    values["neighborhood"] = cell("neighborhood") or None
    values["city"] = cell("city") or None
    date_text = cell("snapshot_date")
    if date_text:
        try:
            values["snapshot_date"] = dt.date.fromisoformat(date_text)
        except ValueError:
            report.add("bad_date")
            return None

    if values["price"] is not None and values["price"] < 0:
        report.add("negative_price")
        return None
    if not -90.0 <= values["latitude"] <= 90.0:
        report.add("lat_range")
        return None
    if not -180.0 <= values["longitude"] <= 180.0:
        report.add("lon_range")
        return None
    for w in WINDOWS:
        if not 0 <= values[f"availability_{w}"] <= w:
            report.add("availability_range")
            return None
    return ListingRecord(**values)


def load_listings(path: str | Path, schema: Mapping[str, str] | None = None,
                  require_price: bool = True) -> tuple[list[ListingRecord], DropReport]:
    """Load a listings snapshot CSV.

    Rows violating a hard invariant (coordinate range, availability window
    range, negative price, missing id or mandatory value) are dropped and
    counted in the returned ``DropReport``; malformed cells raise
    ``ParseError``. With ``require_price=False`` a blank price is kept as
    ``None`` (used for prediction inputs).
    """
    path = Path(path)
    cols = _resolve_schema(schema)
    required = [cols[f] for f in cols if f not in OPTIONAL_COLUMNS
                and not (f == "price" and not require_price)]
    records: list[ListingRecord] = []
    report = DropReport()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, required, path)
        header = set(reader.fieldnames or ())
        present = {f for f, c in cols.items() if c in header}
        for rownum, raw in enumerate(reader, start=1):
            report.n_input += 1
            rec = _parse_listing_row(raw, rownum, cols, present, require_price, report)
            if rec is not None:
                records.append(rec)
    return records, report


def load_calendar(path: str | Path) -> tuple[list[CalendarEntry], DropReport]:
    """Load a calendar CSV (listing_id, date, available, price)."""
    path = Path(path)
    entries: list[CalendarEntry] = []
    report = DropReport()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, ("listing_id", "date", "available", "price"), path)
        for rownum, raw in enumerate(reader, start=1):
            report.n_input += 1
            id_text = (raw.get("listing_id") or "").strip()
            if not id_text:
                report.add("missing_id")
                continue
            listing_id = _parse_int(id_text, rownum, "listing_id")
            try:
                day = dt.date.fromisoformat((raw.get("date") or "").strip())
            except ValueError:
                report.add("bad_date")
                continue
            flag = (raw.get("available") or "").strip()
            if flag not in ("t", "f"):
                report.add("bad_flag")
                continue
            price = parse_money(raw.get("price"), row=rownum, column="price")
            if price is not None and price < 0:
                report.add("negative_price")
                continue
            entries.append(CalendarEntry(listing_id, day, flag == "t", price))
    return entries, report


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_listings(records: Iterable[ListingRecord], path: str | Path,
                   schema: Mapping[str, str] | None = None) -> None:
    """Write records back to CSV in a form ``load_listings`` re-reads identically."""
    cols = _resolve_schema(schema)
    names = [f.name for f in fields(ListingRecord)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([cols[n] for n in names])
        for rec in records:
            writer.writerow([_format_cell(getattr(rec, n)) for n in names])


def write_calendar(entries: Iterable[CalendarEntry], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["listing_id", "date", "available", "price"])
        for e in entries:
            writer.writerow([e.listing_id, e.date.isoformat(), "t" if e.available else "f",
                             _format_cell(e.price)])
