"""Seeded synthetic generators used by the bundled sample, scripts and tests."""

from __future__ import annotations

import datetime as dt

import numpy as np

from airprice.ingest import CalendarEntry, ListingRecord

ROOM_TYPES = ("Entire home/apt", "Private room", "Shared room")
ZIPCODES = ("94102", "94103", "94107", "94110", "94114", "94117", "94122", "94133")
NEIGHBORHOODS = {z: n for z, n in zip(ZIPCODES, (
    "Tenderloin", "South of Market", "Potrero Hill", "Mission", "Castro",
    "Haight Ashbury", "Sunset", "North Beach"))}
# zipcodes whose listings tend to stay open on the calendar
HIGH_AVAILABILITY_ZIPS = frozenset(ZIPCODES[::2])


def piecewise_target(X: np.ndarray) -> np.ndarray:
    """Step function of columns 0, 2 and 4; the other columns carry no signal."""
    return (3.0 * (X[:, 0] > 0.5) + 2.0 * (X[:, 2] > 0.3) + 1.5 * (X[:, 4] > 0.7)
            + 1.0 * ((X[:, 0] > 0.5) & (X[:, 2] > 0.3)))


def piecewise_regression(n: int = 5000, p: int = 6, noise: float = 0.1,
                         seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    return X, piecewise_target(X) + noise * rng.standard_normal(n)


def two_blob_availability(n_low: int, n_high: int, window: int, seed: int = 0,
                          spread: float = 0.05) -> np.ndarray:
    """Day counts drawn around 15% and 85% of the window."""
    rng = np.random.default_rng(seed)
    frac = np.concatenate([np.clip(rng.normal(0.15, spread, n_low), 0, 0.4),
                           np.clip(rng.normal(0.85, spread, n_high), 0.6, 1)])
    return np.rint(frac * window).astype(np.int64)


def synthetic_listings(n_listings: int = 40, n_rows: int = 200, seed: int = 0,
                       start: dt.date = dt.date(2016, 1, 1)) -> list[ListingRecord]:
    """Multi-snapshot listings with a price driven by size, room type and location.

    Each listing appears in at least one snapshot; the rest of the rows are
    extra monthly snapshots of randomly chosen listings with a little price drift.
    """
    if n_rows < n_listings:
        raise ValueError("n_rows must be >= n_listings")
    rng = np.random.default_rng(seed)
    base = []
    for i in range(n_listings):
        z = ZIPCODES[int(rng.integers(len(ZIPCODES)))]
        room = ROOM_TYPES[int(rng.choice(3, p=[0.6, 0.33, 0.07]))]
        bedrooms = float(rng.choice([0, 1, 1, 2, 2, 3, 4, 5]))
        accommodates = int(max(1, bedrooms * 2 + rng.integers(0, 3)))
        zi = ZIPCODES.index(z)
        lat = 37.72 + 0.01 * zi + rng.normal(0, 0.003)
        lon = -122.48 + 0.012 * zi + rng.normal(0, 0.003)
        price = (60 + 45 * bedrooms + {"Entire home/apt": 80, "Private room": 20,
                                       "Shared room": 0}[room] + 6 * zi)
        high = z in HIGH_AVAILABILITY_ZIPS
        frac = float(np.clip(rng.normal(0.8 if high else 0.2, 0.08), 0, 1))
        base.append(dict(
            listing_id=1000 + i, bedrooms=bedrooms, bathrooms=float(max(1, bedrooms // 2 + 1)),
            accommodates=accommodates, room_type=room, zipcode=z, latitude=round(lat, 6),
            longitude=round(lon, 6), neighborhood=NEIGHBORHOODS[z], city="San Francisco",
            cleaning_fee=float(round(rng.uniform(0, 120))) if rng.uniform() < 0.85 else None,
            security_deposit=float(round(rng.uniform(0, 500), -1)) if rng.uniform() < 0.6 else None,
            extra_people=float(round(rng.uniform(0, 30))), price=price, frac=frac))
    owners = np.concatenate([np.arange(n_listings),
                             rng.integers(0, n_listings, n_rows - n_listings)])
    owners.sort(kind="stable")
    records = []
    snapshot = np.zeros(n_listings, dtype=np.int64)
    for o in owners:
        b = base[int(o)]
        month = int(snapshot[o])
        snapshot[o] += 1
        day = dt.date(start.year + (start.month - 1 + month) // 12,
                      (start.month - 1 + month) % 12 + 1, 1)
        price = round(b["price"] * float(np.exp(rng.normal(0, 0.04))), 0)
        frac = float(np.clip(b["frac"] + rng.normal(0, 0.03), 0, 1))
        avail = {w: int(round(np.clip(frac + rng.normal(0, 0.02), 0, 1) * w))
                 for w in (30, 60, 90, 365)}
        fields = {k: v for k, v in b.items() if k not in ("price", "frac")}
        records.append(ListingRecord(
            price=float(price), snapshot_date=day,
            availability_30=avail[30], availability_60=avail[60],
            availability_90=avail[90], availability_365=avail[365], **fields))
    return records


def synthetic_calendar(records, n_days: int = 28, seed: int = 0,
                       start: dt.date = dt.date(2016, 6, 1),
                       weekend_premium: float = 1.15) -> list[CalendarEntry]:
    """Daily rows for each distinct listing; Friday and Saturday nights cost more."""
    rng = np.random.default_rng(seed)
    first = {}
    for r in records:
        first.setdefault(r.listing_id, r)
    out = []
    for lid in sorted(first):
        r = first[lid]
        for d in range(n_days):
            day = start + dt.timedelta(days=d)
            available = bool(rng.uniform() < r.availability_30 / 30)
            price = r.price * (weekend_premium if day.weekday() in (4, 5) else 1.0)
            out.append(CalendarEntry(lid, day, available, float(round(price)) if available else None))
    return out
