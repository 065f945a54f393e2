"""Regenerate the bundled sample under data/sample/."""

import argparse
import json
from pathlib import Path

from airprice.ingest import write_calendar, write_listings
from airprice.synthetic import synthetic_calendar, synthetic_listings

# small enough that `airprice train --config data/sample/config.json` runs in seconds
SAMPLE_CONFIG = {
    "listings": "listings.csv",
    "calendar": "calendar.csv",
    "target_per_listing": 100,
    "n_iter": 6,
    "folds": 5,
    "search_space": {"n_estimators": [10, 30]},
    "gate_params": {"n_estimators": 30},
    "trees_curve_n_list": [1, 5, 10, 25, 50],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "sample"))
    ap.add_argument("--seed", type=int, default=2016)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = synthetic_listings(n_listings=40, n_rows=200, seed=args.seed)
    write_listings(records, out / "listings.csv")
    write_calendar(synthetic_calendar(records, seed=args.seed), out / "calendar.csv")
    (out / "config.json").write_text(json.dumps(SAMPLE_CONFIG, indent=2) + "\n")
    print(f"wrote {len(records)} listings rows to {out}")


if __name__ == "__main__":
    main()
