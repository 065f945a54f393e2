"""Run configuration: defaults, JSON file loading and flag overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from airprice.balance import BalanceConfig
from airprice.errors import DomainError
from airprice.features import OutlierRules
from airprice.learners import HyperParams
from airprice.select import FOLD_MODES, SearchSpace

DEFAULT_SEED = 0
# rank-1 setting reported for the tuned price forest
REFERENCE_PARAMS = {"n_estimators": 131, "min_samples_split": 5, "min_samples_leaf": 2,
                    "max_features": "auto", "max_depth": None, "bootstrap": True}


@dataclass
class RunConfig:
    listings: str | None = None
    calendar: str | None = None
    out: str = "out"
    seed: int = DEFAULT_SEED
    schema: dict = field(default_factory=dict)
    price_upper_quantile: float = 0.95
    max_bedrooms: float = 4
    target_per_listing: int = 100
    downsample_order: str = "farthest_from_median"
    gate_threshold: float = 30.0
    gate_params: dict = field(default_factory=dict)
    gate_holdout_fraction: float = 0.2
    easy_only: bool = False
    search_space: dict = field(default_factory=dict)
    n_iter: int = 100
    folds: int = 10
    fold_mode: str = "row"
    window: int = 365
    nb_alpha: float = 1.0
    nb_holdout_fraction: float = 0.2
    heatmap_bins: int = 50
    bucket_thresholds: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 30.0])
    trees_curve_n_list: list = field(default_factory=lambda: [1, 10, 25, 50, 100, 150, 200])
    trees_curve_params: dict = field(default_factory=lambda: dict(REFERENCE_PARAMS))

    def __post_init__(self):
        if self.fold_mode not in FOLD_MODES:
            raise DomainError(f"fold_mode must be one of {FOLD_MODES}")
        if self.window not in (30, 60, 90, 365):
            raise DomainError("window must be one of 30, 60, 90, 365")
        if self.folds < 2:
            raise DomainError("folds must be >= 2")
        if self.n_iter < 1:
            raise DomainError("n_iter must be >= 1")
        # fail early on malformed nested settings
        self.balance_config()
        self.space()
        self.gate_hyperparams()
        self.curve_hyperparams()

    def outlier_rules(self) -> OutlierRules:
        return OutlierRules(self.price_upper_quantile, self.max_bedrooms)

    def balance_config(self) -> BalanceConfig:
        return BalanceConfig(self.target_per_listing, self.downsample_order)

    def space(self) -> SearchSpace:
        return SearchSpace.from_dict(self.search_space)

    def gate_hyperparams(self) -> HyperParams:
        return HyperParams(**self.gate_params)

    def curve_hyperparams(self) -> HyperParams:
        return HyperParams(**self.trees_curve_params)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        """Read a JSON config; non-None ``overrides`` win over file values."""
        data = {}
        if path is not None:
            p = Path(path)
            data = json.loads(p.read_text())
            base = p.parent
            for key in ("listings", "calendar"):
                if data.get(key) and not Path(data[key]).is_absolute():
                    data[key] = str(base / data[key])
        for k, v in (overrides or {}).items():
            if v is not None:
                data[k] = v
        return cls.from_dict(data)
