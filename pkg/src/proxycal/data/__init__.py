"""Reference fixtures: the nine-site land-use table and published proxy choices."""
from __future__ import annotations

import csv
from importlib import resources

from ..model import ProxyAssignment

_METHOD_COLUMNS = {"nearest_geo": "nearest", "knn_landuse": "knn", "min_kl": "d_kl"}


def sites_path():
    return resources.files(__name__) / "table1_sites.csv"


def load_sites():
    from ..io import read_sites

    with resources.as_file(sites_path()) as p:
        return read_sites(p)


def published_assignments(method: str) -> list[ProxyAssignment]:
    """Published proxy choices for one method, with NaN scores."""
    column = _METHOD_COLUMNS[method]
    with resources.files(__name__).joinpath("table2_proxies.csv").open(newline="") as fh:
        return [ProxyAssignment(r["site_id"], r[column], method, float("nan"))
                for r in csv.DictReader(fh)]
