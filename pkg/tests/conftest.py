"""Shared oracles and fixtures.

The oracles here are deliberately naive: exhaustive enumeration and
straight-line loops that share no code with the package.
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from proxycal.model import HourlySeries


def ecdf_sweep_dint(a, b) -> int:
    """max |F_a - F_b| * n1 * n2, evaluated at every pooled value by counting."""
    n1, n2 = len(a), len(b)
    best = 0
    for v in set(a) | set(b):
        ca = sum(1 for x in a if x <= v)
        cb = sum(1 for x in b if x <= v)
        best = max(best, abs(ca * n2 - cb * n1))
    return best


def permutation_pvalue(a, b) -> float:
    """Fraction of all relabelings of the pooled sample with D >= observed."""
    pooled = list(a) + list(b)
    n1 = len(a)
    observed = ecdf_sweep_dint(a, b)
    hits = total = 0
    idx = range(len(pooled))
    for chosen in itertools.combinations(idx, n1):
        s = set(chosen)
        aa = [pooled[i] for i in idx if i in s]
        bb = [pooled[i] for i in idx if i not in s]
        total += 1
        hits += ecdf_sweep_dint(aa, bb) >= observed
    return hits / total


def brute_force_spans(alarm, hours, steps, stride):
    """Failure spans by literally checking the trailing run at every evaluation."""
    spans, open_at = [], None
    for i in range(len(alarm)):
        failing = i + 1 >= steps and all(alarm[i - steps + 1: i + 1])
        if failing and open_at is None:
            open_at = int(hours[i])
        if not failing and open_at is not None:
            spans.append((open_at, int(hours[i])))
            open_at = None
    if open_at is not None:
        spans.append((open_at, int(hours[-1]) + stride))
    return spans


def make_series(site_id, values, start=0, wind_speed=None, wind_dir=None):
    values = np.asarray(values, dtype=np.float64)
    hours = start + np.arange(len(values), dtype=np.int64)
    return HourlySeries(site_id, hours, values, wind_speed, wind_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
