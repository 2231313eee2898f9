"""Canonical report serialization: JSON with sorted keys, CSV sidecars.

Fractions are rendered as 'p/q' strings so exact values survive the
round trip; identical inputs therefore produce byte-identical reports.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from fractions import Fraction
from typing import Any

import numpy as np

from .core import InputDistribution, PartialFn, Subcube
from .dtree import Leaf, Node, tree_to_json


def to_jsonable(obj: Any) -> Any:
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.bool_, np.integer)):
        return obj.item()
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (Leaf, Node)):
        return tree_to_json(obj)
    if isinstance(obj, Subcube):
        return obj.to_string()
    if isinstance(obj, (PartialFn, InputDistribution)):
        return obj.to_json()
    if isinstance(obj, dict):
        return {_key(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [to_jsonable(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    if dataclasses.is_dataclass(obj):
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if not f.name.startswith("_")
        }
    raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def _key(k: Any) -> str:
    if isinstance(k, Subcube):
        return k.to_string()
    if isinstance(k, (tuple, frozenset)):
        return repr(sorted(k) if isinstance(k, frozenset) else list(k))
    return str(k)


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_report(path: str, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([to_jsonable(v) for v in row])
