"""Loading of the shipped data tables.

Every table lives in ``exprkit/data``.  Setting ``EXPRKIT_CONFIG_DIR`` to a
directory makes any file of the same name there take precedence, so tables
can be extended without touching code.
"""

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, List, Tuple

CONFIG_ENV_VAR = "EXPRKIT_CONFIG_DIR"


def read_data_text(name: str) -> str:
    override = os.environ.get(CONFIG_ENV_VAR)
    if override:
        path = Path(override) / name
        if path.is_file():
            return path.read_text(encoding="utf-8")
    return resources.files("exprkit").joinpath("data", name).read_text(encoding="utf-8")


def _rows(name: str) -> List[List[str]]:
    rows = []
    for line in read_data_text(name).splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        rows.append(line.rstrip("\n").split("\t"))
    return rows


@dataclass(frozen=True)
class ArityEntry:
    name: str
    arity: int
    optional: bool = False


@lru_cache(maxsize=None)
def arity_table() -> Dict[str, ArityEntry]:
    table = {}
    for row in _rows("arity.tsv"):
        optional = len(row) > 2 and row[2] == "optional"
        table[row[0]] = ArityEntry(row[0], int(row[1]), optional)
    return table


@lru_cache(maxsize=None)
def synonym_table() -> Dict[str, str]:
    return {row[0]: row[1] for row in _rows("synonyms.tsv")}


@lru_cache(maxsize=None)
def spacing_commands() -> frozenset:
    return frozenset(row[0] for row in _rows("spacing.txt"))


@dataclass(frozen=True)
class EnvironmentEntry:
    name: str
    kind: str  # "multiline", "matrix" or "other"
    args: int


@lru_cache(maxsize=None)
def environment_table() -> Dict[str, EnvironmentEntry]:
    return {row[0]: EnvironmentEntry(row[0], row[1], int(row[2])) for row in _rows("environments.tsv")}


@lru_cache(maxsize=None)
def default_special_list() -> Tuple[str, ...]:
    return tuple(row[0] for row in _rows("specials.txt"))


@lru_cache(maxsize=None)
def defaults() -> dict:
    return json.loads(read_data_text("defaults.json"))


def clear_caches() -> None:
    """Forget loaded tables (after changing ``EXPRKIT_CONFIG_DIR``)."""
    for fn in (arity_table, synonym_table, spacing_commands, environment_table,
               default_special_list, defaults):
        fn.cache_clear()
