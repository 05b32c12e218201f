"""Per-domain entity tables: constraint queries and bookings."""

from __future__ import annotations

import json
import os
import string
from dataclasses import dataclass

import numpy as np

from .schema import DOMAINS, DomainSchema


class DomainError(KeyError):
    """Query names a domain that is not loaded."""


@dataclass
class BookingRefusal:
    missing: list[str]


def _norm(value) -> str:
    return str(value).strip().lower()


def _as_number(value: str) -> float | None:
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


class DomainDb:
    """Read-only record store; taxi records are synthesized from the seed."""

    def __init__(self, schema: DomainSchema, tables: dict[str, list[dict]], seed: int = 0):
        self.schema = schema
        self.tables = tables
        self.rng = np.random.Generator(np.random.PCG64(seed))
        missing = [d for d in DOMAINS if d not in tables]
        if missing:
            raise FileNotFoundError(f"missing db tables for domains: {missing}")
        self._fields = {d: {k for rec in recs for k in rec} for d, recs in tables.items()}

    @staticmethod
    def load(db_dir, schema: DomainSchema | None = None, seed: int = 0) -> "DomainDb":
        schema = schema or DomainSchema.load()
        tables: dict[str, list[dict]] = {}
        for domain in DOMAINS:
            path = os.path.join(db_dir, f"{domain}_db.json")
            if not os.path.exists(path):
                raise FileNotFoundError(f"db file for domain {domain!r} not found at {path}")
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
            if not isinstance(raw, list):
                raise ValueError(f"{path}: expected an array of records")
            if domain == "taxi":
                tables[domain] = DomainDb._synthesize_taxis(raw[0] if raw else {}, seed)
            else:
                tables[domain] = [{_norm(k): _norm(v) for k, v in rec.items()} for rec in raw]
        return DomainDb(schema, tables, seed)

    @staticmethod
    def _synthesize_taxis(spec: dict, seed: int) -> list[dict]:
        colors = spec.get("colors", ["black"])
        types = spec.get("types", ["ford"])
        digits = int(spec.get("phone_digits", 11))
        rng = np.random.Generator(np.random.PCG64(seed ^ 0x7A71))
        records = []
        for color in colors:
            for car_type in types:
                phone = "".join(str(rng.integers(0, 10)) for _ in range(digits))
                records.append({"car": f"{color} {car_type}", "phone": phone})
        return records

    def domains(self) -> list[str]:
        return list(self.tables)

    def query(self, domain: str, constraints: list[tuple[str, str]]) -> list[dict]:
        """Records matching every constraint; "dontcare"/empty constraints and
        constraints on fields unknown to the domain are skipped."""
        if domain not in self.tables:
            raise DomainError(f"unknown domain {domain!r}")
        known = self._fields[domain]
        active = []
        for slot, value in constraints:
            v = _norm(value)
            if v in ("", "dontcare", "none", "not mentioned"):
                continue
            if slot not in known:
                continue
            active.append((slot, v))
        numeric = set(self.schema.domains[domain].numeric) if domain in self.schema.domains else set()
        out = []
        for rec in self.tables[domain]:
            ok = True
            for slot, v in active:
                rv = _norm(rec.get(slot, ""))
                if slot in numeric:
                    a, b = _as_number(rv), _as_number(v)
                    if a is not None and b is not None:
                        if a != b:
                            ok = False
                            break
                        continue
                if rv != v:
                    ok = False
                    break
            if ok:
                out.append(rec)
        return out

    def make_booking(self, domain: str, book_values: dict[str, str],
                     rng: np.random.Generator) -> str | BookingRefusal:
        """8-char uppercase reference when required book slots are filled."""
        required = self.schema.domains[domain].book if domain in self.schema.domains else []
        missing = [s for s in required if _norm(book_values.get(s, "")) in ("", "none")]
        if missing:
            return BookingRefusal(missing)
        alphabet = string.ascii_uppercase + string.digits
        return "".join(alphabet[rng.integers(0, len(alphabet))] for _ in range(8))
