"""Domain schema: slot inventories, act-name/db-field mapping, display names."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

DOMAINS = ["hotel", "restaurant", "police", "taxi", "attraction", "hospital", "train"]


@dataclass
class DomainInfo:
    name: str
    semi: list[str]
    book: list[str]
    requestable: list[str]
    key: str
    numeric: list[str]


class DomainSchema:
    def __init__(self, raw: dict):
        self.domains: dict[str, DomainInfo] = {}
        for name, d in raw["domains"].items():
            self.domains[name] = DomainInfo(
                name=name, semi=list(d["semi"]), book=list(d["book"]),
                requestable=list(d["requestable"]), key=d["key"],
                numeric=list(d.get("numeric", [])))
        if not self.domains:
            raise ValueError("schema defines no domains")
        missing = [d for d in DOMAINS if d not in self.domains]
        if missing:
            raise ValueError(f"schema is missing domains: {missing}")
        self.slot_names: dict[str, str] = dict(raw["slot_names"])
        self.field_names: dict[str, str] = {v: k for k, v in self.slot_names.items()}
        self.display_names: dict[str, str] = dict(raw.get("display_names", {}))

    def to_field(self, act_slot: str) -> str:
        """Act-style slot name ("Addr") to db field name ("address")."""
        return self.slot_names.get(act_slot, act_slot.lower())

    def to_act_slot(self, field: str) -> str:
        return self.field_names.get(field, field.capitalize())

    def display(self, field: str) -> str:
        return self.display_names.get(field, field)

    @staticmethod
    def load(path=None) -> "DomainSchema":
        if path is None:
            text = resources.files("contextdial.data").joinpath("schema.json").read_text()
        else:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        return DomainSchema(json.loads(text))
