"""Dialog acts: the (domain, intent, slot, value) quadruples every module exchanges."""

from __future__ import annotations

from dataclasses import dataclass

GENERAL_DOMAIN = "general"
REQUEST_VALUE = "?"
NONE = "none"


@dataclass(frozen=True)
class DialogAct:
    domain: str
    intent: str
    slot: str
    value: str

    @property
    def domain_intent(self) -> str:
        return f"{self.domain}-{self.intent}"

    @staticmethod
    def from_domain_intent(di: str, slot: str, value: str) -> "DialogAct":
        domain, _, intent = di.partition("-")
        return DialogAct(domain, intent, slot, value)


def acts_to_map(acts: list[DialogAct]) -> dict[str, list[list[str]]]:
    """Group acts into the {domain-intent: [[slot, value], ...]} wire shape."""
    out: dict[str, list[list[str]]] = {}
    for act in acts:
        out.setdefault(act.domain_intent, []).append([act.slot, act.value])
    return out


def map_to_acts(action: dict[str, list[list[str]]]) -> list[DialogAct]:
    acts = []
    for di, pairs in action.items():
        for slot, value in pairs:
            acts.append(DialogAct.from_domain_intent(di, slot, value))
    return acts


def span_label(domain_intent: str, slot: str) -> str:
    return f"{domain_intent}+{slot}"


def split_span_label(label: str) -> tuple[str, str]:
    di, _, slot = label.partition("+")
    return di, slot or NONE
