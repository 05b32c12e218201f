"""Rule-based dialogue state tracking.

States are treated as immutable values: every tracker operation deep-copies
its input and returns a new state, so replays and comparisons are safe.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

from .acts import DialogAct, GENERAL_DOMAIN, acts_to_map
from .schema import DomainSchema

log = logging.getLogger(__name__)

ANSWER_INTENTS = {"Inform", "Recommend", "Book", "Select"}


@dataclass
class DialogState:
    user_action: dict[str, list[list[str]]] = field(default_factory=dict)
    belief_state: dict[str, dict] = field(default_factory=dict)
    request_state: dict[str, dict[str, str]] = field(default_factory=dict)
    history: list[list[str]] = field(default_factory=list)

    def copy(self) -> "DialogState":
        return DialogState(
            user_action=copy.deepcopy(self.user_action),
            belief_state=copy.deepcopy(self.belief_state),
            request_state=copy.deepcopy(self.request_state),
            history=copy.deepcopy(self.history),
        )

    def semi(self, domain: str) -> dict[str, str]:
        return self.belief_state[domain]["semi"]

    def book(self, domain: str) -> dict[str, str]:
        return self.belief_state[domain]["book"]


def init_state(schema: DomainSchema) -> DialogState:
    belief = {}
    for name, info in schema.domains.items():
        belief[name] = {
            "semi": {slot: "" for slot in info.semi},
            "book": {"booked": [], **{slot: "" for slot in info.book}},
        }
    return DialogState(belief_state=belief)


def update(prev: DialogState, user_acts: list[DialogAct], user_utterance: str,
           schema: DomainSchema) -> DialogState:
    """Record one user turn: informs write belief slots, requests accumulate,
    user_action is replaced, utterance appended to history."""
    state = prev.copy()
    state.user_action = acts_to_map(user_acts)
    for act in user_acts:
        domain = act.domain.lower()
        if domain == GENERAL_DOMAIN:
            continue
        if domain not in state.belief_state:
            log.warning("dropping act for unknown domain %r: %s", domain, act)
            continue
        field_name = schema.to_field(act.slot)
        if act.intent == "Request":
            state.request_state.setdefault(domain, {})[field_name] = "?"
        elif act.intent == "Inform":
            if act.slot == "none":
                continue
            value = act.value.strip().lower()
            slots = state.belief_state[domain]
            if field_name in slots["book"]:
                slots["book"][field_name] = value
            elif field_name in slots["semi"]:
                slots["semi"][field_name] = value
            else:
                log.warning("dropping inform for unknown slot %r in domain %r", field_name, domain)
    state.history.append(["user", user_utterance])
    return state


def fulfilled_requests(state: DialogState, system_action: dict[str, list[list[str]]],
                       schema: DomainSchema) -> DialogState:
    """Drain request_state entries answered by the system action."""
    out = state.copy()
    for di, pairs in system_action.items():
        domain, _, intent = di.partition("-")
        domain = domain.lower()
        if intent not in ANSWER_INTENTS or domain not in out.request_state:
            continue
        for slot, _value in pairs:
            field_name = schema.to_field(slot)
            out.request_state[domain].pop(field_name, None)
        if not out.request_state[domain]:
            del out.request_state[domain]
    return out


def record_booking(state: DialogState, domain: str, reference: str, name: str = "") -> DialogState:
    out = state.copy()
    entry = {"reference": reference}
    if name:
        entry["name"] = name
    out.belief_state[domain]["book"]["booked"].append(entry)
    return out


def append_system_turn(state: DialogState, utterance: str) -> DialogState:
    out = state.copy()
    out.history.append(["sys", utterance])
    return out
