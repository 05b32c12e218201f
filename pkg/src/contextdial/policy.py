"""Rule policy: map the tracked state to a system action.

Each (domain, intent, slot) triple of the current user turn is dispatched to
a request / inform / general sub-policy after a db query, and the partial
actions are merged.  Inform behavior is driven by an ordered rule table
loaded from config so refinements are data, not code.  The policy pins the
first matching entity per domain for the session (kept in a caller-owned
memo) so follow-up requests are answered about the recommended entity.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .db import BookingRefusal, DomainDb
from .schema import DOMAINS, DomainSchema

UNKNOWN_VALUE = "unknown"


def load_rule_table(path=None) -> dict:
    if path is None:
        text = resources.files("contextdial.data").joinpath("rule_table.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)


def new_memo() -> dict:
    return {"pinned": {}, "booked": {}}


def merge_rule(partials: list[tuple[str, list[list[str]]]],
               max_slots: int = 5) -> dict[str, list[list[str]]]:
    """Group partial actions by domain-intent, drop exact duplicate triples,
    keep first-seen order, cap slot lists."""
    merged: dict[str, list[list[str]]] = {}
    seen: set[tuple[str, str, str]] = set()
    for di, pairs in partials:
        for slot, value in pairs:
            key = (di, slot, value)
            if key in seen:
                continue
            seen.add(key)
            bucket = merged.setdefault(di, [])
            if len(bucket) < max_slots:
                bucket.append([slot, value])
    return merged


class RulePolicy:
    def __init__(self, db: DomainDb, schema: DomainSchema | None = None,
                 rule_table: dict | None = None):
        self.db = db
        self.schema = schema or db.schema
        self.rules = rule_table or load_rule_table()

    # -- entity selection ---------------------------------------------------

    def _constraints(self, state, domain: str) -> list[tuple[str, str]]:
        return [(slot, value) for slot, value in state.semi(domain).items() if value]

    def _select(self, state, domain: str, memo: dict):
        """Current matches plus the pinned entity (re-pinned when constraints change)."""
        constraints = self._constraints(state, domain)
        matches = self.db.query(domain, constraints)
        sig = tuple(sorted(constraints))
        pin = memo["pinned"].get(domain)
        if pin is not None and pin["sig"] == sig:
            entity = pin["record"]
        else:
            entity = matches[0] if matches else None
            if entity is not None:
                memo["pinned"][domain] = {"sig": sig, "record": entity}
            else:
                memo["pinned"].pop(domain, None)
        return entity, matches, constraints

    def _act_domain(self, domain: str) -> str:
        return domain.capitalize()

    def _violated_pairs(self, constraints: list[tuple[str, str]]) -> list[list[str]]:
        if not constraints:
            return [["none", "none"]]
        return [[self.schema.to_act_slot(f), v] for f, v in constraints]

    # -- sub-policies -------------------------------------------------------

    def request_policy(self, state, domain: str, slot: str, memo: dict
                       ) -> list[tuple[str, list[list[str]]]]:
        """Answer a requested slot from the selected entity, or NoOffer."""
        entity, matches, constraints = self._select(state, domain, memo)
        act_domain = self._act_domain(domain)
        if entity is None:
            return [(f"{act_domain}-NoOffer", self._violated_pairs(constraints))]
        field = self.schema.to_field(slot)
        value = entity.get(field, UNKNOWN_VALUE) or UNKNOWN_VALUE
        return [(f"{act_domain}-Inform", [[slot, value]])]

    def inform_policy(self, state, domain: str, slot: str, memo: dict,
                      rng: np.random.Generator) -> list[tuple[str, list[list[str]]]]:
        entity, matches, constraints = self._select(state, domain, memo)
        act_domain = self._act_domain(domain)
        cardinality = "none" if not matches else ("one" if len(matches) == 1 else "many")
        partials: list[tuple[str, list[list[str]]]] = []
        for rule in self.rules["inform_rules"]:
            match = rule.get("match", {})
            if "domain" in match and match["domain"] != domain:
                continue
            card = match.get("cardinality", "any")
            if card != "any" and card != cardinality:
                continue
            for action in rule["actions"]:
                pairs = []
                for spec in action["slots"]:
                    pairs.extend(self._expand_slot(spec, domain, entity, matches, constraints))
                if pairs:
                    partials.append((f"{act_domain}-{action['intent']}", pairs))
            break
        partials.extend(self._maybe_book(state, domain, entity, memo, rng))
        return partials

    def _expand_slot(self, spec: list[str], domain: str, entity, matches,
                     constraints) -> list[list[str]]:
        if spec[0] == "@entity":
            if entity is None:
                return []
            key = self.schema.domains[domain].key
            return [[self.schema.to_act_slot(key), entity.get(key, UNKNOWN_VALUE)]]
        if spec[0] == "@violated":
            return self._violated_pairs(constraints)
        slot, source = spec
        if source == "@count":
            return [[slot, str(len(matches))]]
        if source.startswith("@entity."):
            if entity is None:
                return []
            return [[slot, entity.get(source[len("@entity."):], UNKNOWN_VALUE)]]
        return [[slot, source]]

    def _maybe_book(self, state, domain: str, entity, memo: dict,
                    rng: np.random.Generator) -> list[tuple[str, list[list[str]]]]:
        required = self.schema.domains[domain].book
        if not required or entity is None or domain in memo["booked"]:
            return []
        result = self.db.make_booking(domain, state.book(domain), rng)
        if isinstance(result, BookingRefusal):
            return []
        memo["booked"][domain] = result
        return [(f"{self._act_domain(domain)}-Book", [["Ref", result]])]

    def general_policy(self, domain: str, intent: str, slot: str
                       ) -> list[tuple[str, list[list[str]]]]:
        intent_l = intent.lower()
        if intent_l in ("greet", "hello"):
            return [("general-welcome", [["none", "none"]])]
        if intent_l in ("thank", "thankyou"):
            return [("general-welcome", [["none", "none"]])]
        if intent_l == "bye":
            return [("general-bye", [["none", "none"]])]
        return [("general-reqmore", [["none", "none"]])]

    # -- main entry ---------------------------------------------------------

    def decide(self, state, memo: dict | None = None,
               rng: np.random.Generator | None = None) -> dict[str, list[list[str]]]:
        if memo is None:
            memo = new_memo()
        if rng is None:
            rng = np.random.Generator(np.random.PCG64(0))
        triples = []
        for di, pairs in state.user_action.items():
            domain, _, intent = di.partition("-")
            for slot, value in pairs:
                triples.append((domain, intent, slot, value))
        if not triples:
            return {"general-reqmore": [["none", "none"]]}
        partials: list[tuple[str, list[list[str]]]] = []
        for domain_raw, intent, slot, value in triples:
            domain = domain_raw.lower()
            if intent == "Request" and domain in DOMAINS:
                partials.extend(self.request_policy(state, domain, slot, memo))
            elif intent == "Inform" and domain in DOMAINS:
                partials.extend(self.inform_policy(state, domain, slot, memo, rng))
            else:
                partials.extend(self.general_policy(domain_raw, intent, slot))
        merged = merge_rule(partials, self.rules.get("max_slots_per_intent", 5))
        if not merged:
            return {"general-reqmore": [["none", "none"]]}
        return merged
