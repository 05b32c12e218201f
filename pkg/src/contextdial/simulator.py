"""Agenda-based user simulator: sampled goals, templated user turns, and
task-success judging.

Goal constraints are drawn from actual db records so every goal is
satisfiable.  The agenda is a stack of pending acts (constraints, then
requests, then booking info, per domain in order); up to two items pop per
turn after reacting to the latest system action.  Surface templates mark the
span of the slot mention, so the same realizer also produces annotated
training corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acts import DialogAct, span_label
from .db import DomainDb
from .schema import DomainSchema

MAX_TURNS_DEFAULT = 40
STRUCTURAL_FIELDS = ("choice", "ref", "none")

# inform surface forms; [..] marks the tagged span, {v} the value
INFORM_TEMPLATES: dict[tuple[str, str], list[str]] = {
    ("attraction", "type"): [
        "i prefer something related to [{v}]",
        "i am looking for a [{v}] type attraction",
        "are there any [{v}] places in town ?",
    ],
    ("attraction", "area"): [
        "i want an attraction in the [{v}] of town",
        "the attraction should be in the [{v}]",
    ],
    ("attraction", "name"): ["tell me about [{v}]"],
    ("attraction", "entrance fee"): ["the entrance fee should be [{v}]"],
    ("hotel", "pricerange"): [
        "how about a hotel in the [{v}] price range ?",
        "i want a [{v}] hotel",
        "i need a place to stay in the [{v}] price range",
    ],
    ("hotel", "type"): ["i am looking for a [{v}] to stay in"],
    ("hotel", "area"): [
        "i need a hotel in the [{v}] part of town",
        "the hotel should be in the [{v}]",
    ],
    ("hotel", "stars"): ["it should have [{v}] stars"],
    ("hotel", "name"): ["tell me about the [{v}]"],
    ("hotel", "people"): ["book it for [{v}] people"],
    ("hotel", "day"): ["we will arrive on [{v}]"],
    ("hotel", "stay"): ["we will stay for [{v}] nights"],
    ("restaurant", "food"): [
        "i want [{v}] food",
        "i am looking for a restaurant serving [{v}]",
    ],
    ("restaurant", "pricerange"): ["i want a restaurant in the [{v}] price range"],
    ("restaurant", "area"): ["the restaurant should be in the [{v}]"],
    ("restaurant", "name"): ["how about the restaurant [{v}] ?"],
    ("restaurant", "people"): ["a table for [{v}] people please"],
    ("restaurant", "day"): ["we will come on [{v}]"],
    ("restaurant", "time"): ["book a table at [{v}]"],
    ("train", "departure"): ["the train should depart from [{v}]"],
    ("train", "destination"): ["i am going to [{v}]"],
    ("train", "day"): ["i want to travel on [{v}]"],
    ("train", "leaveat"): ["the train should leave at [{v}]"],
    ("train", "arriveby"): ["i need to arrive by [{v}]"],
    ("train", "people"): ["book [{v}] tickets please"],
    ("taxi", "leaveat"): ["i need a taxi that will leave by [{v}]"],
    ("taxi", "destination"): ["the taxi should take me to [{v}]"],
    ("taxi", "departure"): ["pick me up at [{v}]"],
    ("taxi", "arriveby"): ["the taxi should arrive by [{v}]"],
    ("hospital", "department"): ["i need the [{v}] department"],
    ("police", "name"): ["i am looking for the [{v}]"],
}

# request surface forms are deliberately domain-ambiguous
REQUEST_TEMPLATES: dict[str, list[str]] = {
    "address": ["what is the [address] ?", "can i get the [address] please ?"],
    "postcode": ["what is the [postcode] ?", "can i have the [postcode] ?"],
    "phone": ["what is the [phone] number ?", "can i get the [phone] number please ?"],
    "entrance fee": ["what is the [entrance fee] ?", "how much is the [entrance fee] ?"],
    "pricerange": ["what is the [price] range ?"],
    "area": ["what [area] is it in ?"],
    "type": ["what [type] is it ?"],
    "stars": ["how many [stars] does it have ?"],
    "internet": ["does it have [internet] ?"],
    "parking": ["does it have [parking] ?"],
    "food": ["what kind of [food] do they serve ?"],
    "duration": ["how long is the [duration] of the trip ?"],
    "price": ["how much is the [price] of the ticket ?"],
    "trainid": ["what is the [train id] ?"],
    "leaveat": ["when does it [leave] ?"],
    "arriveby": ["when does it [arrive] ?"],
    "car": ["what [car] will pick me up ?"],
    "department": ["which [department] is it ?"],
    "open hours": ["what are the [open hours] ?"],
    "name": ["what is the [name] ?"],
    "day": ["which [day] is it for ?"],
}

CLOSING_UTTERANCE = "that 's all i need today . thanks ! bye !"

# constraint fields worth sampling per domain (values must appear verbatim)
SAMPLEABLE_CONSTRAINTS = {
    "attraction": ["type", "area"],
    "hotel": ["pricerange", "area", "stars"],
    "restaurant": ["food", "pricerange", "area"],
    "train": ["departure", "destination", "day"],
    "taxi": ["leaveat"],
    "hospital": ["department"],
    "police": [],
}
SAMPLEABLE_REQUESTS = {
    "attraction": ["address", "postcode", "phone", "entrance fee"],
    "hotel": ["address", "postcode", "phone"],
    "restaurant": ["address", "postcode", "phone"],
    "train": ["duration", "price", "trainid"],
    "taxi": ["car", "phone"],
    "hospital": ["phone", "postcode"],
    "police": ["address", "phone"],
}
BOOKING_DOMAINS = {"hotel", "restaurant", "train"}


@dataclass
class GoalDomain:
    constraints: dict[str, str] = field(default_factory=dict)
    requests: list[str] = field(default_factory=list)
    book: dict[str, str] = field(default_factory=dict)


@dataclass
class UserGoal:
    domains: list[str]
    parts: dict[str, GoalDomain]

    def to_dict(self) -> dict:
        return {"domains": self.domains,
                "parts": {d: {"constraints": p.constraints, "requests": p.requests,
                              "book": p.book} for d, p in self.parts.items()}}

    @staticmethod
    def from_dict(raw: dict) -> "UserGoal":
        return UserGoal(list(raw["domains"]),
                        {d: GoalDomain(dict(p["constraints"]), list(p["requests"]),
                                       dict(p["book"])) for d, p in raw["parts"].items()})


def sample_goal(schema: DomainSchema, db: DomainDb, rng: np.random.Generator,
                allowed: list[str] | None = None, max_domains: int = 3,
                booking: bool = True) -> UserGoal:
    """Draw 1-3 domains with record-backed constraints, so matches always exist."""
    pool = [d for d in (allowed or list(SAMPLEABLE_CONSTRAINTS))
            if db.tables.get(d) and SAMPLEABLE_REQUESTS.get(d)]
    n = int(rng.integers(1, min(max_domains, len(pool)) + 1))
    chosen = [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]
    parts = {}
    for domain in chosen:
        records = db.tables[domain]
        record = records[int(rng.integers(len(records)))]
        fields = [f for f in SAMPLEABLE_CONSTRAINTS[domain]
                  if record.get(f) and (domain, f) in INFORM_TEMPLATES]
        k = min(len(fields), int(rng.integers(1, 3))) if fields else 0
        picked = [fields[i] for i in rng.choice(len(fields), size=k, replace=False)] if k else []
        constraints = {f: record[f] for f in picked}
        matches = db.query(domain, list(constraints.items()))
        assert matches, f"sampled unsatisfiable goal for {domain}"
        avail = [f for f in SAMPLEABLE_REQUESTS[domain] if f in matches[0] or f in record]
        m = min(len(avail), int(rng.integers(1, 3)))
        requests = sorted(avail[i] for i in rng.choice(len(avail), size=m, replace=False))
        book = {}
        if booking and domain in BOOKING_DOMAINS and rng.random() < 0.5:
            values = {"people": str(int(rng.integers(1, 9))),
                      "day": ["monday", "tuesday", "wednesday", "thursday", "friday"][int(rng.integers(5))],
                      "stay": str(int(rng.integers(1, 6))),
                      "time": f"{int(rng.integers(9, 21)):02d}:{['00', '15', '30', '45'][int(rng.integers(4))]}"}
            book = {slot: values[slot] for slot in schema.domains[domain].book}
        parts[domain] = GoalDomain(constraints, requests, book)
    return UserGoal(chosen, parts)


# ---------------------------------------------------------------------------
# surface realization
# ---------------------------------------------------------------------------

def _fill_template(template: str, value: str | None) -> tuple[list[str], int | None, int | None]:
    text = template.replace("{v}", value) if value is not None else template
    pre, bracket, rest = text.partition("[")
    if not bracket:
        return text.split(), None, None
    inside, _, post = rest.partition("]")
    pre_words = pre.split()
    inside_words = inside.split()
    first = len(pre_words)
    return pre_words + inside_words + post.split(), first, first + len(inside_words) - 1


def realize_acts(acts: list[DialogAct], rng: np.random.Generator, schema: DomainSchema
                 ) -> tuple[str, list[tuple[str, int, int]]]:
    """Surface form plus word-level span annotations for every tagged slot."""
    if not acts:
        raise ValueError("realize_acts: no acts")
    words: list[str] = []
    spans: list[tuple[str, int, int]] = []
    has_bye = any(a.domain == "general" and a.intent == "bye" for a in acts)
    for act in acts:
        domain = act.domain.lower()
        fieldname = schema.to_field(act.slot) if act.slot != "none" else "none"
        if act.domain == "general":
            if act.intent == "bye":
                segment, first, last = CLOSING_UTTERANCE.split(), None, None
            elif act.intent == "thank":
                if has_bye:
                    continue  # the closing utterance covers the thanks
                segment, first, last = "thank you so much !".split(), None, None
            else:
                segment, first, last = "hello !".split(), None, None
        elif act.intent == "Request":
            options = REQUEST_TEMPLATES.get(fieldname, [f"what is the [{fieldname}] ?"])
            segment, first, last = _fill_template(options[int(rng.integers(len(options)))], None)
        else:
            options = INFORM_TEMPLATES.get((domain, fieldname))
            if options is None:
                segment, first, last = _fill_template(f"i want [{{v}}] {fieldname}", act.value)
            else:
                segment, first, last = _fill_template(options[int(rng.integers(len(options)))], act.value)
        offset = len(words)
        words.extend(segment)
        if first is not None:
            spans.append((span_label(act.domain_intent, act.slot), offset + first, offset + last))
    return " ".join(words), spans


def realize_user_utterance(acts: list[DialogAct], rng: np.random.Generator,
                           schema: DomainSchema) -> str:
    text, _ = realize_acts(acts, rng, schema)
    return text


# ---------------------------------------------------------------------------
# agenda
# ---------------------------------------------------------------------------

@dataclass
class AgendaItem:
    kind: str       # "inform" | "request" | "book"
    domain: str
    field: str
    value: str = ""
    retries: int = 0


class UserSimulator:
    def __init__(self, schema: DomainSchema, db: DomainDb, goal: UserGoal,
                 rng: np.random.Generator, max_turns: int = MAX_TURNS_DEFAULT,
                 max_initiative: int = 2):
        self.schema = schema
        self.db = db
        self.goal = goal
        self.rng = rng
        self.max_turns = max_turns
        self.max_initiative = max_initiative
        self.turn_count = 0
        self.constraints = {d: dict(goal.parts[d].constraints) for d in goal.domains}
        self.relax_level: dict[tuple[str, str], int] = {}
        self.answered: dict[tuple[str, str], str] = {}
        self.booked: dict[str, str] = {}
        self.awaiting: list[AgendaItem] = []
        self.finished = False
        self.agenda: list[AgendaItem] = []
        for domain in reversed(goal.domains):
            part = goal.parts[domain]
            for slot in reversed(list(part.book)):
                self.agenda.append(AgendaItem("book", domain, slot, part.book[slot]))
            for req in reversed(part.requests):
                self.agenda.append(AgendaItem("request", domain, req))
            for f in reversed(list(part.constraints)):
                self.agenda.append(AgendaItem("inform", domain, f, part.constraints[f]))

    # -- reactions ----------------------------------------------------------

    def _react(self, system_action: dict[str, list[list[str]]]) -> None:
        informed: dict[tuple[str, str], str] = {}
        nooffer_domains: list[str] = []
        requested: list[tuple[str, str]] = []
        for di, pairs in system_action.items():
            domain, _, intent = di.partition("-")
            domain = domain.lower()
            for slot, value in pairs:
                fieldname = self.schema.to_field(slot)
                if intent in ("Inform", "Recommend", "Select", "Book"):
                    if fieldname == "ref":
                        self.booked[domain] = value
                    elif fieldname not in STRUCTURAL_FIELDS:
                        informed[(domain, fieldname)] = value
                elif intent == "NoOffer":
                    nooffer_domains.append(domain)
                elif intent == "Request":
                    requested.append((domain, fieldname))

        # answered requests leave the awaiting list; unanswered ones retry twice
        for item in self.awaiting:
            key = (item.domain, item.field)
            if key in informed:
                self.answered[key] = informed[key]
            elif item.retries < 2:
                item.retries += 1
                self.agenda.append(item)
        self.awaiting = []
        # proactive informs may answer requests still queued in the agenda
        for key, value in informed.items():
            if any(it.kind == "request" and (it.domain, it.field) == key for it in self.agenda):
                self.answered[key] = value
                self.agenda = [it for it in self.agenda
                               if not (it.kind == "request" and (it.domain, it.field) == key)]

        # booking confirmed: pending booking informs are moot
        for domain in self.booked:
            self.agenda = [it for it in self.agenda
                           if not (it.kind == "book" and it.domain == domain)]

        for domain in dict.fromkeys(nooffer_domains):
            self._relax(domain)

        for domain, fieldname in requested:
            value = self._goal_value(domain, fieldname)
            if value:
                self.agenda.append(AgendaItem("book", domain, fieldname, value))

    def _goal_value(self, domain: str, fieldname: str) -> str:
        part = self.goal.parts.get(domain)
        if part is None:
            return ""
        return part.book.get(fieldname) or self.constraints.get(domain, {}).get(fieldname, "")

    def _relax(self, domain: str) -> None:
        """Alternative value first, then dontcare, for the last active constraint."""
        current = self.constraints.get(domain, {})
        active = [f for f, v in current.items() if v and v != "dontcare"]
        if not active:
            return
        fieldname = active[-1]
        level = self.relax_level.get((domain, fieldname), 0)
        new_value = "dontcare"
        if level == 0:
            others = [(f, v) for f, v in current.items() if f != fieldname]
            pool = sorted({rec.get(fieldname, "") for rec in self.db.query(domain, others)}
                          - {"", current[fieldname]})
            if pool:
                new_value = pool[int(self.rng.integers(len(pool)))]
        self.relax_level[(domain, fieldname)] = level + 1
        current[fieldname] = new_value
        self.agenda.append(AgendaItem("inform", domain, fieldname, new_value))

    def _unconfirmed_bookings(self) -> list[str]:
        return [d for d in self.goal.domains
                if self.goal.parts[d].book and d not in self.booked]

    # -- main step ----------------------------------------------------------

    def step(self, system_action: dict[str, list[list[str]]]) -> tuple[list[DialogAct], bool]:
        self.turn_count += 1
        self._react(system_action or {})
        if self.turn_count >= self.max_turns:
            self.finished = True
            return [DialogAct("general", "bye", "none", "none")], True

        if not self.agenda and not self.awaiting:
            retry = self._unconfirmed_bookings()
            retried = False
            for domain in retry:
                part = self.goal.parts[domain]
                level = self.relax_level.get((domain, "__book__"), 0)
                if level < 2:
                    self.relax_level[(domain, "__book__")] = level + 1
                    for slot in reversed(list(part.book)):
                        self.agenda.append(AgendaItem("book", domain, slot, part.book[slot]))
                    retried = True
            if not retried:
                self.finished = True
                return [DialogAct("general", "thank", "none", "none"),
                        DialogAct("general", "bye", "none", "none")], True

        acts: list[DialogAct] = []
        while self.agenda and len(acts) < self.max_initiative:
            item = self.agenda.pop()
            act_slot = self.schema.to_act_slot(item.field)
            domain_act = item.domain.capitalize()
            if item.kind == "request":
                acts.append(DialogAct(domain_act, "Request", act_slot, "?"))
                self.awaiting.append(item)
            else:
                if item.kind == "inform":
                    self.constraints.setdefault(item.domain, {})[item.field] = item.value
                acts.append(DialogAct(domain_act, "Inform", act_slot, item.value))
        if not acts:
            acts = [DialogAct("general", "thank", "none", "none")]
        return acts, False


def judge_success(goal: UserGoal, final_constraints: dict[str, dict[str, str]],
                  system_actions: list[dict[str, list[list[str]]]],
                  db: DomainDb, schema: DomainSchema) -> bool:
    """Success iff every requested slot got a value consistent with an entity
    matching the final constraints, and every needed booking got a reference."""
    informed: dict[tuple[str, str], set[str]] = {}
    refs: dict[str, set[str]] = {}
    for action in system_actions:
        for di, pairs in action.items():
            domain, _, intent = di.partition("-")
            domain = domain.lower()
            if intent not in ("Inform", "Recommend", "Select", "Book"):
                continue
            for slot, value in pairs:
                fieldname = schema.to_field(slot)
                if fieldname == "ref":
                    refs.setdefault(domain, set()).add(value)
                else:
                    informed.setdefault((domain, fieldname), set()).add(str(value).lower())
    for domain in goal.domains:
        part = goal.parts[domain]
        constraints = list(final_constraints.get(domain, part.constraints).items())
        matches = db.query(domain, constraints)
        for fieldname in part.requests:
            got = informed.get((domain, fieldname), set())
            acceptable = {str(rec.get(fieldname, "")).lower() for rec in matches}
            if not (got & acceptable):
                return False
        if part.book and domain not in refs:
            return False
    return True
