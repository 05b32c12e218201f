"""Template NLG: realize a system action, preferring templates that cover
several (domain-intent, slot) pairs in one sentence.

Templates are mined from (action, utterance) pairs by replacing every slot
value with a ``{Domain-Intent.Slot}`` placeholder (longest value first so
substrings never collide).  A floor of single-slot templates built from the
schema guarantees every pair is realizable; a generic fallback covers the
rest and is counted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .schema import DomainSchema

PLACEHOLDER = re.compile(r"\{([^{}]+)\}")
STRUCTURAL_VALUES = ("", "?", "none")
REQMORE_UTTERANCE = "is there anything else i can help you with ?"


class TemplateError(ValueError):
    """A placeholder has no value to fill it."""


@dataclass
class Template:
    signature: frozenset[tuple[str, str]]
    text: str
    source_count: int = 0


def placeholder_key(di: str, slot: str) -> str:
    return f"{di}.{slot}"


def fill_slots(template_text: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"no value for placeholder {{{key}}}")
        return values[key]

    return PLACEHOLDER.sub(sub, template_text)


def _default_single(schema: DomainSchema, di: str, slot: str) -> str | None:
    """Schema-derived single-slot template text, or None if di is unknown."""
    domain, _, intent = di.partition("-")
    domain_l = domain.lower()
    ph = "{" + placeholder_key(di, slot) + "}"
    if domain_l == "general":
        return {
            "welcome": "you are welcome .",
            "greet": "hello , how can i help you ?",
            "bye": "good bye .",
            "reqmore": REQMORE_UTTERANCE,
            "thank": "thank you , good bye .",
        }.get(intent.lower())
    if domain_l not in schema.domains:
        return None
    field_name = schema.to_field(slot)
    display = schema.display(field_name)
    if intent == "Inform":
        if slot == "Choice":
            return f"we have {ph} of those ."
        return f"the {domain_l} {display} is {ph} ."
    if intent == "Recommend":
        return f"i would recommend {ph} ."
    if intent == "Select":
        return f"how about {ph} ?"
    if intent == "NoOffer":
        if slot == "none":
            return f"i am sorry , i could not find a matching {domain_l} ."
        return f"i am sorry , there is no {domain_l} with {display} {ph} ."
    if intent == "Request":
        return f"what {display} would you like ?"
    if intent == "Book":
        if slot == "Ref":
            return f"booking was successful . your reference number is {ph} ."
        return f"i have booked the {domain_l} for you ."
    return None


class TemplateStore:
    """Signature-indexed templates: mined entries plus a schema floor."""

    def __init__(self, schema: DomainSchema):
        self.schema = schema
        self.index: dict[frozenset[tuple[str, str]], Template] = {}
        self.skipped_pairs = 0
        self.fallbacks = 0

    def add(self, template: Template) -> None:
        existing = self.index.get(template.signature)
        if existing is None or (template.source_count, -len(template.text), template.text) > (
                existing.source_count, -len(existing.text), existing.text):
            self.index[template.signature] = template

    def lookup_single(self, di: str, slot: str) -> Template | None:
        sig = frozenset({(di, slot)})
        hit = self.index.get(sig)
        if hit is not None:
            return hit
        text = _default_single(self.schema, di, slot)
        if text is None:
            return None
        return Template(sig, text, 0)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for sig in sorted(self.index, key=lambda s: sorted(s)):
                t = self.index[sig]
                sig_txt = "|".join(f"{di}.{slot}" for di, slot in sorted(sig))
                fh.write(f"{sig_txt}\t{t.source_count}\t{t.text}\n")

    @staticmethod
    def load(path, schema: DomainSchema) -> "TemplateStore":
        store = TemplateStore(schema)
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                sig_txt, count, text = line.split("\t", 2)
                sig = frozenset(tuple(part.rsplit(".", 1)) for part in sig_txt.split("|"))
                store.add(Template(sig, text, int(count)))
        return store


def mine_templates(corpus: list[tuple[dict[str, list[list[str]]], str]],
                   schema: DomainSchema) -> TemplateStore:
    """Delexicalize each (action, utterance) pair whose values all appear
    verbatim; non-matching pairs are skipped and counted."""
    store = TemplateStore(schema)
    counts: dict[tuple[frozenset, str], int] = {}
    for action, utterance in corpus:
        text = " ".join(utterance.lower().split())
        triples = [(di, slot, value.lower()) for di, pairs in action.items()
                   for slot, value in pairs if value.lower() not in STRUCTURAL_VALUES]
        if not triples:
            continue
        ok = True
        for di, slot, value in sorted(triples, key=lambda t: -len(t[2])):
            if value not in text:
                ok = False
                break
            text = text.replace(value, "{" + placeholder_key(di, slot) + "}", 1)
        if not ok:
            store.skipped_pairs += 1
            continue
        sig = frozenset((di, slot) for di, slot, _ in triples)
        counts[(sig, text)] = counts.get((sig, text), 0) + 1
    for (sig, text), n in sorted(counts.items(), key=lambda kv: (sorted(kv[0][0]), kv[0][1])):
        store.add(Template(sig, text, n))
    return store


def generate(action: dict[str, list[list[str]]], store: TemplateStore) -> str:
    text, _ = generate_with_detail(action, store)
    return text


def generate_with_detail(action: dict[str, list[list[str]]],
                         store: TemplateStore) -> tuple[str, list[str]]:
    """Returns the utterance and the list of fragment texts used to build it."""
    pairs: list[tuple[str, str, str]] = [(di, slot, value)
                                         for di, pairs in action.items()
                                         for slot, value in pairs]
    if not pairs:
        return REQMORE_UTTERANCE, [REQMORE_UTTERANCE]
    fragments: list[str] = []
    remaining = list(pairs)

    def values_for(sig: frozenset[tuple[str, str]]) -> dict[str, str]:
        out = {}
        for di, slot in sig:
            for rdi, rslot, rvalue in remaining:
                if (rdi, rslot) == (di, slot):
                    out[placeholder_key(di, slot)] = rvalue
                    break
        return out

    # greedy cover with the largest exactly-matching mined signatures
    while True:
        available = {(di, slot) for di, slot, _ in remaining}
        candidates = [sig for sig in store.index
                      if len(sig) > 1 and sig <= available]
        if not candidates:
            break
        best = max(candidates, key=lambda s: (len(s), sorted(s)))
        fragments.append(fill_slots(store.index[best].text, values_for(best)))
        for di, slot in sorted(best):
            for i, (rdi, rslot, _) in enumerate(remaining):
                if (rdi, rslot) == (di, slot):
                    del remaining[i]
                    break

    for di, slot, value in remaining:
        template = store.lookup_single(di, slot)
        if template is not None:
            fragments.append(fill_slots(template.text, {placeholder_key(di, slot): value}))
        else:
            store.fallbacks += 1
            if value in STRUCTURAL_VALUES:
                fragments.append(f"could you tell me the {slot.lower()} ?")
            else:
                fragments.append(f"the {slot.lower()} is {value} .")
    return " ".join(fragments), fragments
