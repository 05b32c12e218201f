"""Generated two-domain corpus for desk-scale NLU experiments.

Dialogues come from replaying the rule policy and template NLG against the
agenda simulator over attraction/hotel goals, so the training distribution
matches what the full pipeline sees at evaluation time.  User turns carry
gold acts and word-level spans; turns made of purely domain-ambiguous
requests ("what is the address ?") are flagged context_dependent - the
domain is only inferable from the dialogue history.
"""

from __future__ import annotations

import numpy as np

from .acts import acts_to_map
from .db import DomainDb
from .pipeline import DialogSystem
from .schema import DomainSchema
from .simulator import UserSimulator, realize_acts, sample_goal

TOY_DOMAINS = ["attraction", "hotel"]
AMBIGUOUS_FIELDS = {"address", "postcode", "phone"}


def generate_dialogues(n: int, seed: int, schema: DomainSchema, db: DomainDb,
                       domains: list[str] | None = None, max_turns: int = 16
                       ) -> list[list[dict]]:
    """Oracle-policy episodes recorded as annotated corpus dialogues."""
    domains = domains or TOY_DOMAINS
    system = DialogSystem(schema, db)
    dialogues = []
    children = np.random.SeedSequence(seed).spawn(n)
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        goal = sample_goal(schema, db, rng, allowed=domains, max_domains=2, booking=False)
        sim = UserSimulator(schema, db, goal, rng, max_turns=max_turns)
        session = system.new_session(seed=int(rng.integers(2 ** 31)))
        turns: list[dict] = []
        sys_action: dict = {}
        done = False
        while not done and len(turns) < 2 * max_turns:
            user_acts, done = sim.step(sys_action)
            text, spans = realize_acts(user_acts, rng, schema)
            fields = {schema.to_field(a.slot) for a in user_acts}
            ambiguous = (all(a.intent == "Request" for a in user_acts)
                         and fields <= AMBIGUOUS_FIELDS)
            turns.append({
                "speaker": "user",
                "text": text,
                "acts": acts_to_map(user_acts),
                "spans": [list(s) for s in spans],
                "meta": {"context_dependent": ambiguous},
            })
            response = system.respond_to_acts(session, user_acts, text, realize=True)
            sys_action = response.action
            turns.append({"speaker": "sys", "text": response.utterance,
                          "acts": response.action})
        dialogues.append(turns)
    return dialogues
