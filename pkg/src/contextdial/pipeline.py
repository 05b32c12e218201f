"""Full system composition: parse -> track -> decide -> drain -> generate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acts import DialogAct
from .db import DomainDb
from .embeddings import ContextualEmbeddingProvider
from .nlg import TemplateStore, generate
from .nlu.model import NluModel, NluOutput
from .policy import RulePolicy, new_memo
from .schema import DomainSchema
from .state import (DialogState, append_system_turn, fulfilled_requests, init_state,
                    record_booking, update)
from .text import BpeCodec


@dataclass
class NluBundle:
    model: NluModel
    codec: BpeCodec
    provider: ContextualEmbeddingProvider


def load_nlu_bundle(checkpoint_path, codec_path, store_path=None) -> NluBundle:
    model = NluModel.load(checkpoint_path)
    codec = BpeCodec.load(codec_path)
    provider = ContextualEmbeddingProvider(model.config.d_ctx, store_path)
    return NluBundle(model, codec, provider)


@dataclass
class SessionContext:
    state: DialogState
    memo: dict
    rng: np.random.Generator
    closed: bool = False
    transcript: list[dict] = field(default_factory=list)


@dataclass
class SystemResponse:
    action: dict[str, list[list[str]]]
    utterance: str
    user_acts: list[DialogAct]
    nlu_output: NluOutput | None = None


class DialogSystem:
    """One pipeline instance shared by the service, the CLI chat and evaluation."""

    def __init__(self, schema: DomainSchema, db: DomainDb, policy: RulePolicy | None = None,
                 templates: TemplateStore | None = None, nlu: NluBundle | None = None):
        self.schema = schema
        self.db = db
        self.policy = policy or RulePolicy(db, schema)
        self.templates = templates or TemplateStore(schema)
        self.nlu = nlu

    def new_session(self, seed: int = 0) -> SessionContext:
        return SessionContext(state=init_state(self.schema), memo=new_memo(),
                              rng=np.random.Generator(np.random.PCG64(seed)))

    def _advance(self, session: SessionContext, user_acts: list[DialogAct], utterance: str,
                 realize: bool, nlu_output: NluOutput | None = None) -> SystemResponse:
        state = update(session.state, user_acts, utterance, self.schema)
        action = self.policy.decide(state, session.memo, session.rng)
        state = fulfilled_requests(state, action, self.schema)
        for di, pairs in action.items():
            domain, _, intent = di.partition("-")
            if intent == "Book":
                for slot, value in pairs:
                    if slot == "Ref":
                        state = record_booking(state, domain.lower(), value)
        system_utterance = generate(action, self.templates) if realize else ""
        state = append_system_turn(state, system_utterance)
        session.state = state
        if "general-bye" in action:
            session.closed = True
        response = SystemResponse(action, system_utterance, user_acts, nlu_output)
        session.transcript.append({
            "user": utterance,
            "user_acts": {a.domain_intent: [a.slot, a.value] for a in user_acts},
            "action": action,
            "system": system_utterance,
        })
        return response

    def respond_to_acts(self, session: SessionContext, user_acts: list[DialogAct],
                        utterance: str = "", realize: bool = False) -> SystemResponse:
        """Oracle entry: dialog acts exchanged directly, no NLU/NLG."""
        return self._advance(session, user_acts, utterance, realize)

    def respond_to_text(self, session: SessionContext, text: str) -> SystemResponse:
        if self.nlu is None:
            raise RuntimeError("this system was built without an NLU bundle")
        history = [(speaker, utt) for speaker, utt in session.state.history]
        output = self.nlu.model.parse(text, history, self.nlu.codec, self.nlu.provider)
        return self._advance(session, output.acts, text, realize=True, nlu_output=output)
