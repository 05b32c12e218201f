"""Seeded episode runner and the seven automatic metrics, plus component-level
NLU scoring (intent / tag / overall precision, recall, F1)."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .db import DomainDb
from .schema import DomainSchema
from .simulator import (STRUCTURAL_FIELDS, UserGoal, UserSimulator, judge_success,
                        realize_acts, sample_goal)

log = logging.getLogger(__name__)


@dataclass
class TurnRecord:
    user_utterance: str
    user_acts: dict[str, list[list[str]]]
    predicted_acts: dict[str, list[list[str]]] | None
    system_action: dict[str, list[list[str]]]
    system_utterance: str
    state_hash: str


@dataclass
class DialogueLog:
    goal: dict
    final_constraints: dict[str, dict[str, str]]
    turns: list[TurnRecord] = field(default_factory=list)
    success: bool = False
    booked_domains: list[str] = field(default_factory=list)
    required_booking: list[str] = field(default_factory=list)
    error: str = ""

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class MetricsReport:
    success_rate: float
    average_return: float
    average_turns: float
    precision: float
    recall: float
    f1: float
    book_rate: float
    episodes: int
    seed: int
    no_booking_required: bool = False
    return_convention: str = "success +2L / failure -L, minus one per turn, L=40"

    def as_dict(self) -> dict:
        return asdict(self)


def _state_hash(state) -> str:
    payload = json.dumps({"belief": state.belief_state, "request": state.request_state},
                         sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


def run_episodes(system, n: int, seed: int, mode: str = "oracle",
                 max_turns: int = 40, goal_domains: list[str] | None = None,
                 booking: bool = True, schema: DomainSchema | None = None,
                 db: DomainDb | None = None, goals: list[UserGoal] | None = None
                 ) -> list[DialogueLog]:
    """Run ``n`` independent seeded episodes against ``system``.

    Per-episode rngs are spawned from the master seed, so results do not
    depend on execution order.  Episode exceptions become failed logs.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 episodes, got {n}")
    if mode not in ("oracle", "full"):
        raise ValueError(f"mode must be oracle or full, got {mode!r}")
    schema = schema or system.schema
    db = db or system.db
    logs: list[DialogueLog] = []
    children = np.random.SeedSequence(seed).spawn(n)
    for i in range(n):
        rng = np.random.Generator(np.random.PCG64(children[i]))
        goal = goals[i] if goals is not None else sample_goal(
            schema, db, rng, allowed=goal_domains, booking=booking)
        dlog = DialogueLog(goal=goal.to_dict(), final_constraints={})
        try:
            _run_one(system, schema, db, goal, rng, mode, max_turns, dlog)
        except Exception as exc:  # noqa: BLE001 - a broken episode must not kill the batch
            log.exception("episode %d failed", i)
            dlog.error = f"{type(exc).__name__}: {exc}"
            dlog.success = False
        logs.append(dlog)
    return logs


def _run_one(system, schema, db, goal: UserGoal, rng, mode: str, max_turns: int,
             dlog: DialogueLog) -> None:
    sim = UserSimulator(schema, db, goal, rng, max_turns=max_turns)
    session = system.new_session(seed=int(rng.integers(2 ** 31)))
    sys_action: dict = {}
    done = False
    while not done and len(dlog.turns) < max_turns:
        user_acts, done = sim.step(sys_action)
        utterance, _spans = realize_acts(user_acts, rng, schema)
        if mode == "oracle":
            response = system.respond_to_acts(session, user_acts, utterance)
            predicted = None
        else:
            response = system.respond_to_text(session, utterance)
            predicted = {a.domain_intent: [[a.slot, a.value]] for a in response.user_acts}
        sys_action = response.action
        dlog.turns.append(TurnRecord(
            user_utterance=utterance,
            user_acts={a.domain_intent: [[a.slot, a.value]] for a in user_acts},
            predicted_acts=predicted,
            system_action=sys_action,
            system_utterance=response.utterance,
            state_hash=_state_hash(session.state),
        ))
    dlog.final_constraints = {d: dict(v) for d, v in sim.constraints.items()}
    dlog.required_booking = sorted(d for d in goal.domains if goal.parts[d].book)
    dlog.booked_domains = sorted(sim.booked)
    dlog.success = judge_success(goal, dlog.final_constraints,
                                 [t.system_action for t in dlog.turns], db, schema)


def compute_return(dialogue: DialogueLog, max_turns: int = 40) -> float:
    """Episode return: +2L on success, -L on failure, minus one per turn."""
    bonus = 2 * max_turns if dialogue.success else -max_turns
    return float(bonus - dialogue.turn_count)


def _informed_triples(dialogue: DialogueLog, schema: DomainSchema,
                      goal_domains: set[str]) -> set[tuple[str, str, str]]:
    triples = set()
    for turn in dialogue.turns:
        for di, pairs in turn.system_action.items():
            domain, _, intent = di.partition("-")
            domain = domain.lower()
            if intent not in ("Inform", "Recommend", "Select", "Book") or domain not in goal_domains:
                continue
            for slot, value in pairs:
                fieldname = schema.to_field(slot)
                if fieldname in STRUCTURAL_FIELDS:
                    continue
                triples.add((domain, fieldname, str(value).lower()))
    return triples


def compute_metrics(logs: list[DialogueLog], schema: DomainSchema, db: DomainDb,
                    seed: int = 0, max_turns: int = 40) -> MetricsReport:
    """Aggregate metrics; precision/recall/F1 are micro-averaged over the
    (domain, slot) pairs each goal requested."""
    if not logs:
        raise ValueError("compute_metrics: no episodes")
    tp = fp = fn = 0
    booked = required = 0
    for dialogue in logs:
        goal = UserGoal.from_dict(dialogue.goal)
        goal_domains = set(goal.domains)
        informed = _informed_triples(dialogue, schema, goal_domains)
        acceptable: dict[tuple[str, str], set[str]] = {}
        for domain in goal.domains:
            constraints = list(dialogue.final_constraints.get(
                domain, goal.parts[domain].constraints).items())
            matches = db.query(domain, constraints)
            for fieldname in goal.parts[domain].requests:
                acceptable[(domain, fieldname)] = {
                    str(rec.get(fieldname, "")).lower() for rec in matches}
        answered: set[tuple[str, str]] = set()
        for domain, fieldname, value in informed:
            ok_values = acceptable.get((domain, fieldname))
            if ok_values is not None and value in ok_values:
                answered.add((domain, fieldname))
            else:
                fp += 1
        tp += len(answered)
        fn += len(acceptable) - len(answered)
        required += len(dialogue.required_booking)
        booked += len(set(dialogue.required_booking) & set(dialogue.booked_domains))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        success_rate=sum(d.success for d in logs) / len(logs),
        average_return=float(np.mean([compute_return(d, max_turns) for d in logs])),
        average_turns=float(np.mean([d.turn_count for d in logs])),
        precision=precision, recall=recall, f1=f1,
        book_rate=booked / required if required else 1.0,
        episodes=len(logs), seed=seed,
        no_booking_required=required == 0,
    )


# ---------------------------------------------------------------------------
# component-level NLU metrics
# ---------------------------------------------------------------------------

def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def nlu_component_metrics(model, codec, provider, examples) -> dict[str, float]:
    """Micro-averaged intent metrics over label sets, span-level tag metrics
    (exact label and boundary), and overall metrics over decoded acts."""
    from .text import biox_decode, tokenize  # local import to avoid cycles

    itp = ifp = ifn = 0
    ttp = tfp = tfn = 0
    otp = ofp = ofn = 0
    repairs = 0
    for ex in examples:
        output = model.parse(ex.utterance, ex.context, codec, provider, uu_key=ex.key or None)
        pred_labels = set(output.predicted_labels)
        gold_labels = set(ex.labels)
        itp += len(pred_labels & gold_labels)
        ifp += len(pred_labels - gold_labels)
        ifn += len(gold_labels - pred_labels)
        repairs += output.repairs

        gold_spans = {(label, first, last) for label, first, last in ex.spans}
        pred_spans = {(s.label, s.first_word, s.last_word) for s in output.spans}
        ttp += len(pred_spans & gold_spans)
        tfp += len(pred_spans - gold_spans)
        tfn += len(gold_spans - pred_spans)

        tok = tokenize(ex.utterance, codec)
        gold_acts = set()
        covered = set()
        for label, first, last in ex.spans:
            di, _, slot = label.partition("+")
            domain, _, intent = di.partition("-")
            value = "?" if intent == "Request" else " ".join(tok.words[first:last + 1])
            gold_acts.add((domain, intent, slot, value))
            covered.add(di)
        for label in gold_labels:
            if label not in covered:
                domain, _, intent = label.partition("-")
                gold_acts.add((domain, intent, "none", "none"))
        pred_acts = {(a.domain, a.intent, a.slot, a.value) for a in output.acts}
        otp += len(pred_acts & gold_acts)
        ofp += len(pred_acts - gold_acts)
        ofn += len(gold_acts - pred_acts)

    ip, ir, if1 = _prf(itp, ifp, ifn)
    tp_, tr, tf1 = _prf(ttp, tfp, tfn)
    op, orec, of1 = _prf(otp, ofp, ofn)
    return {
        "intent_precision": ip, "intent_recall": ir, "intent_f1": if1,
        "tag_precision": tp_, "tag_recall": tr, "tag_f1": tf1,
        "overall_precision": op, "overall_recall": orec, "overall_f1": of1,
        "repairs": float(repairs),
    }


def format_report(report: MetricsReport) -> str:
    rows = [
        ("episodes", f"{report.episodes}"),
        ("seed", f"{report.seed}"),
        ("success rate", f"{report.success_rate:.4f}"),
        ("average return", f"{report.average_return:.2f}"),
        ("average turns", f"{report.average_turns:.2f}"),
        ("precision", f"{report.precision:.4f}"),
        ("recall", f"{report.recall:.4f}"),
        ("f1", f"{report.f1:.4f}"),
        ("book rate", f"{report.book_rate:.4f}" + (" (no bookings required)"
                                                   if report.no_booking_required else "")),
    ]
    width = max(len(k) for k, _ in rows)
    lines = [f"# return convention: {report.return_convention}"]
    lines += [f"{k.ljust(width)}  {v}" for k, v in rows]
    return "\n".join(lines)


def save_logs(path, logs: list[DialogueLog]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dialogue in logs:
            fh.write(dialogue.to_json() + "\n")
