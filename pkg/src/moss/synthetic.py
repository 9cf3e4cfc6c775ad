"""Seeded generator of fully annotated toy dialogs.

Two task shapes: a restaurant-search style information request task (three
informable slots, four requestable slots, scripted ask-until-unique policy)
and a network-troubleshooting style task (symptom slots plus a diagnostic
step, twelve system acts of which four are solutions). A scripted user and
a scripted policy exchange turns, so every annotation is consistent by
construction; per-module annotation dropout then produces partially
supervised corpora.

Every system response realizes its acts through fixed templates, and the
realization is invertible: ``invert_response`` recovers the act sequence from
the surface form, which evaluation uses for instances that decode no acts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SEP_INF, SEP_REQ, Dialog, DialogTurn, Goal, ModuleMask
from .kb import KnowledgeBase


class GenerationError(RuntimeError):
    pass


@dataclass
class TaskSchema:
    """Slots, acts and surface templates for one toy task."""

    name: str
    informable: dict[str, list[str]]
    requestable: list[str]
    intents: list[str]
    acts: list[str]
    solution_acts: list[str]
    user_templates: dict[str, list[str]]
    sys_templates: dict[str, object]
    value_surfaces: dict[str, list[str]] = field(default_factory=dict)
    rare_values: dict[str, list[str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "informable": self.informable,
                "requestable": self.requestable, "intents": self.intents,
                "acts": self.acts, "solution_acts": self.solution_acts,
                "user_templates": self.user_templates,
                "sys_templates": self.sys_templates,
                "value_surfaces": self.value_surfaces,
                "rare_values": self.rare_values}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False,
                                         indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSchema":
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "TaskSchema":
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))


@dataclass
class GenConfig:
    n_dialogs: int
    seed: int = 0
    max_turns: int = 12
    annotation_dropout: dict[str, float] = field(default_factory=dict)
    per_turn_dropout: bool = False
    task: str = "simple"

    def __post_init__(self):
        if self.n_dialogs < 1:
            raise GenerationError("n_dialogs must be >= 1")
        for module, p in self.annotation_dropout.items():
            if not 0.0 <= p <= 1.0:
                raise GenerationError(f"dropout for {module} outside [0, 1]")


# ---------------------------------------------------------------------------
# schemas


def simple_schema() -> TaskSchema:
    """Restaurant-search shaped task: find a venue, then ask about it."""
    return TaskSchema(
        name="simple",
        informable={
            "food": ["thai", "italian", "greek", "indian", "chinese",
                     "korean"],
            "area": ["north", "south", "east", "west", "centre"],
            "price": ["cheap", "moderate", "expensive"],
        },
        requestable=["address", "phone", "postcode", "hours"],
        intents=["inform", "request", "thanks"],
        acts=["ask", "offer", "give", "bye"],
        solution_acts=[],
        user_templates={
            "inform": ["i am looking for a {vals} restaurant",
                       "i want a {vals} place please",
                       "find me a {vals} restaurant",
                       "do you have anything {vals}"],
            "answer": ["{vals}", "{vals} please", "i would like {vals}",
                       "{vals} sounds good"],
            "request": ["can i get the {slots}", "what is the {slots}",
                        "please tell me the {slots}", "i need the {slots}"],
            "thanks": ["thank you goodbye", "thanks a lot bye",
                       "that is everything thanks"],
        },
        sys_templates={
            "ask": {"food": "what kind of food would you like",
                    "area": "which part of town do you prefer",
                    "price": "what price range are you looking for"},
            "offer": "<name> is a {food} restaurant in the {area} part of "
                     "town",
            "give": {"address": "the address is <address>",
                     "phone": "the phone is <phone>",
                     "postcode": "the postcode is <postcode>",
                     "hours": "the hours are <hours>"},
            "bye": "you are welcome goodbye",
        },
        # long tail of venue cuisines; most occur in only a dialog or two, so
        # held-out splits naturally carry out-of-vocabulary values
        rare_values={"food": [
            "lebanese", "persian", "basque", "georgian", "nepalese",
            "ethiopian", "malaysian", "peruvian", "hawaiian", "cuban",
            "polish", "austrian", "catalan", "breton", "sicilian",
            "tunisian", "balinese", "andean", "laotian", "cretan",
            "moldovan", "bavarian", "galician", "occitan", "sardinian",
            "maltese", "frisian", "manchu", "tibetan", "yemeni",
        ]},
    )


def complex_schema() -> TaskSchema:
    """Troubleshooting shaped task: diagnose a network fault, then solve it.

    Twelve system acts counting slot-specific forms (greet, ask_issue,
    ask_os, diagnose_ping, four solutions, remind, sorry, confirm, bye),
    four of them solutions; the right solution depends on the symptom, the
    platform and the diagnostic outcome together.
    """
    return TaskSchema(
        name="complex",
        informable={
            "issue": ["dropping", "slow", "missing", "dead"],
            "os": ["win10", "win11", "macos"],
            "ping": ["ok", "fails"],
        },
        requestable=[],
        intents=["report", "inform", "diag_result", "affirm"],
        acts=["greet", "ask", "diagnose", "solve_restart_router",
              "solve_update_driver", "solve_renew_ip", "solve_replace_cable",
              "note_win10", "note_win11", "note_macos", "bye"],
        solution_acts=["solve_restart_router", "solve_update_driver",
                       "solve_renew_ip", "solve_replace_cable"],
        user_templates={
            "report": ["hi {issue_phrase}",
                       "hello {issue_phrase} i use {os_phrase}",
                       "{issue_phrase} and i am on {os_phrase}",
                       "hey there {issue_phrase} can you help",
                       "good morning {issue_phrase}"],
            "inform": ["i am on {os_phrase}", "it runs {os_phrase}",
                       "the laptop has {os_phrase}",
                       "this machine is {os_phrase}"],
            # users restate the symptom when reporting the test outcome
            "diag_result": ["{ping_phrase} and still {issue_phrase}",
                            "i tried it {ping_phrase} but {issue_phrase}",
                            "{ping_phrase} and {issue_phrase} as before"],
            "affirm": ["yes that fixed it thanks", "great it works now",
                       "that did the trick thank you",
                       "perfect all good now"],
        },
        sys_templates={
            "greet": "hello network support here",
            "ask": {"issue": "what exactly is the problem",
                    "os": "which operating system do you run"},
            "diagnose": {"ping": "please run a ping test does it succeed"},
            # solutions share a scaffold; the core fix phrase differs, and a
            # platform note follows, so each surface composes two act choices
            "solve_restart_router": "thanks for checking i found a fix for "
                                    "this case please restart your router",
            "solve_update_driver": "thanks for checking i found a fix for "
                                   "this case please update the adapter "
                                   "driver",
            "solve_renew_ip": "thanks for checking i found a fix for "
                              "this case please renew the ip address",
            "solve_replace_cable": "thanks for checking i found a fix for "
                                   "this case please replace the network "
                                   "cable",
            "note_win10": "once done run the windows troubleshooter and "
                          "tell me if it helped",
            "note_win11": "once done rerun the network checker app and "
                          "tell me if it helped",
            "note_macos": "once done reopen the network preferences pane "
                          "and tell me if it helped",
            "bye": "glad to help goodbye",
        },
        value_surfaces={
            "dropping": ["the wifi keeps dropping",
                         "my wifi is dropping all the time",
                         "the connection keeps dropping",
                         "wifi dropping every few minutes"],
            "slow": ["the wifi is really slow",
                     "my connection is very slow",
                     "everything loads slow",
                     "the network is slow today"],
            "missing": ["the wifi network is missing",
                        "wifi is missing from the list",
                        "my wifi is missing entirely",
                        "the hotspot is missing again"],
            "dead": ["the ethernet port is dead",
                     "the wired link is dead",
                     "my cable connection is dead",
                     "the lan port went dead"],
            "win10": ["win10", "windows 10"],
            "win11": ["win11", "windows 11"],
            "macos": ["macos", "a mac"],
            "ok": ["the ping is ok", "ping comes back ok",
                   "the ping looks ok"],
            "fails": ["the ping fails", "the ping fails every time",
                      "every ping fails"],
        },
    )


def get_schema(task: str) -> TaskSchema:
    if task == "simple":
        return simple_schema()
    if task == "complex":
        return complex_schema()
    raise GenerationError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# knowledge bases


def build_kb(schema: TaskSchema, seed: int = 0,
             n_entities: int = 30) -> KnowledgeBase:
    if schema.name == "simple":
        return _build_simple_kb(schema, seed, n_entities)
    return _build_complex_kb(schema)


def _build_simple_kb(schema: TaskSchema, seed: int,
                     n_entities: int) -> KnowledgeBase:
    rng = np.random.default_rng([seed, 101])
    foods = schema.informable["food"]
    areas = schema.informable["area"]
    prices = schema.informable["price"]
    combos = [(f, a, p) for f in foods for a in areas for p in prices]
    if n_entities > len(combos):
        raise GenerationError(f"cannot build {n_entities} unique entities "
                              f"from {len(combos)} slot combinations")
    picks = rng.choice(len(combos), size=n_entities, replace=False)
    entities = []
    for i, c in enumerate(sorted(int(x) for x in picks)):
        f, a, p = combos[c]
        entities.append(_venue(i, f, a, p))
    # one venue per long-tail cuisine so rare goals stay satisfiable
    base = len(entities)
    for j, rare in enumerate(schema.rare_values.get("food", [])):
        a = areas[int(rng.integers(len(areas)))]
        p = prices[int(rng.integers(len(prices)))]
        entities.append(_venue(base + j, rare, a, p))
    return KnowledgeBase(informable=["food", "area", "price"],
                         requestable=list(schema.requestable),
                         entities=entities)


def _venue(i: int, food: str, area: str, price: str) -> dict:
    return {"name": f"venue_{i:03d}", "food": food, "area": area,
            "price": price, "address": f"{i + 1} main street",
            "phone": f"555 {i:04d}", "postcode": f"pc{i:03d}",
            "hours": f"{9 + i % 3} to {21 + i % 2}"}


_SOLUTION_BY_PING = {
    "ok": {"dropping": "solve_restart_router", "slow": "solve_renew_ip",
           "missing": "solve_update_driver", "dead": "solve_replace_cable"},
    "fails": {"dropping": "solve_renew_ip", "slow": "solve_restart_router",
              "missing": "solve_update_driver",
              "dead": "solve_replace_cable"},
}


def _build_complex_kb(schema: TaskSchema) -> KnowledgeBase:
    """One case per symptom combination.

    The solution follows the symptom, except that a failing ping swaps the
    two wifi-quality fixes: the symptom alone is not enough, but it carries
    most of the signal.
    """
    entities = []
    n = 0
    for issue in schema.informable["issue"]:
        for osv in schema.informable["os"]:
            for ping in schema.informable["ping"]:
                entities.append({"name": f"case_{n:03d}", "issue": issue,
                                 "os": osv, "ping": ping,
                                 "solution": _SOLUTION_BY_PING[ping][issue]})
                n += 1
    return KnowledgeBase(informable=["issue", "os", "ping"],
                         requestable=[], entities=entities)


# ---------------------------------------------------------------------------
# response realization and its inverse


def realize_acts(schema: TaskSchema, acts: list[str], slots: list[str],
                 values: dict[str, str]) -> list[str]:
    """Render an act sequence to response tokens; deterministic."""
    parts = []
    for act in acts:
        template = schema.sys_templates[act]
        if isinstance(template, dict):
            for slot in slots:
                if slot in template:
                    parts.append(template[slot])
        else:
            parts.append(template)
    if acts == ["give"]:
        give = schema.sys_templates["give"]
        parts = [give[s] for s in slots]
        return " and ".join(parts).format(**values).split()
    return " ".join(parts).format(**values).split()


def invert_response(schema: TaskSchema,
                    response: list[str]) -> tuple[list[str], list[str]]:
    """Recover (acts, slots) from a realized response.

    Slot-keyed templates match by their fixed phrase; flat templates match as
    regexes whose value holes capture the echoed tokens. Exact for generated
    responses, best-effort on model output.
    """
    text = " " + " ".join(response) + " "
    probes = _distinctive_probes(schema)
    act_hits: list[tuple[int, str]] = []
    slot_hits: list[tuple[float, str]] = []
    for act in schema.acts:
        template = schema.sys_templates[act]
        if isinstance(template, dict):
            positions = []
            for slot, tpl in template.items():
                pos = text.find(_template_probe(tpl))
                if pos >= 0:
                    positions.append(pos)
                    slot_hits.append((pos, slot))
            if positions:
                act_hits.append((min(positions), act))
        elif act in probes:
            pos = text.find(probes[act])
            if pos >= 0:
                act_hits.append((pos, act))
        else:
            hit = _match_template(template, text)
            if hit is not None:
                pos, slots = hit
                act_hits.append((pos, act))
                slot_hits.extend((pos + i / 100.0, s)
                                 for i, s in enumerate(slots))
    return ([a for _, a in sorted(act_hits)],
            [s for _, s in sorted(slot_hits)])


def _distinctive_probes(schema: TaskSchema) -> dict[str, str]:
    """Shortest n-gram unique to each hole-free flat template.

    Matching on a distinctive span instead of the whole template keeps act
    recovery fair on imperfect model output: a wording slip elsewhere in a
    long response does not mask which act it realized.
    """
    flats = {}
    others = []
    for act, tpl in schema.sys_templates.items():
        if isinstance(tpl, dict):
            others.extend(tpl.values())
        elif re.search(r"\{[a-z_]+\}", tpl):
            others.append(tpl)
        else:
            flats[act] = tpl
    probes = {}
    for act, tpl in flats.items():
        rivals = others + [t for a, t in flats.items() if a != act]
        rival_text = " || ".join(" " + r + " " for r in rivals)
        rival_tokens = set(" ".join(rivals).split())
        tokens = tpl.split()
        found = None
        for n in range(3, len(tokens) + 1):
            grams = []
            for i in range(len(tokens) - n + 1):
                gram = " " + " ".join(tokens[i:i + n]) + " "
                if gram not in rival_text:
                    shared = sum(t in rival_tokens for t in tokens[i:i + n])
                    grams.append((shared, i, gram))
            if grams:
                found = min(grams)[2]  # the most template-specific wording
                break
        probes[act] = found if found else " " + tpl + " "
    return probes


def _match_template(template: str, text: str):
    """Locate a flat template in the text; returns (position, slot tokens)
    with ``<x>`` holes contributing the slot name and ``{y}`` holes the
    captured value."""
    pattern = re.escape(template)
    pattern = re.sub(r"\\\{[a-z_]+\\\}", r"(\\S+)", pattern)
    m = re.search(pattern, text)
    if m is None:
        return None
    captured = list(m.groups())
    slots = []
    for name_hole, value_hole in re.findall(r"<([a-z_]+)>|\{([a-z_]+)\}",
                                            template):
        slots.append(name_hole if name_hole else captured.pop(0))
    return m.start(), slots


def _template_probe(template: str) -> str:
    """Longest placeholder-free run of the template, padded for whole-token
    matching."""
    pieces = re.split(r"\{[a-z_]+\}|<[a-z_]+>", template)
    probe = max(pieces, key=len).strip()
    # a template that is all placeholders can never be matched back
    return " " + probe + " " if probe else " __unmatchable__ "


def response_act_recoverer(schema: TaskSchema):
    """Callable mapping response tokens to recovered act tokens, for scoring
    instances that decode no acts."""

    def recover(response: list[str]) -> list[str]:
        acts, _ = invert_response(schema, response)
        return acts

    return recover


# ---------------------------------------------------------------------------
# dialog scripting


def generate(schema: TaskSchema, kb: KnowledgeBase,
             cfg: GenConfig) -> list[Dialog]:
    """Scripted user and scripted policy play out ``n_dialogs`` goals."""
    dialogs = []
    for i in range(cfg.n_dialogs):
        rng = np.random.default_rng([cfg.seed, 7, i])
        if schema.name == "simple":
            dialog = _simple_dialog(schema, kb, rng, f"dlg_{i:05d}")
        elif schema.name == "complex":
            dialog = _complex_dialog(schema, kb, rng, f"dlg_{i:05d}")
        else:
            raise GenerationError(f"no script for task {schema.name!r}")
        if len(dialog.turns) > cfg.max_turns:
            raise GenerationError(f"dialog {dialog.dialog_id} exceeded "
                                  f"max_turns={cfg.max_turns}")
        _apply_dropout(dialog, cfg, np.random.default_rng([cfg.seed, 13, i]))
        dialogs.append(dialog)
    return dialogs


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _simple_goal(schema: TaskSchema, kb: KnowledgeBase, rng) -> tuple:
    for _ in range(50):
        if rng.random() < 0.15 and schema.rare_values.get("food"):
            rare = _pick(rng, schema.rare_values["food"])
            pool = [e for e in kb.entities if e["food"] == rare]
        else:
            core = set()
            for vals in schema.informable.values():
                core.update(vals)
            pool = [e for e in kb.entities if e["food"] in
                    set(schema.informable["food"])]
        if pool:
            entity = _pick(rng, pool)
            constraints = {s: entity[s] for s in ("food", "area", "price")}
            n_req = int(rng.integers(1, 3))
            req_pool = list(schema.requestable)
            rng.shuffle(req_pool)
            return entity, constraints, sorted(req_pool[:n_req])
    raise GenerationError("could not sample a satisfiable goal")


def _simple_dialog(schema: TaskSchema, kb: KnowledgeBase, rng,
                   dialog_id: str) -> Dialog:
    entity, constraints, requests = _simple_goal(schema, kb, rng)
    slot_order = ["food", "area", "price"]
    agenda = list(slot_order)
    rng.shuffle(agenda)
    first_n = int(rng.integers(1, 4))

    turns: list[DialogTurn] = []
    expressed: list[str] = []   # constraint slots in informed order
    requested: list[str] = []
    offered = False
    pending_ask: str | None = None

    def state_tokens():
        cons = [constraints[s] for s in expressed]
        return cons + [SEP_REQ] + sorted(requested)

    while True:
        # user move
        if not offered and len(expressed) < len(slot_order):
            if pending_ask is not None:
                new = [pending_ask]
                intent = "inform"
                template = _pick(rng, schema.user_templates["answer"])
            else:
                new = agenda[:first_n]
                intent = "inform"
                template = _pick(rng, schema.user_templates["inform"])
            vals = [constraints[s] for s in new]
            user = template.format(vals=" ".join(vals)).split()
            semantics = [intent, SEP_INF] + vals
            expressed.extend(new)
        elif not requested:
            intent = "request"
            template = _pick(rng, schema.user_templates["request"])
            user = template.format(slots=" and ".join(requests)).split()
            semantics = [intent, SEP_INF] + list(requests)
            requested.extend(requests)
        else:
            intent = "thanks"
            user = _pick(rng, schema.user_templates["thanks"]).split()
            semantics = [intent, SEP_INF]

        state = state_tokens()

        # system move
        missing = [s for s in slot_order if s not in expressed]
        if intent == "thanks":
            acts, slots = ["bye"], []
            values = {}
        elif missing:
            pending_ask = missing[0]
            acts, slots = ["ask"], [pending_ask]
            values = {}
        elif not offered:
            offered = True
            pending_ask = None
            acts = ["offer"]
            slots = ["name", constraints["food"], constraints["area"]]
            values = dict(constraints)
        else:
            acts, slots = ["give"], list(semantics[2:])
            values = {}

        response = realize_acts(schema, acts, slots, values)
        turns.append(DialogTurn(
            user=user, semantics=semantics, state=state,
            acts=acts + [SEP_INF] + slots, response=response))
        if intent == "thanks":
            break

    goal = Goal(constraints=constraints, requests=list(requests),
                solution=None)
    return Dialog(dialog_id, turns, goal=goal)


def _complex_dialog(schema: TaskSchema, kb: KnowledgeBase, rng,
                    dialog_id: str) -> Dialog:
    case = _pick(rng, kb.entities)
    issue, osv, ping = case["issue"], case["os"], case["ping"]
    solution = case["solution"]
    surfaces = schema.value_surfaces

    turns: list[DialogTurn] = []
    expressed: list[str] = []
    solved = False

    def phrase(value):
        return _pick(rng, surfaces[value])

    while True:
        if not turns:
            intent = "report"
            template = _pick(rng, schema.user_templates["report"])
            give_os = "{os_phrase}" in template
            user = template.format(issue_phrase=phrase(issue),
                                   os_phrase=phrase(osv)).split()
            vals = [issue] + ([osv] if give_os else [])
        elif "os" not in [kb.slot_of_value(v) for v in expressed]:
            intent = "inform"
            template = _pick(rng, schema.user_templates["inform"])
            user = template.format(os_phrase=phrase(osv)).split()
            vals = [osv]
        elif not solved:
            intent = "diag_result"
            template = _pick(rng, schema.user_templates["diag_result"])
            user = template.format(ping_phrase=phrase(ping),
                                   issue_phrase=phrase(issue)).split()
            vals = [ping]
        else:
            intent = "affirm"
            user = _pick(rng, schema.user_templates["affirm"]).split()
            vals = []

        semantics = [intent, SEP_INF] + vals
        expressed.extend(vals)
        state = list(expressed) + [SEP_REQ]

        have = {kb.slot_of_value(v) for v in expressed}
        if intent == "affirm":
            acts, slots = ["bye"], []
        elif "os" not in have:
            acts = (["greet"] if len(turns) == 0 else []) + ["ask"]
            slots = ["os"]
        elif "ping" not in have:
            acts = (["greet"] if len(turns) == 0 else []) + ["diagnose"]
            slots = ["ping"]
        else:
            solved = True
            acts, slots = [solution, f"note_{osv}"], []

        response = realize_acts(schema, acts, slots, {})
        turns.append(DialogTurn(user=user, semantics=semantics, state=state,
                                acts=acts + [SEP_INF] + slots,
                                response=response))
        if intent == "affirm":
            break

    goal = Goal(constraints={"issue": issue, "os": osv, "ping": ping},
                requests=[], solution=solution)
    return Dialog(dialog_id, turns, goal=goal)


def _apply_dropout(dialog: Dialog, cfg: GenConfig, rng):
    """Mask whole modules per dialog (or per turn) with the configured
    probabilities; masked fields are removed."""
    if not cfg.annotation_dropout:
        return
    modules = ("nlu", "dst", "dpl", "nlg")
    field_for = {"nlu": "semantics", "dst": "state", "dpl": "acts",
                 "nlg": "response"}
    if cfg.per_turn_dropout:
        for turn in dialog.turns:
            for m in modules:
                p = cfg.annotation_dropout.get(m, 0.0)
                if p and rng.random() < p:
                    setattr(turn.mask, m, False)
                    setattr(turn, field_for[m], None)
    else:
        dropped = [m for m in modules
                   if cfg.annotation_dropout.get(m, 0.0)
                   and rng.random() < cfg.annotation_dropout[m]]
        for turn in dialog.turns:
            for m in dropped:
                setattr(turn.mask, m, False)
                setattr(turn, field_for[m], None)


def strip_to_raw(dialogs: list[Dialog]) -> list[Dialog]:
    """Copies annotated only for generation (the raw-dialog regime)."""
    out = []
    for d in dialogs:
        turns = [DialogTurn(user=list(t.user), response=list(t.response or []),
                            mask=ModuleMask(nlu=False, dst=False, dpl=False,
                                            nlg=True))
                 for t in d.turns]
        out.append(Dialog(d.dialog_id + "_raw", turns, goal=d.goal))
    return out


# ---------------------------------------------------------------------------
# splits


def split(corpus: list[Dialog], ratios: tuple[float, float, float],
          seed: int = 0) -> tuple[list[Dialog], list[Dialog], list[Dialog]]:
    """Disjoint train/valid/test split, sizes within one of the exact
    proportions (largest remainder)."""
    if len(corpus) < 3:
        raise GenerationError("need at least 3 dialogs to split")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise GenerationError(f"ratios must be three positive numbers, "
                              f"got {ratios}")
    total = sum(ratios)
    n = len(corpus)
    exact = [r / total * n for r in ratios]
    sizes = [int(x) for x in exact]
    while sum(sizes) < n:
        rem = [e - s for e, s in zip(exact, sizes)]
        sizes[int(np.argmax(rem))] += 1
    order = np.random.default_rng([seed, 23]).permutation(n)
    shuffled = [corpus[i] for i in order]
    a, b = sizes[0], sizes[0] + sizes[1]
    return shuffled[:a], shuffled[a:b], shuffled[b:]


def subsample(corpus: list[Dialog], fraction: float,
              seed: int = 0) -> list[Dialog]:
    sample, _ = subsample_with_complement(corpus, fraction, seed)
    return sample


def subsample_with_complement(corpus: list[Dialog], fraction: float,
                              seed: int = 0):
    """floor(fraction * n) dialogs without replacement, plus the remainder
    (used as the raw-data patch in the mixed-supervision regime)."""
    if not 0.0 < fraction <= 1.0:
        raise GenerationError(f"fraction {fraction} outside (0, 1]")
    n = len(corpus)
    k = int(np.floor(fraction * n))
    order = np.random.default_rng([seed, 29]).permutation(n)
    keep = sorted(int(i) for i in order[:k])
    keep_set = set(keep)
    sample = [corpus[i] for i in keep]
    rest = [corpus[i] for i in range(n) if i not in keep_set]
    return sample, rest
