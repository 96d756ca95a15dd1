"""Synthetic statute corpora with brute-force competition ground truth.

A rule holds a judgment plus one required predicate per slot; a case assigns
every slot a ground predicate.  Per-slot implication DAGs give predicate
semantics ("smokes" implies "uses" implies "possesses"), and rule inclusion
is decided extensionally over the finite universe of total case assignments.
Two rules compete when their judgments differ and one's case set contains
the other's; articles compete when any of their rules do.

The generator renders rule families into near-duplicate statute text, emits
per-family definitional articles, wires mention references at a target
density, and labels every article pair with the brute-force oracle, so the
corpus doubles as its own ground truth.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .corpus import Article, ArticleId, Corpus, Tier


class ModelError(Exception):
    """Rule or case refers to slots/predicates the ontology does not define."""


class CapacityError(Exception):
    """Case universe exceeds the configured enumeration cap."""


class GenerationError(Exception):
    """Requested corpus shape is infeasible for the given ontology."""


DEFAULT_UNIVERSE_CAP = 10**6


@dataclass
class Ontology:
    """Slots, per-slot predicates, per-slot implication DAG, judgments."""

    slots: tuple[str, ...]
    predicates: dict[str, tuple[str, ...]]
    implications: dict[str, tuple[tuple[str, str], ...]]  # (q, p) means q implies p
    judgments: tuple[str, ...]

    def __post_init__(self):
        self.slots = tuple(self.slots)
        self.judgments = tuple(self.judgments)
        for slot in self.slots:
            if slot not in self.predicates or not self.predicates[slot]:
                raise ModelError(f"slot {slot!r} has no predicates")
        # reflexive-transitive closure per slot; cycle check rejects non-DAGs
        self._closure: dict[str, dict[str, frozenset[str]]] = {}
        self._impliers: dict[str, dict[str, frozenset[str]]] = {}
        for slot in self.slots:
            preds = self.predicates[slot]
            direct: dict[str, set[str]] = {p: set() for p in preds}
            for q, p in self.implications.get(slot, ()):
                if q not in direct or p not in direct:
                    raise ModelError(f"implication {q!r} => {p!r} uses predicates unknown to slot {slot!r}")
                direct[q].add(p)
            closure: dict[str, frozenset[str]] = {}
            for p in preds:
                seen: set[str] = set()
                stack = [p]
                while stack:
                    cur = stack.pop()
                    if cur in seen:
                        continue
                    seen.add(cur)
                    stack.extend(direct[cur])
                closure[p] = frozenset(seen)
            for p in preds:
                for q in direct[p]:
                    if q == p or (p in closure[q] and p != q):
                        raise ModelError(f"implication cycle through {p!r}/{q!r} in slot {slot!r}")
            self._closure[slot] = closure
            impliers: dict[str, set[str]] = {p: set() for p in preds}
            for q in preds:
                for p in closure[q]:
                    impliers[p].add(q)
            self._impliers[slot] = {p: frozenset(qs) for p, qs in impliers.items()}

    def implied_by(self, slot: str, predicate: str) -> frozenset[str]:
        """All predicates q with q =>* predicate (reflexive)."""
        try:
            return self._impliers[slot][predicate]
        except KeyError:
            raise ModelError(f"unknown slot/predicate ({slot!r}, {predicate!r})") from None

    def implies_set(self, slot: str, predicate: str) -> frozenset[str]:
        """All predicates p with predicate =>* p (reflexive)."""
        try:
            return self._closure[slot][predicate]
        except KeyError:
            raise ModelError(f"unknown slot/predicate ({slot!r}, {predicate!r})") from None

    def universe_size(self) -> int:
        return math.prod(len(self.predicates[s]) for s in self.slots)


@dataclass(frozen=True)
class RuleSpec:
    propositions: tuple[tuple[str, str], ...]  # (slot, required predicate), at most one per slot
    judgment: str

    def __post_init__(self):
        if not self.propositions:
            raise ModelError("a rule needs at least one proposition")
        slots = [s for s, _ in self.propositions]
        if len(set(slots)) != len(slots):
            raise ModelError("at most one required predicate per slot")

    @classmethod
    def of(cls, propositions: dict[str, str], judgment: str) -> "RuleSpec":
        return cls(tuple(sorted(propositions.items())), judgment)


@dataclass(frozen=True)
class CaseSpec:
    assignments: tuple[tuple[str, str], ...]

    @classmethod
    def of(cls, assignments: dict[str, str]) -> "CaseSpec":
        return cls(tuple(sorted(assignments.items())))

    def get(self, slot: str) -> Optional[str]:
        for s, p in self.assignments:
            if s == slot:
                return p
        return None


def satisfies(rule: RuleSpec, case: CaseSpec, ont: Ontology) -> bool:
    """True iff every required predicate is implied by the case's assignment."""
    for slot, required in rule.propositions:
        if slot not in ont._closure:
            raise ModelError(f"rule requires unknown slot {slot!r}")
        assigned = case.get(slot)
        if assigned is None:
            return False
        if assigned not in ont._closure[slot]:
            raise ModelError(f"case assigns unknown predicate {assigned!r} to slot {slot!r}")
        if required not in ont._closure[slot][assigned]:
            return False
    return True


def case_universe(ont: Ontology, cap: int = DEFAULT_UNIVERSE_CAP) -> list[CaseSpec]:
    """Every total assignment, in lexicographic declared-order."""
    size = ont.universe_size()
    if size > cap:
        raise CapacityError(f"case universe has {size} cases, cap is {cap}")
    out = []
    for combo in itertools.product(*(ont.predicates[s] for s in ont.slots)):
        out.append(CaseSpec(tuple(zip(ont.slots, combo))))
    return out


def _compiled(rule: RuleSpec, ont: Ontology) -> list[tuple[int, frozenset[str]]]:
    # (slot index, set of assignments that satisfy the requirement)
    pos = {s: i for i, s in enumerate(ont.slots)}
    reqs = []
    for slot, required in rule.propositions:
        if slot not in pos:
            raise ModelError(f"rule requires unknown slot {slot!r}")
        reqs.append((pos[slot], ont.implied_by(slot, required)))
    return reqs


def rule_includes(r1: RuleSpec, r2: RuleSpec, ont: Ontology, cap: int = DEFAULT_UNIVERSE_CAP) -> bool:
    """True iff every case satisfying r2 also satisfies r1 (extensional)."""
    size = ont.universe_size()
    if size > cap:
        raise CapacityError(f"case universe has {size} cases, cap is {cap}")
    req1 = _compiled(r1, ont)
    req2 = _compiled(r2, ont)
    for combo in itertools.product(*(ont.predicates[s] for s in ont.slots)):
        if all(combo[i] in ok for i, ok in req2) and not all(combo[i] in ok for i, ok in req1):
            return False
    return True


def rules_compete(r1: RuleSpec, r2: RuleSpec, ont: Ontology, cap: int = DEFAULT_UNIVERSE_CAP) -> bool:
    if r1.judgment == r2.judgment:
        return False
    return rule_includes(r1, r2, ont, cap) or rule_includes(r2, r1, ont, cap)


def articles_compete(
    a1: Sequence[RuleSpec], a2: Sequence[RuleSpec], ont: Ontology, cap: int = DEFAULT_UNIVERSE_CAP
) -> bool:
    if not a1 or not a2:
        raise ModelError("articles must carry at least one rule each")
    return any(rules_compete(r1, r2, ont, cap) for r1 in a1 for r2 in a2)


# ---------------------------------------------------------------------------
# Competition resolution


class InclusionKind(Enum):
    R1_INCLUDES_R2 = "r1_includes_r2"
    R2_INCLUDES_R1 = "r2_includes_r1"
    MUTUAL = "mutual"


LEX_SPECIALIS = "lex_specialis"
LEX_POSTERIOR = "lex_posterior"
UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class Resolution:
    winner: Optional[ArticleId]
    principle: str


def resolve_competition(
    meta1: tuple[ArticleId, Optional[int]],
    meta2: tuple[ArticleId, Optional[int]],
    inclusion: InclusionKind,
) -> Resolution:
    """Pick the prevailing article: specific beats general, else newer beats older.

    One-way inclusion means the included rule is the more specific one, so its
    article wins regardless of age.  Mutual scope falls back to enactment year;
    missing or equal years leave the competition unresolved.
    """
    id1, year1 = meta1
    id2, year2 = meta2
    if inclusion is InclusionKind.R1_INCLUDES_R2:
        return Resolution(winner=id2, principle=LEX_SPECIALIS)
    if inclusion is InclusionKind.R2_INCLUDES_R1:
        return Resolution(winner=id1, principle=LEX_SPECIALIS)
    if year1 is not None and year2 is not None and year1 != year2:
        return Resolution(winner=id1 if year1 > year2 else id2, principle=LEX_POSTERIOR)
    return Resolution(winner=None, principle=UNRESOLVED)


# ---------------------------------------------------------------------------
# Ontology text format: one declaration per line, '#' comments.
#
#   slot <name>
#   pred <slot> <symbol>
#   implies <slot> <from> <to>
#   judgment <symbol>


def parse_ontology(text: str) -> Ontology:
    slots: list[str] = []
    predicates: dict[str, list[str]] = {}
    implications: dict[str, list[tuple[str, str]]] = {}
    judgments: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "slot":
                slots.append(parts[1])
                predicates.setdefault(parts[1], [])
                implications.setdefault(parts[1], [])
            elif kind == "pred":
                predicates[parts[1]].append(parts[2])
            elif kind == "implies":
                implications[parts[1]].append((parts[2], parts[3]))
            elif kind == "judgment":
                judgments.append(parts[1])
            else:
                raise ModelError(f"ontology line {lineno}: unknown declaration {kind!r}")
        except (IndexError, KeyError):
            raise ModelError(f"ontology line {lineno}: malformed declaration {line!r}") from None
    return Ontology(
        slots=tuple(slots),
        predicates={s: tuple(ps) for s, ps in predicates.items()},
        implications={s: tuple(es) for s, es in implications.items()},
        judgments=tuple(judgments),
    )


def serialize_ontology(ont: Ontology) -> str:
    lines = []
    for slot in ont.slots:
        lines.append(f"slot {slot}")
        for p in ont.predicates[slot]:
            lines.append(f"pred {slot} {p}")
        for q, p in ont.implications.get(slot, ()):
            lines.append(f"implies {slot} {q} {p}")
    for j in ont.judgments:
        lines.append(f"judgment {j}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Corpus generation


@dataclass
class SynthConfig:
    seed: int = 0
    n_acts: int = 3
    n_articles: int = 30
    mention_density: float = 2.0
    competing_fraction: float = 0.12
    body_length_target: int = 75  # words; matches the reference graph's mean article length

    def __post_init__(self):
        if self.n_acts < 1 or self.n_articles < 1:
            raise ValueError("n_acts and n_articles must be positive")
        if not (0.0 <= self.competing_fraction <= 1.0):
            raise ValueError("competing_fraction must be in [0, 1]")
        if self.competing_fraction > 0 and self.n_articles < 2:
            raise ValueError("need at least 2 articles when competing_fraction > 0")
        if self.mention_density < 0:
            raise ValueError("mention_density must be non-negative")
        if self.body_length_target < 1:
            raise ValueError("body_length_target must be positive")


_ACTION_CHAIN_WORDS = [
    "handles", "possesses", "stores", "keeps", "carries", "conveys", "transfers",
    "supplies", "administers", "uses", "consumes", "ingests", "inhales", "injects",
    "smokes", "brews", "distills", "refines", "compounds", "synthesizes",
    "cultivates", "harvests", "extracts", "isolates",
]

_FILLER_SENTENCES = [
    "The provisions of this Article shall apply notwithstanding any administrative measure to the contrary.",
    "Matters necessary for the enforcement of this Article shall be prescribed by Presidential Decree.",
    "No person shall be exempted from liability on the ground of ignorance of the designation concerned.",
    "Where the conduct is committed habitually, the punishment may be aggravated by one half.",
    "An attempt to commit the conduct described in this Article shall be punishable.",
    "The court may order confiscation of any item provided for the conduct described herein.",
    "If the offender voluntarily reports the conduct to the competent authority, the punishment may be mitigated.",
    "The statute of limitation for the conduct described in this Article shall follow the general rules.",
]

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_word(rng: random.Random, syllables: int = 3) -> str:
    return "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(syllables))


def build_ontology(
    n_categories: int,
    chain_length: int,
    n_judgments: int,
    seed: int = 0,
    leaves_per_category: int = 3,
) -> Ontology:
    """An ontology shaped for corpus generation.

    One action slot carrying a single implication chain (later words imply
    earlier, more general ones) and one substance slot holding independent
    category subtrees, each category implied by a few leaf compounds.
    """
    if chain_length < 1 or chain_length > len(_ACTION_CHAIN_WORDS):
        raise ValueError(f"chain_length must be in [1, {len(_ACTION_CHAIN_WORDS)}]")
    rng = random.Random(seed)
    actions = _ACTION_CHAIN_WORDS[:chain_length]
    action_edges = [(actions[i], actions[i - 1]) for i in range(1, chain_length)]
    categories, leaves, substance_edges = [], [], []
    names_seen: set[str] = set()

    def fresh_word() -> str:
        while True:
            w = _pseudo_word(rng)
            if w not in names_seen:
                names_seen.add(w)
                return w

    for _ in range(n_categories):
        cat = f"{fresh_word()}-compounds"
        categories.append(cat)
        for _ in range(leaves_per_category):
            leaf = f"{fresh_word()}-extract"
            leaves.append(leaf)
            substance_edges.append((leaf, cat))
    judgments = [f"penalty-grade-{i + 1}" for i in range(n_judgments)]
    return Ontology(
        slots=("action", "substance"),
        predicates={"action": tuple(actions), "substance": tuple(categories + leaves)},
        implications={"action": tuple(action_edges), "substance": tuple(substance_edges)},
        judgments=tuple(judgments),
    )


def auto_ontology(config: SynthConfig) -> Ontology:
    """An ontology sized so generate_corpus(config, ...) is feasible."""
    target_pairs = round(config.competing_fraction * config.n_articles * (config.n_articles - 1) / 2)
    sizes = _family_sizes(target_pairs, config.n_articles, len(_ACTION_CHAIN_WORDS)) if target_pairs else []
    n_families = len(sizes) + (config.n_articles - sum(sizes))
    chain_length = max(sizes, default=1)
    return build_ontology(
        n_categories=n_families,
        chain_length=chain_length,
        n_judgments=max(sizes, default=1) + 2,
        seed=config.seed,
    )


def _longest_chain(ont: Ontology, slot: str) -> list[str]:
    """Longest implication path q_k => ... => q_0, returned general-first."""
    direct: dict[str, list[str]] = {p: [] for p in ont.predicates[slot]}
    for q, p in ont.implications.get(slot, ()):
        direct[q].append(p)
    memo: dict[str, list[str]] = {}

    def path_from(q: str) -> list[str]:
        if q not in memo:
            best: list[str] = []
            for p in direct[q]:
                cand = path_from(p)
                if len(cand) > len(best):
                    best = cand
            memo[q] = best + [q]
        return memo[q]

    best: list[str] = []
    for p in ont.predicates[slot]:
        cand = path_from(p)
        if len(cand) > len(best):
            best = cand
    return best


def _independent_categories(ont: Ontology, slot: str) -> list[tuple[str, list[str]]]:
    """Predicates with disjoint implier sets, each with its strict impliers."""
    out: list[tuple[str, list[str]]] = []
    used: set[str] = set()
    for p in ont.predicates[slot]:
        impliers = ont.implied_by(slot, p)
        strict = sorted(impliers - {p})
        if not strict:
            continue
        if impliers & used:
            continue
        used |= impliers
        out.append((p, strict))
    return out


def _family_sizes(target_pairs: int, n_articles: int, max_chain: int) -> list[int]:
    """Decompose target_pairs into sum of C(g,2) with sum(g) <= n_articles."""
    for cap in range(max_chain, 1, -1):
        sizes: list[int] = []
        rem, avail = target_pairs, n_articles
        while rem > 0 and avail >= 2:
            g = min(cap, avail)
            while g > 2 and g * (g - 1) // 2 > rem:
                g -= 1
            if g * (g - 1) // 2 > rem:
                break
            sizes.append(g)
            rem -= g * (g - 1) // 2
            avail -= g
        if rem == 0:
            return sizes
    raise GenerationError(
        f"cannot realize {target_pairs} competing pairs with {n_articles} articles "
        f"and implication chains of length {max_chain}"
    )


def generate_corpus(
    config: SynthConfig, ont: Ontology
) -> tuple[Corpus, list[tuple[ArticleId, ArticleId, int]], dict[ArticleId, list[RuleSpec]]]:
    """Render a labeled synthetic corpus.

    Returns (corpus, labels, gold_rules) where labels covers every unordered
    pair of rule-bearing articles (definitional articles are emitted on top of
    ``n_articles`` and carry no rules, so they never enter the pair universe).
    Labels are computed by the brute-force oracle, not by construction intent.
    """
    rng = random.Random(config.seed)
    action_slot = "action" if "action" in ont.slots else ont.slots[0]
    chain = _longest_chain(ont, action_slot)
    if not chain:
        raise GenerationError("ontology has no implication chain to build rule families from")
    substance_slots = [s for s in ont.slots if s != action_slot]
    categories: list[tuple[str, str, list[str]]] = []  # (slot, category, leaves)
    for slot in substance_slots:
        for cat, leaves in _independent_categories(ont, slot):
            categories.append((slot, cat, leaves))

    target_pairs = round(config.competing_fraction * config.n_articles * (config.n_articles - 1) / 2)
    sizes = _family_sizes(target_pairs, config.n_articles, len(chain)) if target_pairs else []
    n_singletons = config.n_articles - sum(sizes)
    families = sizes + [1] * n_singletons
    if len(families) > len(categories):
        raise GenerationError(
            f"need {len(families)} independent categories, ontology offers {len(categories)}"
        )
    if not ont.judgments:
        raise GenerationError("ontology declares no judgments")

    # act names end in 'Act' so cross-act references match the shipped grammar
    act_names = []
    seen_names: set[str] = set()
    while len(act_names) < config.n_acts:
        name = f"{_pseudo_word(rng).capitalize()} Regulation Act"
        if name not in seen_names:
            seen_names.add(name)
            act_names.append(name)

    # one definitional article per family, placed in the family's act
    per_act_counter = {a: 0 for a in act_names}

    def next_number(act: str) -> int:
        per_act_counter[act] += 1
        return per_act_counter[act]

    articles: list[Article] = []
    gold: dict[ArticleId, list[RuleSpec]] = {}
    rule_article_ids: list[ArticleId] = []
    judgment_cycle = itertools.cycle(ont.judgments)
    # year rides on the #ACT header, so it is a per-act property
    act_years = {name: 1953 + 7 * i for i, name in enumerate(act_names)}

    for fam_index, fam_size in enumerate(families):
        act = act_names[fam_index % len(act_names)]
        slot, category, leaves = categories[fam_index]
        cat_text = category.replace("-", " ")
        def_id = ArticleId(act, next_number(act))
        leaf_text = [l.replace("-", " ") for l in leaves]
        if len(leaf_text) == 1:
            meaning = leaf_text[0]
        else:
            meaning = ", ".join(leaf_text[:-1]) + f", or {leaf_text[-1]}"
        def_body = f'The term "{cat_text}" means {meaning}.'
        articles.append(
            Article(
                id=def_id,
                title=f"Definitions ({cat_text})",
                body=def_body,
                enactment_year=act_years[act],
                tier=Tier.ACT,
            )
        )
        fam_judgments: set[str] = set()
        for level in range(fam_size):
            judgment = next(judgment_cycle)
            attempts = 0
            while judgment in fam_judgments:
                judgment = next(judgment_cycle)
                attempts += 1
                if attempts > len(ont.judgments):
                    raise GenerationError("not enough distinct judgments for the largest family")
            fam_judgments.add(judgment)
            action = chain[level]
            rule = RuleSpec.of({action_slot: action, slot: category}, judgment)
            art_id = ArticleId(act, next_number(act))
            action_text = action.replace("-", " ")
            judgment_text = judgment.replace("-", " ")
            body = (
                f"A person who {action_text} any {cat_text} as defined in "
                f"Article {def_id.number} shall be liable to {judgment_text}."
            )
            articles.append(
                Article(
                    id=art_id,
                    title=f"Prohibition ({action_text} {cat_text})",
                    body=body,
                    enactment_year=act_years[act],
                    tier=Tier.ACT,
                )
            )
            gold[art_id] = [rule]
            rule_article_ids.append(art_id)

    # extra cross-references up to the target mean degree
    n_total = len(articles)
    base_edges = {(min(a.id, b), max(a.id, b)) for a in articles for b in _referenced_ids(a)}
    target_edges = max(len(base_edges), round(config.mention_density * n_total / 2))
    extra: list[tuple[int, str]] = []  # (article index, sentence to append)
    existing = set(base_edges)
    by_index = {a.id: i for i, a in enumerate(articles)}
    attempts = 0
    while len(existing) < target_edges and attempts < 50 * target_edges:
        attempts += 1
        src = articles[rng.randrange(n_total)]
        dst = articles[rng.randrange(n_total)]
        if src.id == dst.id:
            continue
        key = (min(src.id, dst.id), max(src.id, dst.id))
        if key in existing:
            continue
        existing.add(key)
        if dst.id.act == src.id.act:
            ref = f"Article {dst.id.number}"
        else:
            ref = f"Article {dst.id.number} of the {dst.id.act}"
        extra.append((by_index[src.id], f"This Article shall not preclude the application of {ref}."))

    bodies = [a.body for a in articles]
    for idx, sentence in extra:
        bodies[idx] = bodies[idx] + " " + sentence
    filler_cycle = itertools.cycle(_FILLER_SENTENCES)
    for i, body in enumerate(bodies):
        words = len(body.split())
        while words < config.body_length_target:
            s = next(filler_cycle)
            body = body + " " + s
            words += len(s.split())
        bodies[i] = body

    corpus = Corpus()
    for art, body in zip(articles, bodies):
        corpus.add(Article(art.id, art.title, body, art.enactment_year, art.tier))

    labels: list[tuple[ArticleId, ArticleId, int]] = []
    ordered = sorted(rule_article_ids)
    for i, id1 in enumerate(ordered):
        for id2 in ordered[i + 1 :]:
            label = 1 if articles_compete(gold[id1], gold[id2], ont) else 0
            labels.append((id1, id2, label))
    return corpus, labels, gold


def _referenced_ids(article: Article) -> list[ArticleId]:
    # generation-time bookkeeping: each rule article references its definition
    import re

    out = []
    for m in re.finditer(r"as defined in Article (\d+)", article.body):
        out.append(ArticleId(article.id.act, int(m.group(1))))
    return out


# ---------------------------------------------------------------------------
# Gold label and rule files


def write_labels(labels: Iterable[tuple[ArticleId, ArticleId, int]]) -> str:
    return "".join(f"{a.canonical()}\t{b.canonical()}\t{label}\n" for a, b, label in labels)


def read_labels(text: str) -> list[tuple[ArticleId, ArticleId, int]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise ValueError(f"labels line {lineno}: expected '<id>\\t<id>\\t<0|1>'")
        out.append((ArticleId.from_canonical(parts[0]), ArticleId.from_canonical(parts[1]), int(parts[2])))
    return out


def write_gold_rules(gold: dict[ArticleId, list[RuleSpec]]) -> str:
    doc = {
        aid.canonical(): [
            {"propositions": dict(r.propositions), "judgment": r.judgment} for r in rules
        ]
        for aid, rules in sorted(gold.items())
    }
    return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def read_gold_rules(text: str) -> dict[ArticleId, list[RuleSpec]]:
    doc = json.loads(text)
    return {
        ArticleId.from_canonical(key): [RuleSpec.of(r["propositions"], r["judgment"]) for r in rules]
        for key, rules in doc.items()
    }


# ---------------------------------------------------------------------------
# Random ontologies for property tests and oracle audits


def random_ontology(rng: random.Random, max_universe: int = 10**4) -> Ontology:
    while True:
        n_slots = rng.randrange(1, 4)
        slots = tuple(f"s{i}" for i in range(n_slots))
        predicates = {}
        implications = {}
        for slot in slots:
            n_preds = rng.randrange(2, 9)
            preds = tuple(f"{slot}p{j}" for j in range(n_preds))
            edges = []
            # forward edges in index order keep the relation acyclic
            for i in range(n_preds):
                for j in range(i + 1, n_preds):
                    if rng.random() < 0.3:
                        edges.append((preds[j], preds[i]))
            predicates[slot] = preds
            implications[slot] = tuple(edges)
        ont = Ontology(
            slots=slots,
            predicates=predicates,
            implications=implications,
            judgments=tuple(f"j{i}" for i in range(rng.randrange(2, 5))),
        )
        if ont.universe_size() <= max_universe:
            return ont


def random_rule(rng: random.Random, ont: Ontology) -> RuleSpec:
    n = rng.randrange(1, len(ont.slots) + 1)
    chosen = sorted(rng.sample(range(len(ont.slots)), n))
    props = {ont.slots[i]: rng.choice(ont.predicates[ont.slots[i]]) for i in chosen}
    return RuleSpec.of(props, rng.choice(ont.judgments))


def random_case(rng: random.Random, ont: Ontology) -> CaseSpec:
    return CaseSpec.of({s: rng.choice(ont.predicates[s]) for s in ont.slots})
