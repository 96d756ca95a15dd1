"""Statute corpus parsing and template-based mention extraction.

Corpus documents are UTF-8 plain text:

    #ACT <name> [| year=<int>] [| tier=<Act|Decree|Rule>]
    ##ART <number>[-<suffix>] | <title>
    <body lines until the next marker>

Mention references inside article bodies follow per-language template
grammars shipped as data files (one ``<kind>\\t<regex>`` per line, see
``grammars/``).  Extraction is article-granular: paragraph and item
references normalize up to their containing article.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import total_ordering
from importlib import resources
from typing import Iterable, Iterator, Optional


class ParseError(Exception):
    """Malformed corpus document; message carries the offending line number."""


class ConfigurationError(Exception):
    """Unknown grammar id or invalid grammar table."""


class NormalizationError(Exception):
    """A matched reference could not be turned into an ArticleId."""


class Tier(Enum):
    ACT = "Act"
    ENFORCEMENT_DECREE = "EnforcementDecree"
    ENFORCEMENT_RULE = "EnforcementRule"


# `tier=` tokens accepted in #ACT headers.
_TIER_TOKENS = {"Act": Tier.ACT, "Decree": Tier.ENFORCEMENT_DECREE, "Rule": Tier.ENFORCEMENT_RULE}
_TIER_NAMES = {v: k for k, v in _TIER_TOKENS.items()}

# Characters that would break canonical-id and header syntax.
_FORBIDDEN_IN_ACT = (":", "|", "\t", "\n")


@total_ordering
@dataclass(frozen=True)
class ArticleId:
    act: str
    number: int
    suffix: Optional[int] = None

    def __post_init__(self):
        if not self.act or any(ch in self.act for ch in _FORBIDDEN_IN_ACT):
            raise ValueError(f"invalid act name: {self.act!r}")
        if self.number < 1:
            raise ValueError(f"article number must be positive: {self.number}")
        if self.suffix is not None and self.suffix < 1:
            raise ValueError(f"article suffix must be positive: {self.suffix}")

    def canonical(self) -> str:
        base = f"{self.act}:{self.number}"
        return base if self.suffix is None else f"{base}-{self.suffix}"

    @classmethod
    def from_canonical(cls, text: str) -> "ArticleId":
        act, _, num = text.rpartition(":")
        if not act or not num:
            raise ValueError(f"not a canonical article id: {text!r}")
        number, _, suffix = num.partition("-")
        try:
            return cls(act, int(number), int(suffix) if suffix else None)
        except ValueError as exc:
            raise ValueError(f"not a canonical article id: {text!r}") from exc

    def sort_key(self) -> tuple:
        # absent suffix orders before suffix 1
        return (self.act, self.number, self.suffix if self.suffix is not None else 0)

    def __lt__(self, other: "ArticleId") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return self.canonical()


@dataclass(frozen=True)
class Article:
    id: ArticleId
    title: str
    body: str
    enactment_year: Optional[int] = None
    tier: Tier = Tier.ACT

    def __post_init__(self):
        if not self.body.strip():
            raise ValueError(f"{self.id}: article body must be non-empty")

    def word_count(self) -> int:
        return len(self.body.split())


@dataclass(frozen=True)
class MentionRef:
    source: ArticleId
    target: ArticleId
    span: tuple[int, int]  # [start, end) character offsets into the source body
    dangling: bool = False


class Corpus:
    """Ordered acts of articles with total lookup by ArticleId."""

    def __init__(self, articles: Iterable[Article] = ()):
        self.acts: dict[str, list[Article]] = {}
        self._by_id: dict[ArticleId, Article] = {}
        for art in articles:
            self.add(art)

    def add(self, article: Article) -> None:
        if article.id in self._by_id:
            raise ValueError(f"duplicate article id {article.id}")
        self.acts.setdefault(article.id.act, []).append(article)
        self._by_id[article.id] = article

    def get(self, id: ArticleId) -> Article:
        try:
            return self._by_id[id]
        except KeyError:
            raise KeyError(f"unknown article id {id}") from None

    def __contains__(self, id: ArticleId) -> bool:
        return id in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self) -> Iterator[Article]:
        for act in self.acts.values():
            yield from act

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and list(self) == list(other)


# ---------------------------------------------------------------------------
# Document format


_ACT_RE = re.compile(r"^#ACT\s+(?P<rest>.+)$")
_ART_RE = re.compile(r"^##ART\s+(?P<number>[1-9][0-9]*)(?:-(?P<suffix>[1-9][0-9]*))?\s*\|\s*(?P<title>.*)$")


def parse_corpus(text: str) -> Corpus:
    corpus = Corpus()
    first_seen: dict[ArticleId, int] = {}
    act_name: Optional[str] = None
    act_year: Optional[int] = None
    act_tier = Tier.ACT
    pending: Optional[dict] = None
    body_lines: list[str] = []

    def flush():
        nonlocal pending, body_lines
        if pending is None:
            return
        body = "\n".join(body_lines).strip()
        if not body:
            raise ParseError(f"line {pending['line']}: article {pending['id']} has an empty body")
        try:
            corpus.add(
                Article(
                    id=pending["id"],
                    title=pending["title"],
                    body=body,
                    enactment_year=pending["year"],
                    tier=pending["tier"],
                )
            )
        except ValueError:
            raise ParseError(
                f"line {pending['line']}: duplicate article id {pending['id']} "
                f"(first defined at line {first_seen[pending['id']]})"
            ) from None
        first_seen.setdefault(pending["id"], pending["line"])
        pending, body_lines = None, []

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#ACT"):
            m = _ACT_RE.match(line.strip())
            if not m:
                raise ParseError(f"line {lineno}: malformed #ACT header")
            flush()
            parts = [p.strip() for p in m.group("rest").split("|")]
            act_name, act_year, act_tier = parts[0], None, Tier.ACT
            if not act_name or any(ch in act_name for ch in _FORBIDDEN_IN_ACT):
                raise ParseError(f"line {lineno}: invalid act name {act_name!r}")
            for opt in parts[1:]:
                key, _, value = opt.partition("=")
                key, value = key.strip(), value.strip()
                if key == "year":
                    try:
                        act_year = int(value)
                    except ValueError:
                        raise ParseError(f"line {lineno}: year must be an integer, got {value!r}") from None
                elif key == "tier":
                    if value not in _TIER_TOKENS:
                        raise ParseError(f"line {lineno}: unknown tier {value!r}")
                    act_tier = _TIER_TOKENS[value]
                else:
                    raise ParseError(f"line {lineno}: unknown act option {key!r}")
        elif line.startswith("##ART"):
            m = _ART_RE.match(line.strip())
            if not m:
                raise ParseError(f"line {lineno}: malformed ##ART header")
            if act_name is None:
                raise ParseError(f"line {lineno}: ##ART before any #ACT header")
            flush()
            art_id = ArticleId(act_name, int(m.group("number")), int(m.group("suffix")) if m.group("suffix") else None)
            if art_id in first_seen:
                raise ParseError(
                    f"line {lineno}: duplicate article id {art_id} (first defined at line {first_seen[art_id]})"
                )
            first_seen[art_id] = lineno
            pending = {"id": art_id, "title": m.group("title").strip(), "year": act_year, "tier": act_tier, "line": lineno}
        else:
            if pending is not None:
                body_lines.append(line)
            elif line.strip():
                raise ParseError(f"line {lineno}: text outside any article block")
    flush()
    return corpus


def serialize_corpus(corpus: Corpus) -> str:
    lines: list[str] = []
    for act, articles in corpus.acts.items():
        header = f"#ACT {act}"
        year = articles[0].enactment_year
        tier = articles[0].tier
        if year is not None:
            header += f" | year={year}"
        if tier is not Tier.ACT:
            header += f" | tier={_TIER_NAMES[tier]}"
        lines.append(header)
        for art in articles:
            num = str(art.id.number) if art.id.suffix is None else f"{art.id.number}-{art.id.suffix}"
            lines.append(f"##ART {num} | {art.title}")
            lines.append(art.body)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Reference grammars


@dataclass(frozen=True)
class Grammar:
    id: str
    patterns: tuple[re.Pattern, ...]
    aliases: dict[str, str] = field(default_factory=dict)

    def with_aliases(self, aliases: dict[str, str]) -> "Grammar":
        return replace(self, aliases=dict(aliases))


_GRAMMARS: dict[str, Grammar] = {}


def _load_grammar_table(grammar_id: str, text: str) -> Grammar:
    patterns = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        kind, _, pattern = line.partition("\t")
        if kind != "ref" or not pattern:
            raise ConfigurationError(f"grammar {grammar_id!r} line {lineno}: expected 'ref\\t<regex>'")
        try:
            patterns.append(re.compile(pattern))
        except re.error as exc:
            raise ConfigurationError(f"grammar {grammar_id!r} line {lineno}: bad regex: {exc}") from exc
    if not patterns:
        raise ConfigurationError(f"grammar {grammar_id!r}: no patterns")
    return Grammar(grammar_id, tuple(patterns))


def get_grammar(grammar_id: str) -> Grammar:
    if grammar_id not in _GRAMMARS:
        try:
            text = (resources.files("lacd") / "grammars" / f"{grammar_id}.tsv").read_text("utf-8")
        except (FileNotFoundError, ModuleNotFoundError):
            raise ConfigurationError(f"unknown grammar id {grammar_id!r}") from None
        _GRAMMARS[grammar_id] = _load_grammar_table(grammar_id, text)
    return _GRAMMARS[grammar_id]


def register_grammar(grammar: Grammar) -> None:
    _GRAMMARS[grammar.id] = grammar


def _resolve_act(raw_act: Optional[str], current_act: str, aliases: dict[str, str]) -> str:
    if raw_act is None:
        return current_act
    act = raw_act.strip()
    return aliases.get(act, act)


def normalize_reference(raw: str, current_act: str, grammar: str | Grammar = "en") -> ArticleId:
    """Map one matched reference string to a deterministic ArticleId."""
    g = grammar if isinstance(grammar, Grammar) else get_grammar(grammar)
    for pattern in g.patterns:
        m = pattern.fullmatch(raw)
        if m:
            return _normalize_match(m, current_act, g)
    raise NormalizationError(f"reference {raw!r} does not match grammar {g.id!r}")


def _normalize_match(m: re.Match, current_act: str, grammar: Grammar) -> ArticleId:
    groups = m.groupdict()
    try:
        number = int(groups["num"])
    except (KeyError, TypeError, ValueError):
        raise NormalizationError(f"non-numeric article number in {m.group(0)!r}") from None
    suffix = groups.get("suffix")
    act = _resolve_act(groups.get("act"), current_act, grammar.aliases)
    try:
        return ArticleId(act, number, int(suffix) if suffix else None)
    except ValueError as exc:
        raise NormalizationError(str(exc)) from exc


def extract_mentions(
    article: Article,
    corpus: Corpus,
    grammar: str | Grammar = "en",
    aliases: Optional[dict[str, str]] = None,
) -> list[MentionRef]:
    """All template references in the article body, ordered by span start.

    Overlapping matches keep the earliest-starting, longest one.  Targets not
    present in the corpus are flagged dangling rather than dropped so corpus
    subsets stay extractable.
    """
    g = grammar if isinstance(grammar, Grammar) else get_grammar(grammar)
    if aliases:
        g = g.with_aliases(aliases)
    matches: list[re.Match] = []
    for pattern in g.patterns:
        matches.extend(pattern.finditer(article.body))
    matches.sort(key=lambda m: (m.start(), -(m.end() - m.start())))
    refs: list[MentionRef] = []
    covered_until = -1
    for m in matches:
        if m.start() <= covered_until:
            continue
        covered_until = m.end() - 1
        target = _normalize_match(m, article.id.act, g)
        refs.append(
            MentionRef(source=article.id, target=target, span=(m.start(), m.end()), dangling=target not in corpus)
        )
    return refs
