"""Rule DSL parsing, grounding, and compilation into feature extractors.

The DSL is a list of statements like::

    # keep the clause after a contrast marker
    rule a_but_b (confidence 1.0): on token "but" keep after;

Each rule names a pivot token and a region to keep when the pivot occurs
standalone in a sentence. A compiled rule is a pure function from a
token sequence to a (possibly shorter) token sequence with the same
label; composing them realizes the batch transformation step of
training.
"""

from __future__ import annotations

import dataclasses
from importlib import resources
from pathlib import Path

from .corpus import Dataset, Instance, Token
from .errors import ConfidenceRange, DuplicateRule, ParseError, UnsupportedConfidence

KEEP_AFTER = "after"
KEEP_BEFORE = "before"

_KEYWORDS = frozenset({"rule", "confidence", "on", "token", "keep", "after", "before"})


@dataclasses.dataclass(frozen=True)
class Rule:
    """A named pivot-token rule with a confidence in (0, 1]."""

    name: str
    pivot: str
    region: str
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.confidence <= 1.0):
            raise ConfidenceRange(f"rule {self.name!r}: confidence {self.confidence} outside (0, 1]")
        if self.region not in (KEEP_AFTER, KEEP_BEFORE):
            raise ValueError(f"rule {self.name!r}: unknown region {self.region!r}")
        if not self.pivot or any(c.isspace() for c in self.pivot) or self.pivot != self.pivot.lower():
            raise ValueError(f"rule {self.name!r}: pivot must be a single lowercase token")

    def to_source(self) -> str:
        return f'rule {self.name} (confidence {self.confidence:g}): on token "{self.pivot}" keep {self.region};'


@dataclasses.dataclass(frozen=True)
class RuleSet:
    """An ordered collection of rules with unique names."""

    rules: tuple[Rule, ...] = ()

    def __post_init__(self) -> None:
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise DuplicateRule(f"duplicate rule names: {sorted(n for n in names if names.count(n) > 1)}")

    @property
    def count(self) -> int:
        return len(self.rules)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def to_source(self) -> str:
        return "\n".join(r.to_source() for r in self.rules) + ("\n" if self.rules else "")


EMPTY_RULESET = RuleSet()


# -- DSL front end ---------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class _Tok:
    kind: str  # IDENT | NUMBER | STRING | PUNCT | EOF
    value: str
    line: int
    column: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return f'"{self.value}"'
        return f"'{self.value}'"


def _lex(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col = 1, 1
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch in "():;":
            toks.append(_Tok("PUNCT", ch, line, start_col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and source[j] not in ('"', "\n"):
                j += 1
            if j >= n or source[j] != '"':
                raise ParseError("unterminated string", line=line, column=start_col)
            toks.append(_Tok("STRING", source[i + 1 : j], line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                seen_dot = seen_dot or source[j] == "."
                j += 1
            toks.append(_Tok("NUMBER", source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            toks.append(_Tok("IDENT", source[i:j], line, start_col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line=line, column=start_col)
    toks.append(_Tok("EOF", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.pos]

    def _fail(self, expected: str):
        tok = self.cur
        raise ParseError(f"expected {expected}, found {tok.describe()}", line=tok.line, column=tok.column)

    def expect_keyword(self, word: str) -> _Tok:
        tok = self.cur
        if tok.kind != "IDENT" or tok.value != word:
            self._fail(f"'{word}'")
        self.pos += 1
        return tok

    def expect_punct(self, ch: str) -> _Tok:
        tok = self.cur
        if tok.kind != "PUNCT" or tok.value != ch:
            self._fail(f"'{ch}'")
        self.pos += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> _Tok:
        tok = self.cur
        if tok.kind != kind:
            self._fail(what)
        self.pos += 1
        return tok

    def parse_program(self) -> RuleSet:
        rules: list[Rule] = []
        names: set[str] = set()
        while self.cur.kind != "EOF":
            rule = self.parse_rule_stmt()
            if rule.name in names:
                raise DuplicateRule(f"rule {rule.name!r} defined more than once")
            names.add(rule.name)
            rules.append(rule)
        return RuleSet(rules=tuple(rules))

    def parse_rule_stmt(self) -> Rule:
        self.expect_keyword("rule")
        name_tok = self.cur
        name = self.expect_kind("IDENT", "rule name").value
        if name in _KEYWORDS or not _is_ident(name):
            raise ParseError(f"invalid rule name {name!r}", line=name_tok.line, column=name_tok.column)
        confidence = 1.0
        if self.cur.kind == "PUNCT" and self.cur.value == "(":
            self.expect_punct("(")
            self.expect_keyword("confidence")
            num_tok = self.expect_kind("NUMBER", "confidence value")
            confidence = float(num_tok.value)
            if not (0.0 < confidence <= 1.0):
                raise ConfidenceRange(
                    f"confidence {num_tok.value} outside (0, 1] at line {num_tok.line}, column {num_tok.column}"
                )
            self.expect_punct(")")
        self.expect_punct(":")
        self.expect_keyword("on")
        self.expect_keyword("token")
        pivot_tok = self.expect_kind("STRING", "quoted pivot token")
        pivot = pivot_tok.value
        if not pivot or any(c.isspace() for c in pivot):
            raise ParseError("pivot must be a single non-empty token", line=pivot_tok.line, column=pivot_tok.column)
        if pivot != pivot.lower():
            raise ParseError("pivot token must be lowercase", line=pivot_tok.line, column=pivot_tok.column)
        self.expect_keyword("keep")
        region_tok = self.cur
        if region_tok.kind != "IDENT" or region_tok.value not in (KEEP_AFTER, KEEP_BEFORE):
            self._fail("'after' or 'before'")
        self.pos += 1
        self.expect_punct(";")
        return Rule(name=name, pivot=pivot, region=region_tok.value, confidence=confidence)


def _is_ident(name: str) -> bool:
    return bool(name) and (name[0].islower() or name[0] == "_") and all(
        c.islower() or c.isdigit() or c == "_" for c in name
    ) and name.isascii()


def parse_rules(source: str) -> RuleSet:
    """Parse DSL text into a RuleSet, in source order.

    Raises:
        ParseError: syntax errors, with line/column and the expected token.
        DuplicateRule: two rules share a name.
        ConfidenceRange: a confidence outside (0, 1].
    """
    return _Parser(_lex(source)).parse_program()


def load_rules(path: str | Path) -> RuleSet:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def builtin_rules_path() -> Path:
    """Path of the packaged a_but_b rule file."""
    return Path(resources.files("rulefeat").joinpath("data", "a_but_b.rules"))


def load_builtin_ruleset() -> RuleSet:
    return parse_rules(builtin_rules_path().read_text(encoding="utf-8"))


# -- grounding and application ---------------------------------------------

@dataclasses.dataclass(frozen=True)
class Grounding:
    """Token positions where one rule's matcher fired on one instance."""

    rule_name: str
    instance_id: int
    positions: tuple[int, ...]

    @property
    def matched(self) -> bool:
        return bool(self.positions)


def ground(rule: Rule, instance) -> Grounding:
    """All token indices of ``instance`` whose text equals the rule's pivot."""
    positions = tuple(i for i, tok in enumerate(instance.tokens) if tok.text == rule.pivot)
    return Grounding(rule_name=rule.name, instance_id=instance.id, positions=positions)


@dataclasses.dataclass(frozen=True)
class TransformedInstance:
    """An instance after rule application, with provenance of fired rules."""

    id: int
    tokens: tuple[Token, ...]
    label: int
    fired_rules: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ValueError("transformed instance has no tokens")

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)


class FeatureExtractor:
    """One compiled rule: a pure token-sequence to token-sequence map."""

    def __init__(self, rule: Rule):
        if rule.confidence != 1.0:
            raise UnsupportedConfidence(
                f"rule {rule.name!r} has confidence {rule.confidence}; only 1.0 is executable"
            )
        self.rule = rule

    def apply_tokens(self, tokens: tuple[Token, ...]) -> tuple[tuple[Token, ...], bool]:
        """Transformed tokens plus whether the rule fired.

        The split happens at the first pivot occurrence; a split that
        would leave nothing keeps the input unchanged.
        """
        pivot = self.rule.pivot
        for i, tok in enumerate(tokens):
            if tok.text == pivot:
                kept = tokens[i + 1 :] if self.rule.region == KEEP_AFTER else tokens[:i]
                if kept:
                    return kept, True
                return tokens, False
        return tokens, False

    def apply_one(self, instance) -> TransformedInstance:
        tokens, fired = self.apply_tokens(tuple(instance.tokens))
        prior = tuple(getattr(instance, "fired_rules", ()))
        fired_rules = prior + (self.rule.name,) if fired else prior
        return TransformedInstance(
            id=instance.id, tokens=tokens, label=instance.label, fired_rules=fired_rules
        )


class ExtractorChain:
    """Feature extractors composed left-to-right in rule source order."""

    def __init__(self, extractors: tuple[FeatureExtractor, ...]):
        self.extractors = extractors

    def __len__(self) -> int:
        return len(self.extractors)

    def apply_one(self, instance: Instance | TransformedInstance) -> TransformedInstance:
        tokens = tuple(instance.tokens)
        fired: list[str] = list(getattr(instance, "fired_rules", ()))
        for extractor in self.extractors:
            tokens, did_fire = extractor.apply_tokens(tokens)
            if did_fire:
                fired.append(extractor.rule.name)
        return TransformedInstance(
            id=instance.id, tokens=tokens, label=instance.label, fired_rules=tuple(fired)
        )

    def apply_batch(self, batch: Dataset | list | tuple) -> tuple[TransformedInstance, ...]:
        """Element-wise application preserving order, labels, and count."""
        instances = batch.instances if isinstance(batch, Dataset) else batch
        return tuple(self.apply_one(inst) for inst in instances)


def compile_ruleset(ruleset: RuleSet) -> ExtractorChain:
    """Compile a RuleSet into an extractor chain; empty set -> identity.

    Raises:
        UnsupportedConfidence: any rule has confidence != 1.
    """
    return ExtractorChain(tuple(FeatureExtractor(rule) for rule in ruleset))


def matches_any(ruleset: RuleSet, instance) -> bool:
    """True when at least one rule in ``ruleset`` grounds on ``instance``."""
    return any(ground(rule, instance).matched for rule in ruleset)
