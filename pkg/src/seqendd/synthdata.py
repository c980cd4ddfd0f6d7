"""Synthetic grammatical-error-correction corpora.

References come from a slot-template grammar with number agreement
(determiner-noun, subject-verb) and adjective/adverb forms, so most
corruptions are recoverable from context. Sources are the references with
learner-style errors applied token by token.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, InputError
from .nnet.model import SPECIAL_TOKENS

log = logging.getLogger(__name__)

_NOUNS = [("cat", "cats"), ("dog", "dogs"), ("bird", "birds"), ("child", "children"),
          ("teacher", "teachers"), ("car", "cars")]
_VERBS = [("runs", "run"), ("sleeps", "sleep"), ("waits", "wait"), ("plays", "play")]
_ADJ_ADV = [("quick", "quickly"), ("quiet", "quietly"), ("happy", "happily"), ("slow", "slowly")]
_PREPS = ["in", "on", "at"]
_DETS = {"sg": ["a", "the"], "pl": ["these", "the"]}
_OTHER = ["and", "."]
# only ever seen in the out-of-domain configuration
_OOD_NOUNS = [("robot", "robots"), ("lamp", "lamps"), ("river", "rivers")]
_OOD_VERBS = [("glows", "glow"), ("hums", "hum")]

ID_TEMPLATES = (
    "NP V P NP .",
    "NP V P NP ADV .",
    "NP V ADV and NP V P NP .",
    "NP V P NP and NP V P NP .",
    "NP V P NP P NP ADV .",
    "NP V ADV P NP and NP V ADV .",
    "NPC V P NP P NP .",
)
# transitive verbs, fronted adverbs and pre-verbal adverbs never occur in ID
OOD_TEMPLATES = (
    "NP V NP P NP .",
    "ADV NP V P NP and NP V .",
    "NP ADV V P NP .",
    "NP V NP ADV .",
    "NPC V NP .",
)


def _word_classes(nouns, verbs):
    return {
        "N_sg": [s for s, _ in nouns],
        "N_pl": [p for _, p in nouns],
        "V_sg": [s for s, _ in verbs],
        "V_pl": [p for _, p in verbs],
        "ADJ": [a for a, _ in _ADJ_ADV],
        "ADV": [b for _, b in _ADJ_ADV],
        "P": list(_PREPS),
        "D_sg": list(_DETS["sg"]),
        "D_pl": list(_DETS["pl"]),
    }


def _confusions(nouns, verbs):
    conf: dict[str, list[str]] = {}
    for pairs in (nouns, verbs, _ADJ_ADV):
        for a, b in pairs:
            conf[a] = [b]
            conf[b] = [a]
    dets = sorted({d for ds in _DETS.values() for d in ds})
    for d in dets:
        conf[d] = [x for x in dets if x != d]
    for p in _PREPS:
        conf[p] = [x for x in _PREPS if x != p]
    return conf


def default_vocabulary() -> list[str]:
    """Special tokens followed by every word either configuration can emit (50 entries)."""
    words = list(SPECIAL_TOKENS)
    for pairs in (_NOUNS, _VERBS, _ADJ_ADV, _OOD_NOUNS, _OOD_VERBS):
        for a, b in pairs:
            words += [a, b]
    words += sorted({d for ds in _DETS.values() for d in ds}) + _PREPS + _OTHER
    return words


@dataclass(frozen=True)
class GrammarConfig:
    vocab: tuple[str, ...] = field(default_factory=lambda: tuple(default_vocabulary()))
    templates: tuple[str, ...] = ID_TEMPLATES
    word_classes: dict = field(default_factory=lambda: _word_classes(_NOUNS, _VERBS))
    confusion_sets: dict = field(default_factory=lambda: _confusions(_NOUNS, _VERBS))
    length_range: tuple[int, int] = (4, 30)
    target_length: float = 13.0
    adjective_rate: float = 0.5
    corruption_rates: dict = field(
        default_factory=lambda: {"substitute": 0.09, "delete": 0.02, "insert": 0.02, "swap": 0.02}
    )
    seed: int = 0

    def __post_init__(self):
        rates = self.corruption_rates
        if set(rates) != {"substitute", "delete", "insert", "swap"}:
            raise ContractError("corruption_rates needs substitute, delete, insert and swap")
        if any(not 0.0 <= r <= 1.0 for r in rates.values()) or sum(rates.values()) >= 1.0:
            raise ContractError("corruption rates must lie in [0, 1] and sum to less than 1")
        known = set(self.vocab)
        for words in self.word_classes.values():
            missing = set(words) - known
            if missing:
                raise ContractError(f"template words outside the vocabulary: {sorted(missing)}")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def ood_config(base: GrammarConfig) -> GrammarConfig:
    """Shifted configuration: disjoint short templates, doubled error rates, unseen words."""
    nouns = _NOUNS + _OOD_NOUNS
    verbs = _VERBS + _OOD_VERBS
    templates = tuple(t for t in OOD_TEMPLATES if t not in set(base.templates))
    return replace(
        base,
        templates=templates,
        word_classes=_word_classes(nouns, verbs),
        confusion_sets=_confusions(nouns, verbs),
        length_range=(3, 20),
        target_length=10.2,
        corruption_rates={k: 2.0 * v for k, v in base.corruption_rates.items()},
        seed=base.seed + 7919,
    )


@dataclass(frozen=True)
class SentencePair:
    source: tuple[int, ...]
    reference: tuple[int, ...]

    def __post_init__(self):
        if not self.source or not self.reference:
            raise ContractError("source and reference must be non-empty")


class Vocabulary:
    def __init__(self, tokens):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ContractError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def encode(self, words):
        try:
            return tuple(self.index[w] for w in words)
        except KeyError as exc:
            raise ContractError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def save(self, path):
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise InputError("vocabulary file not found", location=str(path))
        return cls(path.read_text(encoding="utf-8").splitlines())


# ---------------------------------------------------------------------------
# generation

def _noun_phrase(config, rng, number):
    wc = config.word_classes
    words = [rng.choice(wc[f"D_{number}"])]
    if rng.random() < config.adjective_rate:
        words.append(rng.choice(wc["ADJ"]))
    words.append(rng.choice(wc[f"N_{number}"]))
    return words


def sample_reference(config: GrammarConfig, rng, template: str) -> list[str]:
    wc = config.word_classes
    words: list[str] = []
    subject = "sg"
    for slot in template.split():
        if slot == "NP":
            subject = "sg" if rng.random() < 0.5 else "pl"
            words += _noun_phrase(config, rng, subject)
        elif slot == "NPC":
            words += _noun_phrase(config, rng, "sg" if rng.random() < 0.5 else "pl")
            words.append("and")
            words += _noun_phrase(config, rng, "sg" if rng.random() < 0.5 else "pl")
            subject = "pl"
        elif slot == "V":
            words.append(rng.choice(wc[f"V_{subject}"]))
        elif slot in wc:
            words.append(rng.choice(wc[slot]))
        else:
            words.append(slot)
    return words


def corrupt(reference, config: GrammarConfig, rng) -> list:
    """Apply at most one error per reference position.

    Substitution draws from the token's confusion set, insertion adds a
    confusable neighbour after the token, swap exchanges it with the next
    token (which then counts as used).
    """
    r = config.corruption_rates
    cuts = np.cumsum([r["substitute"], r["delete"], r["insert"], r["swap"]])
    out = []
    i = 0
    ref = list(reference)
    while i < len(ref):
        w = ref[i]
        u = rng.random()
        conf = config.confusion_sets.get(w)
        if u < cuts[0]:
            out.append(rng.choice(conf) if conf else w)
        elif u < cuts[1]:
            pass
        elif u < cuts[2]:
            out += [w, rng.choice(conf) if conf else w]
        elif u < cuts[3] and i + 1 < len(ref):
            out += [ref[i + 1], w]
            i += 1
        else:
            out.append(w)
        i += 1
    return out


def generate_corpus(config: GrammarConfig, n: int) -> list[SentencePair]:
    if n < 1:
        raise ContractError("n must be at least 1")
    rng = np.random.default_rng(config.seed)
    vocab = Vocabulary(config.vocab)
    lo, hi = config.length_range
    pairs = []
    while len(pairs) < n:
        template = config.templates[rng.integers(len(config.templates))]
        ref = sample_reference(config, rng, template)
        if not lo <= len(ref) <= hi:
            continue
        src = corrupt(ref, config, rng) or list(ref)
        pairs.append(SentencePair(vocab.encode(src), vocab.encode(ref)))
    return pairs


def corpus_stats(pairs) -> dict:
    lengths = [len(p.reference) for p in pairs]
    changed = sum(p.source != p.reference for p in pairs)
    return {
        "sentences": len(pairs),
        "mean_length": float(np.mean(lengths)) if lengths else 0.0,
        "corrupted_fraction": changed / len(pairs) if pairs else 0.0,
    }


# ---------------------------------------------------------------------------
# file I/O: one JSON object per line, {"src": [...], "ref": [...]}, plus a .vocab sidecar

def vocab_path(path) -> Path:
    return Path(path).with_suffix(".vocab")


def write_corpus(path, pairs, vocab: Vocabulary) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"src": vocab.decode(p.source), "ref": vocab.decode(p.reference)}) + "\n")
    vocab.save(vocab_path(path))


def read_corpus(path, vocab: Vocabulary | None = None) -> list[SentencePair]:
    path = Path(path)
    if not path.exists():
        raise InputError("corpus file not found", location=str(path))
    vocab = vocab or Vocabulary.load(vocab_path(path))
    pairs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"malformed record ({exc.msg})", location=where) from None
            for key in ("src", "ref"):
                if key not in rec:
                    raise InputError(f"record is missing the {key!r} field", location=where)
            try:
                pairs.append(SentencePair(vocab.encode(rec["src"]), vocab.encode(rec["ref"])))
            except ContractError as exc:
                raise InputError(str(exc), location=where) from None
    if not pairs:
        log.warning("corpus %s is empty", path)
    return pairs
