"""Corpus/KG file formats, vocabularies and the synthetic DS-RE generator.

Corpus TSV, one sentence per line::

    e1 <TAB> e2 <TAB> relation <TAB> a:b <TAB> c:d <TAB> space-joined tokens

KG TSV: ``head <TAB> relation <TAB> tail``.  Lines starting with ``#`` and
blank lines are ignored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

NA = "NA"
PAD, UNK = "[PAD]", "[UNK]"
E1_START, E1_END, E2_START, E2_END = "[E1]", "[/E1]", "[E2]", "[/E2]"
MASK = "[M]"
ANON_MENTION = "<ent>"  # stand-in surface form when mentions are anonymised
SPECIAL_TOKENS = (PAD, UNK, E1_START, E1_END, E2_START, E2_END)

Span = Tuple[int, int]
Triple = Tuple[str, str, str]


class DataFormatError(ValueError):
    pass


@dataclass
class Sentence:
    tokens: Tuple[str, ...]
    head: Span
    tail: Span
    # synthetic metadata, not persisted in the TSV
    source_relation: Optional[str] = None
    noisy: Optional[bool] = None


@dataclass
class Bag:
    e1: str
    e2: str
    relation: str
    sentences: List[Sentence] = field(default_factory=list)

    @property
    def key(self) -> Tuple[str, str]:
        return (self.e1, self.e2)


@dataclass
class DsreDataset:
    kg: List[Triple]
    relations: List[str]
    entities: List[str]
    bags: Dict[Tuple[str, str], Bag]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def gold_triples(self) -> set:
        return {(b.e1, b.relation, b.e2) for b in self.bags.values() if b.relation != NA}

    def n_sentences(self) -> int:
        return sum(len(b.sentences) for b in self.bags.values())

    def validate(self) -> None:
        rels = set(self.relations)
        for b in self.bags.values():
            if b.relation not in rels:
                raise DataFormatError(f"data: bag {b.key} has unknown relation {b.relation!r}")
            for s in b.sentences:
                _check_spans(s.head, s.tail, len(s.tokens), where=f"bag {b.key}")


def _check_spans(head: Span, tail: Span, n: int, where: str) -> None:
    for name, (a, c) in (("head", head), ("tail", tail)):
        if not 0 <= a < c <= n:
            raise DataFormatError(f"data: {where}: {name} span {a}:{c} outside sentence of length {n}")
    if head[0] < tail[1] and tail[0] < head[1]:
        raise DataFormatError(f"data: {where}: head and tail spans overlap")


def _parse_span(text: str, lineno: int) -> Span:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise DataFormatError(f"data: line {lineno}: bad span {text!r}") from None


def _content_lines(path) -> Iterator[Tuple[int, str]]:
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line


def load_kg(path) -> List[Triple]:
    """Read KG triples, dropping exact duplicates (first occurrence wins)."""
    seen, out = set(), []
    for lineno, line in _content_lines(path):
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise DataFormatError(f"data: {path}: line {lineno}: expected 3 tab-separated fields")
        t = (parts[0], parts[1], parts[2])
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def load_dataset(corpus_path, kg_path, split: str = "train") -> DsreDataset:
    kg = load_kg(kg_path)
    bags: Dict[Tuple[str, str], Bag] = {}
    for lineno, line in _content_lines(corpus_path):
        parts = line.split("\t")
        if len(parts) != 6:
            raise DataFormatError(f"data: {corpus_path}: line {lineno}: expected 6 tab-separated fields")
        e1, e2, rel, hs, ts, text = parts
        tokens = tuple(text.split(" ")) if text else ()
        head, tail = _parse_span(hs, lineno), _parse_span(ts, lineno)
        _check_spans(head, tail, len(tokens), where=f"{corpus_path}: line {lineno}")
        bag = bags.get((e1, e2))
        if bag is None:
            bag = bags[(e1, e2)] = Bag(e1, e2, rel)
        elif bag.relation != rel:
            raise DataFormatError(f"data: {corpus_path}: line {lineno}: relation {rel!r} conflicts "
                                  f"with {bag.relation!r} for pair ({e1}, {e2})")
        bag.sentences.append(Sentence(tokens, head, tail))
    relations = [NA] + sorted({r for _, r, _ in kg} | {b.relation for b in bags.values()} - {NA})
    entities = sorted({e for h, _, t in kg for e in (h, t)} | {e for k in bags for e in k})
    return DsreDataset(kg, relations, entities, bags, split)


def format_corpus(ds: DsreDataset) -> str:
    lines = []
    for b in ds.bags.values():
        for s in b.sentences:
            lines.append("\t".join([b.e1, b.e2, b.relation, f"{s.head[0]}:{s.head[1]}",
                                    f"{s.tail[0]}:{s.tail[1]}", " ".join(s.tokens)]))
    return "".join(line + "\n" for line in lines)


def format_kg(triples: Sequence[Triple]) -> str:
    return "".join("\t".join(t) + "\n" for t in triples)


def save_corpus(ds: DsreDataset, path) -> None:
    Path(path).write_bytes(format_corpus(ds).encode("utf-8"))


def save_kg(triples: Sequence[Triple], path) -> None:
    Path(path).write_bytes(format_kg(triples).encode("utf-8"))


# ---- vocabularies -----------------------------------------------------------
class TextVocab:
    """Word-level vocabulary; unseen words map to ``[UNK]``."""

    def __init__(self, words: Sequence[str]):
        self.itos = list(SPECIAL_TOKENS) + [w for w in words if w not in SPECIAL_TOKENS]
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @classmethod
    def build(cls, datasets: Sequence[DsreDataset]) -> "TextVocab":
        words = {t for ds in datasets for b in ds.bags.values() for s in b.sentences for t in s.tokens}
        return cls(sorted(words))

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        unk = self.stoi[UNK]
        return np.array([self.stoi.get(t, unk) for t in tokens], dtype=np.int64)


class KgVocab:
    """Symbols of the KG encoder: relations, then entities, then the mask."""

    def __init__(self, relations: Sequence[str], entities: Sequence[str]):
        self.relations = list(relations)
        self.entities = list(entities)
        self.itos = self.relations + self.entities + [MASK]
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        self.mask_id = len(self.itos) - 1

    @classmethod
    def build(cls, datasets: Sequence[DsreDataset]) -> "KgVocab":
        rels = sorted({r for ds in datasets for r in ds.relations} - {NA})
        ents = sorted({e for ds in datasets for e in ds.entities})
        return cls(rels, ents)

    def __len__(self) -> int:
        return len(self.itos)

    def is_entity(self, i: int) -> bool:
        return len(self.relations) <= i < len(self.relations) + len(self.entities)

    def is_relation(self, i: int) -> bool:
        return 0 <= i < len(self.relations)

    def entity_index(self, name: str) -> int:
        """Row of ``name`` among entities only (used by TransE tables)."""
        return self.stoi[name] - len(self.relations)


# ---- synthetic data ---------------------------------------------------------
COMMON_WORDS = ("the", "of", "and", "a", "in", "to", "was", "is", "by", "for",
                "with", "on", "at", "from", "as", "that")


@dataclass(frozen=True)
class SynthSpec:
    n_relations: int = 4
    entities_per_relation: int = 20
    templates_per_relation: int = 6
    bag_size: int = 5
    noise: int = 0
    seed: int = 0
    train_bags: int = 200
    test_bags: int = 60
    na_fraction: float = 0.2
    kg_triples_per_entity: int = 4
    heldout_entity_fraction: float = 0.0
    ambiguous_contexts: bool = True
    entity_markers: bool = True
    keywords_per_family: int = 6
    anonymous_mentions: bool = True
    untyped_kg_fraction: float = 0.0

    def validate(self) -> None:
        if self.n_relations < 2:
            raise ValueError("data: need at least 2 relations")
        if self.bag_size < 1:
            raise ValueError("data: bag_size must be >= 1")
        if not 0 <= self.noise <= self.bag_size:
            raise ValueError(f"data: noise m={self.noise} must lie in [0, n={self.bag_size}]")
        if not 0.0 <= self.na_fraction < 1.0:
            raise ValueError("data: na_fraction must lie in [0, 1)")
        if not 0.0 <= self.heldout_entity_fraction < 1.0:
            raise ValueError("data: heldout_entity_fraction must lie in [0, 1)")
        if not 0.0 <= self.untyped_kg_fraction <= 1.0:
            raise ValueError("data: untyped_kg_fraction must lie in [0, 1]")
        if self.entities_per_relation < 2 or self.templates_per_relation < 1:
            raise ValueError("data: need >= 2 entities and >= 1 template per relation")

    def to_dict(self) -> dict:
        return asdict(self)


class _Layout:
    """Which relation a context family expresses for each entity-type signature.

    Two signatures exist: (typeA, typeB) and (typeC, typeD).  Relations come in
    consecutive pairs.  With ``ambiguous`` set, every other pair is valid under
    both signatures but the two relations trade context families between them,
    so the sentence alone cannot tell them apart and the entity types alone
    cannot either.  The remaining pairs split one relation per signature.
    """

    def __init__(self, relations: Sequence[str], ambiguous: bool):
        self.relations = list(relations)
        k = len(relations)
        self.cells: List[Dict[int, str]] = [{}, {}]  # signature -> family -> relation
        for p in range(0, k, 2):
            r0 = relations[p]
            r1 = relations[p + 1] if p + 1 < k else None
            if r1 is None:
                self.cells[0][p] = r0
            elif ambiguous and (p // 2) % 2 == 0:
                self.cells[0][p], self.cells[0][p + 1] = r0, r1
                self.cells[1][p], self.cells[1][p + 1] = r1, r0
            else:
                self.cells[0][p] = r0
                self.cells[1][p + 1] = r1
        self.home = {f: r for f, r in enumerate(relations)}

    def signatures_of(self, rel: str) -> List[int]:
        return [g for g in (0, 1) if rel in self.cells[g].values()]

    def families_for(self, g: int, rel: str) -> List[int]:
        return [f for f, r in self.cells[g].items() if r == rel]

    def source(self, g: int, family: int) -> str:
        if family < 0:
            return NA
        return self.cells[g].get(family, self.home[family])


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def _make_templates(spec: SynthSpec, rng: np.random.Generator) -> Dict[int, List[Tuple[str, ...]]]:
    """Context families 0..K-1 plus ``-1`` for background (NA) contexts.

    A template is a token tuple with ``<E1>``/``<E2>`` slots and 4-10 filler
    tokens, at least two of them keywords private to its family.
    """
    out = {}
    for fam in list(range(spec.n_relations)) + [-1]:
        tag = "na" if fam < 0 else f"f{fam}"
        keywords = [f"{tag}k{j}" for j in range(spec.keywords_per_family)]
        temps = []
        for _ in range(spec.templates_per_relation):
            n_fill = int(rng.integers(4, 11))
            n_kw = int(rng.integers(2, min(4, n_fill) + 1))
            fill = list(rng.choice(keywords, n_kw, replace=False))
            fill += list(rng.choice(COMMON_WORDS, n_fill - n_kw))
            fill = [str(w) for w in rng.permutation(fill)]
            i, j = sorted(rng.choice(n_fill + 1, 2, replace=True))
            slots = ("<E1>", "<E2>") if rng.random() < 0.7 else ("<E2>", "<E1>")
            toks = fill[:i] + [slots[0]] + fill[i:j] + [slots[1]] + fill[j:]
            temps.append(tuple(toks))
        out[fam] = temps
    return out


def _realize(template: Tuple[str, ...], e1: str, e2: str, markers: bool,
             anonymous: bool = False) -> Sentence:
    tokens: List[str] = []
    head = tail = (0, 0)
    for tok in template:
        if tok in ("<E1>", "<E2>"):
            name = ANON_MENTION if anonymous else (e1 if tok == "<E1>" else e2)
            start = len(tokens)
            if markers:
                tokens += [E1_START, name, E1_END] if tok == "<E1>" else [E2_START, name, E2_END]
            else:
                tokens.append(name)
            span = (start, len(tokens))
            if tok == "<E1>":
                head = span
            else:
                tail = span
        else:
            tokens.append(tok)
    return Sentence(tuple(tokens), head, tail)


@dataclass
class _Structure:
    relations: List[str]
    entities: List[str]
    layout: _Layout
    templates: Dict[int, List[Tuple[str, ...]]]
    pairs: Dict[str, List[Tuple[str, str, str, int]]]  # split -> (e1, e2, rel, signature)
    kg: List[Triple]


def _build_structure(spec: SynthSpec) -> _Structure:
    spec.validate()
    rng = _rng(spec.seed, 0)
    relations = [f"rel{i}" for i in range(spec.n_relations)]
    layout = _Layout(relations, spec.ambiguous_contexts)
    templates = _make_templates(spec, rng)

    per_type = max(2, spec.entities_per_relation * spec.n_relations // 2)
    types = {t: [f"{t}{i}" for i in range(per_type)] for t in ("a", "b", "c", "d")}
    sig_types = {0: ("a", "b"), 1: ("c", "d")}
    n_hold = int(round(per_type * spec.heldout_entity_fraction))
    pools = {}
    for t, names in types.items():
        order = [names[i] for i in rng.permutation(per_type)]
        # with nothing held out both splits draw from every entity; pairs stay disjoint
        pools[("test", t)] = sorted(order[:n_hold] or order)
        pools[("train", t)] = sorted(order[n_hold:])
    entities = sorted(e for names in types.values() for e in names)

    used: set = set()
    pairs: Dict[str, List[Tuple[str, str, str, int]]] = {}
    for split, count in (("train", spec.train_bags), ("test", spec.test_bags)):
        n_na = int(round(count * spec.na_fraction))
        labels = [NA] * n_na + [relations[i % len(relations)] for i in range(count - n_na)]
        labels = [labels[i] for i in rng.permutation(len(labels))]
        rows = []
        for rel in labels:
            sigs = [0, 1] if rel == NA else layout.signatures_of(rel)
            g = int(rng.choice(sigs))
            th, tt = sig_types[g]
            for _ in range(10_000):
                e1 = str(rng.choice(pools[(split, th)]))
                e2 = str(rng.choice(pools[(split, tt)]))
                if (e1, e2) not in used:
                    break
            else:
                raise ValueError("data: entity pools too small for the requested bag count")
            used.add((e1, e2))
            rows.append((e1, e2, rel, g))
        pairs[split] = rows

    kg: List[Triple] = [(e1, r, e2) for e1, e2, r, _ in pairs["train"] if r != NA]
    type_of = {e: t for t, names in types.items() for e in names}
    shared = set(layout.cells[0].values()) & set(layout.cells[1].values())
    n_untyped = int(round(len(entities) * spec.untyped_kg_fraction))
    untyped = {str(e) for e in rng.permutation(entities)[:n_untyped]} if n_untyped else set()
    for ent in entities:
        t = type_of[ent]
        g = 0 if t in ("a", "b") else 1
        as_head = t in ("a", "c")
        # prefer relations only this signature admits, so types are recoverable from the KG;
        # untyped entities only get relations both signatures admit
        own = set(layout.cells[g].values())
        if ent in untyped and shared:
            rels = sorted(shared)
        else:
            rels = sorted(own - set(layout.cells[1 - g].values())) or sorted(own)
        for _ in range(spec.kg_triples_per_entity):
            rel = str(rng.choice(rels))
            other = str(rng.choice(types[sig_types[g][1] if as_head else sig_types[g][0]]))
            key = (ent, other) if as_head else (other, ent)
            if key in used:
                continue
            used.add(key)
            kg.append((key[0], rel, key[1]))
    return _Structure(relations, entities, layout, templates, pairs, kg)


def _bag_sentences(spec: SynthSpec, st: _Structure, e1: str, e2: str, rel: str, g: int,
                   rng: np.random.Generator) -> List[Sentence]:
    valid_fams = [-1] if rel == NA else st.layout.families_for(g, rel)
    noisy_fams = [f for f in range(spec.n_relations) if st.layout.source(g, f) != rel]
    noisy_slots = set(rng.choice(spec.bag_size, spec.noise, replace=False).tolist())
    out = []
    for i in range(spec.bag_size):
        fam = int(rng.choice(noisy_fams if i in noisy_slots else valid_fams))
        temps = st.templates[fam]
        s = _realize(temps[int(rng.integers(len(temps)))], e1, e2, spec.entity_markers,
                     spec.anonymous_mentions)
        s.source_relation = st.layout.source(g, fam)
        s.noisy = s.source_relation != rel
        out.append(s)
    return out


def synthesize_splits(spec: SynthSpec) -> Tuple[DsreDataset, DsreDataset]:
    """Generate ``(train, test)`` sharing one KG; deterministic in ``spec``."""
    st = _build_structure(spec)
    out = []
    for split_id, split in enumerate(("train", "test")):
        bags = {}
        for idx, (e1, e2, rel, g) in enumerate(st.pairs[split]):
            rng = _rng(spec.seed, 1, split_id, idx)
            bags[(e1, e2)] = Bag(e1, e2, rel, _bag_sentences(spec, st, e1, e2, rel, g, rng))
        out.append(DsreDataset(list(st.kg), [NA] + st.relations, list(st.entities), bags, split))
    return out[0], out[1]


def synthesize_dataset(spec: SynthSpec, split: str = "train") -> DsreDataset:
    train, test = synthesize_splits(spec)
    return train if split == "train" else test


def noise_sweep(base: SynthSpec, ratios: Sequence[int], split: str = "train") -> List[DsreDataset]:
    """One dataset per noise count ``m``; pairs, KG and seeds are shared."""
    for m in ratios:
        if not 0 <= m <= base.bag_size:
            raise ValueError(f"data: noise m={m} outside [0, {base.bag_size}]")
    return [synthesize_dataset(replace(base, noise=int(m)), split) for m in ratios]


def batch_bags(dataset: DsreDataset, batch_size: int, seed: int) -> Iterator[List[Bag]]:
    if batch_size < 1:
        raise ValueError("data: batch_size must be >= 1")
    bags = list(dataset.bags.values())
    order = np.random.default_rng(seed).permutation(len(bags))
    for start in range(0, len(bags), batch_size):
        yield [bags[i] for i in order[start:start + batch_size]]


def write_split_manifest(path, spec: Optional[SynthSpec], files: Dict[str, str],
                         train: DsreDataset, test: DsreDataset) -> None:
    doc = {
        "spec": spec.to_dict() if spec else None,
        "files": files,
        "counts": {
            "train_bags": len(train), "test_bags": len(test),
            "train_sentences": train.n_sentences(), "test_sentences": test.n_sentences(),
            "kg_triples": len(train.kg),
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
