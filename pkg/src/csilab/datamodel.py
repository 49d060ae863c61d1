"""Dataset containers, loaders, splits, and negative sampling.

Input formats:
  * interactions.tsv: header ``compound_id  smiles  sequence_id  fasta
    label`` (tab-separated). The first row defining an id wins; repeating
    the identical definition is fine, a conflicting redefinition is a
    SchemaError. An empty smiles/fasta field refers back to an earlier
    definition and must resolve (DanglingReference otherwise). label 1
    rows are positives, label 0 rows are labeled negatives (inhibitors).
  * reactions.jsonl: one object per line with id/reactants/products/
    enzymes plus optional rclass and ec label lists; compound and
    sequence definitions live in sibling compounds.tsv and sequences.tsv.

All randomized operations take an explicit integer seed; nothing touches
global random state, and iteration orders are fixed by sorting so results
are reproducible byte for byte.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chemio import encode_fasta, parse_smiles
from .errors import (
    DanglingReference,
    EmptyInput,
    EmptySide,
    InsufficientNegativeSpace,
    SchemaError,
    TooFewExamples,
)

Pair = tuple[str, str]


@dataclass
class InteractionSet:
    compounds: dict[str, str]
    sequences: dict[str, str]
    positives: set[Pair]
    labeled_negatives: set[Pair] = field(default_factory=set)

    def validate(self) -> None:
        for c, s in self.positives | self.labeled_negatives:
            if c not in self.compounds:
                raise DanglingReference(f"pair references unknown compound {c!r}")
            if s not in self.sequences:
                raise DanglingReference(f"pair references unknown sequence {s!r}")
        overlap = self.positives & self.labeled_negatives
        if overlap:
            raise SchemaError(
                f"{len(overlap)} pair(s) labeled both positive and negative")


@dataclass
class Reaction:
    id: str
    reactants: frozenset[str]
    products: frozenset[str]
    enzymes: frozenset[str]
    rclass: frozenset[str] = frozenset()
    ec: frozenset[str] = frozenset()


@dataclass
class ReactionSet:
    reactions: list[Reaction]
    compounds: dict[str, str]
    sequences: dict[str, str]


@dataclass
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    unseen_fraction: float = 0.05

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError(f"fractions must be three positives: {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1: {self.fractions}")
        if not 0.0 <= self.unseen_fraction < 1.0:
            raise ValueError(f"unseen fraction out of range: {self.unseen_fraction}")


@dataclass
class StrataStatistics:
    average_size: float
    std_size: float
    max_size: int
    min_size: int
    average_sharing: float
    average_jaccard: float


@dataclass
class LoadReport:
    rows: int
    duplicates: int
    notes: list[str] = field(default_factory=list)


_INTERACTION_HEADER = ["compound_id", "smiles", "sequence_id", "fasta", "label"]


def _define(table: dict[str, str], obj_id: str, value: str, kind: str,
            line_no: int) -> None:
    if not value:
        if obj_id not in table:
            raise DanglingReference(
                f"line {line_no}: {kind} {obj_id!r} referenced before definition")
        return
    if obj_id in table:
        if table[obj_id] != value:
            raise SchemaError(
                f"line {line_no}: conflicting redefinition of {kind} {obj_id!r}")
        return
    table[obj_id] = value


def load_interactions(path) -> tuple[InteractionSet, LoadReport]:
    """Read a TSV of interactions; returns the dataset plus a load report."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty file, expected a header row")
    header = lines[0].split("\t")
    if header != _INTERACTION_HEADER:
        raise SchemaError(f"{path}: bad header {header!r}")

    compounds: dict[str, str] = {}
    sequences: dict[str, str] = {}
    positives: set[Pair] = set()
    negatives: set[Pair] = set()
    rows = 0
    duplicates = 0
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 5:
            raise SchemaError(f"line {line_no}: expected 5 columns, got {len(cols)}")
        cid, smiles, sid, fasta, label = cols
        if not cid or not sid:
            raise SchemaError(f"line {line_no}: empty id")
        if label not in ("0", "1"):
            raise SchemaError(f"line {line_no}: label must be 0 or 1, got {label!r}")
        _define(compounds, cid, smiles, "compound", line_no)
        _define(sequences, sid, fasta, "sequence", line_no)
        rows += 1
        pair = (cid, sid)
        target = positives if label == "1" else negatives
        if pair in target:
            duplicates += 1
        else:
            target.add(pair)

    data = InteractionSet(compounds, sequences, positives, negatives)
    data.validate()
    # Surface malformed structures and residues at load time, once per object.
    for smiles in compounds.values():
        parse_smiles(smiles)
    for fasta in sequences.values():
        encode_fasta(fasta, length=1)
    report = LoadReport(rows=rows, duplicates=duplicates)
    if negatives:
        report.notes.append(f"{len(negatives)} labeled negative pair(s)")
    return data, report


def _load_definition_tsv(path: Path, kind: str) -> dict[str, str]:
    lines = path.read_text().splitlines()
    if not lines or lines[0].split("\t") != ["id", kind]:
        raise SchemaError(f"{path}: expected header 'id\\t{kind}'")
    table: dict[str, str] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not cols[0] or not cols[1]:
            raise SchemaError(f"{path} line {line_no}: expected 'id\\t{kind}'")
        if cols[0] in table and table[cols[0]] != cols[1]:
            raise SchemaError(
                f"{path} line {line_no}: conflicting redefinition of {cols[0]!r}")
        table[cols[0]] = cols[1]
    return table


def load_reactions(path) -> tuple[ReactionSet, InteractionSet, LoadReport]:
    """Read reactions.jsonl plus sibling compounds.tsv / sequences.tsv.

    Also returns the induced interaction set pairing every reaction-side
    compound with every enzyme of the same reaction.
    """
    path = Path(path)
    compounds = _load_definition_tsv(path.parent / "compounds.tsv", "smiles")
    sequences = _load_definition_tsv(path.parent / "sequences.tsv", "fasta")

    reactions: list[Reaction] = []
    seen_ids: set[str] = set()
    pair_occurrences = 0
    positives: set[Pair] = set()
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path} line {line_no}: bad JSON: {exc}") from exc
        try:
            rid = str(obj["id"])
            reactants = frozenset(str(x) for x in obj["reactants"])
            products = frozenset(str(x) for x in obj["products"])
            enzymes = frozenset(str(x) for x in obj["enzymes"])
        except KeyError as exc:
            raise SchemaError(f"{path} line {line_no}: missing field {exc}") from exc
        rclass = frozenset(str(x) for x in obj.get("rclass", []))
        ec = frozenset(str(x) for x in obj.get("ec", []))
        if rid in seen_ids:
            raise SchemaError(f"{path} line {line_no}: duplicate reaction id {rid!r}")
        seen_ids.add(rid)
        for name, side in (("reactants", reactants), ("products", products),
                           ("enzymes", enzymes)):
            if not side:
                raise EmptySide(f"reaction {rid!r} has empty {name}")
        for c in reactants | products:
            if c not in compounds:
                raise DanglingReference(f"reaction {rid!r}: unknown compound {c!r}")
        for s in enzymes:
            if s not in sequences:
                raise DanglingReference(f"reaction {rid!r}: unknown sequence {s!r}")
        reactions.append(Reaction(rid, reactants, products, enzymes, rclass, ec))
        for c in reactants | products:
            for s in enzymes:
                pair_occurrences += 1
                positives.add((c, s))

    for smiles in compounds.values():
        parse_smiles(smiles)
    for fasta in sequences.values():
        encode_fasta(fasta, length=1)

    induced = InteractionSet(compounds, sequences, positives)
    induced.validate()
    report = LoadReport(rows=len(reactions),
                        duplicates=pair_occurrences - len(positives))
    return ReactionSet(reactions, compounds, sequences), induced, report


def split(data: InteractionSet, spec: SplitSpec) \
        -> tuple[InteractionSet, InteractionSet, InteractionSet]:
    """Partition positives (and labeled negatives) by a seeded shuffle.

    Sizes are floor(n*f_train) / floor(n*f_val) / remainder. The three
    parts share the compound and sequence maps.
    """
    n = len(data.positives)
    if n < 10:
        raise TooFewExamples(f"need at least 10 positives to split, got {n}")
    rng = np.random.default_rng(spec.seed)

    def partition(pairs: set[Pair]) -> tuple[set[Pair], set[Pair], set[Pair]]:
        order = sorted(pairs)
        perm = rng.permutation(len(order))
        k = len(order)
        n_train = math.floor(k * spec.fractions[0])
        n_val = math.floor(k * spec.fractions[1])
        train = {order[i] for i in perm[:n_train]}
        val = {order[i] for i in perm[n_train:n_train + n_val]}
        test = {order[i] for i in perm[n_train + n_val:]}
        return train, val, test

    pos_parts = partition(data.positives)
    neg_parts = partition(data.labeled_negatives) if data.labeled_negatives \
        else (set(), set(), set())
    return tuple(
        InteractionSet(data.compounds, data.sequences, pos, neg)
        for pos, neg in zip(pos_parts, neg_parts))


def build_unseen_test(data: InteractionSet, spec: SplitSpec) \
        -> tuple[InteractionSet, InteractionSet]:
    """Hold out the least-frequent compounds and sequences.

    Independently selects ceil(unseen_fraction * n) compounds and
    sequences with the fewest positive interactions (ties broken by id).
    Every positive touching a selected object moves to the unseen set;
    the reduced set drops the selected objects entirely.
    """
    freq_c = Counter(c for c, _ in data.positives)
    freq_s = Counter(s for _, s in data.positives)

    def select(ids, freq) -> set[str]:
        k = math.ceil(spec.unseen_fraction * len(ids))
        ranked = sorted(ids, key=lambda i: (freq.get(i, 0), i))
        return set(ranked[:k])

    sel_c = select(data.compounds, freq_c)
    sel_s = select(data.sequences, freq_s)

    def touches(pair: Pair) -> bool:
        return pair[0] in sel_c or pair[1] in sel_s

    unseen_pos = {p for p in data.positives if touches(p)}
    unseen_neg = {p for p in data.labeled_negatives if touches(p)}
    reduced_pos = data.positives - unseen_pos
    if not reduced_pos:
        raise TooFewExamples("holding out the unseen objects leaves no positives")
    reduced = InteractionSet(
        {i: v for i, v in data.compounds.items() if i not in sel_c},
        {i: v for i, v in data.sequences.items() if i not in sel_s},
        reduced_pos,
        data.labeled_negatives - unseen_neg,
    )
    unseen = InteractionSet(data.compounds, data.sequences, unseen_pos, unseen_neg)
    return reduced, unseen


def sample_negatives(data: InteractionSet, ratio: int, seed: int,
                     exclude: set[Pair] = frozenset()) -> list[tuple[str, str, int]]:
    """All positives labeled 1 plus exactly ratio*|positives| negatives.

    Labeled negatives are used first (in sorted order); the rest are drawn
    uniformly without replacement from pairs that are neither positives
    nor in ``exclude`` (e.g. positives of other splits).
    """
    if ratio < 1:
        raise ValueError(f"ratio must be a positive integer, got {ratio}")
    positives = sorted(data.positives)
    need = ratio * len(positives)
    comp_ids = sorted(data.compounds)
    seq_ids = sorted(data.sequences)
    forbidden = data.positives | {
        p for p in exclude
        if p[0] in data.compounds and p[1] in data.sequences}
    available = len(comp_ids) * len(seq_ids) - len(forbidden)
    if available < need:
        raise InsufficientNegativeSpace(
            f"need {need} negatives but only {available} non-positive pairs exist")

    negatives: list[Pair] = []
    chosen: set[Pair] = set()
    for pair in sorted(data.labeled_negatives):
        if len(negatives) == need:
            break
        if pair not in forbidden and pair not in chosen:
            negatives.append(pair)
            chosen.add(pair)

    rng = np.random.default_rng(seed)
    if need - len(negatives) > available // 2:
        # Dense regime: rejection sampling would thrash; enumerate instead.
        pool = [(c, s) for c in comp_ids for s in seq_ids
                if (c, s) not in forbidden and (c, s) not in chosen]
        for i in rng.permutation(len(pool))[:need - len(negatives)]:
            negatives.append(pool[i])
    else:
        while len(negatives) < need:
            pair = (comp_ids[rng.integers(len(comp_ids))],
                    seq_ids[rng.integers(len(seq_ids))])
            if pair in forbidden or pair in chosen:
                continue
            negatives.append(pair)
            chosen.add(pair)

    return [(c, s, 1) for c, s in positives] + [(c, s, 0) for c, s in negatives]


def strata_stats(strata: dict) -> StrataStatistics:
    """Size and overlap statistics over a key -> object-set mapping."""
    if not strata:
        raise EmptyInput("no strata")
    keys = sorted(strata)
    sets = [set(strata[k]) for k in keys]
    sizes = [len(s) for s in sets]
    k = len(sets)
    avg = math.fsum(sizes) / k
    std = math.sqrt(math.fsum((x - avg) ** 2 for x in sizes) / k)

    if k == 1:
        sharing, jaccard = 0.0, 0.0
    else:
        universe = sorted(set().union(*sets))
        index = {obj: i for i, obj in enumerate(universe)}
        mat = np.zeros((k, len(universe)), dtype=np.float64)
        for row, s in enumerate(sets):
            for obj in s:
                mat[row, index[obj]] = 1.0
        inter = mat @ mat.T  # exact small-integer counts
        size_arr = np.array(sizes, dtype=np.float64)
        inter_vals = []
        jac_vals = []
        for i in range(k):
            for j in range(i + 1, k):
                iv = inter[i, j]
                union = size_arr[i] + size_arr[j] - iv
                inter_vals.append(float(iv))
                jac_vals.append(float(iv / union) if union > 0 else 0.0)
        n_pairs = len(inter_vals)
        sharing = math.fsum(inter_vals) / n_pairs
        jaccard = math.fsum(jac_vals) / n_pairs

    return StrataStatistics(
        average_size=avg,
        std_size=std,
        max_size=max(sizes),
        min_size=min(sizes),
        average_sharing=sharing,
        average_jaccard=jaccard,
    )
