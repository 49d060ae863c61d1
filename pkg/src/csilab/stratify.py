"""Congruent view construction and contrastive batch assembly.

Views are grouped into strata by a shared key. Within a stratum every
tuple is congruent (it describes the same underlying thing); across
strata, tuples are non-congruent. A contrastive batch draws its entries
from k distinct strata so that in-batch negatives are guaranteed
non-congruent.

Keyings:
  * compound: stratum per compound c: every unordered pair of partner
    sequences, as (c, (s_i, s_j)) with i < j by id; needs >= 2 partners.
  * sequence: mirror image: ((c_i, c_j), s).
  * reaction / rclass / ec: three view lists per stratum: View-1 all
    (reactant, product) pairs, View-2 all (compound, enzyme) pairs over
    R ∪ P, View-3 all unordered enzyme pairs (the self-pair stands in
    when the stratum has a single enzyme). rclass and ec merge whole
    reactions sharing a label; a reaction carrying several labels joins
    each label's stratum.

All lists are sorted, so construction is deterministic regardless of set
iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datamodel import InteractionSet, ReactionSet
from .errors import BatchTooLarge, DegenerateBatch, UnknownKeying

REACTION_KEYINGS = ("reaction", "rclass", "ec")
KEYINGS = ("compound", "sequence") + REACTION_KEYINGS


@dataclass
class ThreeViewStratum:
    """Per-key view lists for reaction-feature keyings."""

    view1: list[tuple[str, str]]  # (reactant, product)
    view2: list[tuple[str, str]]  # (compound, enzyme)
    view3: list[tuple[str, str]]  # (enzyme, enzyme), i <= j


@dataclass
class CongruentViewSet:
    keying: str
    strata: dict

    def eligible_keys(self) -> list[str]:
        """Keys that can contribute one entry to a batch, sorted."""
        out = []
        for key in sorted(self.strata):
            stratum = self.strata[key]
            if isinstance(stratum, ThreeViewStratum):
                if stratum.view1 and stratum.view2 and stratum.view3:
                    out.append(key)
            elif stratum:
                out.append(key)
        return out


@dataclass
class ContrastiveBatch:
    k: int
    keying: str
    entries: list[tuple]  # (key, view1, view2) or (key, view1, view2, view3)


def stratify_by_compound(data: InteractionSet) -> CongruentViewSet:
    """Pair up the sequences that interact with the same compound."""
    partners: dict[str, list[str]] = {}
    for c, s in sorted(data.positives):
        partners.setdefault(c, []).append(s)
    strata = {}
    for c, seqs in partners.items():
        if len(seqs) < 2:
            continue
        strata[c] = [(c, (seqs[i], seqs[j]))
                     for i in range(len(seqs)) for j in range(i + 1, len(seqs))]
    return CongruentViewSet(keying="compound", strata=strata)


def stratify_by_sequence(data: InteractionSet) -> CongruentViewSet:
    """Pair up the compounds that interact with the same sequence."""
    partners: dict[str, list[str]] = {}
    for c, s in sorted(data.positives):
        partners.setdefault(s, []).append(c)
    strata = {}
    for s, comps in partners.items():
        comps = sorted(comps)
        if len(comps) < 2:
            continue
        strata[s] = [((comps[i], comps[j]), s)
                     for i in range(len(comps)) for j in range(i + 1, len(comps))]
    return CongruentViewSet(keying="sequence", strata=strata)


def _reaction_views(reactants, products, enzymes) -> ThreeViewStratum:
    r = sorted(reactants)
    p = sorted(products)
    e = sorted(enzymes)
    view1 = [(ri, pj) for ri in r for pj in p]
    both = sorted(set(r) | set(p))
    view2 = [(c, sk) for c in both for sk in e]
    if len(e) == 1:
        view3 = [(e[0], e[0])]
    else:
        view3 = [(e[i], e[j]) for i in range(len(e)) for j in range(i + 1, len(e))]
    return ThreeViewStratum(view1=view1, view2=view2, view3=view3)


def stratify_by_reaction_feature(data: ReactionSet, keying: str) -> CongruentViewSet:
    """Build three-view strata keyed by reaction id, rclass label, or ec number."""
    if keying not in REACTION_KEYINGS:
        raise UnknownKeying(f"keying must be one of {REACTION_KEYINGS}, got {keying!r}")

    if keying == "reaction":
        groups = {rx.id: [rx] for rx in data.reactions}
    else:
        groups: dict[str, list] = {}
        for rx in data.reactions:
            labels = rx.rclass if keying == "rclass" else rx.ec
            for label in sorted(labels):
                groups.setdefault(label, []).append(rx)

    strata = {}
    for key in sorted(groups):
        members = groups[key]
        if len(members) == 1:
            strata[key] = _reaction_views(members[0].reactants,
                                          members[0].products,
                                          members[0].enzymes)
        else:
            # Merged stratum: union each view across reactions, deduplicated.
            v1, v2, v3 = set(), set(), set()
            for rx in members:
                views = _reaction_views(rx.reactants, rx.products, rx.enzymes)
                v1.update(views.view1)
                v2.update(views.view2)
                v3.update(views.view3)
            strata[key] = ThreeViewStratum(sorted(v1), sorted(v2), sorted(v3))
    return CongruentViewSet(keying=keying, strata=strata)


def sample_batch(views: CongruentViewSet, k: int, seed: int) -> ContrastiveBatch:
    """Draw k entries from k distinct strata, uniformly, deterministically."""
    if k < 2:
        raise DegenerateBatch(f"batch size must be at least 2, got {k}")
    keys = views.eligible_keys()
    if len(keys) < k:
        raise BatchTooLarge(f"asked for {k} strata but only {len(keys)} eligible")
    rng = np.random.default_rng(seed)
    picked = [keys[i] for i in rng.choice(len(keys), size=k, replace=False)]
    entries = []
    for key in picked:
        stratum = views.strata[key]
        if isinstance(stratum, ThreeViewStratum):
            v1 = stratum.view1[rng.integers(len(stratum.view1))]
            v2 = stratum.view2[rng.integers(len(stratum.view2))]
            v3 = stratum.view3[rng.integers(len(stratum.view3))]
            entries.append((key, v1, v2, v3))
        else:
            v1, v2 = stratum[rng.integers(len(stratum))]
            entries.append((key, v1, v2))
    return ContrastiveBatch(k=k, keying=views.keying, entries=entries)
