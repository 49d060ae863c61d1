"""Planted block-structure generator for desk-scale experiments.

Builds small compound/sequence populations organized into blocks, with
interactions inside a block occurring with probability 1-noise and
across blocks with probability noise. The block assignment is emitted
alongside the data, so an experiment can check that learned embeddings
recover the planted structure. A reaction variant maps each block to a
family of reactions over that block's compounds and enzymes.

Each block owns several structurally unrelated motif variants (two
compound scaffolds, three sequence 6-mers), and a member carries just
one of them. Nothing in an object's own structure links the variants of
a block; only the interaction pattern does. A model that learns from
co-interaction structure can merge the variants, while one that must
associate every variant pair with a label from scratch faces a much
weaker training signal. All sequence motifs are permutations of one
letter multiset, so letter counts alone cannot separate blocks either.
"""

from __future__ import annotations

from itertools import permutations

from dataclasses import dataclass

import numpy as np

from .datamodel import InteractionSet, Reaction, ReactionSet

_COMPOUND_VARIANTS = 2
_SEQUENCE_VARIANTS = 3

# block b owns scaffolds [2b] and [2b+1]; deliberately unrelated chemistry
_COMPOUND_MOTIFS = [
    "c1ccccc1",   # aromatic carbocycle
    "C1CCCCC1",   # saturated carbocycle
    "CC(=O)O",    # carboxyl
    "c1ccncc1",   # aromatic N heterocycle
    "CC(=O)N",    # amide
    "C1CCOC1",    # saturated O heterocycle
    "CS",         # thioether
    "C#C",        # alkyne
    "CC(=O)C",    # ketone
    "C1CCNC1",    # saturated N heterocycle
    "CC#N",       # nitrile
    "C=CC",       # alkene
    "COC",        # ether
    "CN(C)C",     # tertiary amine
    "C1CC1",      # small carbocycle
    "CC(C)C",     # branched alkane
]

# motif letters never occur in the background
_MOTIF_LETTERS = "WYHF"
_BACKGROUND = "ACDEGIKLMNPQRSTV"


def _sequence_motifs() -> list[str]:
    """Distinct permutations of WWYYHF, spread over the full set.

    Every motif has identical letter counts; only the order separates
    blocks, so a sequence model needs genuine pattern detectors.
    """
    unique = sorted(set("".join(p) for p in permutations("WWYYHF")))
    step = len(unique) // 24
    return [unique[i * step] for i in range(24)]


_SEQUENCE_MOTIFS = _sequence_motifs()

MAX_BLOCKS = min(len(_COMPOUND_MOTIFS) // _COMPOUND_VARIANTS,
                 len(_SEQUENCE_MOTIFS) // _SEQUENCE_VARIANTS)


def compound_motifs(block: int) -> list[str]:
    i = block * _COMPOUND_VARIANTS
    return _COMPOUND_MOTIFS[i:i + _COMPOUND_VARIANTS]


def sequence_motifs(block: int) -> list[str]:
    i = block * _SEQUENCE_VARIANTS
    return _SEQUENCE_MOTIFS[i:i + _SEQUENCE_VARIANTS]


@dataclass
class SynthSpec:
    blocks: int = 4
    compounds_per_block: int = 15
    sequences_per_block: int = 15
    noise: float = 0.05
    seed: int = 0
    min_seq_len: int = 60
    max_seq_len: int = 90

    def __post_init__(self):
        if self.blocks < 2:
            raise ValueError(f"need at least 2 blocks, got {self.blocks}")
        if self.blocks > MAX_BLOCKS:
            raise ValueError(f"at most {MAX_BLOCKS} blocks supported, got {self.blocks}")
        if self.compounds_per_block < 1 or self.sequences_per_block < 1:
            raise ValueError("each block needs at least one compound and sequence")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {self.noise}")
        if not 2 <= self.min_seq_len <= self.max_seq_len:
            raise ValueError("bad sequence length range")


def _make_compound(block: int, index: int, rng) -> str:
    motif = compound_motifs(block)[index % _COMPOUND_VARIANTS]
    tail = 1 + (index * 3 + int(rng.integers(0, 3))) % 10
    return motif + "C" * tail


def _make_sequence(block: int, index: int, rng, spec: SynthSpec) -> str:
    motif = sequence_motifs(block)[index % _SEQUENCE_VARIANTS]
    length = int(rng.integers(spec.min_seq_len, spec.max_seq_len + 1))
    body = "".join(_BACKGROUND[i] for i in rng.integers(0, len(_BACKGROUND),
                                                        size=length))
    pos = int(rng.integers(0, length - len(motif) + 1))
    return body[:pos] + motif + body[pos + len(motif):]


def _populations(spec: SynthSpec, rng) -> tuple[dict, dict, dict]:
    compounds, sequences = {}, {}
    blocks = {"compounds": {}, "sequences": {}}
    for b in range(spec.blocks):
        for i in range(spec.compounds_per_block):
            cid = f"c{b}{i:03d}"
            compounds[cid] = _make_compound(b, i, rng)
            blocks["compounds"][cid] = b
        for j in range(spec.sequences_per_block):
            sid = f"s{b}{j:03d}"
            sequences[sid] = _make_sequence(b, j, rng, spec)
            blocks["sequences"][sid] = b
    return compounds, sequences, blocks


def synth_interactions(spec: SynthSpec) -> tuple[InteractionSet, dict]:
    """Block-structured interaction grid plus the planted block labels."""
    rng = np.random.default_rng(spec.seed)
    compounds, sequences, blocks = _populations(spec, rng)
    positives = set()
    for cid in sorted(compounds):
        for sid in sorted(sequences):
            same = blocks["compounds"][cid] == blocks["sequences"][sid]
            p = 1.0 - spec.noise if same else spec.noise
            if rng.random() < p:
                positives.add((cid, sid))
    data = InteractionSet(compounds, sequences, positives)
    return data, blocks


def synth_reactions(spec: SynthSpec, reactions_per_block: int | None = None) \
        -> tuple[ReactionSet, InteractionSet, dict]:
    """Map each block to a family of reactions over its own members.

    Every reaction draws reactants, products, and enzymes from one
    block; with probability ``noise`` one enzyme from another block
    joins in. Reactions carry block-derived rclass and ec labels so all
    three reaction-feature keyings are exercised.
    """
    rng = np.random.default_rng(spec.seed)
    compounds, sequences, blocks = _populations(spec, rng)
    n_rx = spec.compounds_per_block if reactions_per_block is None else reactions_per_block
    if n_rx < 1:
        raise ValueError(f"need at least one reaction per block, got {n_rx}")

    block_comp = {b: sorted(c for c, bb in blocks["compounds"].items() if bb == b)
                  for b in range(spec.blocks)}
    block_seq = {b: sorted(s for s, bb in blocks["sequences"].items() if bb == b)
                 for b in range(spec.blocks)}

    reactions = []
    positives = set()
    for b in range(spec.blocks):
        comps, seqs = block_comp[b], block_seq[b]
        for i in range(n_rx):
            n_r = int(rng.integers(1, min(2, len(comps)) + 1))
            n_p = int(rng.integers(1, min(2, len(comps)) + 1))
            picked = rng.choice(len(comps), size=min(n_r + n_p, len(comps)),
                                replace=False)
            reactants = frozenset(comps[k] for k in picked[:n_r])
            products = frozenset(comps[k] for k in picked[n_r:]) or reactants
            # two or more enzymes whenever the block allows it, so the
            # enzyme-pair view holds genuine pairs instead of self-pairs
            n_e = int(rng.integers(min(2, len(seqs)), min(3, len(seqs)) + 1))
            enzymes = set(seqs[k] for k in rng.choice(len(seqs), size=n_e,
                                                      replace=False))
            if spec.noise > 0 and rng.random() < spec.noise and spec.blocks > 1:
                other = (b + 1 + int(rng.integers(spec.blocks - 1))) % spec.blocks
                enzymes.add(block_seq[other][int(rng.integers(len(block_seq[other])))])
            rx = Reaction(
                id=f"r{b}{i:03d}",
                reactants=reactants,
                products=products,
                enzymes=frozenset(enzymes),
                rclass=frozenset({f"RC{b}.{i % 3}"}),
                ec=frozenset({f"{b + 1}.{1 + i % 2}.1.1"}),
            )
            reactions.append(rx)
            for c in rx.reactants | rx.products:
                for s in rx.enzymes:
                    positives.add((c, s))

    rset = ReactionSet(reactions, compounds, sequences)
    induced = InteractionSet(compounds, sequences, positives)
    return rset, induced, blocks


def write_interactions_tsv(data: InteractionSet, path) -> None:
    """Emit the positive pairs in the loader's TSV schema.

    The first row mentioning an object defines it; later rows leave the
    definition column empty as a back-reference.
    """
    seen_c, seen_s = set(), set()
    with open(path, "w") as fh:
        fh.write("compound_id\tsmiles\tsequence_id\tfasta\tlabel\n")
        for c, s in sorted(data.positives):
            smiles = data.compounds[c] if c not in seen_c else ""
            fasta = data.sequences[s] if s not in seen_s else ""
            seen_c.add(c)
            seen_s.add(s)
            fh.write(f"{c}\t{smiles}\t{s}\t{fasta}\t1\n")


def write_reaction_bundle(rset: ReactionSet, out_dir) -> None:
    """Emit reactions.jsonl plus the compounds.tsv/sequences.tsv siblings."""
    import json
    import os

    with open(os.path.join(out_dir, "compounds.tsv"), "w") as fh:
        fh.write("id\tsmiles\n")
        for cid in sorted(rset.compounds):
            fh.write(f"{cid}\t{rset.compounds[cid]}\n")
    with open(os.path.join(out_dir, "sequences.tsv"), "w") as fh:
        fh.write("id\tfasta\n")
        for sid in sorted(rset.sequences):
            fh.write(f"{sid}\t{rset.sequences[sid]}\n")
    with open(os.path.join(out_dir, "reactions.jsonl"), "w") as fh:
        for rx in rset.reactions:
            rec = {
                "id": rx.id,
                "reactants": sorted(rx.reactants),
                "products": sorted(rx.products),
                "enzymes": sorted(rx.enzymes),
                "rclass": sorted(rx.rclass),
                "ec": sorted(rx.ec),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
