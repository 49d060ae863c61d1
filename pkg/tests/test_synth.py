"""Planted block-structure generator: structure, rates, round trips."""

import numpy as np
import pytest

from csilab.chemio import encode_fasta, parse_smiles
from csilab.datamodel import load_interactions, load_reactions
from csilab.synth import (
    MAX_BLOCKS,
    SynthSpec,
    synth_interactions,
    synth_reactions,
    write_interactions_tsv,
    write_reaction_bundle,
)


def _spec(**over):
    base = dict(blocks=4, compounds_per_block=5, sequences_per_block=5,
                noise=0.1, seed=7)
    base.update(over)
    return SynthSpec(**base)


class TestSpecValidation:
    def test_defaults_are_the_benchmark_shape(self):
        spec = SynthSpec()
        assert (spec.blocks, spec.compounds_per_block,
                spec.sequences_per_block) == (4, 15, 15)

    @pytest.mark.parametrize("over", [
        dict(blocks=1),
        dict(blocks=MAX_BLOCKS + 1),
        dict(compounds_per_block=0),
        dict(sequences_per_block=0),
        dict(noise=-0.1),
        dict(noise=1.5),
        dict(min_seq_len=50, max_seq_len=40),
    ])
    def test_rejects_bad_parameters(self, over):
        with pytest.raises(ValueError):
            _spec(**over)


class TestPopulations:
    def test_counts_and_labels(self):
        data, blocks = synth_interactions(_spec())
        assert len(data.compounds) == 20
        assert len(data.sequences) == 20
        assert set(blocks["compounds"]) == set(data.compounds)
        assert set(blocks["sequences"]) == set(data.sequences)
        for b in range(4):
            assert sum(1 for v in blocks["compounds"].values() if v == b) == 5
            assert sum(1 for v in blocks["sequences"].values() if v == b) == 5

    def test_objects_parse(self):
        data, _ = synth_interactions(_spec())
        for smiles in data.compounds.values():
            parse_smiles(smiles)
        for fasta in data.sequences.values():
            assert len(encode_fasta(fasta, length=128).codes) == 128

    def test_blocks_carry_their_scaffold_variants(self):
        from csilab.synth import compound_motifs
        data, blocks = synth_interactions(_spec())
        # every compound starts with one of its block's scaffolds, and
        # both variants actually occur within each block
        per_block = {}
        for cid, smiles in data.compounds.items():
            b = blocks["compounds"][cid]
            stems = [m for m in compound_motifs(b)
                     if smiles.startswith(m) and set(smiles[len(m):]) <= {"C"}]
            assert len(stems) == 1
            per_block.setdefault(b, set()).add(stems[0])
        for b, stems in per_block.items():
            assert len(stems) == len(compound_motifs(b))

    def test_scaffolds_do_not_repeat_across_blocks(self):
        from csilab.synth import compound_motifs
        spec = _spec()
        seen = set()
        for b in range(spec.blocks):
            stems = set(compound_motifs(b))
            assert not stems & seen
            seen |= stems

    def test_sequences_contain_a_block_motif_variant(self):
        from csilab.synth import sequence_motifs
        data, blocks = synth_interactions(_spec())
        per_block = {}
        for sid, fasta in data.sequences.items():
            b = blocks["sequences"][sid]
            hits = [m for m in sequence_motifs(b) if m in fasta]
            assert len(hits) == 1
            per_block.setdefault(b, set()).add(hits[0])
        for b, found in per_block.items():
            assert len(found) == len(sequence_motifs(b))

    def test_sequence_motifs_share_letter_counts(self):
        from csilab.synth import _SEQUENCE_MOTIFS
        counts = {tuple(sorted(m)) for m in _SEQUENCE_MOTIFS}
        assert len(counts) == 1

    def test_sequence_lengths_in_range(self):
        spec = _spec(min_seq_len=60, max_seq_len=80)
        data, _ = synth_interactions(spec)
        assert all(60 <= len(f) <= 80 for f in data.sequences.values())


class TestInteractionNoise:
    def test_zero_noise_is_exactly_block_diagonal(self):
        data, blocks = synth_interactions(_spec(noise=0.0))
        expected = {(c, s)
                    for c in data.compounds for s in data.sequences
                    if blocks["compounds"][c] == blocks["sequences"][s]}
        assert data.positives == expected

    def test_full_noise_is_exactly_off_diagonal(self):
        data, blocks = synth_interactions(_spec(noise=1.0))
        expected = {(c, s)
                    for c in data.compounds for s in data.sequences
                    if blocks["compounds"][c] != blocks["sequences"][s]}
        assert data.positives == expected

    def test_rates_track_noise(self):
        spec = _spec(blocks=4, compounds_per_block=12, sequences_per_block=12,
                     noise=0.2, seed=11)
        data, blocks = synth_interactions(spec)
        within = cross = wn = cn = 0
        for c in data.compounds:
            for s in data.sequences:
                hit = (c, s) in data.positives
                if blocks["compounds"][c] == blocks["sequences"][s]:
                    wn += 1
                    within += hit
                else:
                    cn += 1
                    cross += hit
        assert within / wn == pytest.approx(0.8, abs=0.08)
        assert cross / cn == pytest.approx(0.2, abs=0.08)

    def test_same_seed_reproduces_everything(self):
        a, ba = synth_interactions(_spec())
        b, bb = synth_interactions(_spec())
        assert a.positives == b.positives
        assert a.compounds == b.compounds
        assert a.sequences == b.sequences
        assert ba == bb

    def test_other_seed_differs(self):
        a, _ = synth_interactions(_spec(seed=1))
        b, _ = synth_interactions(_spec(seed=2))
        assert a.positives != b.positives


class TestTsvRoundTrip:
    def test_load_recovers_the_bundle(self, tmp_path):
        data, _ = synth_interactions(_spec())
        path = tmp_path / "interactions.tsv"
        write_interactions_tsv(data, path)
        loaded, report = load_interactions(path)
        assert loaded.positives == data.positives
        assert report.duplicates == 0
        # every object that takes part in a positive keeps its definition
        used_c = {c for c, _ in data.positives}
        used_s = {s for _, s in data.positives}
        assert {c: data.compounds[c] for c in used_c} == loaded.compounds
        assert {s: data.sequences[s] for s in used_s} == loaded.sequences

    def test_write_is_deterministic(self, tmp_path):
        data, _ = synth_interactions(_spec())
        write_interactions_tsv(data, tmp_path / "a.tsv")
        write_interactions_tsv(data, tmp_path / "b.tsv")
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()


class TestReactionVariant:
    def test_shape_and_labels(self):
        rset, induced, blocks = synth_reactions(_spec(noise=0.0),
                                                reactions_per_block=6)
        assert len(rset.reactions) == 4 * 6
        for rx in rset.reactions:
            assert rx.reactants and rx.products and rx.enzymes
            assert len(rx.rclass) == 1 and len(rx.ec) == 1
        # rclass labels cycle within a block, never across blocks
        by_block = {}
        for rx in rset.reactions:
            b = blocks["compounds"][next(iter(rx.reactants))]
            by_block.setdefault(b, set()).update(rx.rclass)
        assert all(len(v) == 3 for v in by_block.values())
        assert len(set().union(*by_block.values())) == 12

    def test_zero_noise_reactions_stay_within_blocks(self):
        rset, induced, blocks = synth_reactions(_spec(noise=0.0))
        for rx in rset.reactions:
            members = ({blocks["compounds"][c] for c in rx.reactants | rx.products}
                       | {blocks["sequences"][s] for s in rx.enzymes})
            assert len(members) == 1
        for c, s in induced.positives:
            assert blocks["compounds"][c] == blocks["sequences"][s]

    def test_induced_pairs_cover_every_reaction(self):
        rset, induced, _ = synth_reactions(_spec())
        expected = {(c, s)
                    for rx in rset.reactions
                    for c in rx.reactants | rx.products for s in rx.enzymes}
        assert induced.positives == expected

    def test_deterministic(self):
        a, ia, ba = synth_reactions(_spec())
        b, ib, bb = synth_reactions(_spec())
        assert [r.id for r in a.reactions] == [r.id for r in b.reactions]
        assert ia.positives == ib.positives
        assert ba == bb

    def test_bundle_round_trip(self, tmp_path):
        rset, induced, _ = synth_reactions(_spec())
        write_reaction_bundle(rset, tmp_path)
        loaded, loaded_induced, report = load_reactions(tmp_path / "reactions.jsonl")
        assert len(loaded.reactions) == len(rset.reactions)
        assert loaded_induced.positives == induced.positives
        assert loaded.compounds == rset.compounds
        assert {r.id: (r.reactants, r.products, r.enzymes, r.rclass, r.ec)
                for r in loaded.reactions} == \
               {r.id: (r.reactants, r.products, r.enzymes, r.rclass, r.ec)
                for r in rset.reactions}

    def test_rejects_zero_reactions_per_block(self):
        with pytest.raises(ValueError):
            synth_reactions(_spec(), reactions_per_block=0)
